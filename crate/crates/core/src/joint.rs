//! Joint visual-semantic embedding.
//!
//! Image features `v` and text features `u` are mapped into a shared
//! `d`-dimensional space by two affine projections,
//!
//! ```text
//! e_v = W_v v + b_v        e_u = W_u u + b_u
//! ```
//!
//! and trained so that an image and each of its captions land close
//! together. The default objective is the plain squared distance
//! `‖e_u − e_v‖²`, averaged over the pairs of a batch. With analytic
//! gradients, for `r = e_u − e_v`:
//!
//! ```text
//! ∂L/∂W_u =  (2/B) Σ r uᵀ     ∂L/∂b_u =  (2/B) Σ r
//! ∂L/∂W_v = −(2/B) Σ r vᵀ     ∂L/∂b_v = −(2/B) Σ r
//! ```
//!
//! That objective is minimized by collapsing every embedding onto one point
//! whenever both projections are free. Freezing the image side removes the
//! degenerate minimum; [`Objective::Margin`] is an optional contrastive
//! alternative that uses the next pair in the batch as a negative. The
//! trainer always measures embedding variance and warns on collapse.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::math;
use crate::numerics::{
    clip_gradients, squared_distance, AdamConfig, AdamState, Matrix, ParamGroup, ParamGroupMut, Parameters, Rng, Vector,
};

/// Affine map `z ↦ W z + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionLayer {
    weight: Matrix,
    bias: Vector,
}

impl ProjectionLayer {
    pub fn new(weight: Matrix, bias: Vector) -> Result<Self> {
        if weight.rows() != bias.dim() {
            return Err(Error::shape("ProjectionLayer::new", weight.shape(), bias.dim()));
        }
        if !weight.is_finite() || !bias.is_finite() {
            return Err(Error::NonFinite("projection parameters".into()));
        }
        Ok(Self { weight, bias })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            weight: Matrix::identity(dim),
            bias: Vector::zeros(dim),
        }
    }

    pub fn zeros(output_dim: usize, input_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(output_dim, input_dim),
            bias: Vector::zeros(output_dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &Vector {
        &self.bias
    }

    pub fn weight_mut(&mut self) -> &mut Matrix {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut Vector {
        &mut self.bias
    }

    pub fn apply(&self, z: &Vector) -> Result<Vector> {
        let mut out = self.weight.matvec(z)?;
        for (o, b) in out.as_mut_slice().iter_mut().zip(self.bias.iter()) {
            *o += b;
        }
        Ok(out)
    }
}

/// Image and text projections into a shared space of dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointEmbeddingModel {
    image_proj: ProjectionLayer,
    text_proj: ProjectionLayer,
}

impl JointEmbeddingModel {
    pub fn new(image_proj: ProjectionLayer, text_proj: ProjectionLayer) -> Result<Self> {
        if image_proj.output_dim() != text_proj.output_dim() {
            return Err(Error::shape(
                "JointEmbeddingModel::new",
                image_proj.output_dim(),
                text_proj.output_dim(),
            ));
        }
        Ok(Self { image_proj, text_proj })
    }

    /// Identity projections on both sides; both feature spaces must have
    /// dimension `d`.
    pub fn identity(d: usize) -> Self {
        Self {
            image_proj: ProjectionLayer::identity(d),
            text_proj: ProjectionLayer::identity(d),
        }
    }

    pub fn d(&self) -> usize {
        self.image_proj.output_dim()
    }

    pub fn image_dim(&self) -> usize {
        self.image_proj.input_dim()
    }

    pub fn text_dim(&self) -> usize {
        self.text_proj.input_dim()
    }

    pub fn image_proj(&self) -> &ProjectionLayer {
        &self.image_proj
    }

    pub fn text_proj(&self) -> &ProjectionLayer {
        &self.text_proj
    }

    pub fn image_proj_mut(&mut self) -> &mut ProjectionLayer {
        &mut self.image_proj
    }

    pub fn text_proj_mut(&mut self) -> &mut ProjectionLayer {
        &mut self.text_proj
    }

    pub fn embed_image(&self, v: &FeatureVector) -> Result<Vector> {
        self.image_proj.apply(v)
    }

    pub fn embed_text(&self, u: &FeatureVector) -> Result<Vector> {
        self.text_proj.apply(u)
    }

    fn zeros_like(&self) -> Self {
        Self {
            image_proj: ProjectionLayer::zeros(self.d(), self.image_dim()),
            text_proj: ProjectionLayer::zeros(self.d(), self.text_dim()),
        }
    }

    /// Shapes only: `d`, image input dim, text input dim.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.d(), self.image_dim(), self.text_dim())
    }
}

impl Parameters for JointEmbeddingModel {
    fn groups(&self) -> Vec<ParamGroup<'_>> {
        vec![
            ("w_v", self.image_proj.weight.as_slice()),
            ("b_v", self.image_proj.bias.as_slice()),
            ("w_u", self.text_proj.weight.as_slice()),
            ("b_u", self.text_proj.bias.as_slice()),
        ]
    }

    fn groups_mut(&mut self) -> Vec<ParamGroupMut<'_>> {
        vec![
            ("w_v", self.image_proj.weight.as_mut_slice()),
            ("b_v", self.image_proj.bias.as_mut_slice()),
            ("w_u", self.text_proj.weight.as_mut_slice()),
            ("b_u", self.text_proj.bias.as_mut_slice()),
        ]
    }
}

pub fn embed_image(model: &JointEmbeddingModel, v: &FeatureVector) -> Result<Vector> {
    model.embed_image(v)
}

pub fn embed_text(model: &JointEmbeddingModel, u: &FeatureVector) -> Result<Vector> {
    model.embed_text(u)
}

/// Symmetric uniform initialization in `[−s, s]`, `s = sqrt(6 / (fan_in + fan_out))`,
/// with zero biases. `W_v` is drawn first, row-major, then `W_u`.
pub fn init_model(image_dim: usize, text_dim: usize, d: usize, seed: u64) -> Result<JointEmbeddingModel> {
    if image_dim == 0 || text_dim == 0 || d == 0 {
        return Err(Error::invalid(format!(
            "model dims must be positive, got image {image_dim}, text {text_dim}, d {d}"
        )));
    }
    let mut rng = Rng::new(seed);
    let image_proj = ProjectionLayer {
        weight: uniform_matrix(&mut rng, d, image_dim),
        bias: Vector::zeros(d),
    };
    let text_proj = ProjectionLayer {
        weight: uniform_matrix(&mut rng, d, text_dim),
        bias: Vector::zeros(d),
    };
    Ok(JointEmbeddingModel { image_proj, text_proj })
}

/// Fan-based uniform limit used by [`init_model`].
pub fn init_limit(fan_in: usize, fan_out: usize) -> f64 {
    math::sqrt(6.0 / (fan_in + fan_out) as f64)
}

pub(crate) fn uniform_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    let s = init_limit(cols, rows);
    let data = (0..rows * cols).map(|_| rng.uniform(-s, s)).collect();
    Matrix::from_vec(rows, cols, data).expect("length matches shape")
}

/// Squared L2 distance between a text embedding and an image embedding.
pub fn pair_loss(e_u: &Vector, e_v: &Vector) -> Result<f64> {
    if e_u.dim() != e_v.dim() {
        return Err(Error::shape("pair_loss", e_u.dim(), e_v.dim()));
    }
    Ok(squared_distance(e_u.as_slice(), e_v.as_slice()))
}

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Mean of `‖e_u − e_v‖²` over the batch.
    PairL2,
    /// Mean of `max(0, ‖e_u − e_v⁺‖² − ‖e_u − e_v⁻‖² + margin)` where the
    /// negative `v⁻` of pair `i` is the image of pair `(i + 1) mod B`.
    Margin { margin: f64 },
}

/// Parallel image and caption features; pair `i` is `(image[i], text[i])`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairDataset {
    image_features: Vec<FeatureVector>,
    text_features: Vec<FeatureVector>,
}

impl PairDataset {
    pub fn new(image_features: Vec<FeatureVector>, text_features: Vec<FeatureVector>) -> Result<Self> {
        if image_features.len() != text_features.len() {
            return Err(Error::shape(
                "PairDataset::new",
                image_features.len(),
                text_features.len(),
            ));
        }
        check_uniform_dim("image features", &image_features)?;
        check_uniform_dim("text features", &text_features)?;
        Ok(Self {
            image_features,
            text_features,
        })
    }

    pub fn len(&self) -> usize {
        self.image_features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_features.is_empty()
    }

    pub fn image_features(&self) -> &[FeatureVector] {
        &self.image_features
    }

    pub fn text_features(&self) -> &[FeatureVector] {
        &self.text_features
    }

    pub fn batch(&self, indices: &[usize]) -> PairBatch<'_> {
        PairBatch {
            image_features: indices.iter().map(|&i| &self.image_features[i]).collect(),
            text_features: indices.iter().map(|&i| &self.text_features[i]).collect(),
        }
    }

    pub fn all(&self) -> PairBatch<'_> {
        PairBatch {
            image_features: self.image_features.iter().collect(),
            text_features: self.text_features.iter().collect(),
        }
    }
}

fn check_uniform_dim(what: &str, xs: &[FeatureVector]) -> Result<()> {
    if let Some(first) = xs.first() {
        if let Some(bad) = xs.iter().find(|x| x.dim() != first.dim()) {
            return Err(Error::Shape {
                op: "PairDataset::new",
                left: format!("{what} dim {}", first.dim()),
                right: format!("{}", bad.dim()),
            });
        }
    }
    Ok(())
}

/// Borrowed view of a mini-batch of pairs.
#[derive(Debug, Clone)]
pub struct PairBatch<'a> {
    pub image_features: Vec<&'a FeatureVector>,
    pub text_features: Vec<&'a FeatureVector>,
}

impl PairBatch<'_> {
    pub fn len(&self) -> usize {
        self.image_features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_features.is_empty()
    }
}

/// Batch loss and its gradient with respect to every model parameter.
/// The gradient is stored in a model-shaped value.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    pub loss: f64,
    pub grads: JointEmbeddingModel,
}

/// Mean pair loss of `batch` under `objective`, with analytic gradients.
pub fn loss_gradients(
    model: &JointEmbeddingModel,
    batch: &PairBatch<'_>,
    objective: Objective,
) -> Result<LossGradients> {
    if batch.is_empty() {
        return Err(Error::Empty("pair batch"));
    }
    if batch.image_features.len() != batch.text_features.len() {
        return Err(Error::shape(
            "loss_gradients",
            batch.image_features.len(),
            batch.text_features.len(),
        ));
    }
    let e_v = batch
        .image_features
        .iter()
        .map(|v| model.embed_image(v))
        .collect::<Result<Vec<_>>>()?;
    let e_u = batch
        .text_features
        .iter()
        .map(|u| model.embed_text(u))
        .collect::<Result<Vec<_>>>()?;

    let n = batch.len();
    let scale = 1.0 / n as f64;
    let d = model.d();
    // Per-pair gradients of the loss with respect to each embedding.
    let mut g_u = vec![vec![0.0; d]; n];
    let mut g_v = vec![vec![0.0; d]; n];
    let mut loss = 0.0;

    match objective {
        Objective::PairL2 => {
            for i in 0..n {
                let (u, v) = (e_u[i].as_slice(), e_v[i].as_slice());
                loss += squared_distance(u, v);
                for j in 0..d {
                    let r = 2.0 * (u[j] - v[j]) * scale;
                    g_u[i][j] += r;
                    g_v[i][j] -= r;
                }
            }
        }
        Objective::Margin { margin } => {
            for i in 0..n {
                let neg = (i + 1) % n;
                let (u, pos, negv) = (e_u[i].as_slice(), e_v[i].as_slice(), e_v[neg].as_slice());
                let hinge = squared_distance(u, pos) - squared_distance(u, negv) + margin;
                if hinge <= 0.0 {
                    continue;
                }
                loss += hinge;
                for j in 0..d {
                    g_u[i][j] += 2.0 * (negv[j] - pos[j]) * scale;
                    g_v[i][j] -= 2.0 * (u[j] - pos[j]) * scale;
                    g_v[neg][j] += 2.0 * (u[j] - negv[j]) * scale;
                }
            }
        }
    }
    loss *= scale;

    let mut grads = model.zeros_like();
    for i in 0..n {
        let image = &mut grads.image_proj;
        image.weight.add_outer(1.0, &g_v[i], batch.image_features[i].as_slice());
        for (b, g) in image.bias.as_mut_slice().iter_mut().zip(&g_v[i]) {
            *b += g;
        }
        let text = &mut grads.text_proj;
        text.weight.add_outer(1.0, &g_u[i], batch.text_features[i].as_slice());
        for (b, g) in text.bias.as_mut_slice().iter_mut().zip(&g_u[i]) {
            *b += g;
        }
    }
    Ok(LossGradients { loss, grads })
}

/// Loss only; used by finite-difference checks and evaluation.
pub fn batch_loss(model: &JointEmbeddingModel, batch: &PairBatch<'_>, objective: Objective) -> Result<f64> {
    loss_gradients(model, batch, objective).map(|lg| lg.loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub d: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub grad_clip: f64,
    pub seed: u64,
    /// Keep `W_v` and `b_v` fixed.
    pub freeze_image_side: bool,
    /// Use [`Objective::Margin`] instead of the plain pair loss.
    pub margin_mode: bool,
    pub margin: f64,
    /// Embedding variance below which training reports collapse.
    pub collapse_variance: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d: 128,
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 10,
            grad_clip: 10.0,
            seed: 42,
            freeze_image_side: false,
            margin_mode: false,
            margin: 0.2,
            collapse_variance: 1e-2,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn objective(&self) -> Objective {
        if self.margin_mode {
            Objective::Margin { margin: self.margin }
        } else {
            Objective::PairL2
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.batch_size == 0 {
            return Err(Error::invalid("d and batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(self.grad_clip > 0.0) {
            return Err(Error::invalid("learning_rate and grad_clip must be positive"));
        }
        if self.margin_mode && !(self.margin >= 0.0) {
            return Err(Error::invalid("margin must be non-negative"));
        }
        Ok(())
    }
}

/// Raised when the trained embeddings have (nearly) no spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapseWarning {
    pub embedding_variance: f64,
    pub final_loss: f64,
}

impl core::fmt::Display for CollapseWarning {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "embedding collapse: variance {:.3e} with final loss {:.3e}; the pair objective is minimized by mapping everything to one point",
            self.embedding_variance, self.final_loss
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: JointEmbeddingModel,
    /// Mean training loss of each epoch, one entry per epoch.
    pub loss_history: Vec<f64>,
    /// Mean per-coordinate variance of all image and text embeddings of
    /// the training set after training.
    pub embedding_variance: f64,
    pub collapse: Option<CollapseWarning>,
    /// First epoch whose loss changed by less than 1e-9 relative to the previous one.
    pub plateau_epoch: Option<usize>,
}

/// Mean per-coordinate variance over the embeddings of every image and
/// every text in `data`, pooled.
pub fn embedding_variance(model: &JointEmbeddingModel, data: &PairDataset) -> Result<f64> {
    let mut points = Vec::with_capacity(2 * data.len());
    for v in data.image_features() {
        points.push(model.embed_image(v)?);
    }
    for u in data.text_features() {
        points.push(model.embed_text(u)?);
    }
    if points.is_empty() {
        return Ok(0.0);
    }
    let d = model.d();
    let count = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in &points {
        for (m, x) in mean.iter_mut().zip(p.iter()) {
            *m += x / count;
        }
    }
    let total: f64 = points.iter().map(|p| squared_distance(p.as_slice(), &mean)).sum();
    Ok(total / (count * d as f64))
}

/// Mini-batch Adam training.
///
/// Pair order is reshuffled every epoch from a generator seeded with
/// `config.seed`; the last partial batch is kept. The batch gradient is
/// clipped to `config.grad_clip` by global norm before each update.
pub fn train(mut model: JointEmbeddingModel, data: &PairDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training pairs"));
    }
    if config.d != model.d() {
        return Err(Error::shape("train (config d vs model d)", config.d, model.d()));
    }
    if data.image_features()[0].dim() != model.image_dim() {
        return Err(Error::shape(
            "train (image dim)",
            model.image_dim(),
            data.image_features()[0].dim(),
        ));
    }
    if data.text_features()[0].dim() != model.text_dim() {
        return Err(Error::shape(
            "train (text dim)",
            model.text_dim(),
            data.text_features()[0].dim(),
        ));
    }

    let objective = config.objective();
    let mut adam = AdamState::new(config.adam.with_learning_rate(config.learning_rate), &model)?;
    let mut rng = Rng::new(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut plateau_epoch = None;

    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (batch_index, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = data.batch(chunk);
            let LossGradients { loss, mut grads } = loss_gradients(&model, &batch, objective)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {epoch}, batch {batch_index}")));
            }
            if config.freeze_image_side {
                grads.image_proj.weight.as_mut_slice().fill(0.0);
                grads.image_proj.bias.as_mut_slice().fill(0.0);
            }
            clip_gradients(&mut grads, config.grad_clip)?;
            adam.step(&mut model, &grads)?;
            epoch_loss += loss * chunk.len() as f64;
        }
        let epoch_loss = epoch_loss / data.len() as f64;
        log::debug!("epoch {epoch}: loss {epoch_loss:.6e}");
        if let Some(&prev) = loss_history.last() {
            let prev: f64 = prev;
            if plateau_epoch.is_none() && (prev - epoch_loss).abs() <= 1e-9 * prev.abs().max(1e-300) {
                log::info!("loss plateau at epoch {epoch}: {epoch_loss:.6e}");
                plateau_epoch = Some(epoch);
            }
        }
        loss_history.push(epoch_loss);
    }

    let embedding_variance = embedding_variance(&model, data)?;
    let final_loss = match loss_history.last() {
        Some(&l) => l,
        None => batch_loss(&model, &data.all(), objective)?,
    };
    let collapse = (embedding_variance < config.collapse_variance).then(|| {
        let warning = CollapseWarning {
            embedding_variance,
            final_loss,
        };
        log::warn!("{warning}");
        warning
    });

    Ok(TrainOutcome {
        model,
        loss_history,
        embedding_variance,
        collapse,
        plateau_epoch,
    })
}
