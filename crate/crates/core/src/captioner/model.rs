//! LSTM language model conditioned on an image feature.
//!
//! Cell equations, with `z = W_g [x; h] + b_g` split into four blocks of
//! `hidden` rows in the order i, f, g, o:
//!
//! ```text
//! i = σ(z_i)   f = σ(z_f)   g = tanh(z_g)   o = σ(z_o)
//! c' = f ⊙ c + i ⊙ g
//! h' = o ⊙ tanh(c')
//! logits = W_out h' + b_out
//! ```
//!
//! The image enters once, as the input of step 0: `x_0 = A v + a`. Its
//! output is not scored. Step 1 reads `<bos>` and every following step reads
//! the embedding of the previous ground-truth word (teacher forcing).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::vocab::{Vocabulary, BOS, EOS, RESERVED};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::joint::uniform_matrix;
use crate::math::{self, sigmoid};
use crate::numerics::{Matrix, ParamGroup, ParamGroupMut, Parameters, Rng, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaptionerDims {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub image_dim: usize,
}

impl CaptionerDims {
    fn validate(&self) -> Result<()> {
        if self.vocab_size < RESERVED.len() || self.embed_dim == 0 || self.hidden_dim == 0 || self.image_dim == 0 {
            return Err(Error::invalid(alloc::format!("invalid captioner dims {self:?}")));
        }
        Ok(())
    }
}

/// All trainable weights of the captioner.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `embed × vocab`; column `j` embeds token `j`.
    pub input_embed: Matrix,
    /// `embed × image_dim`.
    pub adapter_weight: Matrix,
    pub adapter_bias: Vector,
    /// `4·hidden × (embed + hidden)`, gate blocks i, f, g, o.
    pub gate_weight: Matrix,
    pub gate_bias: Vector,
    /// `vocab × hidden`.
    pub head_weight: Matrix,
    pub head_bias: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vector,
    pub c: Vector,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self {
            h: Vector::zeros(hidden_dim),
            c: Vector::zeros(hidden_dim),
        }
    }
}

impl LstmParams {
    pub fn zeros(dims: CaptionerDims) -> Result<Self> {
        dims.validate()?;
        let CaptionerDims {
            vocab_size: v,
            embed_dim: e,
            hidden_dim: h,
            image_dim,
        } = dims;
        Ok(Self {
            input_embed: Matrix::zeros(e, v),
            adapter_weight: Matrix::zeros(e, image_dim),
            adapter_bias: Vector::zeros(e),
            gate_weight: Matrix::zeros(4 * h, e + h),
            gate_bias: Vector::zeros(4 * h),
            head_weight: Matrix::zeros(v, h),
            head_bias: Vector::zeros(v),
        })
    }

    /// Fan-based uniform weights, zero biases except the forget gate
    /// which starts at 1.
    pub fn init(dims: CaptionerDims, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(dims)?;
        let mut rng = Rng::new(seed);
        let CaptionerDims {
            vocab_size: v,
            embed_dim: e,
            hidden_dim: h,
            image_dim,
        } = dims;
        p.input_embed = uniform_matrix(&mut rng, e, v);
        p.adapter_weight = uniform_matrix(&mut rng, e, image_dim);
        p.gate_weight = uniform_matrix(&mut rng, 4 * h, e + h);
        p.head_weight = uniform_matrix(&mut rng, v, h);
        p.gate_bias.as_mut_slice()[h..2 * h].fill(1.0);
        Ok(p)
    }

    pub fn dims(&self) -> CaptionerDims {
        CaptionerDims {
            vocab_size: self.input_embed.cols(),
            embed_dim: self.input_embed.rows(),
            hidden_dim: self.head_weight.cols(),
            image_dim: self.adapter_weight.cols(),
        }
    }

    /// Checks every block against the dims implied by the embedding and head.
    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        d.validate()?;
        let (e, h, v) = (d.embed_dim, d.hidden_dim, d.vocab_size);
        let checks = [
            ("adapter_weight", self.adapter_weight.shape(), (e, d.image_dim)),
            ("adapter_bias", (self.adapter_bias.dim(), 1), (e, 1)),
            ("gate_weight", self.gate_weight.shape(), (4 * h, e + h)),
            ("gate_bias", (self.gate_bias.dim(), 1), (4 * h, 1)),
            ("head_weight", self.head_weight.shape(), (v, h)),
            ("head_bias", (self.head_bias.dim(), 1), (v, 1)),
            ("input_embed", self.input_embed.shape(), (e, v)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::shape(name, got, want));
            }
        }
        if self.groups().iter().any(|(_, g)| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("captioner parameters".into()));
        }
        Ok(())
    }

    /// Step-0 input derived from the image feature.
    pub fn image_input(&self, feature: &FeatureVector) -> Result<Vector> {
        let mut x = self.adapter_weight.matvec(feature)?;
        for (xi, b) in x.as_mut_slice().iter_mut().zip(self.adapter_bias.iter()) {
            *xi += b;
        }
        Ok(x)
    }

    pub fn token_input(&self, token: usize) -> Vector {
        self.input_embed.column(token)
    }
}

impl Parameters for LstmParams {
    fn groups(&self) -> Vec<ParamGroup<'_>> {
        vec![
            ("input_embed", self.input_embed.as_slice()),
            ("adapter_weight", self.adapter_weight.as_slice()),
            ("adapter_bias", self.adapter_bias.as_slice()),
            ("gate_weight", self.gate_weight.as_slice()),
            ("gate_bias", self.gate_bias.as_slice()),
            ("head_weight", self.head_weight.as_slice()),
            ("head_bias", self.head_bias.as_slice()),
        ]
    }

    fn groups_mut(&mut self) -> Vec<ParamGroupMut<'_>> {
        vec![
            ("input_embed", self.input_embed.as_mut_slice()),
            ("adapter_weight", self.adapter_weight.as_mut_slice()),
            ("adapter_bias", self.adapter_bias.as_mut_slice()),
            ("gate_weight", self.gate_weight.as_mut_slice()),
            ("gate_bias", self.gate_bias.as_mut_slice()),
            ("head_weight", self.head_weight.as_mut_slice()),
            ("head_bias", self.head_bias.as_mut_slice()),
        ]
    }
}

/// Intermediate values of one step, kept for backpropagation.
struct StepCache {
    input: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
    c: Vec<f64>,
}

fn cell_forward(params: &LstmParams, h_prev: &[f64], c_prev: &[f64], x: &[f64]) -> Result<StepCache> {
    let hd = params.head_weight.cols();
    if x.len() != params.input_embed.rows() {
        return Err(Error::shape("lstm_step input", params.input_embed.rows(), x.len()));
    }
    if h_prev.len() != hd || c_prev.len() != hd {
        return Err(Error::shape("lstm_step state", hd, h_prev.len().max(c_prev.len())));
    }
    let mut xh = Vec::with_capacity(x.len() + hd);
    xh.extend_from_slice(x);
    xh.extend_from_slice(h_prev);
    let mut z = params.gate_weight.matvec_slice(&xh)?;
    for (zi, b) in z.iter_mut().zip(params.gate_bias.iter()) {
        *zi += b;
    }
    let i: Vec<f64> = z[..hd].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<f64> = z[hd..2 * hd].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = z[2 * hd..3 * hd].iter().map(|&v| math::tanh(v)).collect();
    let o: Vec<f64> = z[3 * hd..].iter().map(|&v| sigmoid(v)).collect();
    let c: Vec<f64> = (0..hd).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|&v| math::tanh(v)).collect();
    let h: Vec<f64> = (0..hd).map(|k| o[k] * tanh_c[k]).collect();
    Ok(StepCache {
        input: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        g,
        o,
        tanh_c,
        h,
        c,
    })
}

fn head(params: &LstmParams, h: &[f64]) -> Vec<f64> {
    let mut logits = params.head_weight.matvec_slice(h).expect("head shape validated");
    for (l, b) in logits.iter_mut().zip(params.head_bias.iter()) {
        *l += b;
    }
    logits
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| math::exp(l - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + math::ln(logits.iter().map(|&l| math::exp(l - max)).sum::<f64>())
}

/// One LSTM step followed by the output head.
pub fn lstm_step(params: &LstmParams, state: &LstmState, x: &Vector) -> Result<(LstmState, Vector)> {
    let cache = cell_forward(params, state.h.as_slice(), state.c.as_slice(), x.as_slice())?;
    let logits = head(params, &cache.h);
    Ok((
        LstmState {
            h: cache.h.into(),
            c: cache.c.into(),
        },
        logits.into(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionLoss {
    /// Mean cross-entropy per target token.
    pub nll: f64,
    pub grads: LstmParams,
    /// Number of scored targets (caption tokens plus `<eos>`).
    pub targets: usize,
}

/// Teacher-forced negative log-likelihood of one caption and its gradient.
pub fn caption_nll(
    params: &LstmParams,
    vocab: &Vocabulary,
    image_feature: &FeatureVector,
    caption: &str,
) -> Result<CaptionLoss> {
    nll_for_tokens(params, image_feature, &vocab.encode(caption))
}

/// [`caption_nll`] over pre-encoded token ids.
pub fn nll_for_tokens(params: &LstmParams, image_feature: &FeatureVector, tokens: &[usize]) -> Result<CaptionLoss> {
    let dims = params.dims();
    if let Some(&bad) = tokens.iter().find(|&&t| t >= dims.vocab_size) {
        return Err(Error::invalid(alloc::format!(
            "token id {bad} outside vocabulary of {}",
            dims.vocab_size
        )));
    }
    let hd = dims.hidden_dim;
    let e = dims.embed_dim;

    // Inputs: image, <bos>, w_1..w_T. Targets of steps 1..=T+1: w_1..w_T, <eos>.
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(tokens.len() + 2);
    inputs.push(params.image_input(image_feature)?.into_vec());
    let input_tokens: Vec<usize> = core::iter::once(BOS).chain(tokens.iter().copied()).collect();
    for &t in &input_tokens {
        inputs.push(params.token_input(t).into_vec());
    }
    let targets: Vec<usize> = tokens.iter().copied().chain(core::iter::once(EOS)).collect();

    let mut caches = Vec::with_capacity(inputs.len());
    let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
    for x in &inputs {
        let cache = cell_forward(params, &h, &c, x)?;
        h = cache.h.clone();
        c = cache.c.clone();
        caches.push(cache);
    }

    let m = targets.len() as f64;
    let mut grads = LstmParams::zeros(dims)?;
    let mut nll = 0.0;
    // dL/dh contributed directly by each step's output head.
    let mut dh_out = vec![vec![0.0; hd]; caches.len()];
    for (step, &target) in (1..caches.len()).zip(&targets) {
        let logits = head(params, &caches[step].h);
        nll += log_sum_exp(&logits) - logits[target];
        let mut dlogits = softmax(&logits);
        dlogits[target] -= 1.0;
        dlogits.iter_mut().for_each(|d| *d /= m);
        grads.head_weight.add_outer(1.0, &dlogits, &caches[step].h);
        for (b, d) in grads.head_bias.as_mut_slice().iter_mut().zip(&dlogits) {
            *b += d;
        }
        params.head_weight.add_transpose_matvec(&dlogits, &mut dh_out[step]);
    }
    nll /= m;

    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    let mut dz = vec![0.0; 4 * hd];
    for step in (0..caches.len()).rev() {
        let s = &caches[step];
        for k in 0..hd {
            let dh = dh_out[step][k] + dh_next[k];
            let d_o = dh * s.tanh_c[k];
            let dc = dh * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]) + dc_next[k];
            let di = dc * s.g[k];
            let dg = dc * s.i[k];
            let df = dc * s.c_prev[k];
            dc_next[k] = dc * s.f[k];
            dz[k] = di * s.i[k] * (1.0 - s.i[k]);
            dz[hd + k] = df * s.f[k] * (1.0 - s.f[k]);
            dz[2 * hd + k] = dg * (1.0 - s.g[k] * s.g[k]);
            dz[3 * hd + k] = d_o * s.o[k] * (1.0 - s.o[k]);
        }
        let mut xh = Vec::with_capacity(e + hd);
        xh.extend_from_slice(&s.input);
        xh.extend_from_slice(&s.h_prev);
        grads.gate_weight.add_outer(1.0, &dz, &xh);
        for (b, d) in grads.gate_bias.as_mut_slice().iter_mut().zip(&dz) {
            *b += d;
        }
        let mut dxh = vec![0.0; e + hd];
        params.gate_weight.add_transpose_matvec(&dz, &mut dxh);
        dh_next.copy_from_slice(&dxh[e..]);
        let dx = &dxh[..e];
        if step == 0 {
            grads.adapter_weight.add_outer(1.0, dx, image_feature.as_slice());
            for (b, d) in grads.adapter_bias.as_mut_slice().iter_mut().zip(dx) {
                *b += d;
            }
        } else {
            let token = input_tokens[step - 1];
            for (r, d) in dx.iter().enumerate() {
                grads.input_embed[(r, token)] += d;
            }
        }
    }

    Ok(CaptionLoss {
        nll,
        grads,
        targets: targets.len(),
    })
}

/// Index of the largest eligible logit: `<eos>` or any non-reserved token.
/// Ties go to the lowest index.
fn argmax_eligible(logits: &[f64]) -> usize {
    let mut best = EOS;
    for (i, &l) in logits.iter().enumerate().skip(RESERVED.len()) {
        if l > logits[best] || (l == logits[best] && i < best) {
            best = i;
        }
    }
    best
}

/// Greedy decoding: stop at `<eos>` or after `max_len` words.
pub fn greedy_decode(
    params: &LstmParams,
    vocab: &Vocabulary,
    image_feature: &FeatureVector,
    max_len: usize,
) -> Result<String> {
    if vocab.len() != params.dims().vocab_size {
        return Err(Error::shape(
            "greedy_decode vocabulary",
            vocab.len(),
            params.dims().vocab_size,
        ));
    }
    let hd = params.dims().hidden_dim;
    let mut state = LstmState::zeros(hd);
    let (next, _) = lstm_step(params, &state, &params.image_input(image_feature)?)?;
    state = next;
    let mut token = BOS;
    let mut words: Vec<&str> = Vec::new();
    while words.len() < max_len {
        let (next, logits) = lstm_step(params, &state, &params.token_input(token))?;
        state = next;
        token = argmax_eligible(logits.as_slice());
        if token == EOS {
            break;
        }
        words.push(vocab.token(token).expect("index within vocabulary"));
    }
    Ok(words.join(" "))
}
