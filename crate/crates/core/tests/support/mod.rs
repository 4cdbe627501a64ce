//! Independent oracles shared by the integration and acceptance tests.
//!
//! Nothing here calls into the code under test except to read parameter
//! values and to obtain the analytic gradients being checked.

#![allow(dead_code)]

pub mod dd;

use std::collections::{BTreeMap, BTreeSet};

use dd::DD;
use dsk_core::captioner::{LstmParams, BOS, EOS};
use dsk_core::numerics::{Matrix, Parameters};

fn dd_matvec(m: &Matrix, x: &[DD]) -> Vec<DD> {
    (0..m.rows())
        .map(|i| {
            m.row(i)
                .iter()
                .zip(x)
                .fold(DD::ZERO, |acc, (&w, &xi)| acc + DD::new(w) * xi)
        })
        .collect()
}

/// Captioner parameters lifted to double-double, with one coordinate
/// optionally shifted by an exact double-double offset.
struct DdParams<'a> {
    params: &'a LstmParams,
    shift: Option<(usize, usize, DD)>,
}

impl DdParams<'_> {
    fn value(&self, group: usize, index: usize, raw: f64) -> DD {
        match self.shift {
            Some((g, i, delta)) if g == group && i == index => DD::new(raw) + delta,
            _ => DD::new(raw),
        }
    }

    fn matrix(&self, group: usize, m: &Matrix) -> Vec<Vec<DD>> {
        (0..m.rows())
            .map(|r| {
                (0..m.cols())
                    .map(|c| self.value(group, r * m.cols() + c, m[(r, c)]))
                    .collect()
            })
            .collect()
    }

    fn vector(&self, group: usize, v: &[f64]) -> Vec<DD> {
        v.iter().enumerate().map(|(i, &x)| self.value(group, i, x)).collect()
    }
}

fn mv(m: &[Vec<DD>], x: &[DD]) -> Vec<DD> {
    m.iter()
        .map(|row| row.iter().zip(x).fold(DD::ZERO, |acc, (&w, &xi)| acc + w * xi))
        .collect()
}

/// Reference teacher-forced mean NLL evaluated in double-double.
/// Group order matches `LstmParams::groups`.
fn reference_nll(p: &DdParams<'_>, feature: &[f64], tokens: &[usize]) -> DD {
    let params = p.params;
    let embed = p.matrix(0, &params.input_embed);
    let adapter_w = p.matrix(1, &params.adapter_weight);
    let adapter_b = p.vector(2, params.adapter_bias.as_slice());
    let gate_w = p.matrix(3, &params.gate_weight);
    let gate_b = p.vector(4, params.gate_bias.as_slice());
    let head_w = p.matrix(5, &params.head_weight);
    let head_b = p.vector(6, params.head_bias.as_slice());
    let hidden = params.head_weight.cols();

    let f: Vec<DD> = feature.iter().map(|&x| DD::new(x)).collect();
    let x0: Vec<DD> = mv(&adapter_w, &f)
        .into_iter()
        .zip(&adapter_b)
        .map(|(a, &b)| a + b)
        .collect();
    let mut inputs = vec![x0];
    let mut prev = BOS;
    let mut targets = Vec::new();
    for &t in tokens.iter().chain(std::iter::once(&EOS)) {
        inputs.push(embed.iter().map(|row| row[prev]).collect());
        targets.push(t);
        prev = t;
    }

    let mut h = vec![DD::ZERO; hidden];
    let mut c = vec![DD::ZERO; hidden];
    let mut total = DD::ZERO;
    for (step, x) in inputs.iter().enumerate() {
        let xh: Vec<DD> = x.iter().chain(h.iter()).copied().collect();
        let z: Vec<DD> = mv(&gate_w, &xh).into_iter().zip(&gate_b).map(|(a, &b)| a + b).collect();
        for k in 0..hidden {
            let i = z[k].sigmoid();
            let fg = z[hidden + k].sigmoid();
            let g = z[2 * hidden + k].tanh();
            let o = z[3 * hidden + k].sigmoid();
            c[k] = fg * c[k] + i * g;
            h[k] = o * c[k].tanh();
        }
        if step == 0 {
            continue;
        }
        let logits: Vec<DD> = mv(&head_w, &h).into_iter().zip(&head_b).map(|(a, &b)| a + b).collect();
        let max = logits.iter().copied().fold(logits[0], DD::max);
        let sum = logits.iter().fold(DD::ZERO, |acc, &l| acc + (l - max).exp());
        total = total + (max + sum.ln() - logits[targets[step - 1]]);
    }
    total / DD::new(targets.len() as f64)
}

/// Central differences of the reference NLL in double-double, compared
/// with `analytic` by `|a − n| / max(1e-12, |a| + |n|)`. Returns the max.
pub fn captioner_fd_max_rel_error(
    params: &LstmParams,
    feature: &[f64],
    tokens: &[usize],
    analytic: &LstmParams,
    h: f64,
) -> (f64, String) {
    let step = DD::new(h);
    let mut worst = (0.0, String::new());
    for (group, (name, values)) in analytic.groups().iter().enumerate() {
        for (index, &a) in values.iter().enumerate() {
            let plus = reference_nll(
                &DdParams {
                    params,
                    shift: Some((group, index, step)),
                },
                feature,
                tokens,
            );
            let minus = reference_nll(
                &DdParams {
                    params,
                    shift: Some((group, index, -step)),
                },
                feature,
                tokens,
            );
            let numeric = ((plus - minus) / (step + step)).to_f64();
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{index}] analytic {a:e} numeric {numeric:e}"));
            }
        }
    }
    worst
}

/// Reference f64 NLL value (no perturbation), for cross-checking the forward pass.
pub fn captioner_reference_nll(params: &LstmParams, feature: &[f64], tokens: &[usize]) -> f64 {
    reference_nll(&DdParams { params, shift: None }, feature, tokens).to_f64()
}

/// Average precision by direct enumeration of the definition: for every
/// rank k whose item is relevant, count relevant items among the first k
/// from scratch.
pub fn brute_force_ap(ranked: &[String], relevant: &BTreeSet<String>) -> f64 {
    let mut sum = 0.0;
    for k in 1..=ranked.len() {
        if !relevant.contains(&ranked[k - 1]) {
            continue;
        }
        let hits = ranked[..k].iter().filter(|id| relevant.contains(*id)).count();
        sum += hits as f64 / k as f64;
    }
    sum / relevant.len() as f64
}

pub fn brute_force_map(run: &BTreeMap<String, Vec<String>>, qrels: &BTreeMap<String, BTreeSet<String>>) -> f64 {
    let judged: Vec<&String> = run
        .keys()
        .filter(|q| qrels.get(*q).is_some_and(|r| !r.is_empty()))
        .collect();
    let total: f64 = judged.iter().map(|q| brute_force_ap(&run[*q], &qrels[*q])).sum();
    total / judged.len() as f64
}

/// Exact top-k by sorting every (distance, id) pair. `items` holds one
/// entry per image: its id and the vectors it may match (one for embedding
/// mode, one per caption for caption mode).
pub fn brute_force_topk(query: &[f64], items: &[(String, Vec<Vec<f64>>)], k: usize) -> Vec<(String, f64, usize)> {
    let mut scored: Vec<(String, f64, usize)> = items
        .iter()
        .map(|(id, vectors)| {
            let mut best = (f64::INFINITY, 0usize);
            for (j, v) in vectors.iter().enumerate() {
                let d: f64 = query.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, j);
                }
            }
            (id.clone(), best.0, best.1)
        })
        .collect();
    scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

pub fn dd_dot_matrix_check(m: &Matrix, x: &[f64]) -> Vec<f64> {
    dd_matvec(m, &x.iter().map(|&v| DD::new(v)).collect::<Vec<_>>())
        .into_iter()
        .map(DD::to_f64)
        .collect()
}

/// A random orthogonal `n × n` matrix: Gram-Schmidt on Gaussian rows.
pub fn random_orthogonal(rng: &mut dsk_core::numerics::Rng, n: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        for r in &rows {
            let p: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(r) {
                *x -= p * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            rows.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    rows
}

/// Image features `v ~ N(0, I)` and text features `u = A v + σ ε` for a
/// fixed orthogonal `A`, so a perfect text projection (`A⁻¹ = Aᵀ`) exists.
pub struct Synthetic {
    pub a: Vec<Vec<f64>>,
    pub images: Vec<dsk_core::features::FeatureVector>,
    pub texts: Vec<dsk_core::features::FeatureVector>,
}

impl Synthetic {
    pub fn new(seed: u64, n: usize, dim: usize, sigma: f64) -> Self {
        let mut rng = dsk_core::numerics::Rng::new(seed);
        let a = random_orthogonal(&mut rng, dim);
        let mut s = Synthetic {
            a,
            images: Vec::new(),
            texts: Vec::new(),
        };
        s.extend(&mut rng, n, sigma);
        s
    }

    /// Fresh pairs from the same `A`.
    pub fn extend(&mut self, rng: &mut dsk_core::numerics::Rng, n: usize, sigma: f64) {
        let dim = self.a.len();
        for _ in 0..n {
            let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            let u: Vec<f64> = self
                .a
                .iter()
                .map(|row| row.iter().zip(&v).map(|(a, x)| a * x).sum::<f64>() + sigma * rng.normal())
                .collect();
            self.images.push(v.into());
            self.texts.push(u.into());
        }
    }
}

/// Fraction of texts whose nearest image (by the model's embeddings, exact
/// scan) is their own pair, and the mAP with exactly that image relevant.
pub fn pair_retrieval_scores(
    model: &dsk_core::joint::JointEmbeddingModel,
    images: &[dsk_core::features::FeatureVector],
    texts: &[dsk_core::features::FeatureVector],
) -> (f64, f64) {
    let emb_images: Vec<Vec<f64>> = images
        .iter()
        .map(|v| model.embed_image(v).unwrap().into_vec())
        .collect();
    let mut top1 = 0usize;
    let mut ap_sum = 0.0;
    for (i, u) in texts.iter().enumerate() {
        let q = model.embed_text(u).unwrap().into_vec();
        let dist = |e: &Vec<f64>| q.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let own = dist(&emb_images[i]);
        // Rank of the own image, ties resolved by index like an id sort on
        // zero-padded ids.
        let better = emb_images
            .iter()
            .enumerate()
            .filter(|(j, e)| {
                let dj = dist(e);
                dj < own || (dj == own && *j < i)
            })
            .count();
        if better == 0 {
            top1 += 1;
        }
        ap_sum += 1.0 / (better + 1) as f64;
    }
    (top1 as f64 / texts.len() as f64, ap_sum / texts.len() as f64)
}

/// Two-class captioner fixture: noisy copies of feature A map to
/// "red square", of feature B to "blue circle".
pub struct ToyCaptions {
    pub vocab: dsk_core::captioner::Vocabulary,
    pub train: Vec<dsk_core::captioner::CaptionExample>,
    /// Held-out features with their expected caption.
    pub held_out: Vec<(dsk_core::features::FeatureVector, &'static str)>,
}

pub const TOY_CLASSES: [&str; 2] = ["red square", "blue circle"];

impl ToyCaptions {
    pub fn new(seed: u64, copies: usize, held_out: usize, dim: usize, noise: f64) -> Self {
        use dsk_core::captioner::{build_vocab, CaptionExample};
        let mut rng = dsk_core::numerics::Rng::new(seed);
        let centers: Vec<Vec<f64>> = (0..2).map(|_| (0..dim).map(|_| rng.normal()).collect()).collect();
        let sample = |rng: &mut dsk_core::numerics::Rng, c: usize| -> dsk_core::features::FeatureVector {
            centers[c]
                .iter()
                .map(|x| x + noise * rng.normal())
                .collect::<Vec<_>>()
                .into()
        };
        let mut train = Vec::new();
        for _ in 0..copies {
            for (c, caption) in TOY_CLASSES.iter().enumerate() {
                train.push(CaptionExample {
                    feature: sample(&mut rng, c),
                    caption: caption.to_string(),
                });
            }
        }
        let held_out = (0..held_out)
            .flat_map(|_| [0, 1])
            .map(|c| (sample(&mut rng, c), TOY_CLASSES[c]))
            .collect();
        let vocab = build_vocab(TOY_CLASSES, 1).unwrap();
        ToyCaptions { vocab, train, held_out }
    }

    pub fn accuracy(&self, params: &LstmParams) -> f64 {
        let correct = self
            .held_out
            .iter()
            .filter(|(f, want)| {
                dsk_core::captioner::greedy_decode(params, &self.vocab, f, dsk_core::captioner::DEFAULT_MAX_LEN)
                    .unwrap()
                    == *want
            })
            .count();
        correct as f64 / self.held_out.len() as f64
    }

    pub fn mean_nll(&self, params: &LstmParams) -> f64 {
        let total: f64 = self
            .train
            .iter()
            .map(|ex| {
                dsk_core::captioner::caption_nll(params, &self.vocab, &ex.feature, &ex.caption)
                    .unwrap()
                    .nll
            })
            .sum();
        total / self.train.len() as f64
    }
}
