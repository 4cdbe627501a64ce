use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::model::{nll_for_tokens, LstmParams};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::numerics::{clip_gradients, AdamConfig, AdamState, Parameters, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionerTrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub grad_clip: f64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for CaptionerTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 10,
            grad_clip: 10.0,
            seed: 42,
            adam: AdamConfig::default(),
        }
    }
}

/// One training example: an image feature and one of its captions.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionExample {
    pub feature: FeatureVector,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionerTrainOutcome {
    pub params: LstmParams,
    /// Mean per-caption NLL of each epoch.
    pub loss_history: Vec<f64>,
}

/// Mini-batch Adam with teacher forcing. A batch gradient is the mean of
/// the per-caption gradients, clipped by global norm.
pub fn train_captioner(
    mut params: LstmParams,
    vocab: &Vocabulary,
    data: &[CaptionExample],
    config: &CaptionerTrainConfig,
) -> Result<CaptionerTrainOutcome> {
    if data.is_empty() {
        return Err(Error::Empty("caption training set"));
    }
    if config.batch_size == 0 || !(config.learning_rate > 0.0) || !(config.grad_clip > 0.0) {
        return Err(Error::invalid(
            "batch_size, learning_rate and grad_clip must be positive",
        ));
    }
    params.validate()?;
    if vocab.len() != params.dims().vocab_size {
        return Err(Error::shape(
            "train_captioner vocabulary",
            vocab.len(),
            params.dims().vocab_size,
        ));
    }
    let encoded: Vec<Vec<usize>> = data.iter().map(|ex| vocab.encode(&ex.caption)).collect();

    let mut adam = AdamState::new(config.adam.with_learning_rate(config.learning_rate), &params)?;
    let mut rng = Rng::new(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut grads = LstmParams::zeros(params.dims())?;

    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (batch_index, chunk) in order.chunks(config.batch_size).enumerate() {
            grads.zero();
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &i in chunk {
                let loss = nll_for_tokens(&params, &data[i].feature, &encoded[i])?;
                batch_loss += loss.nll;
                for ((_, acc), (_, g)) in grads.groups_mut().into_iter().zip(loss.grads.groups()) {
                    for (a, x) in acc.iter_mut().zip(g) {
                        *a += x * scale;
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {epoch}, batch {batch_index}")));
            }
            clip_gradients(&mut grads, config.grad_clip)?;
            adam.step(&mut params, &grads)?;
            epoch_loss += batch_loss;
        }
        let mean = epoch_loss / data.len() as f64;
        log::debug!("captioner epoch {epoch}: nll {mean:.6}");
        loss_history.push(mean);
    }
    Ok(CaptionerTrainOutcome { params, loss_history })
}
