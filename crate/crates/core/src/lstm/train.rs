use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Segment;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};

use super::adam::{adam_update, AdamConfig, AdamState};
use super::backward::loss_and_gradients_projected;
use super::forward::Projected;
use super::params::LstmParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Global-norm gradient clip; `None` disables clipping and is written as 0.
    #[serde(with = "nonpositive_is_none")]
    pub clip_norm: Option<f64>,
}

mod nonpositive_is_none {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(v.unwrap_or(0.0))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let v = f64::deserialize(d)?;
        Ok((v > 0.0).then_some(v))
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            epochs: 50,
            seed: 0,
            adam: AdamConfig::default(),
            clip_norm: Some(5.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: LstmParams,
    /// Token-weighted mean training loss of each epoch.
    pub loss_trace: Vec<f64>,
    pub steps: u64,
}

/// Mini-batch Adam. Each epoch reshuffles the segments with a seeded generator and visits them in
/// batches of `batch_size` (the last batch may be short), one update per batch.
pub fn train(
    params: LstmParams,
    segments: &[Segment],
    embeddings: &EmbeddingTable,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut params = params;
    let mut loss_trace = Vec::with_capacity(config.epochs);
    if config.epochs == 0 {
        return Ok(TrainOutcome { params, loss_trace, steps: 0 });
    }
    let usable: Vec<&Segment> = segments.iter().filter(|s| s.valid_len > 0).collect();
    if usable.is_empty() {
        return Err(Error::Empty("training set has no segments"));
    }
    let mut adam = AdamState::new(&params, config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut batch: Vec<&Segment> = Vec::with_capacity(config.batch_size);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_nll = 0.0;
        let mut epoch_tokens = 0usize;
        for idx in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(idx.iter().map(|&i| usable[i]));
            let (loss, mut grad) = {
                let model = Projected::new(&params, embeddings)?;
                loss_and_gradients_projected(&model, &batch, embeddings)?
            };
            let tokens: usize = batch.iter().map(|s| s.valid_len).sum();
            epoch_nll += loss * tokens as f64;
            epoch_tokens += tokens;
            if let Some(max_norm) = config.clip_norm {
                let norm = grad.norm();
                if norm > max_norm {
                    grad.scale(max_norm / norm);
                }
            }
            adam_update(&mut params, &grad, &mut adam);
        }
        loss_trace.push(epoch_nll / epoch_tokens as f64);
    }
    if !params.is_finite() {
        return Err(Error::NonFinite("trained parameters"));
    }
    Ok(TrainOutcome {
        params,
        loss_trace,
        steps: adam.step,
    })
}
