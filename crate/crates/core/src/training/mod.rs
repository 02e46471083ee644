//! Triplet sampling, the composite objective, the optimizer, and the
//! epoch loop.

mod adam;
mod loss;
mod sampling;

use std::path::PathBuf;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::embedding_store::Dataset;
use crate::error::{Error, Result};
use crate::model::{save_checkpoint, Checkpoint, ModelDims, ModelParams, DEFAULT_EMBED, DEFAULT_HIDDEN, DEFAULT_TEMPERATURE};
use crate::rng::{stream_rng, STREAM_SAMPLING};

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use loss::{batch_loss, batch_loss_node, loss_and_grads, LossContext, LossWeights};
pub use sampling::{sample_batch, Triplet, TripletBatch, TripletSampler};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub seed: u64,
    pub hidden: usize,
    pub embed: usize,
    pub temperature: f64,
    /// Checkpoint written every `checkpoint_interval` epochs when set.
    pub checkpoint_path: Option<PathBuf>,
    pub checkpoint_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            adam: AdamConfig::default(),
            weights: LossWeights::default(),
            seed: 42,
            hidden: DEFAULT_HIDDEN,
            embed: DEFAULT_EMBED,
            temperature: DEFAULT_TEMPERATURE,
            checkpoint_path: None,
            checkpoint_interval: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        let w = &self.weights;
        let positive = [a.learning_rate, a.eps, self.temperature];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(
                "learning rate, adam eps and temperature must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        let weights = [w.pair, w.attr, w.obj, w.non_attr, w.non_obj];
        if weights.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if self.batch_size == 0 || self.hidden == 0 || self.embed == 0 {
            return Err(Error::Config("batch_size, hidden and embed must be at least 1".into()));
        }
        Ok(())
    }

    pub fn dims_for(&self, dataset: &Dataset) -> ModelDims {
        let (d, l) = dataset.feature_shape();
        ModelDims {
            d,
            l,
            w: dataset.words().dim(),
            h: self.hidden,
            e: self.embed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams<f64>,
    pub history: Vec<EpochRecord>,
}

/// Trains from a fresh initialization. Deterministic for a given dataset
/// and config.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let params = ModelParams::init(config.dims_for(dataset), config.temperature, config.seed)?;
    train_from(dataset, config, params)
}

/// Continues training `params` for `config.epochs` epochs.
pub fn train_from(
    dataset: &Dataset,
    config: &TrainConfig,
    mut params: ModelParams<f64>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let ctx = LossContext::<f64>::new(dataset)?;
    let sampler = TripletSampler::new(dataset);
    if sampler.num_train() == 0 {
        return Err(Error::Contract("dataset has no training images".into()));
    }
    let mut rng = stream_rng(config.seed, STREAM_SAMPLING);
    let mut state = OptimizerState::new(params.tensors());
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mut total = 0.0;
        let mut count = 0usize;
        for (step, batch) in sampler.epoch(&mut rng, config.batch_size).iter().enumerate() {
            let (loss, grads) = loss_and_grads(&params, &ctx, batch, &config.weights)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    step,
                    value: loss,
                });
            }
            adam_step(&mut params.tensors_mut(), &grads, &mut state, &config.adam)?;
            total += loss * batch.len() as f64;
            count += batch.len();
        }
        let record = EpochRecord {
            epoch,
            mean_loss: total / count as f64,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        info!("epoch {epoch}: mean loss {:.6}", record.mean_loss);
        history.push(record);

        if let Some(path) = &config.checkpoint_path {
            if config.checkpoint_interval > 0 && epoch % config.checkpoint_interval == 0 {
                save_checkpoint(path, &Checkpoint::new(params.clone(), config.seed, epoch))?;
            }
        }
    }
    Ok(TrainOutcome { params, history })
}
