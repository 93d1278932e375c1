use std::time::Instant;

use crate::corpus::{batches, ContextPair};
use crate::error::{Error, Result};
use crate::numcore::{AdamConfig, AdamState, SeededRng};

use super::{loss_batch, ModelConfig, Parameters};

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean NLL per context word over the epoch, measured before each update.
    pub mean_nll: f64,
    pub seconds: f64,
}

/// Initial parameters for `config`, drawn from the config's seed.
pub fn init_params(config: &ModelConfig) -> Result<Parameters<f32>> {
    Parameters::init(config, &mut SeededRng::new(config.seed).fork(INIT_STREAM))
}

/// Trains in `f32` with Adam; a pure function of `(config, pairs)`.
pub fn train(
    config: &ModelConfig,
    pairs: &[ContextPair],
) -> Result<(Parameters<f32>, Vec<TrainStats>)> {
    train_with(config, pairs, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with<F: FnMut(&TrainStats)>(
    config: &ModelConfig,
    pairs: &[ContextPair],
    mut on_epoch: F,
) -> Result<(Parameters<f32>, Vec<TrainStats>)> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::invalid("no training pairs"));
    }
    let mut params = init_params(config)?;
    let mut flat = params.flatten();
    let mut adam = AdamState::new(
        flat.len(),
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut shuffle = SeededRng::new(config.seed).fork(SHUFFLE_STREAM);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mut total = 0.0;
        let mut words = 0;
        for (b, batch) in batches(pairs, config.batch_size, &mut shuffle)?.enumerate() {
            let loss = loss_batch(&params, &batch).map_err(|e| Error::InBatch {
                batch: b,
                source: Box::new(e),
            })?;
            total += loss.total_nll;
            words += loss.words;
            adam.step(&mut flat, &loss.grads.flatten())
                .map_err(|e| Error::InBatch {
                    batch: b,
                    source: Box::new(e),
                })?;
            params.assign_flat(&flat)?;
        }
        let stats = TrainStats {
            epoch,
            mean_nll: total / words as f64,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok((params, history))
}
