//! The four encoder-decoder architectures (BOW/RNN encoder × BOW/RNN
//! decoder), their objectives and gradients, training and persistence.

mod checkpoint;
mod objective;
mod params;
mod split;
mod train;

use std::path::Path;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, fingerprint, load_checkpoint, save_checkpoint,
    FORMAT_VERSION, MAGIC,
};
pub use objective::{
    batch_mean_nll, check_loss_gradient, decoder_initial_state, encode, encode_bow, encode_rnn,
    loss_batch, nll_bow_decoder, nll_rnn_decoder, teacher_forced_score, teacher_forced_states,
    BatchLoss, Side,
};
pub use params::{DecoderKind, EncoderKind, ModelConfig, Parameters, INIT_SCALE};
pub use split::{likelihood_split_derivatives, NllParts};
pub use train::{init_params, train, train_with, TrainStats};

pub(crate) use objective::{check_ids, decoder, output_logits};

use crate::error::Result;

/// Trained parameters together with their config and content fingerprint.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Parameters<f32>,
    fingerprint: String,
}

impl Model {
    pub fn new(config: ModelConfig, params: Parameters<f32>) -> Self {
        let fingerprint = fingerprint(&params, &config);
        Model {
            config,
            params,
            fingerprint,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, config) = load_checkpoint(path)?;
        Ok(Model::new(config, params))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(&self.params, &self.config, path)
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}
