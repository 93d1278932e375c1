use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numcore::{cast_vec, seeded_uniform_init, GruParams, Matrix, Real, SeededRng};

/// Half-width of the uniform initialisation interval.
pub const INIT_SCALE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    Bow,
    Rnn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DecoderKind {
    Bow,
    Rnn,
}

macro_rules! kind_str {
    ($t:ident) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self {
                    $t::Bow => "bow",
                    $t::Rnn => "rnn",
                })
            }
        }

        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    "bow" => Ok($t::Bow),
                    "rnn" => Ok($t::Rnn),
                    _ => Err(Error::invalid(format!("expected bow or rnn, got {s:?}"))),
                }
            }
        }
    };
}
kind_str!(EncoderKind);
kind_str!(DecoderKind);

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    pub decoder: DecoderKind,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Per-word output bias in the softmax; off by default.
    pub softmax_bias: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderKind::Rnn,
            decoder: DecoderKind::Rnn,
            embed_dim: 64,
            hidden_dim: 128,
            vocab_size: 2000,
            max_len: 30,
            seed: 0,
            learning_rate: 5e-4,
            batch_size: 64,
            epochs: 5,
            softmax_bias: false,
        }
    }
}

impl ModelConfig {
    pub fn encoder_dim(&self) -> usize {
        match self.encoder {
            EncoderKind::Bow => self.embed_dim,
            EncoderKind::Rnn => self.hidden_dim,
        }
    }

    /// Width of the rows of `U`.
    pub fn output_dim(&self) -> usize {
        match self.decoder {
            DecoderKind::Bow => self.encoder_dim(),
            DecoderKind::Rnn => self.hidden_dim,
        }
    }

    pub fn needs_bridge(&self) -> bool {
        self.decoder == DecoderKind::Rnn && self.encoder_dim() != self.hidden_dim
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("vocab_size", self.vocab_size),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.vocab_size < 5 {
            return Err(Error::invalid("vocab_size must be at least 5"));
        }
        if self.max_len < 2 {
            return Err(Error::invalid("max_len must be at least 2"));
        }
        let uses_gru = self.encoder == EncoderKind::Rnn || self.decoder == DecoderKind::Rnn;
        if uses_gru && self.hidden_dim < 2 {
            return Err(Error::invalid("hidden_dim must be at least 2"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive and finite"));
        }
        Ok(())
    }
}

/// Every trainable tensor of one encoder-decoder model.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters<T> {
    /// Word embeddings shared by the encoder and both decoders' inputs (`V × d`).
    pub embedding: Matrix<T>,
    pub encoder: Option<GruParams<T>>,
    pub dec_prev: Option<GruParams<T>>,
    pub dec_next: Option<GruParams<T>>,
    /// Output word embeddings `u_w` (`V × h_out`).
    pub output: Matrix<T>,
    pub output_bias: Option<Vec<T>>,
    /// Encoder output → decoder initial state (`hidden × enc_out`).
    pub bridge: Option<Matrix<T>>,
}

impl<T: Real> Parameters<T> {
    /// Uniform initialisation in `[-0.1, 0.1)`; draw order is
    /// `E, enc, dec_prev, dec_next, U, bridge`. Gains start at 1, biases at 0.
    pub fn init(config: &ModelConfig, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let (v, d, h) = (config.vocab_size, config.embed_dim, config.hidden_dim);
        let s = INIT_SCALE;
        let embedding = seeded_uniform_init(rng, v, d, -s, s)?;
        let encoder = match config.encoder {
            EncoderKind::Rnn => Some(GruParams::init(d, h, s, rng)?),
            EncoderKind::Bow => None,
        };
        let (dec_prev, dec_next) = match config.decoder {
            DecoderKind::Rnn => (
                Some(GruParams::init(d, h, s, rng)?),
                Some(GruParams::init(d, h, s, rng)?),
            ),
            DecoderKind::Bow => (None, None),
        };
        let output = seeded_uniform_init(rng, v, config.output_dim(), -s, s)?;
        let output_bias = config.softmax_bias.then(|| vec![T::zero(); v]);
        let bridge = if config.needs_bridge() {
            Some(seeded_uniform_init(rng, h, config.encoder_dim(), -s, s)?)
        } else {
            None
        };
        Ok(Parameters {
            embedding,
            encoder,
            dec_prev,
            dec_next,
            output,
            output_bias,
            bridge,
        })
    }

    /// All-zero parameters with the shapes `config` implies (gains included).
    pub fn zeros(config: &ModelConfig) -> Self {
        let (v, d, h) = (config.vocab_size, config.embed_dim, config.hidden_dim);
        let gru = |on: bool| on.then(|| GruParams::<T>::zeros(d, h).zeros_like());
        Parameters {
            embedding: Matrix::zeros(v, d),
            encoder: gru(config.encoder == EncoderKind::Rnn),
            dec_prev: gru(config.decoder == DecoderKind::Rnn),
            dec_next: gru(config.decoder == DecoderKind::Rnn),
            output: Matrix::zeros(v, config.output_dim()),
            output_bias: config.softmax_bias.then(|| vec![T::zero(); v]),
            bridge: config
                .needs_bridge()
                .then(|| Matrix::zeros(h, config.encoder_dim())),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(&mut |_, _, d| d.fill(T::zero()));
        z
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.cols()
    }

    /// Visits every tensor as `(name, dims, data)` in checkpoint order.
    pub fn visit(&self, f: &mut dyn FnMut(String, Vec<usize>, &[T])) {
        let e = &self.embedding;
        f("E".into(), vec![e.rows(), e.cols()], e.as_slice());
        for (prefix, gru) in [
            ("enc", &self.encoder),
            ("dec_prev", &self.dec_prev),
            ("dec_next", &self.dec_next),
        ] {
            if let Some(g) = gru {
                g.visit(prefix, f);
            }
        }
        let u = &self.output;
        f("U".into(), vec![u.rows(), u.cols()], u.as_slice());
        if let Some(b) = &self.output_bias {
            f("U_bias".into(), vec![b.len()], b);
        }
        if let Some(m) = &self.bridge {
            f("bridge".into(), vec![m.rows(), m.cols()], m.as_slice());
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(String, Vec<usize>, &mut [T])) {
        let e = &mut self.embedding;
        let dims = vec![e.rows(), e.cols()];
        f("E".into(), dims, e.as_mut_slice());
        for (prefix, gru) in [
            ("enc", &mut self.encoder),
            ("dec_prev", &mut self.dec_prev),
            ("dec_next", &mut self.dec_next),
        ] {
            if let Some(g) = gru {
                g.visit_mut(prefix, f);
            }
        }
        let u = &mut self.output;
        let dims = vec![u.rows(), u.cols()];
        f("U".into(), dims, u.as_mut_slice());
        if let Some(b) = &mut self.output_bias {
            let dims = vec![b.len()];
            f("U_bias".into(), dims, b);
        }
        if let Some(m) = &mut self.bridge {
            let dims = vec![m.rows(), m.cols()];
            f("bridge".into(), dims, m.as_mut_slice());
        }
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit(&mut |n, _, _| names.push(n));
        names
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _, d| n += d.len());
        n
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |_, _, d| out.extend_from_slice(d));
        out
    }

    pub fn assign_flat(&mut self, flat: &[T]) -> Result<()> {
        crate::error::check_dim("flat parameter vector", self.num_params(), flat.len())?;
        let mut off = 0;
        self.visit_mut(&mut |_, _, d| {
            d.copy_from_slice(&flat[off..off + d.len()]);
            off += d.len();
        });
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Parameters<U> {
        Parameters {
            embedding: self.embedding.cast(),
            encoder: self.encoder.as_ref().map(GruParams::cast),
            dec_prev: self.dec_prev.as_ref().map(GruParams::cast),
            dec_next: self.dec_next.as_ref().map(GruParams::cast),
            output: self.output.cast(),
            output_bias: self.output_bias.as_deref().map(cast_vec),
            bridge: self.bridge.as_ref().map(Matrix::cast),
        }
    }

    /// First non-finite entry as `(tensor, index)`.
    pub fn first_non_finite(&self) -> Option<(String, usize)> {
        let mut found = None;
        self.visit(&mut |name, _, d| {
            if found.is_none() {
                if let Some(i) = d.iter().position(|v| !v.is_finite()) {
                    found = Some((name, i));
                }
            }
        });
        found
    }
}
