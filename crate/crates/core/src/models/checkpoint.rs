//! Binary checkpoint format (little-endian):
//!
//! ```text
//! "DDEC" | version u32 | n_fields u32 | (tag u32, value u64)*
//!        | n_tensors u32 | (name_len u32, name, rank u32, dims u32*, f32*)*
//! ```
//!
//! Float config fields are stored as their IEEE-754 bit patterns.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::{DecoderKind, EncoderKind, ModelConfig, Parameters};

pub const MAGIC: [u8; 4] = *b"DDEC";
pub const FORMAT_VERSION: u32 = 1;

const TAG_ENCODER: u32 = 1;
const TAG_DECODER: u32 = 2;
const TAG_EMBED_DIM: u32 = 3;
const TAG_HIDDEN_DIM: u32 = 4;
const TAG_VOCAB_SIZE: u32 = 5;
const TAG_MAX_LEN: u32 = 6;
const TAG_SEED: u32 = 7;
const TAG_LEARNING_RATE: u32 = 8;
const TAG_BATCH_SIZE: u32 = 9;
const TAG_EPOCHS: u32 = 10;
const TAG_SOFTMAX_BIAS: u32 = 11;

fn config_fields(c: &ModelConfig) -> [(u32, u64); 11] {
    [
        (TAG_ENCODER, (c.encoder == EncoderKind::Rnn) as u64),
        (TAG_DECODER, (c.decoder == DecoderKind::Rnn) as u64),
        (TAG_EMBED_DIM, c.embed_dim as u64),
        (TAG_HIDDEN_DIM, c.hidden_dim as u64),
        (TAG_VOCAB_SIZE, c.vocab_size as u64),
        (TAG_MAX_LEN, c.max_len as u64),
        (TAG_SEED, c.seed),
        (TAG_LEARNING_RATE, c.learning_rate.to_bits()),
        (TAG_BATCH_SIZE, c.batch_size as u64),
        (TAG_EPOCHS, c.epochs as u64),
        (TAG_SOFTMAX_BIAS, c.softmax_bias as u64),
    ]
}

pub fn encode_checkpoint(params: &Parameters<f32>, config: &ModelConfig) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.num_params() * 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let fields = config_fields(config);
    out.extend_from_slice(&(fields.len() as u32).to_le_bytes());
    for (tag, value) in fields {
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&value.to_le_bytes());
    }
    let names = params.tensor_names();
    out.extend_from_slice(&(names.len() as u32).to_le_bytes());
    params.visit(&mut |name, dims, data| {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    });
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &dyn Fn() -> String) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated { what: what() });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &dyn Fn() -> String) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &dyn Fn() -> String) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn usize_field(tag: u32, v: u64) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Inconsistent {
        tensor: "config".into(),
        detail: format!("field {tag} value {v} does not fit"),
    })
}

fn decode_config(cur: &mut Cursor<'_>) -> Result<ModelConfig> {
    let n = cur.u32(&|| "config block".into())?;
    let mut c = ModelConfig::default();
    let mut seen = Vec::new();
    for _ in 0..n {
        let tag = cur.u32(&|| "config block".into())?;
        let v = cur.u64(&|| format!("config field {tag}"))?;
        match tag {
            TAG_ENCODER => {
                c.encoder = if v == 1 {
                    EncoderKind::Rnn
                } else {
                    EncoderKind::Bow
                }
            }
            TAG_DECODER => {
                c.decoder = if v == 1 {
                    DecoderKind::Rnn
                } else {
                    DecoderKind::Bow
                }
            }
            TAG_EMBED_DIM => c.embed_dim = usize_field(tag, v)?,
            TAG_HIDDEN_DIM => c.hidden_dim = usize_field(tag, v)?,
            TAG_VOCAB_SIZE => c.vocab_size = usize_field(tag, v)?,
            TAG_MAX_LEN => c.max_len = usize_field(tag, v)?,
            TAG_SEED => c.seed = v,
            TAG_LEARNING_RATE => c.learning_rate = f64::from_bits(v),
            TAG_BATCH_SIZE => c.batch_size = usize_field(tag, v)?,
            TAG_EPOCHS => c.epochs = usize_field(tag, v)?,
            TAG_SOFTMAX_BIAS => c.softmax_bias = v != 0,
            _ => {
                return Err(Error::Inconsistent {
                    tensor: "config".into(),
                    detail: format!("unknown field tag {tag}"),
                })
            }
        }
        seen.push(tag);
    }
    for (tag, _) in config_fields(&c) {
        if !seen.contains(&tag) {
            return Err(Error::Inconsistent {
                tensor: "config".into(),
                detail: format!("missing field tag {tag}"),
            });
        }
    }
    c.validate().map_err(|e| Error::Inconsistent {
        tensor: "config".into(),
        detail: e.to_string(),
    })?;
    Ok(c)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Parameters<f32>, ModelConfig)> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let mut found = [0u8; 4];
    let head = &bytes[..bytes.len().min(4)];
    found[..head.len()].copy_from_slice(head);
    if found != MAGIC {
        return Err(Error::BadMagic { found });
    }
    cur.pos = 4;
    let version = cur.u32(&|| "format version".into())?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let config = decode_config(&mut cur)?;
    let mut params = Parameters::<f32>::zeros(&config);

    let count = cur.u32(&|| "tensor directory".into())? as usize;
    let expected = params.tensor_names();
    if count != expected.len() {
        return Err(Error::Inconsistent {
            tensor: "directory".into(),
            detail: format!("{count} tensors stored, config implies {}", expected.len()),
        });
    }
    let mut result = Ok(());
    params.visit_mut(&mut |want, dims, data| {
        if result.is_err() {
            return;
        }
        result = (|| {
            let len = cur.u32(&|| format!("name of tensor {want}"))? as usize;
            let raw = cur.take(len, &|| format!("name of tensor {want}"))?;
            let name = String::from_utf8_lossy(raw);
            if name != want {
                return Err(Error::Inconsistent {
                    tensor: want.clone(),
                    detail: format!("found tensor {name:?} in its place"),
                });
            }
            let rank = cur.u32(&|| format!("tensor {want}"))? as usize;
            let mut stored = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                stored.push(cur.u32(&|| format!("tensor {want}"))? as usize);
            }
            if stored != dims {
                return Err(Error::Inconsistent {
                    tensor: want.clone(),
                    detail: format!("stored dims {stored:?}, config implies {dims:?}"),
                });
            }
            let raw = cur.take(data.len() * 4, &|| format!("tensor {want}"))?;
            for (v, chunk) in data.iter_mut().zip(raw.chunks_exact(4)) {
                *v = f32::from_le_bytes(chunk.try_into().unwrap());
            }
            Ok(())
        })();
    });
    result?;
    if cur.pos != bytes.len() {
        return Err(Error::Inconsistent {
            tensor: "directory".into(),
            detail: format!("{} trailing bytes", bytes.len() - cur.pos),
        });
    }
    Ok((params, config))
}

pub fn save_checkpoint(params: &Parameters<f32>, config: &ModelConfig, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params, config)).map_err(|e| Error::file(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Parameters<f32>, ModelConfig)> {
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_checkpoint(&bytes)
}

/// Short content hash of the serialised model.
pub fn fingerprint(params: &Parameters<f32>, config: &ModelConfig) -> String {
    let digest = Sha256::digest(encode_checkpoint(params, config));
    digest[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
