//! `key = value` run configuration with `#` comments.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ddec_core::evalharness::Similarity;
use ddec_core::extract::ReprSpec;
use ddec_core::models::ModelConfig;

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub corpus: PathBuf,
    /// Built from the corpus when absent.
    pub vocab: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub sts: Vec<PathBuf>,
    pub transfer: Vec<PathBuf>,
    pub spec: ReprSpec,
    pub similarity: Similarity,
    pub n_max: usize,
}

impl RunConfig {
    pub fn new(corpus: impl Into<PathBuf>, checkpoint: impl Into<PathBuf>) -> Self {
        RunConfig {
            model: ModelConfig::default(),
            corpus: corpus.into(),
            vocab: None,
            checkpoint: checkpoint.into(),
            out_dir: None,
            sts: Vec::new(),
            transfer: Vec::new(),
            spec: ReprSpec::RnnConcat(1),
            similarity: Similarity::Dot,
            n_max: 10,
        }
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let err = |line: usize, msg: String| CliError::Config {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut cfg = RunConfig::new("", "");
        let mut corpus = None;
        let mut checkpoint = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(i + 1, format!("expected key = value, got {line:?}")))?;
            let m = &mut cfg.model;
            let res = match key {
                "encoder" => set(&mut m.encoder, value),
                "decoder" => set(&mut m.decoder, value),
                "embed_dim" => set(&mut m.embed_dim, value),
                "hidden_dim" => set(&mut m.hidden_dim, value),
                "vocab_size" => set(&mut m.vocab_size, value),
                "max_len" => set(&mut m.max_len, value),
                "seed" => set(&mut m.seed, value),
                "learning_rate" => set(&mut m.learning_rate, value),
                "batch_size" => set(&mut m.batch_size, value),
                "epochs" => set(&mut m.epochs, value),
                "softmax_bias" => set(&mut m.softmax_bias, value),
                "corpus" => {
                    corpus = Some(PathBuf::from(value));
                    Ok(())
                }
                "checkpoint" => {
                    checkpoint = Some(PathBuf::from(value));
                    Ok(())
                }
                "vocab" => {
                    cfg.vocab = Some(PathBuf::from(value));
                    Ok(())
                }
                "out_dir" => {
                    cfg.out_dir = Some(PathBuf::from(value));
                    Ok(())
                }
                "sts" => {
                    cfg.sts.push(PathBuf::from(value));
                    Ok(())
                }
                "transfer" => {
                    cfg.transfer.push(PathBuf::from(value));
                    Ok(())
                }
                "spec" => set(&mut cfg.spec, value),
                "similarity" => set(&mut cfg.similarity, value),
                "n_max" => set(&mut cfg.n_max, value),
                _ => Err(format!("unknown key {key:?}")),
            };
            res.map_err(|msg| err(i + 1, format!("{key}: {msg}")))?;
        }
        cfg.corpus = corpus.ok_or_else(|| err(0, "missing key \"corpus\"".into()))?;
        cfg.checkpoint = checkpoint.ok_or_else(|| err(0, "missing key \"checkpoint\"".into()))?;
        Ok(cfg)
    }

    pub fn render(&self) -> String {
        let m = &self.model;
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("encoder", &m.encoder);
        kv("decoder", &m.decoder);
        kv("embed_dim", &m.embed_dim);
        kv("hidden_dim", &m.hidden_dim);
        kv("vocab_size", &m.vocab_size);
        kv("max_len", &m.max_len);
        kv("seed", &m.seed);
        kv("learning_rate", &m.learning_rate);
        kv("batch_size", &m.batch_size);
        kv("epochs", &m.epochs);
        kv("softmax_bias", &m.softmax_bias);
        kv("corpus", &self.corpus.display());
        kv("checkpoint", &self.checkpoint.display());
        if let Some(v) = &self.vocab {
            kv("vocab", &v.display());
        }
        if let Some(d) = &self.out_dir {
            kv("out_dir", &d.display());
        }
        for p in &self.sts {
            kv("sts", &p.display());
        }
        for p in &self.transfer {
            kv("transfer", &p.display());
        }
        kv("spec", &self.spec);
        kv("similarity", &self.similarity);
        kv("n_max", &self.n_max);
        s
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
        Self::parse(&text, path)
    }

    /// Checks the model settings and that every input path exists; creates
    /// the output directory.
    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        let inputs = std::iter::once(&self.corpus)
            .chain(&self.vocab)
            .chain(&self.sts)
            .chain(&self.transfer);
        for p in inputs {
            if !p.is_file() {
                return Err(CliError::Missing(p.clone()));
            }
        }
        if let Some(d) = &self.out_dir {
            fs::create_dir_all(d).map_err(|e| CliError::file(d, e))?;
        }
        Ok(())
    }
}

fn set<T: FromStr>(slot: &mut T, value: &str) -> Result<(), String>
where
    T::Err: std::fmt::Display,
{
    *slot = value.parse().map_err(|e: T::Err| e.to_string())?;
    Ok(())
}
