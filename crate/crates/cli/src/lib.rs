//! `ddec` command line: synthetic data, training, embedding, evaluation and
//! gradient checks.

pub mod config;
pub mod synth;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use thiserror::Error;

use ddec_core::corpus::{
    build_pairs, encode_sentence, read_corpus, tokenize, ContextPair, SentenceIds, Vocab,
};
use ddec_core::evalharness::{
    emit_report, load_labeled, load_sts, render_csv, sts_eval, transfer_eval_cv, unroll_sweep,
    ReportFormat, Similarity,
};
use ddec_core::extract::{embed_all, write_embeddings, ReprSpec};
use ddec_core::models::{
    check_loss_gradient, train_with, DecoderKind, EncoderKind, Model, ModelConfig, Parameters,
};
use ddec_core::numcore::SeededRng;

pub use config::RunConfig;
pub use synth::{generate, generate_synthetic, SynthData, SynthFiles, SynthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Largest relative gradient error `gradcheck` accepts.
pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}:{line}: {msg}")]
    Config {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("input file not found: {}", .0.display())]
    Missing(PathBuf),

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] ddec_core::Error),
}

impl CliError {
    pub fn file(path: &Path, source: io::Error) -> Self {
        CliError::File {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ddec",
    version,
    about = "Train sentence encoders and read representations off their decoders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model; prints `epoch,mean_nll` per epoch.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write sentence embeddings for a file with one sentence per line.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = parse_spec)]
        spec: ReprSpec,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlate embedding similarity with gold scores.
    EvalSts {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        sts: Vec<PathBuf>,
        #[arg(long, value_parser = parse_spec)]
        spec: ReprSpec,
        #[arg(long, value_parser = parse_sim, default_value = "dot")]
        sim: Similarity,
        #[arg(long)]
        out: PathBuf,
    },
    /// k-fold logistic-regression accuracy on frozen embeddings.
    EvalTransfer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = parse_spec)]
        spec: ReprSpec,
        #[arg(long, default_value_t = 10)]
        folds: usize,
    },
    /// Similarity correlations against the number of unrolled steps.
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        sts: PathBuf,
        #[arg(long, default_value_t = 10)]
        nmax: usize,
        #[arg(long, value_parser = parse_sim, default_value = "dot")]
        sim: Similarity,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Finite-difference check of every architecture's gradients.
    Gradcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Generate a synthetic corpus, similarity set and transfer set.
    Synth {
        #[arg(long, default_value_t = 4)]
        topics: usize,
        #[arg(long, default_value_t = 2000)]
        sentences: usize,
        #[arg(long, default_value_t = 0.9)]
        persist: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn parse_spec(s: &str) -> Result<ReprSpec, String> {
    s.parse().map_err(|e: ddec_core::Error| e.to_string())
}

fn parse_sim(s: &str) -> Result<Similarity, String> {
    s.parse().map_err(|e: ddec_core::Error| e.to_string())
}

/// Runs the command line with `argv` (program name first) and returns the
/// exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let mut out = stdout.lock();
    run_with(argv, &mut out)
}

/// [`run`] writing normal output to `out`; diagnostics go to standard error.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Train { config, seed } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.model.seed = s;
            }
            train_command(&cfg, out)?;
        }
        Command::Embed {
            checkpoint,
            input,
            spec,
            out: path,
        } => {
            let (model, vocab) = load_model(&checkpoint)?;
            let sentences = read_lines(&input)?
                .iter()
                .map(|l| encode_sentence(&vocab, &tokenize(l), model.config.max_len))
                .collect::<Vec<SentenceIds>>();
            let embeddings = embed_all(&model, &sentences, spec)?;
            let file = File::create(&path).map_err(|e| CliError::file(&path, e))?;
            write_embeddings(BufWriter::new(file), &embeddings)?;
            writeln!(
                out,
                "wrote {} embeddings to {}",
                embeddings.len(),
                path.display()
            )
            .map_err(io_err)?;
        }
        Command::EvalSts {
            checkpoint,
            sts,
            spec,
            sim,
            out: path,
        } => {
            let (model, vocab) = load_model(&checkpoint)?;
            let mut reports = Vec::new();
            for file in &sts {
                let records = load_sts(file)?;
                reports.push(sts_eval(
                    &model,
                    &vocab,
                    &dataset_name(file),
                    spec,
                    sim,
                    &records,
                )?);
            }
            emit_report(&reports, ReportFormat::Csv, &path)?;
            out.write_all(render_csv(&reports).as_bytes())
                .map_err(io_err)?;
        }
        Command::EvalTransfer {
            checkpoint,
            data,
            spec,
            folds,
        } => {
            let (model, vocab) = load_model(&checkpoint)?;
            let records = load_labeled(&data)?;
            let report =
                transfer_eval_cv(&model, &vocab, &dataset_name(&data), spec, &records, folds)?;
            out.write_all(render_csv(&[report]).as_bytes())
                .map_err(io_err)?;
        }
        Command::Sweep {
            checkpoint,
            sts,
            nmax,
            sim,
            out_dir,
        } => {
            let (model, vocab) = load_model(&checkpoint)?;
            let records = load_sts(&sts)?;
            let reports = unroll_sweep(&model, &vocab, &dataset_name(&sts), sim, &records, nmax)?;
            fs::create_dir_all(&out_dir).map_err(|e| CliError::file(&out_dir, e))?;
            emit_report(&reports, ReportFormat::Csv, &out_dir.join("sweep.csv"))?;
            emit_report(&reports, ReportFormat::Svg, &out_dir.join("sweep.svg"))?;
            out.write_all(render_csv(&reports).as_bytes())
                .map_err(io_err)?;
        }
        Command::Gradcheck { seed } => {
            let mut ok = true;
            writeln!(out, "encoder,decoder,max_rel_err").map_err(io_err)?;
            for (enc, dec) in ARCHITECTURES {
                let err = tiny_gradient_check(enc, dec, seed)?;
                ok &= err <= GRAD_TOLERANCE;
                writeln!(out, "{enc},{dec},{err:.3e}").map_err(io_err)?;
            }
            if !ok {
                eprintln!("gradient check failed: tolerance {GRAD_TOLERANCE:e}");
                return Ok(EXIT_DATA);
            }
        }
        Command::Synth {
            topics,
            sentences,
            persist,
            seed,
            out_dir,
        } => {
            let spec = SynthSpec {
                topics,
                sentences,
                persist,
                seed,
                ..SynthSpec::default()
            };
            let files = generate_synthetic(&spec, &out_dir)?;
            for p in [&files.corpus, &files.sts, &files.transfer] {
                writeln!(out, "{}", p.display()).map_err(io_err)?;
            }
        }
    }
    Ok(EXIT_OK)
}

fn io_err(e: io::Error) -> CliError {
    CliError::Data(format!("writing output: {e}"))
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    let file = File::open(path).map_err(|e| CliError::file(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::file(path, e))
}

/// The vocabulary file stored next to a checkpoint.
pub fn vocab_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".vocab");
    PathBuf::from(s)
}

pub fn load_model(checkpoint: &Path) -> Result<(Model, Vocab), CliError> {
    if !checkpoint.is_file() {
        return Err(CliError::Missing(checkpoint.to_path_buf()));
    }
    let model = Model::load(checkpoint)?;
    let vpath = vocab_path(checkpoint);
    let file = File::open(&vpath).map_err(|e| CliError::file(&vpath, e))?;
    let vocab = Vocab::read(BufReader::new(file))?;
    if vocab.len() > model.config.vocab_size {
        return Err(CliError::Data(format!(
            "{}: {} tokens exceed the model's vocabulary of {}",
            vpath.display(),
            vocab.len(),
            model.config.vocab_size
        )));
    }
    Ok((model, vocab))
}

/// Vocabulary and context pairs for a run config.
pub fn prepare_corpus(cfg: &RunConfig) -> Result<(Vocab, Vec<ContextPair>), CliError> {
    cfg.validate()?;
    let vocab = match &cfg.vocab {
        Some(p) => {
            let file = File::open(p).map_err(|e| CliError::file(p, e))?;
            Vocab::read(BufReader::new(file))?
        }
        None => {
            let file = File::open(&cfg.corpus).map_err(|e| CliError::file(&cfg.corpus, e))?;
            Vocab::build(BufReader::new(file), cfg.model.vocab_size)?
        }
    };
    if vocab.len() > cfg.model.vocab_size {
        return Err(CliError::Data(format!(
            "vocabulary has {} tokens but vocab_size is {}",
            vocab.len(),
            cfg.model.vocab_size
        )));
    }
    let file = File::open(&cfg.corpus).map_err(|e| CliError::file(&cfg.corpus, e))?;
    let sentences = read_corpus(BufReader::new(file), &vocab, cfg.model.max_len)?;
    let pairs = build_pairs(&sentences);
    if pairs.is_empty() {
        return Err(CliError::Data(format!(
            "{}: need at least 3 sentences to form a context pair",
            cfg.corpus.display()
        )));
    }
    Ok((vocab, pairs))
}

/// Trains per `cfg`, writes the checkpoint and its vocabulary, and prints one
/// `epoch,mean_nll` line per epoch to `out`.
pub fn train_command(cfg: &RunConfig, out: &mut dyn Write) -> Result<Model, CliError> {
    let (vocab, pairs) = prepare_corpus(cfg)?;
    let start = Instant::now();
    writeln!(out, "epoch,mean_nll").map_err(io_err)?;
    let mut write_err = None;
    let (params, _) = train_with(&cfg.model, &pairs, |s| {
        if let Err(e) = writeln!(out, "{},{:.6}", s.epoch, s.mean_nll) {
            write_err.get_or_insert(e);
        }
        eprintln!("epoch {} took {:.1}s", s.epoch, s.seconds);
    })?;
    if let Some(e) = write_err {
        return Err(io_err(e));
    }
    eprintln!("training took {:.1}s", start.elapsed().as_secs_f64());
    let model = Model::new(cfg.model.clone(), params);
    if let Some(dir) = cfg
        .checkpoint
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
    {
        fs::create_dir_all(dir).map_err(|e| CliError::file(dir, e))?;
    }
    model.save(&cfg.checkpoint)?;
    let vpath = vocab_path(&cfg.checkpoint);
    let file = File::create(&vpath).map_err(|e| CliError::file(&vpath, e))?;
    vocab.write(BufWriter::new(file))?;
    Ok(model)
}

pub const ARCHITECTURES: [(EncoderKind, DecoderKind); 4] = [
    (EncoderKind::Bow, DecoderKind::Bow),
    (EncoderKind::Bow, DecoderKind::Rnn),
    (EncoderKind::Rnn, DecoderKind::Bow),
    (EncoderKind::Rnn, DecoderKind::Rnn),
];

/// Model config used for gradient checks: `V = 20, d = 8, hidden = 12,
/// max_len = 6`.
pub fn tiny_config(encoder: EncoderKind, decoder: DecoderKind, seed: u64) -> ModelConfig {
    ModelConfig {
        encoder,
        decoder,
        embed_dim: 8,
        hidden_dim: 12,
        vocab_size: 20,
        max_len: 6,
        seed,
        ..ModelConfig::default()
    }
}

/// Random context pairs over a 16-word vocabulary, lengths 1 to 7 before
/// truncation to `max_len = 6`.
pub fn tiny_pairs(seed: u64, sentences: usize) -> Vec<ContextPair> {
    let words: Vec<String> = (0..16).map(|i| format!("w{i}")).collect();
    let vocab = Vocab::build(words.join(" ").as_bytes(), 20).expect("16 distinct words fit");
    let mut rng = SeededRng::new(seed);
    let sentences: Vec<SentenceIds> = (0..sentences)
        .map(|_| {
            let len = 1 + rng.below(7);
            let toks: Vec<&str> = (0..len).map(|_| words[rng.below(16)].as_str()).collect();
            encode_sentence(&vocab, &toks, 6)
        })
        .collect();
    build_pairs(&sentences)
}

/// Largest relative error between analytic and central-difference gradients
/// for one architecture at tiny dimensions, in `f64`.
pub fn tiny_gradient_check(
    encoder: EncoderKind,
    decoder: DecoderKind,
    seed: u64,
) -> Result<f64, CliError> {
    let config = tiny_config(encoder, decoder, seed);
    let params: Parameters<f64> = Parameters::init(&config, &mut SeededRng::new(seed))?;
    let pairs = tiny_pairs(seed, 5);
    let batch: Vec<&ContextPair> = pairs.iter().collect();
    Ok(check_loss_gradient(&params, &batch, 1e-5)?.max_rel_err)
}
