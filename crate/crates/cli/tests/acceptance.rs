//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use ddec_cli::{
    generate_synthetic, load_model, tiny_gradient_check, train_command, RunConfig, SynthSpec,
    ARCHITECTURES, GRAD_TOLERANCE,
};
use ddec_core::corpus::{encode_sentence, SentenceIds, Vocab, EOS, PAD};
use ddec_core::evalharness::{
    cross_validate, load_labeled, load_sts, pearson, spearman, sts_eval, transfer_eval_cv,
    RegressionConfig, Similarity, StsRecord,
};
use ddec_core::extract::{
    context_repr_bow, context_repr_concat, embed_params, layer_split_constant,
    teacher_forced_concat, verify_layer_split, ReprSpec,
};
use ddec_core::models::{
    encode, encode_checkpoint, likelihood_split_derivatives, load_checkpoint, nll_bow_decoder,
    save_checkpoint, teacher_forced_score, DecoderKind, EncoderKind, Model, ModelConfig,
    Parameters,
};
use ddec_core::numcore::{dot, log_sum_exp, Matrix, MlpClassifier, Real, SeededRng};
use tempfile::TempDir;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Random sentence of `1..=max_len - 1` real tokens over ids `4..vocab`.
fn random_sentence(rng: &mut SeededRng, vocab: usize, max_len: usize) -> SentenceIds {
    let len = 1 + rng.below(max_len - 1);
    let mut ids: Vec<u32> = (0..len).map(|_| 4 + rng.below(vocab - 4) as u32).collect();
    ids.push(EOS);
    ids.resize(max_len, PAD);
    SentenceIds::from_ids(ids).expect("well-formed sentence")
}

fn random_params<T: Real>(config: &ModelConfig, seed: u64) -> Parameters<T> {
    let mut params: Parameters<T> =
        Parameters::init(config, &mut SeededRng::new(seed)).expect("valid config");
    // output rows scaled up by 10
    for v in params.output.as_mut_slice() {
        *v = *v * T::lit(10.0);
    }
    params
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (enc, dec) in ARCHITECTURES {
        let err = tiny_gradient_check(enc, dec, 7).map_err(|e| e.to_string())?;
        worst = worst.max(err);
        parts.push(format!("{enc}-{dec} {err:.1e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= GRAD_TOLERANCE && secs < 60.0,
        format!(
            "max rel err {worst:.2e} <= 1e-4 ({}), {secs:.1}s < 60s",
            parts.join(", ")
        ),
    )
}

fn split_identities() -> Outcome {
    let mut rng = SeededRng::new(2024);
    let q = |x: f64, y: f64| x.ln() - (x + y).ln();
    let mut worst: f64 = 0.0;
    let mut signs = true;
    for _ in 0..100 {
        let x = 10f64.powf(rng.next_f64() * 4.0 - 2.0);
        let y = 10f64.powf(rng.next_f64() * 4.0 - 2.0);
        let (qv, dx, dy) = likelihood_split_derivatives(x, y).map_err(|e| e.to_string())?;
        let (hx, hy) = (1e-5 * x, 1e-5 * y);
        let fdx = (q(x + hx, y) - q(x - hx, y)) / (2.0 * hx);
        let fdy = (q(x, y + hy) - q(x, y - hy)) / (2.0 * hy);
        worst = worst
            .max((fdx - dx).abs())
            .max((fdy - dy).abs())
            .max((qv - q(x, y)).abs());
        signs &= dx > 0.0 && dy < 0.0;
    }
    check(
        worst <= 1e-6 && signs,
        format!(
            "100 points, max |fd - analytic| {worst:.1e} <= 1e-6, dq/dx > 0 and dq/dy < 0: {signs}"
        ),
    )
}

fn bow_additivity() -> Outcome {
    let config = ModelConfig {
        encoder: EncoderKind::Bow,
        decoder: DecoderKind::Bow,
        embed_dim: 16,
        hidden_dim: 16,
        vocab_size: 50,
        max_len: 12,
        ..ModelConfig::default()
    };
    let mut rng = SeededRng::new(9);
    let mut worst: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    for i in 0..100 {
        let p: Parameters<f32> = random_params(&config, 100 + i);
        let centre = random_sentence(&mut rng, 50, 12);
        let prev = random_sentence(&mut rng, 50, 12);
        let next = random_sentence(&mut rng, 50, 12);
        let h = encode(&p, &centre).map_err(|e| e.to_string())?;
        let per_word = nll_bow_decoder(&p, &h, &prev, &next).map_err(|e| e.to_string())?;
        let c = context_repr_bow(&p, &prev, &next).map_err(|e| e.to_string())?;
        let words = (prev.true_len + next.true_len) as f32;
        let lse = log_sum_exp(&p.output.matvec(&h).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let additive = words * lse - dot(&c, &h);
        let rel = f64::from((per_word - additive).abs()) / f64::from(per_word.abs()).max(1.0);
        worst = worst.max(rel);
        worst_abs = worst_abs.max(f64::from((per_word - additive).abs()));
    }
    check(
        worst <= 1e-5,
        format!(
            "100 f32 instances, max relative gap {worst:.1e} <= 1e-5 (absolute {worst_abs:.1e})"
        ),
    )
}

fn concat_identity() -> Outcome {
    let mut rng = SeededRng::new(13);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let config = ModelConfig {
            encoder: if i % 2 == 0 {
                EncoderKind::Rnn
            } else {
                EncoderKind::Bow
            },
            decoder: DecoderKind::Rnn,
            embed_dim: 8,
            hidden_dim: 12,
            vocab_size: 30,
            max_len: 8,
            ..ModelConfig::default()
        };
        let p: Parameters<f64> = random_params(&config, 500 + i);
        let centre = random_sentence(&mut rng, 30, 8);
        let prev = random_sentence(&mut rng, 30, 8);
        let next = random_sentence(&mut rng, 30, 8);
        let h0 = encode(&p, &centre).map_err(|e| e.to_string())?;
        let score = teacher_forced_score(&p, &h0, &prev, &next).map_err(|e| e.to_string())?;
        let u = context_repr_concat(&p, &prev, &next, 8).map_err(|e| e.to_string())?;
        let states = teacher_forced_concat(&p, &h0, &prev, &next, 8).map_err(|e| e.to_string())?;
        worst = worst.max((score - dot(&u, &states)).abs());
    }
    check(
        worst <= 1e-6,
        format!("100 f64 teacher-forced instances, max gap {worst:.1e} <= 1e-6"),
    )
}

fn layer_split() -> Outcome {
    let mut rng = SeededRng::new(31);
    let mlp: MlpClassifier<f64> =
        MlpClassifier::random(&[10, 16, 12, 8], 5, 0.8, &mut rng).map_err(|e| e.to_string())?;
    let mlp32: MlpClassifier<f32> = mlp.cast();
    let mut gap_err: f64 = 0.0;
    let mut logit_err: f64 = 0.0;
    for _ in 0..20 {
        let x: Vec<f64> = (0..10).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let constant = layer_split_constant(&mlp, &x).map_err(|e| e.to_string())?;
        for k in 0..=3 {
            for y in 0..5 {
                let (_, gap) = verify_layer_split(&mlp, &x, y, k).map_err(|e| e.to_string())?;
                gap_err = gap_err.max((gap - constant).abs());
            }
        }
        let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let (_, base) = mlp32.forward_split(&x32, 0).map_err(|e| e.to_string())?;
        for k in 1..=3 {
            let (_, logits) = mlp32.forward_split(&x32, k).map_err(|e| e.to_string())?;
            for (a, b) in base.iter().zip(&logits) {
                logit_err = logit_err.max(f64::from((a - b).abs()));
            }
        }
    }
    check(
        gap_err <= 1e-6 && logit_err <= 1e-5,
        format!(
            "3 hidden layers, splits 0..=3, 5 classes: gap spread {gap_err:.1e} <= 1e-6 (f64), \
             logit spread {logit_err:.1e} <= 1e-5 (f32)"
        ),
    )
}

fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn naive_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn correlation_oracles() -> Outcome {
    let mut rng = SeededRng::new(77);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let n = 2 + rng.below(40);
        let x: Vec<f64> = (0..n).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        // every fourth y is drawn from {0, 1, 2, 3}
        let y: Vec<f64> = (0..n)
            .map(|_| {
                if i % 4 == 0 {
                    rng.below(4) as f64
                } else {
                    rng.next_f64() * 10.0 - 5.0
                }
            })
            .collect();
        let (Ok(p), Ok(s)) = (pearson(&x, &y), spearman(&x, &y)) else {
            continue;
        };
        worst = worst
            .max((p - naive_pearson(&x, &y)).abs())
            .max((s - naive_pearson(&naive_ranks(&x), &naive_ranks(&y))).abs());
    }
    let tie = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 2.0, 2.0]).map_err(|e| e.to_string())?;
    let tie_ok = format!("{tie:.4}") == "0.8944";
    check(
        worst <= 1e-12 && tie_ok,
        format!("1000 random inputs, max oracle gap {worst:.1e} <= 1e-12; tie example {tie:.4}"),
    )
}

/// A trained synthetic run kept on disk.
struct Run {
    _dir: TempDir,
    checkpoint: PathBuf,
    sts: Vec<StsRecord>,
    transfer: PathBuf,
    nll: Vec<f64>,
    seconds: f64,
}

fn synth_run(seed: u64, epochs: usize) -> Result<Run, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SynthSpec {
        topics: 4,
        sentences: 2000,
        persist: 0.9,
        seed,
        ..SynthSpec::default()
    };
    let files = generate_synthetic(&spec, dir.path()).map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::new(&files.corpus, dir.path().join("model.ddec"));
    cfg.model = ModelConfig {
        encoder: EncoderKind::Rnn,
        decoder: DecoderKind::Rnn,
        vocab_size: 500,
        embed_dim: 32,
        hidden_dim: 64,
        seed,
        learning_rate: 5e-3,
        batch_size: 64,
        epochs,
        ..ModelConfig::default()
    };
    let mut out = Vec::new();
    let start = Instant::now();
    train_command(&cfg, &mut out).map_err(|e| e.to_string())?;
    let seconds = start.elapsed().as_secs_f64();
    let nll = String::from_utf8(out)
        .map_err(|e| e.to_string())?
        .lines()
        .skip(1)
        .map(|l| {
            l.split(',')
                .nth(1)
                .and_then(|v| v.parse().ok())
                .ok_or(l.to_string())
        })
        .collect::<Result<Vec<f64>, String>>()?;
    Ok(Run {
        sts: load_sts(&files.sts).map_err(|e| e.to_string())?,
        transfer: files.transfer,
        checkpoint: cfg.checkpoint,
        _dir: dir,
        nll,
        seconds,
    })
}

fn load(run: &Run) -> Result<(Model, Vocab), String> {
    load_model(&run.checkpoint).map_err(|e| e.to_string())
}

fn training_sanity(run: &Run) -> Outcome {
    let (first, last) = (run.nll[0], run.nll[run.nll.len() - 1]);
    let drop = 1.0 - last / first;
    check(
        run.nll.len() == 5 && drop >= 0.20 && run.seconds < 300.0,
        format!(
            "RNN-RNN, 5 epochs: mean NLL {first:.3} -> {last:.3} ({:.1}% >= 20%), {:.0}s < 300s",
            drop * 100.0,
            run.seconds
        ),
    )
}

fn unrolling_beats_encoder(runs: &[Run]) -> Outcome {
    let mut wins = 0;
    let mut parts = Vec::new();
    for (seed, run) in (1..).zip(runs) {
        let (model, vocab) = load(run)?;
        let eval = |spec| {
            sts_eval(&model, &vocab, "sts", spec, Similarity::Dot, &run.sts)
                .map_err(|e| e.to_string())
                .and_then(|r| {
                    r.spearman
                        .ok_or_else(|| "degenerate similarities".to_string())
                })
        };
        let enc = eval(ReprSpec::Encoder)?;
        let unrolled = eval(ReprSpec::RnnConcat(1))?;
        wins += usize::from(unrolled > enc);
        parts.push(format!(
            "seed {seed}: concat:1 {unrolled:.3} vs encoder {enc:.3}"
        ));
    }
    check(
        wins >= 2,
        format!(
            "{wins}/3 seeds favour unrolling under dot product ({})",
            parts.join("; ")
        ),
    )
}

fn transfer_probe(runs: &[Run]) -> Outcome {
    let mut hits = 0;
    let mut parts = Vec::new();
    for (seed, run) in (1..).zip(runs) {
        let (model, vocab) = load(run)?;
        let records = load_labeled(&run.transfer).map_err(|e| e.to_string())?;
        let report = transfer_eval_cv(
            &model,
            &vocab,
            "transfer",
            ReprSpec::RnnConcat(1),
            &records,
            10,
        )
        .map_err(|e| e.to_string())?;
        let acc = report.accuracy.unwrap_or(0.0);
        hits += usize::from(acc >= 0.25 + 0.15);
        parts.push(format!("seed {seed}: {acc:.3}"));
    }
    let records = load_labeled(&runs[0].transfer).map_err(|e| e.to_string())?;
    let labels: Vec<usize> = records.iter().map(|r| r.label).collect();
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| (0..4).map(|k| if k == l { 1.0 } else { 0.0 }).collect())
        .collect();
    let one_hot = Matrix::from_rows(&rows).map_err(|e| e.to_string())?;
    let control = cross_validate(&one_hot, &labels, 10, 1, RegressionConfig::default())
        .map_err(|e| e.to_string())?;
    check(
        hits >= 2 && control == 1.0,
        format!(
            "10-fold accuracy >= 0.40 in {hits}/3 seeds ({}); one-hot control {control}",
            parts.join(", ")
        ),
    )
}

fn determinism(a: &Run, b: &Run) -> Outcome {
    let bytes_a = std::fs::read(&a.checkpoint).map_err(|e| e.to_string())?;
    let bytes_b = std::fs::read(&b.checkpoint).map_err(|e| e.to_string())?;
    let identical = bytes_a == bytes_b;

    let (params, config) = load_checkpoint(&a.checkpoint).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let copy = dir.path().join("copy.ddec");
    save_checkpoint(&params, &config, &copy).map_err(|e| e.to_string())?;
    let (params2, config2) = load_checkpoint(&copy).map_err(|e| e.to_string())?;
    let round_trip = params2 == params
        && config2 == config
        && encode_checkpoint(&params2, &config2) == bytes_a
        && std::fs::read(&copy).map_err(|e| e.to_string())? == bytes_a;

    let (ma, va) = load(a)?;
    let (mb, vb) = load(b)?;
    let spec = ReprSpec::RnnConcat(2);
    let ra =
        sts_eval(&ma, &va, "sts", spec, Similarity::Cosine, &a.sts).map_err(|e| e.to_string())?;
    let mut shuffled = b.sts.clone();
    SeededRng::new(5).shuffle(&mut shuffled);
    let rb = sts_eval(&mb, &vb, "sts", spec, Similarity::Cosine, &shuffled)
        .map_err(|e| e.to_string())?;
    let sig9 = |v: Option<f64>| v.map(|x| format!("{x:.8e}"));
    let reports_equal = sig9(ra.pearson) == sig9(rb.pearson)
        && sig9(ra.spearman) == sig9(rb.spearman)
        && ra.pearson.is_some();
    check(
        identical && round_trip && reports_equal,
        format!(
            "repeat training bit-identical: {identical} ({} bytes); save/load bit-exact: {round_trip}; \
             similarity report equal to 9 digits: {reports_equal}",
            bytes_a.len()
        ),
    )
}

fn dimensional_contract() -> Outcome {
    let mut bad = Vec::new();
    for (enc, hidden, embed) in [(EncoderKind::Rnn, 12, 8), (EncoderKind::Bow, 10, 6)] {
        let config = ModelConfig {
            encoder: enc,
            decoder: DecoderKind::Rnn,
            embed_dim: embed,
            hidden_dim: hidden,
            vocab_size: 25,
            max_len: 12,
            ..ModelConfig::default()
        };
        let p: Parameters<f32> = random_params(&config, 3);
        let vocab = Vocab::build("a b c d e f".as_bytes(), 25).map_err(|e| e.to_string())?;
        let s = encode_sentence(&vocab, &["a", "c", "e"], 12);
        for n in 1..=10 {
            for (spec, want) in [
                (ReprSpec::RnnConcat(n), 2 * n * hidden),
                (ReprSpec::RnnMean(n), 2 * hidden),
            ] {
                let got = embed_params(&p, 12, &s, spec)
                    .map_err(|e| e.to_string())?
                    .len();
                if got != want || spec.dim(config.encoder_dim(), hidden) != want {
                    bad.push(format!("{spec}: {got} != {want}"));
                }
            }
        }
        let enc_dim = embed_params(&p, 12, &s, ReprSpec::Encoder)
            .map_err(|e| e.to_string())?
            .len();
        if enc_dim != config.encoder_dim() {
            bad.push(format!("encoder: {enc_dim} != {}", config.encoder_dim()));
        }
    }
    check(
        bad.is_empty(),
        if bad.is_empty() {
            "concat:n = 2*n*hidden and mean:n = 2*hidden for n in 1..=10, two model shapes".into()
        } else {
            bad.join("; ")
        },
    )
}

fn run_criterion(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    match outcome {
        Ok(detail) => {
            println!("PASS {id:>2} {name}: {detail}");
            true
        }
        Err(detail) => {
            println!("FAIL {id:>2} {name}: {detail}");
            false
        }
    }
}

fn main() {
    let start = Instant::now();
    let mut passed = Vec::new();
    passed.push(run_criterion(1, "gradient fidelity", gradient_fidelity));
    passed.push(run_criterion(
        2,
        "likelihood split derivatives",
        split_identities,
    ));
    passed.push(run_criterion(3, "bag-of-words additivity", bow_additivity));
    passed.push(run_criterion(
        4,
        "ordered concatenation identity",
        concat_identity,
    ));
    passed.push(run_criterion(5, "layer-split optimality", layer_split));

    let short = [synth_run(1, 5), synth_run(1, 5)];
    passed.push(run_criterion(6, "training sanity", || match &short[0] {
        Ok(run) => training_sanity(run),
        Err(e) => Err(e.clone()),
    }));

    let long: Result<Vec<Run>, String> = (1..=3).map(|seed| synth_run(seed, 10)).collect();
    passed.push(run_criterion(
        7,
        "unrolled decoder beats encoder",
        || match &long {
            Ok(runs) => unrolling_beats_encoder(runs),
            Err(e) => Err(e.clone()),
        },
    ));
    passed.push(run_criterion(8, "correlation oracles", correlation_oracles));
    passed.push(run_criterion(9, "transfer probe", || match &long {
        Ok(runs) => transfer_probe(runs),
        Err(e) => Err(e.clone()),
    }));
    passed.push(run_criterion(
        10,
        "determinism and persistence",
        || match &short {
            [Ok(a), Ok(b)] => determinism(a, b),
            [Err(e), _] | [_, Err(e)] => Err(e.clone()),
        },
    ));
    passed.push(run_criterion(
        11,
        "dimensional contract",
        dimensional_contract,
    ));

    let n_pass = passed.iter().filter(|&&p| p).count();
    println!(
        "acceptance: {n_pass}/{} criteria passed in {:.0}s",
        passed.len(),
        start.elapsed().as_secs_f64()
    );
    if n_pass != passed.len() {
        std::process::exit(1);
    }
}
