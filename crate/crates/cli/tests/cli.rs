use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ddec_cli::{run_with, RunConfig, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use ddec_core::evalharness::Similarity;
use ddec_core::extract::ReprSpec;
use ddec_core::models::{DecoderKind, EncoderKind};
use proptest::prelude::*;

fn ddec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, sentences: usize) {
    let o = ddec(&[
        "synth",
        "--sentences",
        &sentences.to_string(),
        "--seed",
        "3",
        "--out-dir",
        s(dir),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
}

fn write_config(dir: &Path, checkpoint: &Path) -> PathBuf {
    let mut cfg = RunConfig::new(dir.join("corpus.txt"), checkpoint);
    cfg.model.embed_dim = 8;
    cfg.model.hidden_dim = 16;
    cfg.model.vocab_size = 500;
    cfg.model.max_len = 12;
    cfg.model.epochs = 2;
    cfg.model.batch_size = 32;
    cfg.model.learning_rate = 5e-3;
    let path = dir.join("run.cfg");
    fs::write(&path, cfg.render()).unwrap();
    path
}

#[test]
fn exit_codes() {
    let o = ddec(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(EXIT_USAGE));
    let o = ddec(&["--help"]);
    assert_eq!(o.status.code(), Some(EXIT_OK));
    assert!(stdout(&o).contains("gradcheck"));
    let o = ddec(&["embed", "--checkpoint", "x.ddec"]);
    assert_eq!(o.status.code(), Some(EXIT_USAGE));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no-such-corpus.txt");
    let cfg = RunConfig::new(&missing, dir.path().join("m.ddec"));
    let cfg_path = dir.path().join("run.cfg");
    fs::write(&cfg_path, cfg.render()).unwrap();
    let o = ddec(&["train", "--config", s(&cfg_path)]);
    assert_eq!(o.status.code(), Some(EXIT_DATA));
    assert!(stderr(&o).contains(s(&missing)), "{}", stderr(&o));

    fs::write(&cfg_path, "corpus = c.txt\nbogus = 1\n").unwrap();
    let o = ddec(&["train", "--config", s(&cfg_path)]);
    assert_eq!(o.status.code(), Some(EXIT_DATA));
    assert!(stderr(&o).contains("bogus"));

    let o = ddec(&[
        "eval-sts",
        "--checkpoint",
        s(&dir.path().join("none.ddec")),
        "--sts",
        "a.tsv",
        "--spec",
        "concat:1",
        "--out",
        "r.csv",
    ]);
    assert_eq!(o.status.code(), Some(EXIT_DATA));
}

#[test]
fn synth_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), 300);
    synth(b.path(), 300);
    for name in ["corpus.txt", "sts.tsv", "transfer.tsv"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, 400);
    let ckpt = d.join("model.ddec");
    let cfg = write_config(d, &ckpt);

    let o = ddec(&["train", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
    let log = stdout(&o);
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "epoch,mean_nll");
    assert_eq!(lines.len(), 3);
    let bytes = fs::read(&ckpt).unwrap();
    assert!(d.join("model.ddec.vocab").is_file());

    let o = ddec(&["train", "--config", s(&cfg)]);
    assert_eq!(stdout(&o), log);
    assert_eq!(fs::read(&ckpt).unwrap(), bytes);

    let input = d.join("input.txt");
    fs::write(&input, "t0w1 t0w2 n3\nt1w5\n").unwrap();
    let emb = d.join("emb.txt");
    let o = ddec(&[
        "embed",
        "--checkpoint",
        s(&ckpt),
        "--input",
        s(&input),
        "--spec",
        "concat:3",
        "--out",
        s(&emb),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
    let text = fs::read_to_string(&emb).unwrap();
    assert!(text.starts_with("# dim=96 spec=concat:3 model="));
    assert_eq!(text.lines().count(), 3);

    let sts = d.join("sts.tsv");
    let report = d.join("sts.csv");
    let o = ddec(&[
        "eval-sts",
        "--checkpoint",
        s(&ckpt),
        "--sts",
        s(&sts),
        "--spec",
        "mean:2",
        "--sim",
        "cosine",
        "--out",
        s(&report),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
    let csv = fs::read_to_string(&report).unwrap();
    assert_eq!(csv, stdout(&o));
    assert!(csv
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("sts,rnn,rnn,mean:2,cosine,"));

    let o = ddec(&[
        "eval-transfer",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&d.join("transfer.tsv")),
        "--spec",
        "encoder",
        "--folds",
        "5",
    ]);
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    let acc: f64 = row.split(',').nth(7).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    let out_dir = d.join("sweep");
    let o = ddec(&[
        "sweep",
        "--checkpoint",
        s(&ckpt),
        "--sts",
        s(&sts),
        "--nmax",
        "3",
        "--out-dir",
        s(&out_dir),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(out_dir.join("sweep.csv"))
            .unwrap()
            .lines()
            .count(),
        8
    );
    assert!(fs::read_to_string(out_dir.join("sweep.svg"))
        .unwrap()
        .starts_with("<svg"));

    let o = ddec(&[
        "eval-sts",
        "--checkpoint",
        s(&ckpt),
        "--sts",
        s(&sts),
        "--spec",
        "concat:13",
        "--out",
        s(&report),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_DATA));
}

#[test]
fn gradcheck_reports_every_architecture() {
    let mut out = Vec::new();
    let code = run_with(["ddec", "gradcheck", "--seed", "7"], &mut out);
    assert_eq!(code, EXIT_OK);
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "encoder,decoder,max_rel_err");
    assert_eq!(lines.len(), 5);
    for l in &lines[1..] {
        let err: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!(err <= 1e-4, "{l}");
    }
}

fn spec_strategy() -> impl Strategy<Value = ReprSpec> {
    prop_oneof![
        Just(ReprSpec::Encoder),
        (1usize..30).prop_map(ReprSpec::RnnConcat),
        (1usize..30).prop_map(ReprSpec::RnnMean),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips(
        bow_enc in any::<bool>(),
        bow_dec in any::<bool>(),
        dims in (1usize..500, 1usize..500, 5usize..5000, 2usize..64),
        seed in any::<u64>(),
        lr in 1e-6f64..1.0,
        bias in any::<bool>(),
        sts in prop::collection::vec("[a-z]{1,8}\\.tsv", 0..3),
        spec in spec_strategy(),
        cosine in any::<bool>(),
        n_max in 1usize..30,
    ) {
        let mut cfg = RunConfig::new("data/corpus.txt", "runs/m.ddec");
        cfg.model.encoder = if bow_enc { EncoderKind::Bow } else { EncoderKind::Rnn };
        cfg.model.decoder = if bow_dec { DecoderKind::Bow } else { DecoderKind::Rnn };
        (cfg.model.embed_dim, cfg.model.hidden_dim, cfg.model.vocab_size, cfg.model.max_len) = dims;
        cfg.model.seed = seed;
        cfg.model.learning_rate = lr;
        cfg.model.softmax_bias = bias;
        cfg.sts = sts.into_iter().map(PathBuf::from).collect();
        cfg.spec = spec;
        cfg.similarity = if cosine { Similarity::Cosine } else { Similarity::Dot };
        cfg.n_max = n_max;
        let back = RunConfig::parse(&cfg.render(), Path::new("p.cfg")).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
