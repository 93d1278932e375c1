//! Similarity evaluation (dot and cosine, Pearson and Spearman), transfer
//! evaluation with softmax regression under stratified k-fold
//! cross-validation, the unroll-count sweep, and CSV/SVG reports.

use std::fmt;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::corpus::{encode_sentence, tokenize, SentenceIds, Vocab};
use crate::error::{check_dim, Error, Result};
use crate::extract::{assemble, embed_params, unroll_both, ReprSpec};
use crate::models::{DecoderKind, EncoderKind, Model};
use crate::numcore::{AdamConfig, AdamState, Matrix, Real, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Similarity {
    Dot,
    Cosine,
}

impl fmt::Display for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Similarity::Dot => "dot",
            Similarity::Cosine => "cosine",
        })
    }
}

impl FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(Similarity::Dot),
            "cosine" => Ok(Similarity::Cosine),
            _ => Err(Error::invalid(format!("unknown similarity {s:?}"))),
        }
    }
}

/// Dot product or cosine, accumulated in `f64`.
pub fn similarity<T: Real>(a: &[T], b: &[T], kind: Similarity) -> Result<f64> {
    check_dim("similarity operand", a.len(), b.len())?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x.as_f64() * y.as_f64()).sum();
    match kind {
        Similarity::Dot => Ok(dot),
        Similarity::Cosine => {
            let na = a.iter().map(|x| x.as_f64().powi(2)).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x.as_f64().powi(2)).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                return Err(Error::Degenerate("cosine of a zero vector".into()));
            }
            Ok((dot / (na * nb)).clamp(-1.0, 1.0))
        }
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    check_dim("correlation operand", x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::Degenerate(format!(
            "correlation needs at least 2 points, got {}",
            x.len()
        )));
    }
    if let Some(i) = x.iter().chain(y).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "correlation input",
            index: i % x.len(),
        });
    }
    Ok(())
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("correlation of a constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their positions.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Pearson correlation of the average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&ranks(x), &ranks(y))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StsRecord {
    pub sentence_a: String,
    pub sentence_b: String,
    /// In `[0, 5]`.
    pub gold: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledRecord {
    pub label: usize,
    pub sentence: String,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Three tab-separated columns: sentence A, sentence B, gold score. Lines
/// starting with `#` and blank lines are skipped.
pub fn read_sts<R: BufRead>(reader: R, path: &Path) -> Result<Vec<StsRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::file(path, e))?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(parse_err(
                path,
                i + 1,
                format!("expected 3 columns, got {}", cols.len()),
            ));
        }
        let gold: f64 = cols[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad gold score {:?}", cols[2])))?;
        if !(0.0..=5.0).contains(&gold) {
            return Err(parse_err(
                path,
                i + 1,
                format!("gold score {gold} outside [0, 5]"),
            ));
        }
        out.push(StsRecord {
            sentence_a: cols[0].to_string(),
            sentence_b: cols[1].to_string(),
            gold,
        });
    }
    Ok(out)
}

/// Two tab-separated columns: integer label, sentence. Labels must cover
/// `0..K` without gaps.
pub fn read_labeled<R: BufRead>(reader: R, path: &Path) -> Result<Vec<LabeledRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::file(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (label, sentence) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(path, i + 1, "expected label<TAB>sentence"))?;
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad label {label:?}")))?;
        out.push(LabeledRecord {
            label,
            sentence: sentence.to_string(),
        });
    }
    let labels: Vec<usize> = out.iter().map(|r| r.label).collect();
    num_classes(&labels).map_err(|e| parse_err(path, 0, e.to_string()))?;
    Ok(out)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).map_err(|e| Error::file(path, e))?,
    ))
}

pub fn load_sts(path: &Path) -> Result<Vec<StsRecord>> {
    read_sts(open(path)?, path)
}

pub fn load_labeled(path: &Path) -> Result<Vec<LabeledRecord>> {
    read_labeled(open(path)?, path)
}

/// `K` for labels that cover `0..K` without gaps.
pub fn num_classes(labels: &[usize]) -> Result<usize> {
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    let mut seen = vec![false; k];
    for &l in labels {
        seen[l] = true;
    }
    if k == 0 || seen.iter().any(|s| !s) {
        return Err(Error::invalid("labels must form a contiguous range 0..K"));
    }
    Ok(k)
}

/// One cell of a results table.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub dataset: String,
    pub encoder: EncoderKind,
    pub decoder: DecoderKind,
    pub spec: ReprSpec,
    pub similarity: Option<Similarity>,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub accuracy: Option<f64>,
    pub seed: u64,
    pub fingerprint: String,
    /// Set when the similarities were constant and no correlation exists.
    pub degenerate: bool,
}

impl EvalReport {
    fn for_model(model: &Model, dataset: &str, spec: ReprSpec) -> Self {
        EvalReport {
            dataset: dataset.to_string(),
            encoder: model.config.encoder,
            decoder: model.config.decoder,
            spec,
            similarity: None,
            pearson: None,
            spearman: None,
            accuracy: None,
            seed: model.config.seed,
            fingerprint: model.fingerprint().to_string(),
            degenerate: false,
        }
    }
}

fn encode_text(vocab: &Vocab, text: &str, max_len: usize) -> SentenceIds {
    encode_sentence(vocab, &tokenize(text), max_len)
}

/// Correlates similarities with gold scores. Pairs are put in a canonical
/// order first so the result does not depend on record order.
fn correlate(report: &mut EvalReport, sims: &[f64], gold: &[f64]) -> Result<()> {
    let mut pairs: Vec<(f64, f64)> = sims.iter().copied().zip(gold.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let (s, g): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    if s.iter().all(|&v| v == s[0]) {
        report.degenerate = true;
        return Ok(());
    }
    report.pearson = Some(pearson(&s, &g)?);
    report.spearman = Some(spearman(&s, &g)?);
    Ok(())
}

fn check_sts(records: &[StsRecord]) -> Result<()> {
    if records.len() < 2 {
        return Err(Error::invalid(
            "similarity evaluation needs at least 2 records",
        ));
    }
    Ok(())
}

/// Embeds both sentences of every record and correlates their similarity
/// with the gold scores.
pub fn sts_eval(
    model: &Model,
    vocab: &Vocab,
    dataset: &str,
    spec: ReprSpec,
    kind: Similarity,
    records: &[StsRecord],
) -> Result<EvalReport> {
    check_sts(records)?;
    spec.check(&model.params, model.config.max_len)?;
    let max_len = model.config.max_len;
    let sims = records
        .par_iter()
        .map(|r| {
            let a = embed_params(
                &model.params,
                max_len,
                &encode_text(vocab, &r.sentence_a, max_len),
                spec,
            )?;
            let b = embed_params(
                &model.params,
                max_len,
                &encode_text(vocab, &r.sentence_b, max_len),
                spec,
            )?;
            similarity(&a, &b, kind)
        })
        .collect::<Result<Vec<f64>>>()?;
    let gold: Vec<f64> = records.iter().map(|r| r.gold).collect();
    let mut report = EvalReport::for_model(model, dataset, spec);
    report.similarity = Some(kind);
    correlate(&mut report, &sims, &gold)?;
    Ok(report)
}

/// Encoder baseline (`n = 0`), then `concat:1..=n_max`, then `mean:1..=n_max`.
pub fn unroll_sweep(
    model: &Model,
    vocab: &Vocab,
    dataset: &str,
    kind: Similarity,
    records: &[StsRecord],
    n_max: usize,
) -> Result<Vec<EvalReport>> {
    check_sts(records)?;
    let max_len = model.config.max_len;
    ReprSpec::RnnConcat(n_max).check(&model.params, max_len)?;
    let mut specs = vec![ReprSpec::Encoder];
    specs.extend((1..=n_max).map(ReprSpec::RnnConcat));
    specs.extend((1..=n_max).map(ReprSpec::RnnMean));
    let embed_all_specs = |text: &str| -> Result<Vec<Vec<f32>>> {
        let (h, unrolled) = unroll_both(
            &model.params,
            max_len,
            &encode_text(vocab, text, max_len),
            n_max,
        )?;
        specs.iter().map(|&s| assemble(s, &h, &unrolled)).collect()
    };
    let sims: Vec<Vec<f64>> = records
        .par_iter()
        .map(|r| {
            let a = embed_all_specs(&r.sentence_a)?;
            let b = embed_all_specs(&r.sentence_b)?;
            a.iter()
                .zip(&b)
                .map(|(x, y)| similarity(x, y, kind))
                .collect()
        })
        .collect::<Result<_>>()?;
    let gold: Vec<f64> = records.iter().map(|r| r.gold).collect();
    specs
        .iter()
        .enumerate()
        .map(|(i, &spec)| {
            let column: Vec<f64> = sims.iter().map(|row| row[i]).collect();
            let mut report = EvalReport::for_model(model, dataset, spec);
            report.similarity = Some(kind);
            correlate(&mut report, &column, &gold)?;
            Ok(report)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegressionConfig {
    pub l2: f64,
    pub iters: usize,
    pub learning_rate: f64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        RegressionConfig {
            l2: 1e-3,
            iters: 500,
            learning_rate: 0.05,
        }
    }
}

/// Multinomial logistic regression: `K × (D + 1)` weights, last column the
/// unregularised bias.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxRegression {
    pub weights: Matrix<f64>,
}

impl SoftmaxRegression {
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let d = self.weights.cols() - 1;
        (0..self.weights.rows())
            .map(|k| {
                let w = self.weights.row(k);
                w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d]
            })
            .collect()
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        crate::numcore::softmax(&self.logits(x)).unwrap_or_default()
    }

    /// Arg-max class; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let z = self.logits(x);
        let mut best = 0;
        for (k, &v) in z.iter().enumerate() {
            if v > z[best] {
                best = k;
            }
        }
        best
    }

    pub fn accuracy(&self, features: &Matrix<f64>, labels: &[usize]) -> f64 {
        let hits = (0..features.rows())
            .filter(|&i| self.predict(features.row(i)) == labels[i])
            .count();
        hits as f64 / features.rows() as f64
    }
}

/// Mean cross-entropy plus `l2·‖W‖²/2` (bias excluded), and its gradient
/// with respect to the flattened `K × (D + 1)` weights.
pub fn regression_loss_and_grad(
    weights: &[f64],
    features: &Matrix<f64>,
    labels: &[usize],
    classes: usize,
    l2: f64,
) -> Result<(f64, Vec<f64>)> {
    let d = features.cols();
    check_dim("regression weights", classes * (d + 1), weights.len())?;
    check_dim("regression labels", features.rows(), labels.len())?;
    let model = SoftmaxRegression {
        weights: Matrix::from_vec(classes, d + 1, weights.to_vec())?,
    };
    let n = features.rows() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    for (i, &y) in labels.iter().enumerate() {
        let x = features.row(i);
        let z = model.logits(x);
        let lse = crate::numcore::log_sum_exp(&z)?;
        loss += lse - z[y];
        for k in 0..classes {
            let dz = ((z[k] - lse).exp() - if k == y { 1.0 } else { 0.0 }) / n;
            let row = &mut grad[k * (d + 1)..(k + 1) * (d + 1)];
            for (g, &xj) in row[..d].iter_mut().zip(x) {
                *g += dz * xj;
            }
            row[d] += dz;
        }
    }
    loss /= n;
    for k in 0..classes {
        for j in 0..d {
            let w = weights[k * (d + 1) + j];
            loss += 0.5 * l2 * w * w;
            grad[k * (d + 1) + j] += l2 * w;
        }
    }
    Ok((loss, grad))
}

/// Full-batch Adam from zero weights; deterministic.
pub fn fit_softmax_regression(
    features: &Matrix<f64>,
    labels: &[usize],
    cfg: RegressionConfig,
) -> Result<SoftmaxRegression> {
    check_dim("regression labels", features.rows(), labels.len())?;
    if !(cfg.l2 >= 0.0) {
        return Err(Error::invalid("l2 must be non-negative"));
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let present = {
        let mut seen = vec![false; classes];
        labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if present < 2 {
        return Err(Error::Degenerate(
            "training data must contain at least 2 classes".into(),
        ));
    }
    let d = features.cols();
    let mut w = vec![0.0; classes * (d + 1)];
    let mut adam = AdamState::new(
        w.len(),
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    for _ in 0..cfg.iters {
        let (_, g) = regression_loss_and_grad(&w, features, labels, classes, cfg.l2)?;
        adam.step(&mut w, &g)?;
    }
    Ok(SoftmaxRegression {
        weights: Matrix::from_vec(classes, d + 1, w)?,
    })
}

/// Fold index per example: each class is shuffled with `seed` and dealt
/// round-robin into `k` folds.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid("cross-validation needs k >= 2"));
    }
    let classes = num_classes(labels)?;
    let mut rng = SeededRng::new(seed);
    let mut folds = vec![0; labels.len()];
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.len() < k {
            return Err(Error::invalid(format!(
                "class {c} has {} examples, fewer than {k} folds",
                members.len()
            )));
        }
        rng.shuffle(&mut members);
        for (j, &i) in members.iter().enumerate() {
            folds[i] = j % k;
        }
    }
    Ok(folds)
}

fn select_rows(features: &Matrix<f64>, rows: &[usize]) -> Matrix<f64> {
    let mut data = Vec::with_capacity(rows.len() * features.cols());
    for &r in rows {
        data.extend_from_slice(features.row(r));
    }
    Matrix::from_vec(rows.len(), features.cols(), data).expect("non-empty selection")
}

/// Per-column `(mean, std)` with zero spread mapped to 1.
fn column_stats(m: &Matrix<f64>) -> Vec<(f64, f64)> {
    let n = m.rows() as f64;
    (0..m.cols())
        .map(|j| {
            let mean = (0..m.rows()).map(|i| m.get(i, j)).sum::<f64>() / n;
            let var = (0..m.rows())
                .map(|i| (m.get(i, j) - mean).powi(2))
                .sum::<f64>()
                / n;
            let sd = var.sqrt();
            (mean, if sd > 0.0 { sd } else { 1.0 })
        })
        .collect()
}

fn standardise(m: &mut Matrix<f64>, stats: &[(f64, f64)]) {
    for i in 0..m.rows() {
        for (v, (mean, sd)) in m.row_mut(i).iter_mut().zip(stats) {
            *v = (*v - mean) / sd;
        }
    }
}

/// Mean held-out accuracy over seeded stratified folds. Features are
/// standardised with statistics from each fold's training part.
pub fn cross_validate(
    features: &Matrix<f64>,
    labels: &[usize],
    k: usize,
    seed: u64,
    cfg: RegressionConfig,
) -> Result<f64> {
    check_dim("feature rows", labels.len(), features.rows())?;
    let folds = stratified_folds(labels, k, seed)?;
    let accs = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] == f).collect();
            let mut xtr = select_rows(features, &train);
            let mut xte = select_rows(features, &test);
            let stats = column_stats(&xtr);
            standardise(&mut xtr, &stats);
            standardise(&mut xte, &stats);
            let ytr: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let yte: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
            Ok(fit_softmax_regression(&xtr, &ytr, cfg)?.accuracy(&xte, &yte))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(accs.iter().sum::<f64>() / k as f64)
}

/// Embeds every record with `spec` and reports k-fold accuracy.
pub fn transfer_eval_cv(
    model: &Model,
    vocab: &Vocab,
    dataset: &str,
    spec: ReprSpec,
    records: &[LabeledRecord],
    k: usize,
) -> Result<EvalReport> {
    spec.check(&model.params, model.config.max_len)?;
    let max_len = model.config.max_len;
    let rows = records
        .par_iter()
        .map(|r| {
            let v = embed_params(
                &model.params,
                max_len,
                &encode_text(vocab, &r.sentence, max_len),
                spec,
            )?;
            Ok(v.iter().map(|x| f64::from(*x)).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let features = Matrix::from_rows(&rows)?;
    let labels: Vec<usize> = records.iter().map(|r| r.label).collect();
    let accuracy = cross_validate(
        &features,
        &labels,
        k,
        model.config.seed,
        RegressionConfig::default(),
    )?;
    let mut report = EvalReport::for_model(model, dataset, spec);
    report.accuracy = Some(accuracy);
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Svg,
}

pub const CSV_HEADER: &str =
    "dataset,encoder,decoder,spec,similarity,pearson,spearman,accuracy,seed";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9}")).unwrap_or_default()
}

pub fn render_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.dataset,
            r.encoder,
            r.decoder,
            r.spec,
            r.similarity.map(|s| s.to_string()).unwrap_or_default(),
            opt(r.pearson),
            opt(r.spearman),
            opt(r.accuracy),
            r.seed
        );
    }
    out
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLOURS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Line chart of Pearson and Spearman against unroll steps, one polyline per
/// (representation kind, metric); encoder baselines are dashed horizontal
/// lines.
pub fn render_svg(reports: &[EvalReport]) -> String {
    type Series = (String, Vec<(usize, f64)>);
    let mut series: Vec<Series> = Vec::new();
    let mut baselines: Vec<(String, f64)> = Vec::new();
    let mut max_n = 1;
    for r in reports {
        for (metric, value) in [("pearson", r.pearson), ("spearman", r.spearman)] {
            let Some(v) = value else { continue };
            let name = format!("{} {} {metric}", r.dataset, r.spec.kind());
            if r.spec == ReprSpec::Encoder {
                baselines.push((name, v));
                continue;
            }
            max_n = max_n.max(r.spec.steps());
            match series.iter_mut().find(|(n, _)| *n == name) {
                Some((_, pts)) => pts.push((r.spec.steps(), v)),
                None => series.push((name, vec![(r.spec.steps(), v)])),
            }
        }
    }
    let values = series
        .iter()
        .flat_map(|(_, p)| p.iter().map(|&(_, v)| v))
        .chain(baselines.iter().map(|&(_, v)| v));
    let (lo, hi) = values.fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        (lo - 1.0, hi + 1.0)
    };
    let x = |n: usize| {
        let span = (max_n.max(2) - 1) as f64;
        MARGIN + (n.saturating_sub(1)) as f64 / span * (SVG_W - 2.0 * MARGIN)
    };
    let y = |v: f64| SVG_H - MARGIN - (v - lo) / (hi - lo) * (SVG_H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        b = SVG_H - MARGIN,
        r = SVG_W - MARGIN
    );
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{b}" stroke="black"/>"#,
        b = SVG_H - MARGIN
    );
    for n in 1..=max_n {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{n}</text>"#,
            x(n),
            SVG_H - MARGIN + 15.0
        );
    }
    for v in [lo, hi] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.3}</text>"#,
            MARGIN - 5.0,
            y(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">unrolled steps</text>"#,
        SVG_W / 2.0,
        SVG_H - 10.0
    );
    let mut legend_y = MARGIN;
    for (i, (name, pts)) in series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let points: Vec<String> = pts
            .iter()
            .map(|&(n, v)| format!("{:.2},{:.2}", x(n), y(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline data-series="{name}" fill="none" stroke="{colour}" points="{}"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{legend_y:.1}" font-size="10" fill="{colour}">{name}</text>"#,
            SVG_W - MARGIN - 150.0
        );
        legend_y += 14.0;
    }
    for (i, (name, v)) in baselines.iter().enumerate() {
        let colour = COLOURS[(series.len() + i) % COLOURS.len()];
        let _ = writeln!(
            s,
            r#"<line data-series="{name}" x1="{MARGIN}" y1="{yv:.2}" x2="{r}" y2="{yv:.2}" stroke="{colour}" stroke-dasharray="4 3"/>"#,
            yv = y(*v),
            r = SVG_W - MARGIN
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{legend_y:.1}" font-size="10" fill="{colour}">{name}</text>"#,
            SVG_W - MARGIN - 150.0
        );
        legend_y += 14.0;
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_report(reports: &[EvalReport], format: ReportFormat, path: &Path) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::invalid("no reports to write"));
    }
    let body = match format {
        ReportFormat::Csv => render_csv(reports),
        ReportFormat::Svg => render_svg(reports),
    };
    let file = File::create(path).map_err(|e| Error::file(PathBuf::from(path), e))?;
    let mut w = BufWriter::new(file);
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::file(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_examples() {
        let a = [1.0f64, 2.0];
        let b = [3.0f64, 4.0];
        assert_eq!(similarity(&a, &b, Similarity::Dot).unwrap(), 11.0);
        let c = similarity(&a, &b, Similarity::Cosine).unwrap();
        assert!((c - 11.0 / (5f64.sqrt() * 5.0)).abs() < 1e-12);
        assert!((c - 0.98387).abs() < 1e-5);
        assert_eq!(
            similarity(&[1.0f64, 0.0], &[0.0, 1.0], Similarity::Cosine).unwrap(),
            0.0
        );
        assert_eq!(
            similarity(&[1.0f64, 0.0], &[1.0, 0.0], Similarity::Cosine).unwrap(),
            1.0
        );
        assert!(matches!(
            similarity(&[0.0f64, 0.0], &[1.0, 0.0], Similarity::Cosine),
            Err(Error::Degenerate(_))
        ));
        assert!(similarity(&[1.0f64], &[1.0, 0.0], Similarity::Dot).is_err());
    }

    #[test]
    fn correlation_examples() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&x, &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 2.0, 2.0]).unwrap();
        assert!((rho - 0.8944).abs() < 5e-5);
        assert_eq!(ranks(&[1.0, 1.0, 2.0, 2.0]), vec![1.5, 1.5, 3.5, 3.5]);
        assert!(matches!(
            pearson(&x, &[1.0, 1.0, 1.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn sts_reader() {
        let text = "# header\na b\tc d\t3.5\n\nx\ty\t0\n";
        let recs = read_sts(text.as_bytes(), Path::new("s.tsv")).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].gold, 3.5);
        assert!(read_sts("a\tb\t6\n".as_bytes(), Path::new("s")).is_err());
        assert!(read_sts("a\tb\n".as_bytes(), Path::new("s")).is_err());
        let err = read_sts("a\tb\tnan\n".as_bytes(), Path::new("bad.tsv")).unwrap_err();
        assert!(err.to_string().contains("bad.tsv:1"));
    }

    #[test]
    fn labeled_reader() {
        let recs = read_labeled("0\thello\n1\tworld there\n".as_bytes(), Path::new("t")).unwrap();
        assert_eq!(recs[1].sentence, "world there");
        assert!(read_labeled("0\ta\n2\tb\n".as_bytes(), Path::new("t")).is_err());
        assert!(read_labeled("x\ta\n".as_bytes(), Path::new("t")).is_err());
    }

    #[test]
    fn separable_toy_fits_exactly() {
        let rows: Vec<Vec<f64>> = vec![
            vec![1.0, 2.0],
            vec![2.0, 1.5],
            vec![1.5, 3.0],
            vec![-1.0, -2.0],
            vec![-2.0, -0.5],
            vec![-1.5, -1.0],
        ];
        let x = Matrix::from_rows(&rows).unwrap();
        let y = [0, 0, 0, 1, 1, 1];
        let m = fit_softmax_regression(&x, &y, RegressionConfig::default()).unwrap();
        assert_eq!(m.accuracy(&x, &y), 1.0);
        let single = fit_softmax_regression(&x, &[0; 6], RegressionConfig::default());
        assert!(matches!(single, Err(Error::Degenerate(_))));
    }

    #[test]
    fn heavy_regularisation_gives_uniform_predictions() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![-1.0], vec![-2.0]]).unwrap();
        let y = [0, 0, 1, 1];
        let cfg = RegressionConfig {
            l2: 1e6,
            ..RegressionConfig::default()
        };
        let m = fit_softmax_regression(&x, &y, cfg).unwrap();
        let max_w = m
            .weights
            .as_slice()
            .iter()
            .fold(0.0f64, |a, w| a.max(w.abs()));
        assert!(max_w < 1e-3, "{max_w}");
        for i in 0..4 {
            let p = m.probabilities(x.row(i));
            assert!((p[0] - 0.5).abs() < 1e-3);
        }
    }

    #[test]
    fn regression_gradient_matches_finite_differences() {
        let mut rng = SeededRng::new(5);
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..4).map(|_| rng.next_f64() * 2.0 - 1.0).collect())
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let w: Vec<f64> = (0..15).map(|_| rng.next_f64() - 0.5).collect();
        let err = crate::numcore::grad_check(
            |w| regression_loss_and_grad(w, &x, &y, 3, 0.1).unwrap().0,
            |w| regression_loss_and_grad(w, &x, &y, 3, 0.1).unwrap().1,
            &w,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn folds_are_stratified_and_seeded() {
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let f = stratified_folds(&labels, 5, 3).unwrap();
        assert_eq!(f, stratified_folds(&labels, 5, 3).unwrap());
        for fold in 0..5 {
            for c in 0..4 {
                let n = (0..40).filter(|&i| f[i] == fold && labels[i] == c).count();
                assert_eq!(n, 2);
            }
        }
        assert!(stratified_folds(&[0, 0, 1, 1], 3, 0).is_err());
        assert!(stratified_folds(&[0, 1], 1, 0).is_err());
    }

    #[test]
    fn one_hot_features_classify_perfectly() {
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| (0..3).map(|k| if k == l { 1.0 } else { 0.0 }).collect())
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        assert_eq!(
            cross_validate(&x, &labels, 10, 1, RegressionConfig::default()).unwrap(),
            1.0
        );
    }

    fn report(spec: ReprSpec, p: f64, s: f64) -> EvalReport {
        EvalReport {
            dataset: "toy".into(),
            encoder: EncoderKind::Rnn,
            decoder: DecoderKind::Rnn,
            spec,
            similarity: Some(Similarity::Dot),
            pearson: Some(p),
            spearman: Some(s),
            accuracy: None,
            seed: 3,
            fingerprint: String::new(),
            degenerate: false,
        }
    }

    #[test]
    fn csv_layout() {
        let csv = render_csv(&[report(ReprSpec::RnnConcat(2), 0.25, -0.125)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(
            lines[1],
            "toy,rnn,rnn,concat:2,dot,0.250000000,-0.125000000,,3"
        );
    }

    #[test]
    fn svg_vertices_per_series() {
        let mut reports = vec![report(ReprSpec::Encoder, 0.1, 0.1)];
        for n in 1..=10 {
            reports.push(report(
                ReprSpec::RnnConcat(n),
                0.01 * n as f64,
                0.02 * n as f64,
            ));
            reports.push(report(ReprSpec::RnnMean(n), 0.3, 0.03 * n as f64));
        }
        let svg = render_svg(&reports);
        let polylines: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
        assert_eq!(polylines.len(), 4);
        for p in polylines {
            let pts = p
                .split("points=\"")
                .nth(1)
                .unwrap()
                .trim_end_matches("\"/>");
            assert_eq!(pts.split(' ').count(), 10);
        }
    }
}
