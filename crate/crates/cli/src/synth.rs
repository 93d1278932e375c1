//! Synthetic topic corpus with planted sentence similarity.
//!
//! Corpus sentences follow a topic chain that keeps its topic with
//! probability `persist`. Topic `t` owns the words `t{t}w0..`, and a small
//! shared pool `n0..` supplies noise words. The first word of every sentence
//! is topical.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ddec_core::evalharness::{LabeledRecord, StsRecord};
use ddec_core::numcore::SeededRng;

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub topics: usize,
    pub words_per_topic: usize,
    pub noise_words: usize,
    pub sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub persist: f64,
    /// Chance that a non-initial word comes from the noise pool.
    pub noise_rate: f64,
    pub sts_pairs: usize,
    pub transfer_per_topic: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            topics: 4,
            words_per_topic: 100,
            noise_words: 20,
            sentences: 2000,
            min_len: 4,
            max_len: 10,
            persist: 0.9,
            noise_rate: 0.2,
            sts_pairs: 500,
            transfer_per_topic: 50,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Data(format!("synthetic spec: {msg}")));
        if self.topics < 2 {
            return bad("need at least 2 topics");
        }
        if !(self.persist > 0.0 && self.persist < 1.0) {
            return bad("persistence must lie strictly between 0 and 1");
        }
        if self.words_per_topic == 0 || self.min_len == 0 || self.min_len > self.max_len {
            return bad("empty topic vocabulary or sentence length range");
        }
        if !(0.0..1.0).contains(&self.noise_rate)
            || (self.noise_rate > 0.0 && self.noise_words == 0)
        {
            return bad("noise rate must be in [0, 1) with a non-empty noise pool");
        }
        if self.sentences < 3 {
            return bad("need at least 3 sentences");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub corpus: Vec<String>,
    pub sts: Vec<StsRecord>,
    pub transfer: Vec<LabeledRecord>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthFiles {
    pub corpus: PathBuf,
    pub sts: PathBuf,
    pub transfer: PathBuf,
}

struct Sentence {
    text: String,
    /// Topic of each topical word.
    topical: Vec<usize>,
}

fn pick_topic(mixture: &[(usize, f64)], rng: &mut SeededRng) -> usize {
    let mut u = rng.next_f64();
    for &(t, w) in mixture {
        if u < w {
            return t;
        }
        u -= w;
    }
    mixture[mixture.len() - 1].0
}

fn sentence(spec: &SynthSpec, mixture: &[(usize, f64)], rng: &mut SeededRng) -> Sentence {
    let len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
    let mut words = Vec::with_capacity(len);
    let mut topical = Vec::new();
    for i in 0..len {
        if i > 0 && rng.bernoulli(spec.noise_rate) {
            words.push(format!("n{}", rng.below(spec.noise_words)));
        } else {
            let t = pick_topic(mixture, rng);
            topical.push(t);
            words.push(format!("t{t}w{}", rng.below(spec.words_per_topic)));
        }
    }
    Sentence {
        text: words.join(" "),
        topical,
    }
}

fn other_topic(spec: &SynthSpec, t: usize, rng: &mut SeededRng) -> usize {
    (t + 1 + rng.below(spec.topics - 1)) % spec.topics
}

/// A pure topic half the time, otherwise a two-topic blend.
fn mixture(spec: &SynthSpec, primary: usize, rng: &mut SeededRng) -> Vec<(usize, f64)> {
    if rng.bernoulli(0.5) {
        vec![(primary, 1.0)]
    } else {
        let w = 0.2 + 0.3 * rng.next_f64();
        vec![(primary, 1.0 - w), (other_topic(spec, primary, rng), w)]
    }
}

fn topic_fractions(topics: usize, s: &Sentence) -> Vec<f64> {
    let mut f = vec![0.0; topics];
    for &t in &s.topical {
        f[t] += 1.0;
    }
    let n = s.topical.len() as f64;
    f.iter_mut().for_each(|v| *v /= n);
    f
}

/// `5 × Σ_t min(fa_t, fb_t)` over the topic shares of the topical words.
pub fn topic_overlap_gold(topics: usize, a: &[usize], b: &[usize]) -> f64 {
    let fa = topic_fractions(
        topics,
        &Sentence {
            text: String::new(),
            topical: a.to_vec(),
        },
    );
    let fb = topic_fractions(
        topics,
        &Sentence {
            text: String::new(),
            topical: b.to_vec(),
        },
    );
    5.0 * fa.iter().zip(&fb).map(|(x, y)| x.min(*y)).sum::<f64>()
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData, CliError> {
    spec.validate()?;
    let root = SeededRng::new(spec.seed);

    let mut rng = root.fork(0);
    let mut topic = rng.below(spec.topics);
    let mut corpus = Vec::with_capacity(spec.sentences);
    for i in 0..spec.sentences {
        if i > 0 && !rng.bernoulli(spec.persist) {
            topic = other_topic(spec, topic, &mut rng);
        }
        corpus.push(sentence(spec, &[(topic, 1.0)], &mut rng).text);
    }

    let mut rng = root.fork(1);
    let mut sts = Vec::with_capacity(spec.sts_pairs);
    for _ in 0..spec.sts_pairs {
        let ta = rng.below(spec.topics);
        let tb = if rng.bernoulli(0.5) {
            ta
        } else {
            rng.below(spec.topics)
        };
        let ma = mixture(spec, ta, &mut rng);
        let mb = mixture(spec, tb, &mut rng);
        let a = sentence(spec, &ma, &mut rng);
        let b = sentence(spec, &mb, &mut rng);
        let gold = topic_overlap_gold(spec.topics, &a.topical, &b.topical);
        sts.push(StsRecord {
            sentence_a: a.text,
            sentence_b: b.text,
            gold: (gold * 1e6).round() / 1e6,
        });
    }

    let mut rng = root.fork(2);
    let mut transfer = Vec::with_capacity(spec.topics * spec.transfer_per_topic);
    for _ in 0..spec.transfer_per_topic {
        for t in 0..spec.topics {
            transfer.push(LabeledRecord {
                label: t,
                sentence: sentence(spec, &[(t, 1.0)], &mut rng).text,
            });
        }
    }
    Ok(SynthData {
        corpus,
        sts,
        transfer,
    })
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(body.as_bytes()))
        .map_err(|e| CliError::file(path, e))
}

/// Writes `corpus.txt`, `sts.tsv` and `transfer.tsv` under `out_dir`.
pub fn generate_synthetic(spec: &SynthSpec, out_dir: &Path) -> Result<SynthFiles, CliError> {
    let data = generate(spec)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::file(out_dir, e))?;
    let files = SynthFiles {
        corpus: out_dir.join("corpus.txt"),
        sts: out_dir.join("sts.tsv"),
        transfer: out_dir.join("transfer.tsv"),
    };
    let mut corpus = data.corpus.join("\n");
    corpus.push('\n');
    write_file(&files.corpus, &corpus)?;
    let mut sts = String::from("# sentence_a\tsentence_b\tgold\n");
    for r in &data.sts {
        sts.push_str(&format!(
            "{}\t{}\t{:.6}\n",
            r.sentence_a, r.sentence_b, r.gold
        ));
    }
    write_file(&files.sts, &sts)?;
    let mut transfer = String::new();
    for r in &data.transfer {
        transfer.push_str(&format!("{}\t{}\n", r.label, r.sentence));
    }
    write_file(&files.transfer, &transfer)?;
    Ok(files)
}
