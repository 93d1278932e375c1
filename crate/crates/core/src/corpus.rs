//! Tokenisation, vocabulary construction and assembly of
//! `(sentence, (previous, next))` training pairs.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::numcore::SeededRng;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const EOS: u32 = 2;
pub const GO: u32 = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<eos>", "<go>"];
pub const DEFAULT_MAX_LEN: usize = 30;

/// Lowercases and splits on runs of ASCII whitespace.
pub fn tokenize(line: &str) -> Vec<String> {
    line.split(|c: char| c.is_ascii_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.chars().flat_map(char::to_lowercase).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    fn reserved_only() -> Self {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in RESERVED {
            v.push(t.to_string());
        }
        v
    }

    fn push(&mut self, token: String) {
        self.index.insert(token.clone(), self.tokens.len() as u32);
        self.tokens.push(token);
    }

    /// Reserved tokens followed by the `max_size − 4` most frequent tokens.
    /// Ties go to the token seen first.
    pub fn build<R: BufRead>(reader: R, max_size: usize) -> Result<Self> {
        if max_size < RESERVED.len() + 1 {
            return Err(Error::invalid(format!(
                "vocabulary capacity must be at least 5, got {max_size}"
            )));
        }
        // (count, first occurrence)
        let mut counts: HashMap<String, (u64, usize)> = HashMap::new();
        let mut seen = 0usize;
        for line in reader.lines() {
            for tok in tokenize(&line?) {
                if RESERVED.contains(&tok.as_str()) {
                    continue;
                }
                let entry = counts.entry(tok).or_insert((0, seen));
                if entry.0 == 0 {
                    seen += 1;
                }
                entry.0 += 1;
            }
        }
        let mut ranked: Vec<(String, (u64, usize))> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
        let mut vocab = Self::reserved_only();
        for (tok, _) in ranked.into_iter().take(max_size - RESERVED.len()) {
            vocab.push(tok);
        }
        Ok(vocab)
    }

    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Result<Self> {
        let mut vocab = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for (i, t) in tokens.into_iter().enumerate() {
            if i < RESERVED.len() && t != RESERVED[i] {
                return Err(Error::invalid(format!(
                    "vocabulary entry {i} must be {}, found {t:?}",
                    RESERVED[i]
                )));
            }
            if t.is_empty() || t.chars().any(|c| c.is_ascii_whitespace()) {
                return Err(Error::invalid(format!("invalid vocabulary token {t:?}")));
            }
            if vocab.index.contains_key(&t) {
                return Err(Error::invalid(format!("duplicate vocabulary token {t:?}")));
            }
            vocab.push(t);
        }
        if vocab.len() < RESERVED.len() {
            return Err(Error::invalid("vocabulary is missing reserved tokens"));
        }
        Ok(vocab)
    }

    /// One token per line; line number is the id.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let lines = reader.lines().collect::<std::io::Result<Vec<_>>>()?;
        Self::from_tokens(lines)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Token ids of one sentence, EOS-terminated and PAD-filled to a fixed length.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SentenceIds {
    pub ids: Vec<u32>,
    /// Number of non-PAD positions, EOS included.
    pub true_len: usize,
}

impl SentenceIds {
    /// The non-PAD prefix.
    pub fn tokens(&self) -> &[u32] {
        &self.ids[..self.true_len]
    }

    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    /// Builds from raw ids, enforcing the PAD-suffix and EOS-terminator
    /// invariants.
    pub fn from_ids(ids: Vec<u32>) -> Result<Self> {
        let true_len = ids.iter().position(|&i| i == PAD).unwrap_or(ids.len());
        if ids[true_len..].iter().any(|&i| i != PAD) {
            return Err(Error::invalid("PAD may only occur as a suffix"));
        }
        if true_len == 0 || ids[true_len - 1] != EOS {
            return Err(Error::invalid("last non-PAD id must be EOS"));
        }
        if ids[..true_len - 1].contains(&EOS) {
            return Err(Error::invalid("EOS must occur exactly once"));
        }
        Ok(SentenceIds { ids, true_len })
    }
}

/// Maps tokens to ids (OOV → UNK), keeps at most `max_len − 1` of them, appends
/// EOS and pads to `max_len`.
pub fn encode_sentence<S: AsRef<str>>(vocab: &Vocab, tokens: &[S], max_len: usize) -> SentenceIds {
    assert!(max_len >= 2, "max_len must be at least 2");
    let mut ids: Vec<u32> = tokens
        .iter()
        .take(max_len - 1)
        .map(|t| match vocab.id(t.as_ref()) {
            // reserved spellings in text are plain unknown words
            Some(id) if id > GO => id,
            _ => UNK,
        })
        .collect();
    ids.push(EOS);
    let true_len = ids.len();
    ids.resize(max_len, PAD);
    SentenceIds { ids, true_len }
}

/// Inverse of [`encode_sentence`] for in-vocabulary tokens.
pub fn decode_sentence(vocab: &Vocab, sentence: &SentenceIds) -> Vec<String> {
    sentence
        .tokens()
        .iter()
        .map(|&id| {
            vocab
                .token(id)
                .unwrap_or(RESERVED[UNK as usize])
                .to_string()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextPair {
    pub centre: SentenceIds,
    pub prev: SentenceIds,
    pub next: SentenceIds,
    /// Corpus index of `centre`.
    pub position: usize,
}

/// One pair per interior sentence; the first and last sentences are skipped.
pub fn build_pairs(sentences: &[SentenceIds]) -> Vec<ContextPair> {
    sentences
        .windows(3)
        .enumerate()
        .map(|(i, w)| ContextPair {
            prev: w[0].clone(),
            centre: w[1].clone(),
            next: w[2].clone(),
            position: i + 1,
        })
        .collect()
}

/// Reads a one-sentence-per-line corpus into encoded sentences.
pub fn read_corpus<R: BufRead>(
    reader: R,
    vocab: &Vocab,
    max_len: usize,
) -> Result<Vec<SentenceIds>> {
    reader
        .lines()
        .map(|line| Ok(encode_sentence(vocab, &tokenize(&line?), max_len)))
        .collect()
}

/// One epoch of shuffled batches over `pairs`.
pub struct Batches<'a> {
    pairs: &'a [ContextPair],
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

impl<'a> Iterator for Batches<'a> {
    type Item = Vec<&'a ContextPair>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end]
            .iter()
            .map(|&i| &self.pairs[i])
            .collect();
        self.cursor = end;
        Some(batch)
    }
}

/// Seeded permutation of `pairs`, chunked into `batch_size` (last batch may be short).
pub fn batches<'a>(
    pairs: &'a [ContextPair],
    batch_size: usize,
    rng: &mut SeededRng,
) -> Result<Batches<'a>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    Ok(Batches {
        pairs,
        order: rng.permutation(pairs.len()),
        batch_size,
        cursor: 0,
    })
}
