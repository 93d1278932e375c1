//! Sentence representations read off a trained model: the raw encoder output,
//! unrolled decoder states (concatenated or averaged), the matching context
//! representations, and the layer-split check on an MLP classifier.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::corpus::{SentenceIds, GO};
use crate::error::{check_dim, Error, Result};
use crate::evalharness::Similarity;
use crate::models::{
    check_ids, decoder, decoder_initial_state, encode, output_logits, teacher_forced_states, Model,
    Parameters, Side,
};
use crate::numcore::{
    axpy, gru_forward, log_sum_exp_unchecked, softmax_unchecked, MlpClassifier, Real,
};

/// Which representation to extract.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReprSpec {
    Encoder,
    /// Prev-decoder states `h¹..hⁿ` then next-decoder states `h¹..hⁿ`.
    RnnConcat(usize),
    /// Mean of the prev-decoder states, then mean of the next-decoder states.
    RnnMean(usize),
}

impl ReprSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ReprSpec::Encoder => "encoder",
            ReprSpec::RnnConcat(_) => "concat",
            ReprSpec::RnnMean(_) => "mean",
        }
    }

    /// Unroll steps; 0 for the encoder.
    pub fn steps(&self) -> usize {
        match *self {
            ReprSpec::Encoder => 0,
            ReprSpec::RnnConcat(n) | ReprSpec::RnnMean(n) => n,
        }
    }

    /// The similarity under which the training objective makes this space
    /// optimal. Always the dot product.
    pub fn optimal_similarity(&self) -> Similarity {
        Similarity::Dot
    }

    /// Embedding dimension for a model with the given encoder output and
    /// decoder hidden sizes.
    pub fn dim(&self, encoder_dim: usize, hidden: usize) -> usize {
        match *self {
            ReprSpec::Encoder => encoder_dim,
            ReprSpec::RnnConcat(n) => 2 * n * hidden,
            ReprSpec::RnnMean(_) => 2 * hidden,
        }
    }

    fn mismatch(&self, reason: impl Into<String>) -> Error {
        Error::SpecMismatch {
            spec: self.to_string(),
            reason: reason.into(),
        }
    }

    /// Checks that `params` (trained with sentences of at most `max_len`
    /// tokens) can produce this representation.
    pub fn check<T: Real>(&self, params: &Parameters<T>, max_len: usize) -> Result<()> {
        match *self {
            ReprSpec::Encoder => Ok(()),
            ReprSpec::RnnConcat(n) | ReprSpec::RnnMean(n) => {
                if params.dec_prev.is_none() {
                    return Err(self.mismatch("unrolling needs an RNN decoder"));
                }
                if n == 0 || n > max_len {
                    return Err(self.mismatch(format!("unroll steps must be in 1..={max_len}")));
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for ReprSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind(), self.steps())
    }
}

impl FromStr for ReprSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("bad representation spec {s:?}"));
        let (kind, n) = match s.split_once(':') {
            Some((k, n)) => (k, Some(n.parse::<usize>().map_err(|_| bad())?)),
            None => (s, None),
        };
        match (kind, n) {
            ("encoder", None | Some(0)) => Ok(ReprSpec::Encoder),
            ("concat", Some(n)) if n >= 1 => Ok(ReprSpec::RnnConcat(n)),
            ("mean", Some(n)) if n >= 1 => Ok(ReprSpec::RnnMean(n)),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SentenceEmbedding {
    pub vector: Vec<f32>,
    pub spec: ReprSpec,
    pub fingerprint: String,
}

impl SentenceEmbedding {
    pub fn similarity(&self) -> Similarity {
        self.spec.optimal_similarity()
    }
}

/// Hidden states of one decoder unrolled at inference time.
#[derive(Clone, Debug, PartialEq)]
pub struct UnrolledStates<T> {
    pub side: Side,
    pub states: Vec<Vec<T>>,
}

/// Runs one decoder for `n` steps from the sentence vector `h0`. The first
/// input is `E[GO]`; each later input is `Σ_w p_w E[w]` with `p` the softmax
/// of the previous step's output logits.
pub fn unroll_decoder<T: Real>(
    params: &Parameters<T>,
    side: Side,
    h0: &[T],
    n: usize,
    max_len: usize,
) -> Result<UnrolledStates<T>> {
    ReprSpec::RnnConcat(n).check(params, max_len)?;
    let dec = decoder(params, side)?;
    let mut state = decoder_initial_state(params, h0)?;
    let mut input = params.embedding.row(GO as usize).to_vec();
    let mut states = Vec::with_capacity(n);
    for t in 0..n {
        state = gru_forward(dec, &input, &state).0;
        states.push(state.clone());
        if t + 1 < n {
            let p = softmax_unchecked(&output_logits(params, &state));
            input = params.embedding.matvec_t(&p)?;
        }
    }
    Ok(UnrolledStates { side, states })
}

/// Encoder output plus both decoders unrolled for `n` steps.
pub fn unroll_both<T: Real>(
    params: &Parameters<T>,
    max_len: usize,
    sentence: &SentenceIds,
    n: usize,
) -> Result<(Vec<T>, [UnrolledStates<T>; 2])> {
    let h = encode(params, sentence)?;
    let prev = unroll_decoder(params, Side::Prev, &h, n, max_len)?;
    let next = unroll_decoder(params, Side::Next, &h, n, max_len)?;
    Ok((h, [prev, next]))
}

/// Builds the representation `spec` from an encoder output and unrolled
/// states; the states may run longer than `spec` needs.
pub fn assemble<T: Real>(
    spec: ReprSpec,
    h: &[T],
    unrolled: &[UnrolledStates<T>; 2],
) -> Result<Vec<T>> {
    let n = spec.steps();
    if unrolled.iter().any(|u| u.states.len() < n) {
        return Err(Error::invalid(format!(
            "need {n} unrolled states per decoder"
        )));
    }
    let mut out = Vec::new();
    match spec {
        ReprSpec::Encoder => out.extend_from_slice(h),
        ReprSpec::RnnConcat(_) => {
            for u in unrolled {
                for s in &u.states[..n] {
                    out.extend_from_slice(s);
                }
            }
        }
        ReprSpec::RnnMean(_) => {
            let scale = T::one() / T::lit(n as f64);
            for u in unrolled {
                let mut mean = vec![T::zero(); u.states[0].len()];
                for s in &u.states[..n] {
                    axpy(scale, s, &mut mean);
                }
                out.extend(mean);
            }
        }
    }
    Ok(out)
}

/// The representation `spec` of one encoded sentence.
pub fn embed_params<T: Real>(
    params: &Parameters<T>,
    max_len: usize,
    sentence: &SentenceIds,
    spec: ReprSpec,
) -> Result<Vec<T>> {
    spec.check(params, max_len)?;
    match spec {
        ReprSpec::Encoder => encode(params, sentence),
        _ => {
            let (h, unrolled) = unroll_both(params, max_len, sentence, spec.steps())?;
            assemble(spec, &h, &unrolled)
        }
    }
}

pub fn embed(model: &Model, sentence: &SentenceIds, spec: ReprSpec) -> Result<SentenceEmbedding> {
    let vector = embed_params(&model.params, model.config.max_len, sentence, spec)?;
    Ok(SentenceEmbedding {
        vector,
        spec,
        fingerprint: model.fingerprint().to_string(),
    })
}

/// [`embed`] over many sentences in parallel; output order follows input order.
pub fn embed_all(
    model: &Model,
    sentences: &[SentenceIds],
    spec: ReprSpec,
) -> Result<Vec<SentenceEmbedding>> {
    spec.check(&model.params, model.config.max_len)?;
    sentences
        .par_iter()
        .map(|s| embed(model, s, spec))
        .collect()
}

/// `Σ u_w` over the non-PAD words of both context sentences; its dot product
/// with the sentence vector is the BOW decoder's total target score.
pub fn context_repr_bow<T: Real>(
    params: &Parameters<T>,
    prev: &SentenceIds,
    next: &SentenceIds,
) -> Result<Vec<T>> {
    if params.dec_prev.is_some() {
        return Err(Error::invalid("context sum needs a BOW decoder"));
    }
    check_ids(params, prev)?;
    check_ids(params, next)?;
    let mut c = vec![T::zero(); params.output.cols()];
    for &w in prev.tokens().iter().chain(next.tokens()) {
        axpy(T::one(), params.output.row(w as usize), &mut c);
    }
    Ok(c)
}

fn check_context_len(len: usize, n: usize) -> Result<()> {
    if len > n {
        return Err(Error::invalid(format!(
            "context of {len} tokens does not fit in {n} blocks"
        )));
    }
    Ok(())
}

/// Ordered concatenation `u_{w¹} ⊕ … ⊕ u_{wⁿ}` for the previous then the next
/// context sentence, with zero blocks past each sentence's end.
pub fn context_repr_concat<T: Real>(
    params: &Parameters<T>,
    prev: &SentenceIds,
    next: &SentenceIds,
    n: usize,
) -> Result<Vec<T>> {
    if params.dec_prev.is_none() {
        return Err(Error::invalid("ordered context needs an RNN decoder"));
    }
    let width = params.output.cols();
    let mut out = vec![T::zero(); 2 * n * width];
    for (block, target) in [prev, next].into_iter().enumerate() {
        check_ids(params, target)?;
        check_context_len(target.true_len, n)?;
        for (t, &w) in target.tokens().iter().enumerate() {
            let at = (block * n + t) * width;
            out[at..at + width].copy_from_slice(params.output.row(w as usize));
        }
    }
    Ok(out)
}

/// Teacher-forced decoder states laid out like [`context_repr_concat`]: prev
/// states then next states, each zero-padded to `n` blocks.
pub fn teacher_forced_concat<T: Real>(
    params: &Parameters<T>,
    h0: &[T],
    prev: &SentenceIds,
    next: &SentenceIds,
    n: usize,
) -> Result<Vec<T>> {
    let width = params.output.cols();
    let mut out = vec![T::zero(); 2 * n * width];
    for (block, (side, target)) in [(Side::Prev, prev), (Side::Next, next)]
        .into_iter()
        .enumerate()
    {
        check_context_len(target.true_len, n)?;
        for (t, s) in teacher_forced_states(params, side, h0, target)?
            .into_iter()
            .enumerate()
        {
            let at = (block * n + t) * width;
            out[at..at + width].copy_from_slice(&s);
        }
    }
    Ok(out)
}

/// For class `y` and split `k`: `rho = u_y · F_n(G_k(x))` and
/// `log P(y|x) − rho`, which equals `−logΣexp(logits)` for every `y` and `k`.
pub fn verify_layer_split<T: Real>(
    model: &MlpClassifier<T>,
    x: &[T],
    y: usize,
    k: usize,
) -> Result<(T, T)> {
    let classes = model.projection().rows();
    if y >= classes {
        return Err(Error::invalid(format!(
            "class {y} out of range for {classes} classes"
        )));
    }
    let (intermediate, _) = model.forward_split(x, k)?;
    let features = model.tail(&intermediate, k)?;
    let rho = crate::numcore::dot(model.projection().row(y), &features);
    let logits = model.projection().matvec(&features)?;
    let log_p = softmax_unchecked(&logits)[y].ln();
    Ok((rho, log_p - rho))
}

/// `−logΣexp` of the classifier's logits, the constant that
/// [`verify_layer_split`]'s gap should equal.
pub fn layer_split_constant<T: Real>(model: &MlpClassifier<T>, x: &[T]) -> Result<T> {
    let (_, logits) = model.forward_split(x, 0)?;
    Ok(-log_sum_exp_unchecked(&logits))
}

/// Writes `# dim=<D> spec=<kind:n> model=<fingerprint>` then one
/// `index<TAB>v1 v2 …` line per embedding, 9 significant digits.
pub fn write_embeddings<W: Write>(mut w: W, embeddings: &[SentenceEmbedding]) -> Result<()> {
    let first = embeddings
        .first()
        .ok_or_else(|| Error::invalid("no embeddings to write"))?;
    let dim = first.vector.len();
    writeln!(
        w,
        "# dim={dim} spec={} model={}",
        first.spec, first.fingerprint
    )?;
    for (i, e) in embeddings.iter().enumerate() {
        check_dim("embedding", dim, e.vector.len())?;
        if e.spec != first.spec || e.fingerprint != first.fingerprint {
            return Err(Error::invalid(
                "embeddings come from different specs or models",
            ));
        }
        let values: Vec<String> = e.vector.iter().map(|v| format!("{v:.8e}")).collect();
        writeln!(w, "{i}\t{}", values.join(" "))?;
    }
    Ok(())
}

/// Reads a file written by [`write_embeddings`].
pub fn read_embeddings<R: BufRead>(reader: R) -> Result<Vec<SentenceEmbedding>> {
    let parse = |line: usize, msg: String| Error::Parse {
        path: "<embeddings>".into(),
        line,
        msg,
    };
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse(1, "missing header".into()))??;
    let mut dim = None;
    let mut spec = None;
    let mut fingerprint = None;
    for field in header.trim_start_matches('#').split_whitespace() {
        match field.split_once('=') {
            Some(("dim", v)) => dim = v.parse::<usize>().ok(),
            Some(("spec", v)) => spec = v.parse::<ReprSpec>().ok(),
            Some(("model", v)) => fingerprint = Some(v.to_string()),
            _ => {}
        }
    }
    let (Some(dim), Some(spec), Some(fingerprint)) = (dim, spec, fingerprint) else {
        return Err(parse(1, format!("bad header {header:?}")));
    };
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        let (index, values) = line
            .split_once('\t')
            .ok_or_else(|| parse(lineno, "missing tab".into()))?;
        if index.parse::<usize>().ok() != Some(i) {
            return Err(parse(lineno, format!("expected index {i}")));
        }
        let vector = values
            .split(' ')
            .map(|v| v.parse::<f32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| parse(lineno, e.to_string()))?;
        if vector.len() != dim {
            return Err(parse(
                lineno,
                format!("expected {dim} values, got {}", vector.len()),
            ));
        }
        out.push(SentenceEmbedding {
            vector,
            spec,
            fingerprint: fingerprint.clone(),
        });
    }
    Ok(out)
}
