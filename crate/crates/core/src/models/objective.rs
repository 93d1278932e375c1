//! Encoders, the two decoder objectives, and their hand-derived gradients.
//!
//! Both objectives are negative log-likelihoods of the context words:
//!
//! * BOW decoder: `Σ_{w∈c} [logΣexp(U·h) − u_w·h]`
//! * RNN decoder: `Σ_t [logΣexp(U·hᵗ) − u_{wᵗ}·hᵗ]`, teacher-forced, run once
//!   for the previous and once for the next sentence.
//!
//! PAD positions never contribute; EOS is an ordinary target.

use crate::corpus::{ContextPair, SentenceIds, GO};
use crate::error::{check_dim, Error, Result};
use crate::numcore::{
    axpy, dot, grad_check_report, gru_backward, gru_forward, log_sum_exp_unchecked,
    softmax_unchecked, GradCheckReport, GruCache, GruParams, Matrix, Real,
};

use super::Parameters;

/// Which context decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Prev,
    Next,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Prev, Side::Next];
}

pub(crate) fn check_ids<T: Real>(p: &Parameters<T>, s: &SentenceIds) -> Result<()> {
    let vocab_size = p.vocab_size();
    match s.tokens().iter().find(|&&id| id as usize >= vocab_size) {
        Some(&id) => Err(Error::IdOutOfRange { id, vocab_size }),
        None => Ok(()),
    }
}

/// Sum of the embeddings of the non-PAD tokens (EOS included).
pub fn encode_bow<T: Real>(p: &Parameters<T>, s: &SentenceIds) -> Result<Vec<T>> {
    check_ids(p, s)?;
    let mut h = vec![T::zero(); p.embed_dim()];
    for &id in s.tokens() {
        axpy(T::one(), p.embedding.row(id as usize), &mut h);
    }
    Ok(h)
}

/// Final GRU state after the last non-PAD token, starting from zero.
pub fn encode_rnn<T: Real>(p: &Parameters<T>, s: &SentenceIds) -> Result<Vec<T>> {
    check_ids(p, s)?;
    let enc = p
        .encoder
        .as_ref()
        .ok_or_else(|| Error::invalid("model has no RNN encoder"))?;
    let mut h = vec![T::zero(); enc.hidden_dim()];
    for &id in s.tokens() {
        h = gru_forward(enc, p.embedding.row(id as usize), &h).0;
    }
    Ok(h)
}

/// Encoder output for whichever encoder the parameters carry.
pub fn encode<T: Real>(p: &Parameters<T>, s: &SentenceIds) -> Result<Vec<T>> {
    if p.encoder.is_some() {
        encode_rnn(p, s)
    } else {
        encode_bow(p, s)
    }
}

pub(crate) enum EncTrace<T> {
    Bow(Vec<u32>),
    Rnn(Vec<u32>, Vec<GruCache<T>>),
}

fn encode_forward<T: Real>(p: &Parameters<T>, s: &SentenceIds) -> (Vec<T>, EncTrace<T>) {
    let ids = s.tokens().to_vec();
    match &p.encoder {
        None => {
            let mut h = vec![T::zero(); p.embed_dim()];
            for &id in &ids {
                axpy(T::one(), p.embedding.row(id as usize), &mut h);
            }
            (h, EncTrace::Bow(ids))
        }
        Some(enc) => {
            let mut h = vec![T::zero(); enc.hidden_dim()];
            let mut caches = Vec::with_capacity(ids.len());
            for &id in &ids {
                let (next, cache) = gru_forward(enc, p.embedding.row(id as usize), &h);
                caches.push(cache);
                h = next;
            }
            (h, EncTrace::Rnn(ids, caches))
        }
    }
}

fn encode_backward<T: Real>(
    p: &Parameters<T>,
    trace: &EncTrace<T>,
    dh: &[T],
    g: &mut Parameters<T>,
) {
    match trace {
        EncTrace::Bow(ids) => {
            for &id in ids {
                axpy(T::one(), dh, g.embedding.row_mut(id as usize));
            }
        }
        EncTrace::Rnn(ids, caches) => {
            let enc = p.encoder.as_ref().expect("RNN trace without encoder");
            let Parameters {
                embedding, encoder, ..
            } = g;
            let genc = encoder.as_mut().expect("gradient buffer without encoder");
            let mut d = dh.to_vec();
            for (&id, cache) in ids.iter().zip(caches).rev() {
                let (dx, dprev) = gru_backward(enc, cache, &d, genc);
                axpy(T::one(), &dx, embedding.row_mut(id as usize));
                d = dprev;
            }
        }
    }
}

/// `U·h + b`
pub(crate) fn output_logits<T: Real>(p: &Parameters<T>, h: &[T]) -> Vec<T> {
    let mut z = p.output.matvec_unchecked(h);
    if let Some(b) = &p.output_bias {
        axpy(T::one(), b, &mut z);
    }
    z
}

/// Decoder initial state: `bridge · h` when a bridge exists, else `h`.
pub fn decoder_initial_state<T: Real>(p: &Parameters<T>, h: &[T]) -> Result<Vec<T>> {
    match &p.bridge {
        Some(b) => b.matvec(h),
        None => {
            let dec = p
                .dec_prev
                .as_ref()
                .ok_or_else(|| Error::invalid("model has no RNN decoder"))?;
            check_dim("decoder initial state", dec.hidden_dim(), h.len())?;
            Ok(h.to_vec())
        }
    }
}

pub(crate) fn decoder<T: Real>(p: &Parameters<T>, side: Side) -> Result<&GruParams<T>> {
    match side {
        Side::Prev => p.dec_prev.as_ref(),
        Side::Next => p.dec_next.as_ref(),
    }
    .ok_or_else(|| Error::invalid("model has no RNN decoder"))
}

fn target_ids<'a>(prev: &'a SentenceIds, next: &'a SentenceIds) -> impl Iterator<Item = u32> + 'a {
    prev.tokens().iter().chain(next.tokens()).copied()
}

/// Word-by-word BOW-decoder NLL of both context sentences.
pub fn nll_bow_decoder<T: Real>(
    p: &Parameters<T>,
    h: &[T],
    prev: &SentenceIds,
    next: &SentenceIds,
) -> Result<T> {
    check_dim("sentence vector", p.output.cols(), h.len())?;
    check_ids(p, prev)?;
    check_ids(p, next)?;
    let logits = output_logits(p, h);
    let lse = log_sum_exp_unchecked(&logits);
    Ok(target_ids(prev, next)
        .map(|w| lse - logits[w as usize])
        .fold(T::zero(), |a, b| a + b))
}

/// Teacher-forced decoder states `h¹..hᵗ` for one context sentence, where
/// `τ` is its non-PAD length. Input at step 1 is `E[GO]`, afterwards the
/// embedding of the previous true word.
pub fn teacher_forced_states<T: Real>(
    p: &Parameters<T>,
    side: Side,
    h0: &[T],
    target: &SentenceIds,
) -> Result<Vec<Vec<T>>> {
    check_ids(p, target)?;
    let dec = decoder(p, side)?;
    let mut state = decoder_initial_state(p, h0)?;
    let mut out = Vec::with_capacity(target.true_len);
    let mut input = GO;
    for &w in target.tokens() {
        state = gru_forward(dec, p.embedding.row(input as usize), &state).0;
        out.push(state.clone());
        input = w;
    }
    Ok(out)
}

/// Teacher-forced RNN-decoder NLL over both context sentences.
pub fn nll_rnn_decoder<T: Real>(
    p: &Parameters<T>,
    h0: &[T],
    prev: &SentenceIds,
    next: &SentenceIds,
) -> Result<T> {
    let mut total = T::zero();
    for (side, target) in [(Side::Prev, prev), (Side::Next, next)] {
        let states = teacher_forced_states(p, side, h0, target)?;
        for (h, &w) in states.iter().zip(target.tokens()) {
            let logits = output_logits(p, h);
            total += log_sum_exp_unchecked(&logits) - logits[w as usize];
        }
    }
    Ok(total)
}

/// Gradient accumulation for the softmax output layer; `dz` already scaled.
fn output_backward<T: Real>(
    output: &mut Matrix<T>,
    bias: Option<&mut Vec<T>>,
    weights: &Matrix<T>,
    h: &[T],
    dz: &[T],
) -> Vec<T> {
    output.add_outer(dz, h);
    if let Some(b) = bias {
        axpy(T::one(), dz, b);
    }
    let mut dh = vec![T::zero(); h.len()];
    weights.matvec_t_acc(dz, &mut dh);
    dh
}

fn bow_decoder_pass<T: Real>(
    p: &Parameters<T>,
    h: &[T],
    pair: &ContextPair,
    scale: T,
    g: &mut Parameters<T>,
) -> (f64, Vec<T>) {
    let logits = output_logits(p, h);
    let lse = log_sum_exp_unchecked(&logits);
    let probs = softmax_unchecked(&logits);
    let n = T::lit((pair.prev.true_len + pair.next.true_len) as f64);
    let mut dz: Vec<T> = probs.iter().map(|&q| q * n * scale).collect();
    let mut nll = 0.0;
    for w in target_ids(&pair.prev, &pair.next) {
        nll += (lse - logits[w as usize]).as_f64();
        dz[w as usize] -= scale;
    }
    let dh = output_backward(&mut g.output, g.output_bias.as_mut(), &p.output, h, &dz);
    (nll, dh)
}

struct DecStep<T> {
    input: u32,
    target: u32,
    h: Vec<T>,
    probs: Vec<T>,
    cache: GruCache<T>,
}

/// Forward and backward through one teacher-forced decoder. Returns the NLL
/// and the gradient with respect to the decoder's initial state.
fn rnn_decoder_pass<T: Real>(
    p: &Parameters<T>,
    side: Side,
    s0: &[T],
    target: &SentenceIds,
    scale: T,
    g: &mut Parameters<T>,
) -> (f64, Vec<T>) {
    let dec = decoder(p, side).expect("checked by caller");
    let mut steps = Vec::with_capacity(target.true_len);
    let mut state = s0.to_vec();
    let mut input = GO;
    let mut nll = 0.0;
    for &w in target.tokens() {
        let (h, cache) = gru_forward(dec, p.embedding.row(input as usize), &state);
        let logits = output_logits(p, &h);
        nll += (log_sum_exp_unchecked(&logits) - logits[w as usize]).as_f64();
        steps.push(DecStep {
            input,
            target: w,
            probs: softmax_unchecked(&logits),
            h: h.clone(),
            cache,
        });
        state = h;
        input = w;
    }

    let Parameters {
        embedding,
        dec_prev,
        dec_next,
        output,
        output_bias,
        ..
    } = g;
    let gdec = match side {
        Side::Prev => dec_prev.as_mut(),
        Side::Next => dec_next.as_mut(),
    }
    .expect("gradient buffer without decoder");
    let mut dstate = vec![T::zero(); s0.len()];
    for step in steps.iter().rev() {
        let mut dz: Vec<T> = step.probs.iter().map(|&q| q * scale).collect();
        dz[step.target as usize] -= scale;
        let mut dh = output_backward(output, output_bias.as_mut(), &p.output, &step.h, &dz);
        axpy(T::one(), &dstate, &mut dh);
        let (dx, dprev) = gru_backward(dec, &step.cache, &dh, gdec);
        axpy(T::one(), &dx, embedding.row_mut(step.input as usize));
        dstate = dprev;
    }
    (nll, dstate)
}

/// Summed NLL of one pair; gradients scaled by `scale` are added to `g`.
pub(crate) fn pair_loss_and_grad<T: Real>(
    p: &Parameters<T>,
    pair: &ContextPair,
    scale: T,
    g: &mut Parameters<T>,
) -> f64 {
    let (h, trace) = encode_forward(p, &pair.centre);
    let (nll, dh) = if p.dec_prev.is_none() {
        bow_decoder_pass(p, &h, pair, scale, g)
    } else {
        let s0 = match &p.bridge {
            Some(b) => b.matvec_unchecked(&h),
            None => h.clone(),
        };
        let mut ds0 = vec![T::zero(); s0.len()];
        let mut nll = 0.0;
        for (side, target) in [(Side::Prev, &pair.prev), (Side::Next, &pair.next)] {
            let (n, d) = rnn_decoder_pass(p, side, &s0, target, scale, g);
            nll += n;
            axpy(T::one(), &d, &mut ds0);
        }
        let dh = match (&p.bridge, g.bridge.as_mut()) {
            (Some(b), Some(gb)) => {
                gb.add_outer(&ds0, &h);
                b.matvec_t(&ds0).expect("bridge shape")
            }
            _ => ds0,
        };
        (nll, dh)
    };
    encode_backward(p, &trace, &dh, g);
    nll
}

#[derive(Clone, Debug)]
pub struct BatchLoss<T> {
    /// Mean NLL per context word.
    pub mean_nll: f64,
    pub total_nll: f64,
    pub words: usize,
    /// Gradient of `mean_nll`.
    pub grads: Parameters<T>,
}

/// Mean per-context-word NLL over `batch` and its gradient for every tensor.
pub fn loss_batch<T: Real>(p: &Parameters<T>, batch: &[&ContextPair]) -> Result<BatchLoss<T>> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut words = 0;
    for pair in batch {
        for s in [&pair.centre, &pair.prev, &pair.next] {
            check_ids(p, s)?;
        }
        words += pair.prev.true_len + pair.next.true_len;
    }
    if p.encoder.is_none() && p.bridge.is_none() && p.dec_prev.is_some() {
        check_dim("decoder initial state", p.embed_dim(), p.output.cols())?;
    }
    let scale = T::lit(1.0 / words as f64);
    let mut grads = p.zeros_like();
    let total_nll: f64 = batch
        .iter()
        .map(|pair| pair_loss_and_grad(p, pair, scale, &mut grads))
        .sum();
    let mean_nll = total_nll / words as f64;
    if !mean_nll.is_finite() {
        return Err(Error::NonFinite {
            what: "batch loss",
            index: 0,
        });
    }
    if let Some((tensor, index)) = grads.first_non_finite() {
        return Err(Error::invalid(format!(
            "non-finite gradient in {tensor} at index {index}"
        )));
    }
    Ok(BatchLoss {
        mean_nll,
        total_nll,
        words,
        grads,
    })
}

/// Loss of `batch` only, without gradients.
pub fn batch_mean_nll<T: Real>(p: &Parameters<T>, batch: &[&ContextPair]) -> Result<f64> {
    let mut total = 0.0;
    let mut words = 0;
    for pair in batch {
        let h = encode(p, &pair.centre)?;
        let nll = if p.dec_prev.is_some() {
            nll_rnn_decoder(p, &h, &pair.prev, &pair.next)?
        } else {
            nll_bow_decoder(p, &h, &pair.prev, &pair.next)?
        };
        total += nll.as_f64();
        words += pair.prev.true_len + pair.next.true_len;
    }
    if words == 0 {
        return Err(Error::invalid("empty batch"));
    }
    Ok(total / words as f64)
}

/// `Σ_t u_{wᵗ}·hᵗ` for teacher-forced states, the quantity whose concatenated
/// form the RNN objective rewards.
pub fn teacher_forced_score<T: Real>(
    p: &Parameters<T>,
    h0: &[T],
    prev: &SentenceIds,
    next: &SentenceIds,
) -> Result<T> {
    let mut total = T::zero();
    for (side, target) in [(Side::Prev, prev), (Side::Next, next)] {
        let states = teacher_forced_states(p, side, h0, target)?;
        for (h, &w) in states.iter().zip(target.tokens()) {
            total += dot(p.output.row(w as usize), h);
        }
    }
    Ok(total)
}

/// Finite-difference check of [`loss_batch`]'s gradient over every parameter.
pub fn check_loss_gradient(
    p: &Parameters<f64>,
    batch: &[&ContextPair],
    h: f64,
) -> Result<GradCheckReport> {
    let with = |t: &[f64]| -> Result<Parameters<f64>> {
        let mut q = p.clone();
        q.assign_flat(t)?;
        Ok(q)
    };
    loss_batch(p, batch)?;
    grad_check_report(
        |t| loss_batch(&with(t).unwrap(), batch).map_or(f64::NAN, |l| l.mean_nll),
        |t| {
            loss_batch(&with(t).unwrap(), batch)
                .unwrap()
                .grads
                .flatten()
        },
        &p.flatten(),
        h,
    )
}
