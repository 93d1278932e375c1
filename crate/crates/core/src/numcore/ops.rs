use super::Real;
use crate::error::{check_dim, Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

fn check_logits<T: Real>(logits: &[T]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::invalid("logits must be non-empty"));
    }
    if let Some(index) = logits.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "logits",
            index,
        });
    }
    Ok(())
}

fn max_of<T: Real>(v: &[T]) -> T {
    v.iter().copied().fold(T::neg_infinity(), T::max)
}

/// Max-shifted softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Result<Vec<T>> {
    check_logits(logits)?;
    Ok(softmax_unchecked(logits))
}

pub(crate) fn softmax_unchecked<T: Real>(logits: &[T]) -> Vec<T> {
    let m = max_of(logits);
    let mut out: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let total: T = out.iter().copied().sum();
    let inv = total.recip();
    out.iter_mut().for_each(|p| *p *= inv);
    out
}

/// `log Σ exp(logits)`, overflow-safe.
pub fn log_sum_exp<T: Real>(logits: &[T]) -> Result<T> {
    check_logits(logits)?;
    Ok(log_sum_exp_unchecked(logits))
}

pub(crate) fn log_sum_exp_unchecked<T: Real>(logits: &[T]) -> T {
    let m = max_of(logits);
    let s: T = logits.iter().map(|&z| (z - m).exp()).sum();
    m + s.ln()
}

/// `gain ⊙ (x − mean) / sqrt(var + eps)` with population variance.
pub fn layer_norm<T: Real>(x: &[T], gain: &[T], eps: T) -> Result<Vec<T>> {
    if x.len() < 2 {
        return Err(Error::invalid(format!(
            "layer_norm needs at least 2 elements, got {}",
            x.len()
        )));
    }
    check_dim("layer_norm gain", x.len(), gain.len())?;
    if !(eps > T::zero()) {
        return Err(Error::invalid("layer_norm eps must be positive"));
    }
    Ok(LnCache::forward(x, gain, eps).1)
}

/// Normalised input and inverse std of one layer-norm application.
#[derive(Clone, Debug)]
pub(crate) struct LnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: T,
}

impl<T: Real> LnCache<T> {
    pub fn forward(x: &[T], gain: &[T], eps: T) -> (Self, Vec<T>) {
        let n = T::lit(x.len() as f64);
        let mean = x.iter().copied().sum::<T>() / n;
        let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv_std = (var + eps).sqrt().recip();
        let xhat: Vec<T> = x.iter().map(|&v| (v - mean) * inv_std).collect();
        let y = xhat.iter().zip(gain).map(|(&a, &g)| a * g).collect();
        (LnCache { xhat, inv_std }, y)
    }

    /// Accumulates the gain gradient and returns the input gradient.
    pub fn backward(&self, gain: &[T], dy: &[T], dgain: &mut [T]) -> Vec<T> {
        let n = T::lit(self.xhat.len() as f64);
        let mut dxhat = Vec::with_capacity(dy.len());
        let mut sum_d = T::zero();
        let mut sum_dx = T::zero();
        for i in 0..dy.len() {
            dgain[i] += dy[i] * self.xhat[i];
            let d = dy[i] * gain[i];
            sum_d += d;
            sum_dx += d * self.xhat[i];
            dxhat.push(d);
        }
        let mean_d = sum_d / n;
        let mean_dx = sum_dx / n;
        dxhat
            .iter()
            .zip(&self.xhat)
            .map(|(&d, &xh)| self.inv_std * (d - mean_d - xh * mean_dx))
            .collect()
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}
