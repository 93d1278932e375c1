//! Per-word decomposition of the log-likelihood into the target term `x` and
//! the competing mass `y`.

use crate::error::{Error, Result};
use crate::numcore::Real;

/// `x = exp(u_w·h)`, `y = Σ_{w'≠w} exp(u_{w'}·h)`, `q = log x − log(x + y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NllParts {
    pub x: f64,
    pub y: f64,
    pub q: f64,
}

impl NllParts {
    /// Splits a logit vector around `target`. Needs at least two classes.
    pub fn from_logits<T: Real>(logits: &[T], target: usize) -> Result<Self> {
        if logits.len() < 2 || target >= logits.len() {
            return Err(Error::invalid(
                "need at least two logits and an in-range target",
            ));
        }
        let x = logits[target].as_f64().exp();
        let y: f64 = logits
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != target)
            .map(|(_, z)| z.as_f64().exp())
            .sum();
        let (q, _, _) = likelihood_split_derivatives(x, y)?;
        Ok(NllParts { x, y, q })
    }
}

/// `(q, ∂q/∂x, ∂q/∂y)` with `q = log x − log(x + y)`, so
/// `∂q/∂x = y / (x (x + y))` and `∂q/∂y = −1 / (x + y)`.
pub fn likelihood_split_derivatives(x: f64, y: f64) -> Result<(f64, f64, f64)> {
    if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
        return Err(Error::invalid(format!(
            "x and y must be positive and finite, got x = {x}, y = {y}"
        )));
    }
    let s = x + y;
    Ok((x.ln() - s.ln(), y / (x * s), -1.0 / s))
}
