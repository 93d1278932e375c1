use crate::error::{check_dim, Error, Result};

/// Largest per-coordinate relative error between `grad_fn(params)` and central
/// differences `(f(θ + h eᵢ) − f(θ − h eᵢ)) / 2h`.
///
/// The relative error of a coordinate is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<L, G>(loss_fn: L, grad_fn: G, params: &[f64], h: f64) -> Result<f64>
where
    L: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    Ok(grad_check_report(loss_fn, grad_fn, params, h)?.max_rel_err)
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Coordinate at which `max_rel_err` occurs.
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

pub fn grad_check_report<L, G>(
    loss_fn: L,
    grad_fn: G,
    params: &[f64],
    h: f64,
) -> Result<GradCheckReport>
where
    L: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let analytic = grad_fn(params);
    check_dim("analytic gradient", params.len(), analytic.len())?;

    let mut probe = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    let eval = |theta: &[f64], index: usize| {
        let v = loss_fn(theta);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite {
                what: "loss at probe point",
                index,
            })
        }
    };
    for i in 0..params.len() {
        probe[i] = params[i] + h;
        let plus = eval(&probe, i)?;
        probe[i] = params[i] - h;
        let minus = eval(&probe, i)?;
        probe[i] = params[i];
        numeric.push((plus - minus) / (2.0 * h));
    }

    let (worst_index, max_rel_err) = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .enumerate()
        .fold(
            (0, 0.0f64),
            |best, (i, e)| if e > best.1 { (i, e) } else { best },
        );
    Ok(GradCheckReport {
        max_rel_err,
        worst_index,
        analytic,
        numeric,
    })
}
