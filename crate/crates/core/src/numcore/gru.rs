//! Layer-normalised GRU cell.
//!
//! ```text
//! z  = σ(LN(W_z x; g_wz) + LN(U_z h; g_uz) + b_z)
//! r  = σ(LN(W_r x; g_wr) + LN(U_r h; g_ur) + b_r)
//! h̃  = tanh(LN(W_h x; g_wh) + r ⊙ LN(U_h h; g_uh) + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ h̃
//! ```
//!
//! Every layer norm has its own gain and no bias; the gate biases are added
//! after normalisation.

use super::ops::{sigmoid, LnCache, LAYER_NORM_EPS};
use super::rng::{seeded_uniform_init, SeededRng};
use super::{Matrix, Real};
use crate::error::{check_dim, Error, Result};

/// Names of the six layer-norm gains, in storage order.
pub const GAIN_NAMES: [&str; 6] = ["g_wz", "g_uz", "g_wr", "g_ur", "g_wh", "g_uh"];
const WZ: usize = 0;
const UZ: usize = 1;
const WR: usize = 2;
const UR: usize = 3;
const WH: usize = 4;
const UH: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct GruParams<T> {
    pub w_z: Matrix<T>,
    pub w_r: Matrix<T>,
    pub w_h: Matrix<T>,
    pub u_z: Matrix<T>,
    pub u_r: Matrix<T>,
    pub u_h: Matrix<T>,
    pub gains: [Vec<T>; 6],
    pub b_z: Vec<T>,
    pub b_r: Vec<T>,
    pub b_h: Vec<T>,
}

impl<T: Real> GruParams<T> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = || Matrix::zeros(hidden_dim, input_dim);
        let u = || Matrix::zeros(hidden_dim, hidden_dim);
        GruParams {
            w_z: w(),
            w_r: w(),
            w_h: w(),
            u_z: u(),
            u_r: u(),
            u_h: u(),
            gains: std::array::from_fn(|_| vec![T::one(); hidden_dim]),
            b_z: vec![T::zero(); hidden_dim],
            b_r: vec![T::zero(); hidden_dim],
            b_h: vec![T::zero(); hidden_dim],
        }
    }

    /// Weights uniform in `[-scale, scale)`, gains 1, biases 0. Weight draw
    /// order is `W_z, W_r, W_h, U_z, U_r, U_h`.
    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        scale: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if hidden_dim < 2 {
            return Err(Error::invalid(
                "GRU hidden_dim must be at least 2 for layer normalisation",
            ));
        }
        let mut p = Self::zeros(input_dim, hidden_dim);
        for m in [&mut p.w_z, &mut p.w_r, &mut p.w_h] {
            *m = seeded_uniform_init(rng, hidden_dim, input_dim, -scale, scale)?;
        }
        for m in [&mut p.u_z, &mut p.u_r, &mut p.u_h] {
            *m = seeded_uniform_init(rng, hidden_dim, hidden_dim, -scale, scale)?;
        }
        Ok(p)
    }

    /// All-zero buffer of the same shape, gains included.
    pub fn zeros_like(&self) -> Self {
        let mut g = Self::zeros(self.input_dim(), self.hidden_dim());
        g.gains.iter_mut().for_each(|v| v.fill(T::zero()));
        g
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.rows()
    }

    /// Visits every tensor as `(name, dims, data)` in a fixed order.
    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, Vec<usize>, &[T])) {
        let mats = [
            ("W_z", &self.w_z),
            ("W_r", &self.w_r),
            ("W_h", &self.w_h),
            ("U_z", &self.u_z),
            ("U_r", &self.u_r),
            ("U_h", &self.u_h),
        ];
        for (name, m) in mats {
            f(
                format!("{prefix}.{name}"),
                vec![m.rows(), m.cols()],
                m.as_slice(),
            );
        }
        for (name, g) in GAIN_NAMES.iter().zip(&self.gains) {
            f(format!("{prefix}.{name}"), vec![g.len()], g);
        }
        for (name, b) in [("b_z", &self.b_z), ("b_r", &self.b_r), ("b_h", &self.b_h)] {
            f(format!("{prefix}.{name}"), vec![b.len()], b);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, Vec<usize>, &mut [T])) {
        let mats = [
            ("W_z", &mut self.w_z),
            ("W_r", &mut self.w_r),
            ("W_h", &mut self.w_h),
            ("U_z", &mut self.u_z),
            ("U_r", &mut self.u_r),
            ("U_h", &mut self.u_h),
        ];
        for (name, m) in mats {
            let dims = vec![m.rows(), m.cols()];
            f(format!("{prefix}.{name}"), dims, m.as_mut_slice());
        }
        for (name, g) in GAIN_NAMES.iter().zip(self.gains.iter_mut()) {
            let dims = vec![g.len()];
            f(format!("{prefix}.{name}"), dims, g);
        }
        for (name, b) in [
            ("b_z", &mut self.b_z),
            ("b_r", &mut self.b_r),
            ("b_h", &mut self.b_h),
        ] {
            let dims = vec![b.len()];
            f(format!("{prefix}.{name}"), dims, b);
        }
    }

    pub fn cast<U: Real>(&self) -> GruParams<U> {
        let v = |x: &Vec<T>| super::cast_vec(x);
        GruParams {
            w_z: self.w_z.cast(),
            w_r: self.w_r.cast(),
            w_h: self.w_h.cast(),
            u_z: self.u_z.cast(),
            u_r: self.u_r.cast(),
            u_h: self.u_h.cast(),
            gains: std::array::from_fn(|i| v(&self.gains[i])),
            b_z: v(&self.b_z),
            b_r: v(&self.b_r),
            b_h: v(&self.b_h),
        }
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug)]
pub(crate) struct GruCache<T> {
    x: Vec<T>,
    h_prev: Vec<T>,
    ln: [LnCache<T>; 6],
    z: Vec<T>,
    r: Vec<T>,
    cand: Vec<T>,
    /// `LN(U_h h_prev)`, the term gated by `r`.
    uh_norm: Vec<T>,
}

/// One recurrent step; see the module docs for the equations.
pub fn gru_step<T: Real>(params: &GruParams<T>, x: &[T], h_prev: &[T]) -> Result<Vec<T>> {
    check_dim("GRU input", params.input_dim(), x.len())?;
    check_dim("GRU hidden state", params.hidden_dim(), h_prev.len())?;
    Ok(gru_forward(params, x, h_prev).0)
}

pub(crate) fn gru_forward<T: Real>(
    p: &GruParams<T>,
    x: &[T],
    h_prev: &[T],
) -> (Vec<T>, GruCache<T>) {
    let eps = T::lit(LAYER_NORM_EPS);
    let pre = [
        p.w_z.matvec_unchecked(x),
        p.u_z.matvec_unchecked(h_prev),
        p.w_r.matvec_unchecked(x),
        p.u_r.matvec_unchecked(h_prev),
        p.w_h.matvec_unchecked(x),
        p.u_h.matvec_unchecked(h_prev),
    ];
    let mut normed: [Vec<T>; 6] = Default::default();
    let ln: [LnCache<T>; 6] = std::array::from_fn(|i| {
        let (c, y) = LnCache::forward(&pre[i], &p.gains[i], eps);
        normed[i] = y;
        c
    });
    let n = p.hidden_dim();
    let mut z = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    let mut cand = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    for i in 0..n {
        let zi = sigmoid(normed[WZ][i] + normed[UZ][i] + p.b_z[i]);
        let ri = sigmoid(normed[WR][i] + normed[UR][i] + p.b_r[i]);
        let ci = (normed[WH][i] + ri * normed[UH][i] + p.b_h[i]).tanh();
        h.push((T::one() - zi) * h_prev[i] + zi * ci);
        z.push(zi);
        r.push(ri);
        cand.push(ci);
    }
    let [_, _, _, _, _, uh_norm] = normed;
    let cache = GruCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        ln,
        z,
        r,
        cand,
        uh_norm,
    };
    (h, cache)
}

/// Backpropagates `dh` through one step, accumulating parameter gradients
/// into `grads`. Returns `(dx, dh_prev)`.
pub(crate) fn gru_backward<T: Real>(
    p: &GruParams<T>,
    cache: &GruCache<T>,
    dh: &[T],
    grads: &mut GruParams<T>,
) -> (Vec<T>, Vec<T>) {
    let n = p.hidden_dim();
    let one = T::one();
    let mut dh_prev: Vec<T> = (0..n).map(|i| dh[i] * (one - cache.z[i])).collect();
    let mut d_pre_z = vec![T::zero(); n];
    let mut d_pre_r = vec![T::zero(); n];
    let mut d_pre_h = vec![T::zero(); n];
    let mut d_uh_norm = vec![T::zero(); n];
    for i in 0..n {
        let (z, r, c) = (cache.z[i], cache.r[i], cache.cand[i]);
        let dz = dh[i] * (c - cache.h_prev[i]);
        let dc = dh[i] * z;
        let dpre_h = dc * (one - c * c);
        d_pre_h[i] = dpre_h;
        d_uh_norm[i] = dpre_h * r;
        let dr = dpre_h * cache.uh_norm[i];
        d_pre_z[i] = dz * z * (one - z);
        d_pre_r[i] = dr * r * (one - r);
    }
    for i in 0..n {
        grads.b_z[i] += d_pre_z[i];
        grads.b_r[i] += d_pre_r[i];
        grads.b_h[i] += d_pre_h[i];
    }

    let upstream: [&[T]; 6] = [&d_pre_z, &d_pre_z, &d_pre_r, &d_pre_r, &d_pre_h, &d_uh_norm];
    let mut dx = vec![T::zero(); p.input_dim()];
    for (slot, dy) in upstream.iter().enumerate() {
        let d_in = cache.ln[slot].backward(&p.gains[slot], dy, &mut grads.gains[slot]);
        let (weight, grad, input, out) = match slot {
            WZ => (&p.w_z, &mut grads.w_z, &cache.x, &mut dx),
            WR => (&p.w_r, &mut grads.w_r, &cache.x, &mut dx),
            WH => (&p.w_h, &mut grads.w_h, &cache.x, &mut dx),
            UZ => (&p.u_z, &mut grads.u_z, &cache.h_prev, &mut dh_prev),
            UR => (&p.u_r, &mut grads.u_r, &cache.h_prev, &mut dh_prev),
            _ => (&p.u_h, &mut grads.u_h, &cache.h_prev, &mut dh_prev),
        };
        grad.add_outer(&d_in, input);
        weight.matvec_t_acc(&d_in, out);
    }
    (dx, dh_prev)
}
