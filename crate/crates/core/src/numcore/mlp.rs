use super::rng::{seeded_uniform_init, SeededRng};
use super::{Matrix, Real};
use crate::error::{check_dim, Error, Result};

/// Feed-forward classifier `softmax(U · F_n(G_k(x)))` with `tanh` after every
/// layer and no biases.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpClassifier<T> {
    layers: Vec<Matrix<T>>,
    projection: Matrix<T>,
}

impl<T: Real> MlpClassifier<T> {
    pub fn new(layers: Vec<Matrix<T>>, projection: Matrix<T>) -> Result<Self> {
        for pair in layers.windows(2) {
            check_dim("MLP layer chain", pair[0].rows(), pair[1].cols())?;
        }
        let last = layers.last().map(Matrix::rows);
        if let Some(d) = last {
            check_dim("MLP projection input", d, projection.cols())?;
        }
        Ok(MlpClassifier { layers, projection })
    }

    /// Random classifier with widths `dims[0] → dims[1] → … → dims[n]` and
    /// `classes` outputs, entries uniform in `[-scale, scale)`.
    pub fn random(dims: &[usize], classes: usize, scale: f64, rng: &mut SeededRng) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::invalid("MLP needs an input width"));
        }
        let layers = dims
            .windows(2)
            .map(|w| seeded_uniform_init(rng, w[1], w[0], -scale, scale))
            .collect::<Result<Vec<_>>>()?;
        let projection = seeded_uniform_init(rng, classes, *dims.last().unwrap(), -scale, scale)?;
        Self::new(layers, projection)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers
            .first()
            .map_or(self.projection.cols(), Matrix::cols)
    }

    pub fn projection(&self) -> &Matrix<T> {
        &self.projection
    }

    pub fn layers(&self) -> &[Matrix<T>] {
        &self.layers
    }

    pub fn cast<U: Real>(&self) -> MlpClassifier<U> {
        MlpClassifier {
            layers: self.layers.iter().map(Matrix::cast).collect(),
            projection: self.projection.cast(),
        }
    }

    /// Applies layers `from..to` (0-based, half-open).
    fn apply(&self, mut h: Vec<T>, from: usize, to: usize) -> Vec<T> {
        for layer in &self.layers[from..to] {
            h = layer
                .matvec_unchecked(&h)
                .into_iter()
                .map(T::tanh)
                .collect();
        }
        h
    }

    fn check_split(&self, k: usize) -> Result<()> {
        if k > self.depth() {
            return Err(Error::invalid(format!(
                "split index {k} out of range 0..={}",
                self.depth()
            )));
        }
        Ok(())
    }

    /// `G_k(x)`: activations after the first `k` layers.
    pub fn head(&self, x: &[T], k: usize) -> Result<Vec<T>> {
        self.check_split(k)?;
        check_dim("MLP input", self.input_dim(), x.len())?;
        Ok(self.apply(x.to_vec(), 0, k))
    }

    /// `F_n(h)` for `h` taken after layer `k`.
    pub fn tail(&self, h: &[T], k: usize) -> Result<Vec<T>> {
        self.check_split(k)?;
        let width = if k == 0 {
            self.input_dim()
        } else {
            self.layers[k - 1].rows()
        };
        check_dim("MLP intermediate", width, h.len())?;
        Ok(self.apply(h.to_vec(), k, self.depth()))
    }

    /// `(G_k(x), U · F_n(G_k(x)))`.
    pub fn forward_split(&self, x: &[T], k: usize) -> Result<(Vec<T>, Vec<T>)> {
        let intermediate = self.head(x, k)?;
        let features = self.apply(intermediate.clone(), k, self.depth());
        let logits = self.projection.matvec_unchecked(&features);
        Ok((intermediate, logits))
    }
}

/// Free-function form of [`MlpClassifier::forward_split`].
pub fn mlp_forward_split<T: Real>(
    model: &MlpClassifier<T>,
    x: &[T],
    k: usize,
) -> Result<(Vec<T>, Vec<T>)> {
    model.forward_split(x, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> MlpClassifier<f32> {
        MlpClassifier::random(&[5, 7, 6, 4], 3, 0.8, &mut SeededRng::new(21)).unwrap()
    }

    #[test]
    fn empty_head_and_tail() {
        let m = model();
        let x = [0.1f32, -0.5, 0.9, 0.3, -0.2];
        let (inter, _) = m.forward_split(&x, 0).unwrap();
        assert_eq!(inter, x.to_vec());
        let (inter, logits) = m.forward_split(&x, 3).unwrap();
        assert_eq!(logits, m.projection().matvec(&inter).unwrap());
    }

    #[test]
    fn logits_independent_of_split() {
        let m = model();
        let x = [0.1f32, -0.5, 0.9, 0.3, -0.2];
        let (_, base) = m.forward_split(&x, 0).unwrap();
        for k in 1..=3 {
            let (_, l) = m.forward_split(&x, k).unwrap();
            for (a, b) in l.iter().zip(&base) {
                assert!((a - b).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn split_out_of_range() {
        let m = model();
        assert!(m.forward_split(&[0.0; 5], 4).is_err());
        assert!(m.forward_split(&[0.0; 4], 1).is_err());
    }

    #[test]
    fn rejects_broken_chain() {
        let l1 = Matrix::<f64>::zeros(4, 3);
        let l2 = Matrix::<f64>::zeros(2, 5);
        assert!(MlpClassifier::new(vec![l1, l2], Matrix::zeros(2, 2)).is_err());
    }
}
