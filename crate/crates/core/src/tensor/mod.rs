//! Dense float64 matrices with reverse-mode automatic differentiation and
//! the Adam optimizer: the numeric substrate for the model.
//!
//! Everything is rank-2 (scalars are 1x1, row vectors 1xn); training is
//! desk-scale, so clarity and determinism win over throughput. Ops are
//! recorded on a [`Tape`]; [`Tape::backward`] replays adjoints in reverse
//! topological order. All public ops trap NaN/Inf outputs.

mod adam;
mod tape;
mod vae;

pub use adam::{adam_step, AdamState};
pub use tape::checks::gradcheck;
pub use tape::{Gradients, Tape, Var};
pub use vae::{gaussian_kl, reparameterize, LOGVAR_MAX, LOGVAR_MIN};

/// Errors from tensor ops.
#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch: {op} got {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("backward needs a scalar loss, got {shape:?}")]
    NonScalarLoss { shape: (usize, usize) },
}

/// A dense row-major float64 matrix.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        assert_eq!(data.len(), rows * cols, "data length must match shape");
        let t = Tensor { rows, cols, data };
        t.assert_finite("from_vec");
        t
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::from_vec(1, 1, vec![value])
    }

    pub fn row(values: Vec<f64>) -> Tensor {
        let cols = values.len();
        Tensor::from_vec(1, cols, values)
    }

    /// Standard-normal entries scaled by `scale`, drawn from the given rng.
    pub fn randn<R: rand::Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Tensor {
        use rand_distr::{Distribution, StandardNormal};
        let data = (0..rows * cols)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * scale
            })
            .collect();
        Tensor::from_vec(rows, cols, data)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    /// The single entry of a 1x1 tensor.
    pub fn item(&self) -> f64 {
        assert_eq!((self.rows, self.cols), (1, 1), "item() needs a scalar");
        self.data[0]
    }

    /// One row as a new 1xn tensor.
    pub fn row_at(&self, r: usize) -> Tensor {
        assert!(r < self.rows);
        Tensor {
            rows: 1,
            cols: self.cols,
            data: self.data[r * self.cols..(r + 1) * self.cols].to_vec(),
        }
    }

    pub(crate) fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub(crate) fn matmul_raw(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.cols, other.rows, "matmul_raw shape mismatch");
        let mut out = Tensor::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let src = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "zip shape mismatch");
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Panics when any entry is NaN or infinite: every public op calls this
    /// so numeric blowups surface at their source instead of corrupting a
    /// training run.
    pub(crate) fn assert_finite(&self, op: &str) {
        for (i, v) in self.data.iter().enumerate() {
            assert!(
                v.is_finite(),
                "non-finite value {v} at flat index {i} after {op}"
            );
        }
    }
}
