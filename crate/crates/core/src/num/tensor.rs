//! Dense row-major `f64` tensors.
//!
//! Deliberately minimal: owned `Vec<f64>` storage, explicit shapes, no views.
//! All model math at this scale fits comfortably in copies, and keeping the
//! representation flat makes the reverse-mode tape and the checkpoint format
//! trivial to reason about.

use super::rng::Rng;
use super::NumError;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NumError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(NumError::ShapeMismatch(format!(
                "shape {:?} expects {} values, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Tensor {
            shape: vec![rows.len(), cols],
            data,
        }
    }

    /// Normal(0, std^2) initialisation from a seeded stream.
    pub fn randn(shape: &[usize], std: f64, rng: &mut Rng) -> Self {
        let data = (0..shape.iter().product())
            .map(|_| rng.next_normal() * std)
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    pub fn scalar_value(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    /// Rows and columns of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize), NumError> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(NumError::ShapeMismatch(format!(
                "expected rank-2 tensor, got shape {:?}",
                other
            ))),
        }
    }

    pub fn get2(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.shape[1] + col]
    }

    pub fn set2(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.shape[1] + col] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, NumError> {
        if self.shape != other.shape {
            return Err(NumError::ShapeMismatch(format!(
                "elementwise op on {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor, NumError> {
        self.zip(other, |a, b| a + b)
    }

    /// In-place accumulate, used for gradient buckets.
    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Dense 2-D product, ikj loop order.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, NumError> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(NumError::ShapeMismatch(format!(
                "matmul {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += a * brow[j];
                }
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn transpose2(&self) -> Result<Tensor, NumError> {
        let (r, c) = self.dims2()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor {
            shape: vec![c, r],
            data: out,
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
