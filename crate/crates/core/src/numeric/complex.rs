use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative tolerance used when checking Hermitian symmetry.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// A dense complex matrix, optionally tagged as Hermitian.
///
/// The Hermitian tag is only granted by [`ComplexMatrix::hermitian`], which
/// checks the symmetry first.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    inner: DMatrix<Complex64>,
    hermitian: bool,
}

impl ComplexMatrix {
    pub fn new(inner: DMatrix<Complex64>) -> Result<Self> {
        if inner.nrows() == 0 || inner.ncols() == 0 {
            return Err(Error::InvalidInput("matrix must be at least 1x1".into()));
        }
        if inner.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(Self {
            inner,
            hermitian: false,
        })
    }

    /// Builds from row-major entries.
    pub fn from_row_slice(rows: usize, cols: usize, entries: &[Complex64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(rows, cols, entries))
    }

    /// Tags a square matrix as Hermitian after checking it, then symmetrizes
    /// away the rounding-level asymmetry.
    pub fn hermitian(inner: DMatrix<Complex64>) -> Result<Self> {
        let mut m = Self::new(inner)?;
        let n = m.inner.nrows();
        if m.inner.ncols() != n {
            return Err(Error::ContractViolation(format!(
                "Hermitian matrix must be square, got {}x{}",
                n,
                m.inner.ncols()
            )));
        }
        let scale = m.inner.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let tol = HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in i..n {
                let a = m.inner[(i, j)];
                let b = m.inner[(j, i)].conj();
                if (a - b).norm() > tol {
                    return Err(Error::ContractViolation(format!(
                        "matrix is not Hermitian at ({i}, {j}): {a} vs {b}"
                    )));
                }
                let avg = (a + b) * 0.5;
                m.inner[(i, j)] = avg;
                m.inner[(j, i)] = avg.conj();
            }
        }
        m.hermitian = true;
        Ok(m)
    }

    /// Real symmetric input, tagged Hermitian.
    pub fn from_real_symmetric(m: &DMatrix<f64>) -> Result<Self> {
        Self::hermitian(m.map(|v| Complex64::new(v, 0.0)))
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.inner[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.inner
    }

    pub fn trace(&self) -> Complex64 {
        self.inner.trace()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.inner.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}
