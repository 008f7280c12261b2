use std::cmp::Ordering;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::complex::ComplexMatrix;
use crate::error::{Error, Result};

/// Eigenpairs of a Hermitian matrix.
///
/// `values` are sorted descending and column `j` of `vectors` is the unit
/// eigenvector for `values[j]`. Each eigenvector's phase is fixed so that its
/// entry of largest modulus (first one on ties) is real and positive.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

impl HermitianEigen {
    pub fn vector(&self, j: usize) -> Vec<Complex64> {
        self.vectors.column(j).iter().copied().collect()
    }
}

/// Dense Hermitian eigendecomposition (Householder tridiagonalization + QR).
pub fn hermitian_eig(m: &ComplexMatrix) -> Result<HermitianEigen> {
    if !m.is_hermitian() {
        return Err(Error::ContractViolation(
            "hermitian_eig requires a Hermitian-tagged matrix".into(),
        ));
    }
    let n = m.rows();
    let decomp = SymmetricEigen::new(m.as_matrix().clone());

    let mut columns: Vec<(f64, Vec<Complex64>)> = (0..n)
        .map(|j| {
            let mut v: Vec<Complex64> = decomp.eigenvectors.column(j).iter().copied().collect();
            normalize_phase(&mut v);
            (decomp.eigenvalues[j], v)
        })
        .collect();

    let scale = columns.iter().map(|(l, _)| l.abs()).fold(0.0, f64::max);
    let tie = 1e-12 * scale.max(f64::MIN_POSITIVE);
    columns.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    // Runs of numerically equal eigenvalues are ordered by eigenvector magnitudes.
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (columns[end - 1].0 - columns[end].0).abs() <= tie {
            end += 1;
        }
        if end - start > 1 {
            columns[start..end].sort_by(|a, b| magnitude_order(&a.1, &b.1));
        }
        start = end;
    }

    let values = columns.iter().map(|(l, _)| *l).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| columns[j].1[i]);
    Ok(HermitianEigen { values, vectors })
}

/// Larger magnitude at the first differing index sorts first.
fn magnitude_order(a: &[Complex64], b: &[Complex64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let (mx, my) = (x.norm(), y.norm());
        if (mx - my).abs() > 1e-12 {
            return my.partial_cmp(&mx).unwrap_or(Ordering::Equal);
        }
    }
    Ordering::Equal
}

pub(crate) fn normalize_phase(v: &mut [Complex64]) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-12))
        .unwrap_or(0);
    let rot = v[pivot].conj() / v[pivot].norm();
    v.iter_mut().for_each(|z| *z *= rot);
    v[pivot].im = 0.0;
}
