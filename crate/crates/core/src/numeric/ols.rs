use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A column is treated as dependent once its pivoted `|r_kk|` falls below
/// this fraction of `|r_00|` (columns normalized to unit length first), i.e.
/// a condition-number cutoff of 1e10.
pub const RANK_TOL: f64 = 1e-10;

/// Least-squares fit of a response on a design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    pub n_params: usize,
}

/// Householder QR with column pivoting of a column-normalized design.
struct PivotedQr {
    /// Compact QR storage: R above the diagonal, reflectors below.
    qr: DMatrix<f64>,
    tau: Vec<f64>,
    perm: Vec<usize>,
    scale: Vec<f64>,
    rank: usize,
}

impl PivotedQr {
    fn new(design: &DMatrix<f64>) -> Result<Self> {
        let (m, k) = design.shape();
        let mut qr = design.clone();
        let mut scale = vec![0.0; k];
        let mut zero_cols = Vec::new();
        for j in 0..k {
            let norm = qr.column(j).norm();
            if norm == 0.0 {
                zero_cols.push(j);
                scale[j] = 1.0;
            } else {
                scale[j] = norm;
                qr.column_mut(j).scale_mut(1.0 / norm);
            }
        }
        if !zero_cols.is_empty() {
            return Err(Error::SingularDesign { columns: zero_cols });
        }

        let mut perm: Vec<usize> = (0..k).collect();
        let mut tau = vec![0.0; k];
        let mut norms: Vec<f64> = (0..k).map(|j| qr.column(j).norm_squared()).collect();
        let mut r00 = 0.0;
        let mut rank = k;

        for i in 0..k {
            // Ties go to the lowest remaining index.
            let mut best = i;
            for j in i + 1..k {
                if norms[j] > norms[best] {
                    best = j;
                }
            }
            if best != i {
                qr.swap_columns(i, best);
                norms.swap(i, best);
                perm.swap(i, best);
            }

            let alpha_norm = qr.view((i, i), (m - i, 1)).norm();
            if i == 0 {
                r00 = alpha_norm;
            }
            if alpha_norm <= RANK_TOL * r00 {
                rank = i;
                break;
            }
            let x0 = qr[(i, i)];
            let beta = if x0 >= 0.0 { -alpha_norm } else { alpha_norm };
            let v0 = x0 - beta;
            for r in i + 1..m {
                qr[(r, i)] /= v0;
            }
            tau[i] = (beta - x0) / beta;
            qr[(i, i)] = beta;

            for j in i + 1..k {
                let mut dot = qr[(i, j)];
                for r in i + 1..m {
                    dot += qr[(r, i)] * qr[(r, j)];
                }
                let f = tau[i] * dot;
                qr[(i, j)] -= f;
                for r in i + 1..m {
                    let vi = qr[(r, i)];
                    qr[(r, j)] -= f * vi;
                }
                // Downdated norms drift; recompute when cancellation is severe.
                let rij = qr[(i, j)];
                norms[j] -= rij * rij;
                if norms[j] < 1e-6 * rij * rij || norms[j] < 0.0 {
                    norms[j] = qr.view((i + 1, j), (m - i - 1, 1)).norm_squared();
                }
            }
        }

        Ok(Self {
            qr,
            tau,
            perm,
            scale,
            rank,
        })
    }

    /// Original indices of the columns beyond the numerical rank.
    fn dependent_columns(&self) -> Vec<usize> {
        let mut cols = self.perm[self.rank..].to_vec();
        cols.sort_unstable();
        cols
    }

    /// Coefficients in the original (unscaled, unpermuted) column order.
    /// Requires full rank.
    fn solve(&self, response: &[f64]) -> Vec<f64> {
        let (m, k) = self.qr.shape();
        let mut y = response.to_vec();
        for i in 0..k {
            let mut dot = y[i];
            for r in i + 1..m {
                dot += self.qr[(r, i)] * y[r];
            }
            let f = self.tau[i] * dot;
            y[i] -= f;
            for r in i + 1..m {
                y[r] -= f * self.qr[(r, i)];
            }
        }
        let mut z = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = y[i];
            for j in i + 1..k {
                acc -= self.qr[(i, j)] * z[j];
            }
            z[i] = acc / self.qr[(i, i)];
        }
        let mut coef = vec![0.0; k];
        for (pos, &orig) in self.perm.iter().enumerate() {
            coef[orig] = z[pos] / self.scale[orig];
        }
        coef
    }
}

fn check_shapes(design: &DMatrix<f64>, response: &[f64]) -> Result<()> {
    let (m, k) = design.shape();
    if response.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: response.len(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidParameter("design has no columns".into()));
    }
    if m <= k {
        return Err(Error::InvalidParameter(format!(
            "need more rows than columns, got {m} rows for {k} columns"
        )));
    }
    if design.iter().chain(response).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "non-finite value in regression data".into(),
        ));
    }
    Ok(())
}

fn finish(design: &DMatrix<f64>, response: &[f64], coefficients: Vec<f64>) -> OlsFit {
    let fitted = design * nalgebra::DVector::from_column_slice(&coefficients);
    let residuals: Vec<f64> = response
        .iter()
        .zip(fitted.iter())
        .map(|(y, f)| y - f)
        .collect();
    let rss = residuals.iter().map(|r| r * r).sum();
    OlsFit {
        n_params: coefficients.len(),
        coefficients,
        residuals,
        rss,
    }
}

/// Ordinary least squares through a column-pivoted QR decomposition.
///
/// A rank-deficient design is an error naming the columns the pivoting
/// found to be dependent.
pub fn ols_fit(design: &DMatrix<f64>, response: &[f64]) -> Result<OlsFit> {
    check_shapes(design, response)?;
    let qr = PivotedQr::new(design)?;
    if qr.rank < design.ncols() {
        return Err(Error::SingularDesign {
            columns: qr.dependent_columns(),
        });
    }
    Ok(finish(design, response, qr.solve(response)))
}

/// Like [`ols_fit`], but drops dependent columns instead of failing.
///
/// Columns outside `droppable` must be jointly full rank. Droppable columns
/// are then admitted in index order, skipping any that would make the design
/// rank deficient. Returns the fit on the kept columns and the original
/// indices of the dropped ones.
pub fn ols_fit_pruned(
    design: &DMatrix<f64>,
    response: &[f64],
    droppable: &[usize],
) -> Result<(OlsFit, Vec<usize>)> {
    check_shapes(design, response)?;
    let k = design.ncols();
    let mut keep: Vec<usize> = (0..k).filter(|c| !droppable.contains(c)).collect();
    if !keep.is_empty() {
        let columns = match PivotedQr::new(&design.select_columns(keep.iter())) {
            Ok(qr) => qr.dependent_columns(),
            Err(Error::SingularDesign { columns }) => columns,
            Err(e) => return Err(e),
        };
        if !columns.is_empty() {
            let columns = columns.iter().map(|&c| keep[c]).collect();
            return Err(Error::SingularDesign { columns });
        }
    }
    let mut dropped = Vec::new();
    for c in (0..k).filter(|c| droppable.contains(c)) {
        let mut trial = keep.clone();
        trial.push(c);
        let admitted = match PivotedQr::new(&design.select_columns(trial.iter())) {
            Ok(qr) => qr.rank == trial.len(),
            Err(Error::SingularDesign { .. }) => false,
            Err(e) => return Err(e),
        };
        if admitted {
            keep = trial;
        } else {
            dropped.push(c);
        }
    }
    keep.sort_unstable();
    let sub = design.select_columns(keep.iter());
    let qr = PivotedQr::new(&sub)?;
    let sub_coef = qr.solve(response);
    let mut coefficients = vec![0.0; k];
    for (pos, &c) in keep.iter().enumerate() {
        coefficients[c] = sub_coef[pos];
    }
    let mut fit = finish(design, response, coefficients);
    fit.n_params = keep.len();
    Ok((fit, dropped))
}
