//! Frequency-domain (spectral) dynamic principal components.
//!
//! The pipeline is: lagged autocovariances, a lag-window estimate of the
//! spectral density matrix on a frequency grid, per-frequency eigenvectors,
//! filter taps from the inverse transform of the eigenvector fields, and
//! finally scores obtained by convolving the series with those taps.
//!
//! With `C(h) = Cov(Z_{t+h}, Z_t)` and `F(w) = sum_h C(h) exp(-i h w)`, the taps
//! `phi_k = (1/2pi) int phi(w) exp(-i k w) dw` and scores
//! `dpc_t = sum_k phi_k' Z_{t-k}` give a score whose spectrum is the leading
//! eigenvalue `lambda(w)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{hermitian_eig, Complex64, ComplexMatrix, DftPlan, HermitianEigen, Sign};
use crate::series::MultiChannelSeries;

/// Tolerance for the imaginary residue of filter taps before truncation.
pub const FILTER_IMAG_TOL: f64 = 1e-10;

/// Lag window applied to the autocovariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Bartlett,
    Parzen,
    Flat,
}

impl Kernel {
    /// Weight at `x = |h| / L`, for `x` in `[0, 1]`.
    pub fn weight(self, x: f64) -> f64 {
        match self {
            Kernel::Bartlett => 1.0 - x,
            Kernel::Parzen => {
                if x <= 0.5 {
                    1.0 - 6.0 * x * x + 6.0 * x * x * x
                } else {
                    2.0 * (1.0 - x).powi(3)
                }
            }
            Kernel::Flat => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Bartlett => "bartlett",
            Kernel::Parzen => "parzen",
            Kernel::Flat => "flat",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bartlett" => Ok(Kernel::Bartlett),
            "parzen" => Ok(Kernel::Parzen),
            "flat" | "truncated" => Ok(Kernel::Flat),
            other => Err(Error::InvalidParameter(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Sample autocovariances `C(0..=L)`; negative lags are transposes.
#[derive(Debug, Clone)]
pub struct LagCovarianceSequence {
    max_lag: usize,
    n: usize,
    matrices: Vec<DMatrix<f64>>,
}

impl LagCovarianceSequence {
    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn n_channels(&self) -> usize {
        self.n
    }

    /// `C(h)` for `|h| <= L`.
    pub fn at(&self, h: isize) -> DMatrix<f64> {
        let m = &self.matrices[h.unsigned_abs()];
        if h < 0 {
            m.transpose()
        } else {
            m.clone()
        }
    }

    /// Entry `(a, b)` of `C(h)` without materializing the matrix.
    pub fn entry(&self, h: isize, a: usize, b: usize) -> f64 {
        let m = &self.matrices[h.unsigned_abs()];
        if h < 0 {
            m[(b, a)]
        } else {
            m[(a, b)]
        }
    }
}

/// Lagged autocovariances with divisor `T`:
/// `C(h) = (1/T) sum_{t=1}^{T-h} (Z_{t+h} - Zbar)(Z_t - Zbar)'` for `h >= 0`.
pub fn autocov(series: &MultiChannelSeries, max_lag: usize) -> Result<LagCovarianceSequence> {
    let t = series.len();
    if max_lag >= t {
        return Err(Error::InvalidParameter(format!(
            "lag window {max_lag} must be below the series length {t}"
        )));
    }
    let z = series.centered();
    let n = series.n_channels();
    let inv_t = 1.0 / t as f64;
    let matrices = (0..=max_lag)
        .into_par_iter()
        .map(|h| {
            let lead = z.rows(h, t - h);
            let lag = z.rows(0, t - h);
            (lead.transpose() * lag) * inv_t
        })
        .collect();
    Ok(LagCovarianceSequence {
        max_lag,
        n,
        matrices,
    })
}

/// Angular frequencies `w_s = 2 pi s / n_freq`, folded into `[-pi, pi)`.
///
/// Data attached to a grid is stored in transform order (`s = 0..n_freq`);
/// [`FrequencyGrid::points`] returns the sorted frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    n_freq: usize,
}

impl FrequencyGrid {
    pub fn new(n_freq: usize) -> Result<Self> {
        if n_freq < 1 {
            return Err(Error::InvalidParameter(
                "frequency grid needs at least one point".into(),
            ));
        }
        Ok(Self { n_freq })
    }

    /// The default grid for a given lag window: `max(128, 4L + 1)` points.
    pub fn for_window(l_window: usize) -> Self {
        Self {
            n_freq: (4 * l_window + 1).max(128),
        }
    }

    pub fn n_freq(&self) -> usize {
        self.n_freq
    }

    /// Frequency of transform index `s`, in `[-pi, pi)`.
    pub fn omega(&self, s: usize) -> f64 {
        let n = self.n_freq;
        let w = 2.0 * PI * s as f64 / n as f64;
        if 2 * s >= n {
            w - 2.0 * PI
        } else {
            w
        }
    }

    /// Index of `-w_s` on the grid.
    pub fn mirror(&self, s: usize) -> usize {
        (self.n_freq - s) % self.n_freq
    }

    /// Sorted frequencies.
    pub fn points(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = (0..self.n_freq).map(|s| self.omega(s)).collect();
        pts.sort_by(f64::total_cmp);
        pts
    }
}

/// Lag-window spectral density estimate on a frequency grid.
#[derive(Debug, Clone)]
pub struct SpectralDensity {
    grid: FrequencyGrid,
    matrices: Vec<ComplexMatrix>,
    kernel: Kernel,
    l_window: usize,
}

impl SpectralDensity {
    /// Wraps precomputed matrices, given in transform order.
    pub fn from_matrices(
        grid: FrequencyGrid,
        matrices: Vec<ComplexMatrix>,
        kernel: Kernel,
        l_window: usize,
    ) -> Result<Self> {
        if matrices.len() != grid.n_freq() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_freq(),
                found: matrices.len(),
            });
        }
        let n = matrices[0].rows();
        if let Some(bad) = matrices.iter().find(|m| !m.is_hermitian() || m.rows() != n) {
            return Err(Error::ContractViolation(format!(
                "spectral matrices must be Hermitian and {n}x{n}, found {}x{}",
                bad.rows(),
                bad.cols()
            )));
        }
        Ok(Self {
            grid,
            matrices,
            kernel,
            l_window,
        })
    }

    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn l_window(&self) -> usize {
        self.l_window
    }

    pub fn n_channels(&self) -> usize {
        self.matrices[0].rows()
    }

    /// Matrix at transform index `s`.
    pub fn at(&self, s: usize) -> &ComplexMatrix {
        &self.matrices[s]
    }

    pub fn matrices(&self) -> &[ComplexMatrix] {
        &self.matrices
    }
}

/// `F(w_s) = sum_{|h| <= L} w(|h|/L) C(h) exp(-i h w_s)` on every grid point.
pub fn spectral_density(
    lagcov: &LagCovarianceSequence,
    kernel: Kernel,
    grid: FrequencyGrid,
) -> Result<SpectralDensity> {
    let l = lagcov.max_lag();
    let nf = grid.n_freq();
    if nf < 2 * l + 1 {
        return Err(Error::InvalidParameter(format!(
            "grid of {nf} points is too coarse for lag window {l} (needs {})",
            2 * l + 1
        )));
    }
    let n = lagcov.n_channels();
    let weights: Vec<f64> = (0..=l)
        .map(|h| {
            if l == 0 {
                1.0
            } else {
                kernel.weight(h as f64 / l as f64)
            }
        })
        .collect();

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect();
    let entries: Vec<Vec<Complex64>> = pairs
        .par_iter()
        .map_init(
            || DftPlan::new(nf, Sign::Negative).expect("grid length is positive"),
            |plan, &(a, b)| {
                let mut buf = vec![Complex64::new(0.0, 0.0); nf];
                for h in -(l as isize)..=(l as isize) {
                    let w = weights[h.unsigned_abs()];
                    let idx = h.rem_euclid(nf as isize) as usize;
                    buf[idx] = Complex64::new(w * lagcov.entry(h, a, b), 0.0);
                }
                plan.process(&mut buf).expect("finite autocovariances");
                buf
            },
        )
        .collect();

    let matrices = (0..nf)
        .map(|s| {
            let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
            for (&(a, b), vals) in pairs.iter().zip(&entries) {
                m[(a, b)] = vals[s];
                m[(b, a)] = vals[s].conj();
            }
            for a in 0..n {
                m[(a, a)].im = 0.0;
            }
            ComplexMatrix::hermitian(m)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SpectralDensity {
        grid,
        matrices,
        kernel,
        l_window: l,
    })
}

/// Leading eigenpairs of the spectral density at every grid point.
#[derive(Debug, Clone)]
pub struct DynamicEigen {
    grid: FrequencyGrid,
    k_scores: usize,
    /// All `n` eigenvalues per grid point, descending.
    values: Vec<Vec<f64>>,
    /// `n x k` eigenvector stack per grid point.
    vectors: Vec<DMatrix<Complex64>>,
    traces: Vec<f64>,
}

impl DynamicEigen {
    /// Builds from explicit parts (transform order). The eigenvector fields
    /// must already satisfy `phi(-w) = conj(phi(w))` for real filters.
    pub fn from_parts(
        grid: FrequencyGrid,
        values: Vec<Vec<f64>>,
        vectors: Vec<DMatrix<Complex64>>,
        traces: Vec<f64>,
    ) -> Result<Self> {
        let nf = grid.n_freq();
        if values.len() != nf || vectors.len() != nf || traces.len() != nf {
            return Err(Error::DimensionMismatch {
                expected: nf,
                found: values.len().min(vectors.len()).min(traces.len()),
            });
        }
        let k_scores = vectors[0].ncols();
        Ok(Self {
            grid,
            k_scores,
            values,
            vectors,
            traces,
        })
    }

    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    pub fn k_scores(&self) -> usize {
        self.k_scores
    }

    pub fn n_channels(&self) -> usize {
        self.vectors[0].nrows()
    }

    /// Eigenvalue `j` at transform index `s`.
    pub fn value(&self, s: usize, j: usize) -> f64 {
        self.values[s][j]
    }

    pub fn values_at(&self, s: usize) -> &[f64] {
        &self.values[s]
    }

    /// Eigenvector `j` at transform index `s`.
    pub fn vector(&self, s: usize, j: usize) -> Vec<Complex64> {
        self.vectors[s].column(j).iter().copied().collect()
    }

    pub fn trace(&self, s: usize) -> f64 {
        self.traces[s]
    }

    /// Keeps only the first `k` eigenvectors.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k > self.k_scores {
            return Err(Error::InvalidParameter(format!(
                "cannot keep {k} of {} components",
                self.k_scores
            )));
        }
        Ok(Self {
            grid: self.grid,
            k_scores: k,
            values: self.values.clone(),
            vectors: self
                .vectors
                .iter()
                .map(|v| v.columns(0, k).into_owned())
                .collect(),
            traces: self.traces.clone(),
        })
    }
}

/// Eigendecomposes `F(w)` on the non-negative half of the grid and fills the
/// other half by conjugation, so each eigenvector field is conjugate
/// symmetric. Eigenvectors are phase-normalized (largest entry real positive).
pub fn dynamic_eigs(sd: &SpectralDensity, k_scores: usize) -> Result<DynamicEigen> {
    let n = sd.n_channels();
    if k_scores > n {
        return Err(Error::InvalidParameter(format!(
            "requested {k_scores} components from {n} channels"
        )));
    }
    let grid = sd.grid();
    let nf = grid.n_freq();
    let half: Vec<usize> = (0..=nf / 2).collect();
    let decomps: Vec<HermitianEigen> = half
        .par_iter()
        .map(|&s| hermitian_eig(sd.at(s)))
        .collect::<Result<Vec<_>>>()?;

    let mut values = Vec::with_capacity(nf);
    let mut vectors = Vec::with_capacity(nf);
    let mut traces = Vec::with_capacity(nf);
    for s in 0..nf {
        let src = if s <= nf / 2 { s } else { grid.mirror(s) };
        let e = &decomps[src];
        let mut v = e.vectors.columns(0, k_scores).into_owned();
        if src != s {
            v.iter_mut().for_each(|z| *z = z.conj());
        } else if grid.mirror(s) == s {
            // Self-conjugate frequencies (0 and -pi) carry real matrices.
            v.iter_mut().for_each(|z| z.im = 0.0);
        }
        values.push(e.values.clone());
        vectors.push(v);
        traces.push(sd.at(s).trace().re);
    }
    Ok(DynamicEigen {
        grid,
        k_scores,
        values,
        vectors,
        traces,
    })
}

/// Whether scores may use future observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    #[default]
    TwoSided,
    OneSided,
}

impl FromStr for Sidedness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "two_sided" | "two" => Ok(Sidedness::TwoSided),
            "one_sided" | "one" => Ok(Sidedness::OneSided),
            other => Err(Error::InvalidParameter(format!(
                "unknown sidedness '{other}'"
            ))),
        }
    }
}

/// Real filter taps `phi_k^(j)` for lags `k = -L..=L`.
#[derive(Debug, Clone)]
pub struct DynamicFilterSet {
    k_scores: usize,
    span: usize,
    n: usize,
    sidedness: Sidedness,
    /// `taps[j]` is an `n x (2L + 1)` matrix, column `k + L` holding lag `k`.
    taps: Vec<DMatrix<f64>>,
    max_imag_residue: f64,
}

impl DynamicFilterSet {
    /// Builds from explicit taps (`n x (2L+1)` per component).
    pub fn from_taps(taps: Vec<DMatrix<f64>>, sidedness: Sidedness) -> Result<Self> {
        let first = taps
            .first()
            .ok_or_else(|| Error::InvalidParameter("filter set needs a component".into()))?;
        let (n, width) = first.shape();
        if width % 2 == 0 {
            return Err(Error::InvalidParameter("tap count must be odd".into()));
        }
        if taps.iter().any(|t| t.shape() != (n, width)) {
            return Err(Error::InvalidParameter(
                "components have different tap shapes".into(),
            ));
        }
        Ok(Self {
            k_scores: taps.len(),
            span: width / 2,
            n,
            sidedness,
            taps,
            max_imag_residue: 0.0,
        })
    }

    pub fn k_scores(&self) -> usize {
        self.k_scores
    }

    pub fn span(&self) -> usize {
        self.span
    }

    pub fn n_channels(&self) -> usize {
        self.n
    }

    pub fn sidedness(&self) -> Sidedness {
        self.sidedness
    }

    /// Largest imaginary part discarded when the taps were made real.
    pub fn max_imag_residue(&self) -> f64 {
        self.max_imag_residue
    }

    /// Tap vector for component `j` at lag `k`.
    pub fn tap(&self, j: usize, k: isize) -> Vec<f64> {
        let col = (k + self.span as isize) as usize;
        self.taps[j].column(col).iter().copied().collect()
    }

    pub fn taps(&self, j: usize) -> &DMatrix<f64> {
        &self.taps[j]
    }

    /// `sum_k ||phi_k^(j)||^2`.
    pub fn energy(&self, j: usize) -> f64 {
        self.taps[j].norm_squared()
    }
}

/// Filter taps by the Riemann sum `phi_k = (1/n_freq) sum_s phi(w_s) exp(-i k w_s)`.
///
/// For one-sided filters the negative lags are zeroed and the remaining taps
/// rescaled to unit total energy.
pub fn filters_from_eigs(
    eigs: &DynamicEigen,
    span: usize,
    sidedness: Sidedness,
) -> Result<DynamicFilterSet> {
    let nf = eigs.grid().n_freq();
    if 2 * span + 1 > nf {
        return Err(Error::InvalidParameter(format!(
            "filter span {span} needs at least {} grid points, have {nf}",
            2 * span + 1
        )));
    }
    let n = eigs.n_channels();
    let k_scores = eigs.k_scores();
    let width = 2 * span + 1;
    let plan = DftPlan::new(nf, Sign::Negative)?;
    let mut max_imag: f64 = 0.0;
    let mut taps = Vec::with_capacity(k_scores);
    for j in 0..k_scores {
        let mut t = DMatrix::zeros(n, width);
        for c in 0..n {
            let mut buf: Vec<Complex64> = (0..nf).map(|s| eigs.vectors[s][(c, j)]).collect();
            plan.process(&mut buf)?;
            for k in -(span as isize)..=(span as isize) {
                let z = buf[k.rem_euclid(nf as isize) as usize] / nf as f64;
                max_imag = max_imag.max(z.im.abs());
                t[(c, (k + span as isize) as usize)] = z.re;
            }
        }
        if sidedness == Sidedness::OneSided {
            for col in 0..span {
                t.column_mut(col).fill(0.0);
            }
            let e = t.norm();
            if e > 0.0 {
                t /= e;
            }
        }
        taps.push(t);
    }
    if max_imag > FILTER_IMAG_TOL {
        return Err(Error::ContractViolation(format!(
            "filter taps have imaginary residue {max_imag:e}; eigenvector field is not conjugate symmetric"
        )));
    }
    Ok(DynamicFilterSet {
        k_scores,
        span,
        n,
        sidedness,
        taps,
        max_imag_residue: max_imag,
    })
}

/// Dynamic principal component scores, one column per component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreMatrix {
    /// Row-major `T x k` scores.
    values: Vec<f64>,
    t: usize,
    k_scores: usize,
    /// Explained-variance share of every component (not just the retained ones).
    pub explained_variance: Vec<f64>,
    /// Time points at each end whose convolution was truncated.
    pub boundary_margin: usize,
}

impl ScoreMatrix {
    /// Builds from score columns.
    pub fn from_columns(
        columns: &[Vec<f64>],
        explained_variance: Vec<f64>,
        boundary_margin: usize,
    ) -> Result<Self> {
        let k_scores = columns.len();
        if k_scores == 0 {
            return Err(Error::InvalidParameter(
                "score matrix needs a component".into(),
            ));
        }
        let t = columns[0].len();
        if columns.iter().any(|c| c.len() != t) {
            return Err(Error::InvalidParameter(
                "score columns differ in length".into(),
            ));
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite score".into()));
        }
        let mut values = vec![0.0; t * k_scores];
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                values[i * k_scores + j] = v;
            }
        }
        Ok(Self {
            values,
            t,
            k_scores,
            explained_variance,
            boundary_margin,
        })
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    pub fn k_scores(&self) -> usize {
        self.k_scores
    }

    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.values[t * self.k_scores + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.t).map(|t| self.get(t, j)).collect()
    }
}

/// Convolves the (centered) series with the filter taps:
/// `dpc_t = sum_k phi_k' Z_{t-k}`, dropping taps that fall outside the record.
pub fn dpc_scores(
    series: &MultiChannelSeries,
    filters: &DynamicFilterSet,
    explained_variance: Vec<f64>,
) -> Result<ScoreMatrix> {
    if series.n_channels() != filters.n_channels() {
        return Err(Error::DimensionMismatch {
            expected: filters.n_channels(),
            found: series.n_channels(),
        });
    }
    let t = series.len();
    let span = filters.span();
    if t <= 2 * span {
        return Err(Error::InvalidParameter(format!(
            "series of length {t} is too short for filter span {span}"
        )));
    }
    let z = series.centered();
    let columns: Vec<Vec<f64>> = (0..filters.k_scores())
        .into_par_iter()
        .map(|j| {
            // proj[(u, k + L)] = phi_k' Z_u
            let proj = &z * filters.taps(j);
            let mut out = vec![0.0; t];
            for (ti, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for k in -(span as isize)..=(span as isize) {
                    let u = ti as isize - k;
                    if u >= 0 && (u as usize) < t {
                        acc += proj[(u as usize, (k + span as isize) as usize)];
                    }
                }
                *o = acc;
            }
            let mean = out.iter().sum::<f64>() / t as f64;
            out.iter_mut().for_each(|v| *v -= mean);
            out
        })
        .collect();
    ScoreMatrix::from_columns(&columns, explained_variance, span)
}

/// `v_j = sum_s lambda_j(w_s) / sum_s tr F(w_s)` for every component.
pub fn explained_variance(eigs: &DynamicEigen) -> Result<Vec<f64>> {
    let nf = eigs.grid().n_freq();
    let total: f64 = (0..nf).map(|s| eigs.trace(s)).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::DegenerateInput(
            "spectral density has zero total trace (constant input?)".into(),
        ));
    }
    let n = eigs.values[0].len();
    Ok((0..n)
        .map(|j| (0..nf).map(|s| eigs.value(s, j)).sum::<f64>() / total)
        .collect())
}

/// Smallest `k` whose cumulative explained variance reaches `threshold`.
pub fn choose_k(v: &[f64], threshold: f64) -> Result<usize> {
    if v.is_empty() {
        return Err(Error::InvalidParameter(
            "explained-variance vector is empty".into(),
        ));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "variance threshold {threshold} must lie in (0, 1]"
        )));
    }
    let mut cum = 0.0;
    for (i, &x) in v.iter().enumerate() {
        cum += x;
        if cum >= threshold - 1e-12 {
            return Ok(i + 1);
        }
    }
    Ok(v.len())
}

/// How many components to retain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentRule {
    Count(usize),
    VarianceThreshold(f64),
}

impl Default for ComponentRule {
    fn default() -> Self {
        ComponentRule::VarianceThreshold(0.75)
    }
}

/// End-to-end settings; `None` means the automatic default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DpcaConfig {
    pub l_window: Option<usize>,
    pub l_filter: Option<usize>,
    pub n_freq: Option<usize>,
    pub kernel: Kernel,
    pub components: ComponentRule,
    pub sidedness: Sidedness,
    /// Scale each channel to unit variance before estimation.
    pub scale: bool,
}

/// Everything produced by one sDPCA run, with the resolved parameters.
#[derive(Debug, Clone)]
pub struct DpcaFit {
    pub scores: ScoreMatrix,
    pub filters: DynamicFilterSet,
    pub l_window: usize,
    pub l_filter: usize,
    pub n_freq: usize,
    pub k_scores: usize,
    pub explained_variance: Vec<f64>,
    /// Labels of constant channels removed before estimation.
    pub dropped: Vec<String>,
}

/// Drops constant channels and optionally rescales to unit variance.
pub(crate) fn prepare_background(
    background: &MultiChannelSeries,
    scale: bool,
) -> Result<(MultiChannelSeries, Vec<String>)> {
    let t = background.len() as f64;
    let means = background.means();
    let vars: Vec<f64> = (0..background.n_channels())
        .map(|j| {
            background
                .channel(j)
                .iter()
                .map(|v| (v - means[j]).powi(2))
                .sum::<f64>()
                / t
        })
        .collect();
    let max_var = vars.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..vars.len())
        .filter(|&j| vars[j] > 1e-24 * max_var.max(1e-300))
        .collect();
    let dropped: Vec<String> = (0..vars.len())
        .filter(|j| !keep.contains(j))
        .map(|j| background.labels()[j].clone())
        .collect();
    if !dropped.is_empty() {
        warn!(
            "dropping constant background channels: {}",
            dropped.join(", ")
        );
    }
    if keep.is_empty() {
        return Err(Error::DegenerateInput(
            "every background channel is constant".into(),
        ));
    }
    let mut kept = background.select(&keep)?;
    if scale {
        let cols = keep
            .iter()
            .map(|&j| {
                let sd = vars[j].sqrt();
                background
                    .channel(j)
                    .iter()
                    .map(|v| (v - means[j]) / sd)
                    .collect()
            })
            .collect();
        kept = MultiChannelSeries::from_columns(cols, kept.labels().to_vec())?;
    }
    Ok((kept, dropped))
}

/// Runs spectral DPCA on a background panel.
pub fn fit_dpca(background: &MultiChannelSeries, cfg: &DpcaConfig) -> Result<DpcaFit> {
    let (bg, dropped) = prepare_background(background, cfg.scale)?;
    let t = bg.len();
    let n = bg.n_channels();
    let l_window = cfg
        .l_window
        .unwrap_or_else(|| (t as f64).sqrt().floor() as usize);
    let grid = match cfg.n_freq {
        Some(nf) => FrequencyGrid::new(nf)?,
        None => FrequencyGrid::for_window(l_window),
    };
    let l_filter = cfg.l_filter.unwrap_or(l_window);

    let lagcov = autocov(&bg, l_window)?;
    let sd = spectral_density(&lagcov, cfg.kernel, grid)?;
    let all = dynamic_eigs(&sd, n)?;
    let v = explained_variance(&all)?;
    let k_scores = match cfg.components {
        ComponentRule::Count(k) => {
            if k == 0 || k > n {
                return Err(Error::InvalidParameter(format!(
                    "component count {k} must lie in 1..={n}"
                )));
            }
            k
        }
        ComponentRule::VarianceThreshold(th) => choose_k(&v, th)?,
    };
    let eigs = all.truncated(k_scores)?;
    let filters = filters_from_eigs(&eigs, l_filter, cfg.sidedness)?;
    let scores = dpc_scores(&bg, &filters, v.clone())?;
    Ok(DpcaFit {
        scores,
        filters,
        l_window,
        l_filter,
        n_freq: grid.n_freq(),
        k_scores,
        explained_variance: v,
        dropped,
    })
}
