//! Bivariate Granger causality F tests.

mod fdist;

use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{ols_fit, OlsFit};
use crate::series::MultiChannelSeries;

pub use fdist::{f_sf, inc_beta, ln_gamma};

/// Outcome of one `cause -> effect` test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcTestResult {
    pub cause: String,
    pub effect: String,
    pub f_stat: f64,
    pub df1: usize,
    pub df2: usize,
    pub p_value: f64,
    /// Benjamini-Hochberg adjusted p-value, when a correction was applied.
    pub q_value: Option<f64>,
    pub reject: bool,
    pub p_lags: usize,
    pub q_lags: usize,
    pub rss_restricted: f64,
    pub rss_unrestricted: f64,
}

/// Ordinary least squares of `y_t` on an intercept, `y_{t-1..t-p}` and
/// `x_{t-1..t-q}`, using rows `t >= max(p, q)`.
pub fn fit_ar(y: &[f64], p_lags: usize, x: Option<&[f64]>, q_lags: usize) -> Result<OlsFit> {
    fit_ar_from(y, p_lags, x, q_lags, p_lags.max(q_lags))
}

fn fit_ar_from(
    y: &[f64],
    p_lags: usize,
    x: Option<&[f64]>,
    q_lags: usize,
    start: usize,
) -> Result<OlsFit> {
    let t = y.len();
    if let Some(x) = x {
        if x.len() != t {
            return Err(Error::DimensionMismatch {
                expected: t,
                found: x.len(),
            });
        }
    }
    let k = 1 + p_lags + if x.is_some() { q_lags } else { 0 };
    if t <= start + p_lags + q_lags + 1 || t - start <= k {
        return Err(Error::InvalidParameter(format!(
            "series of length {t} is too short for p = {p_lags}, q = {q_lags}"
        )));
    }
    let rows = t - start;
    let mut design = DMatrix::zeros(rows, k);
    for r in 0..rows {
        let ti = r + start;
        design[(r, 0)] = 1.0;
        for l in 1..=p_lags {
            design[(r, l)] = y[ti - l];
        }
        if let Some(x) = x {
            for l in 1..=q_lags {
                design[(r, p_lags + l)] = x[ti - l];
            }
        }
    }
    ols_fit(&design, &y[start..])
}

/// Tests whether `x` Granger-causes `y`.
pub fn gc_test(
    x: &[f64],
    y: &[f64],
    p_lags: usize,
    q_lags: usize,
    alpha: f64,
) -> Result<GcTestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha {alpha} must lie in (0, 1)"
        )));
    }
    if q_lags == 0 {
        return Err(Error::InvalidParameter(
            "the cause needs at least one lag".into(),
        ));
    }
    let unrestricted = fit_ar(y, p_lags, Some(x), q_lags)?;
    let restricted = fit_ar(y, p_lags, None, q_lags)?;
    let t_eff = y.len() - p_lags.max(q_lags);
    let scale: f64 = y[p_lags.max(q_lags)..]
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    if unrestricted.rss <= 1e-24 * scale {
        return Err(Error::DegenerateFit(
            "unrestricted model fits exactly (duplicated or leaked channel?)".into(),
        ));
    }
    let df1 = q_lags;
    let df2 = t_eff - unrestricted.n_params;
    let f_stat = (((restricted.rss - unrestricted.rss) / df1 as f64)
        / (unrestricted.rss / df2 as f64))
        .max(0.0);
    let p_value = f_sf(f_stat, df1, df2)?;
    Ok(GcTestResult {
        cause: "x".into(),
        effect: "y".into(),
        f_stat,
        df1,
        df2,
        p_value,
        q_value: None,
        reject: p_value < alpha,
        p_lags,
        q_lags,
        rss_restricted: restricted.rss,
        rss_unrestricted: unrestricted.rss,
    })
}

/// How the autoregressive orders are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagCriterion {
    Bic,
    Aic,
    Fixed(usize),
}

impl FromStr for LagCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bic" => Ok(LagCriterion::Bic),
            "aic" => Ok(LagCriterion::Aic),
            other => other
                .strip_prefix("fixed:")
                .and_then(|v| v.parse().ok())
                .map(LagCriterion::Fixed)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown lag criterion '{s}'"))),
        }
    }
}

/// Picks `p = q` by information criterion of the unrestricted fit. All
/// candidates share the sample `t >= max_lag` so their criteria compare.
pub fn select_lag(
    y: &[f64],
    x: &[f64],
    max_lag: usize,
    criterion: LagCriterion,
) -> Result<(usize, usize)> {
    let penalty = match criterion {
        LagCriterion::Fixed(v) => {
            if v == 0 {
                return Err(Error::InvalidParameter(
                    "fixed lag order must be at least 1".into(),
                ));
            }
            return Ok((v, v));
        }
        LagCriterion::Bic => None,
        LagCriterion::Aic => Some(2.0),
    };
    if max_lag == 0 {
        return Err(Error::InvalidParameter("max_lag must be at least 1".into()));
    }
    if max_lag == 1 {
        return Ok((1, 1));
    }
    let n = (y.len() - max_lag.min(y.len())) as f64;
    let per_param = penalty.unwrap_or(n.ln());
    let mut best = (f64::INFINITY, 1);
    for lag in 1..=max_lag {
        let fit = fit_ar_from(y, lag, Some(x), lag, max_lag)?;
        let crit = n * (fit.rss / n).ln() + per_param * fit.n_params as f64;
        if crit < best.0 {
            best = (crit, lag);
        }
    }
    Ok((best.1, best.1))
}

/// Multiple-testing adjustment across one connectivity matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    #[default]
    None,
    BenjaminiHochberg,
}

/// Settings shared by every pairwise test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcConfig {
    pub lags: LagCriterion,
    /// Upper bound for information-criterion selection.
    pub max_lag: usize,
    pub alpha: f64,
    pub correction: Correction,
}

impl Default for GcConfig {
    fn default() -> Self {
        Self {
            lags: LagCriterion::Fixed(2),
            max_lag: 8,
            alpha: 0.05,
            correction: Correction::None,
        }
    }
}

/// Test results for every ordered pair of channels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConnectivityMatrix {
    pub labels: Vec<String>,
    /// Row-major over `(cause, effect)` with the diagonal skipped.
    pub entries: Vec<GcTestResult>,
    pub alpha: f64,
}

impl ConnectivityMatrix {
    pub fn get(&self, cause: &str, effect: &str) -> Option<&GcTestResult> {
        self.entries
            .iter()
            .find(|e| e.cause == cause && e.effect == effect)
    }

    /// `adj[i][j]` is true when channel `i` was found to cause channel `j`.
    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        let m = self.labels.len();
        let mut adj = vec![vec![false; m]; m];
        for e in &self.entries {
            let i = self
                .labels
                .iter()
                .position(|l| *l == e.cause)
                .expect("known label");
            let j = self
                .labels
                .iter()
                .position(|l| *l == e.effect)
                .expect("known label");
            adj[i][j] = e.reject;
        }
        adj
    }

    /// Significant `(cause, effect)` pairs.
    pub fn edges(&self) -> Vec<(String, String)> {
        self.entries
            .iter()
            .filter(|e| e.reject)
            .map(|e| (e.cause.clone(), e.effect.clone()))
            .collect()
    }
}

/// Benjamini-Hochberg adjusted p-values, in input order.
pub fn bh_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(p[i] * m as f64 / (rank + 1) as f64);
        q[i] = running.min(1.0);
    }
    q
}

/// Runs [`gc_test`] on every ordered pair of channels, in parallel.
pub fn pairwise_gc(channels: &MultiChannelSeries, cfg: &GcConfig) -> Result<ConnectivityMatrix> {
    let m = channels.n_channels();
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "pairwise tests need at least 2 channels, got {m}"
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let labels = channels.labels();
    let mut entries = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (x, y) = (channels.channel(i), channels.channel(j));
            let run = || -> Result<GcTestResult> {
                let (p, q) = select_lag(y, x, cfg.max_lag, cfg.lags)?;
                let mut r = gc_test(x, y, p, q, cfg.alpha)?;
                r.cause = labels[i].clone();
                r.effect = labels[j].clone();
                Ok(r)
            };
            run().map_err(|e| e.context(format!("testing {} -> {}", labels[i], labels[j])))
        })
        .collect::<Result<Vec<_>>>()?;
    if cfg.correction == Correction::BenjaminiHochberg {
        let p: Vec<f64> = entries.iter().map(|e| e.p_value).collect();
        for (e, q) in entries.iter_mut().zip(bh_adjust(&p)) {
            e.q_value = Some(q);
            e.reject = q <= cfg.alpha;
        }
    }
    Ok(ConnectivityMatrix {
        labels: labels.to_vec(),
        entries,
        alpha: cfg.alpha,
    })
}
