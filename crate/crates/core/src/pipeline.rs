//! The end-to-end analysis: background reduction, residualization, pairwise tests.

use std::collections::HashSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::confound::{
    build_design, fit_static_pca, interaction_columns, residualize_channel, RegressionSpec,
};
use crate::dpca::{fit_dpca, ComponentRule, DpcaConfig, Kernel, ScoreMatrix, Sidedness};
use crate::error::{Error, Result};
use crate::granger::{
    pairwise_gc, ConnectivityMatrix, Correction, GcConfig, GcTestResult, LagCriterion,
};
use crate::io::SCHEMA_VERSION;
use crate::series::MultiChannelSeries;

/// A count that may be left to the automatic default. Serialized as a number or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AutoCount {
    #[default]
    Auto,
    Value(usize),
}

impl AutoCount {
    pub fn get(self) -> Option<usize> {
        match self {
            AutoCount::Auto => None,
            AutoCount::Value(v) => Some(v),
        }
    }
}

impl fmt::Display for AutoCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AutoCount::Auto => f.write_str("auto"),
            AutoCount::Value(v) => write!(f, "{v}"),
        }
    }
}

impl std::str::FromStr for AutoCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(AutoCount::Auto);
        }
        s.parse().map(AutoCount::Value).map_err(|_| {
            Error::InvalidParameter(format!("expected a count or \"auto\", got '{s}'"))
        })
    }
}

impl Serialize for AutoCount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AutoCount::Auto => s.serialize_str("auto"),
            AutoCount::Value(v) => s.serialize_u64(*v as u64),
        }
    }
}

impl<'de> Deserialize<'de> for AutoCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(v) => Ok(AutoCount::Value(v)),
            Raw::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// How the background is summarized before residualization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Dynamic principal component scores from the spectral density.
    #[default]
    Spectral,
    /// Classical principal component scores of the lag-zero covariance.
    Static,
    /// No background removal; channels are only centered.
    None,
}

impl std::str::FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spectral" | "sdpca" => Ok(Reduction::Spectral),
            "static" | "pca" => Ok(Reduction::Static),
            "none" => Ok(Reduction::None),
            other => Err(Error::InvalidParameter(format!(
                "unknown reduction '{other}'"
            ))),
        }
    }
}

impl fmt::Display for Reduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reduction::Spectral => "spectral",
            Reduction::Static => "static",
            Reduction::None => "none",
        })
    }
}

/// Settings for one analysis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Channels whose pairwise links are tested.
    pub coi_labels: Vec<String>,
    /// Explicit background; every non-COI channel when absent.
    pub background_labels: Option<Vec<String>>,
    pub reduction: Reduction,
    pub l_window: AutoCount,
    pub l_filter: AutoCount,
    pub n_freq: AutoCount,
    pub kernel: Kernel,
    pub k_scores: ComponentRule,
    pub sidedness: Sidedness,
    /// Standardize background channels before estimation.
    pub scale: bool,
    /// Add pairwise score products to the background design.
    pub interactions: bool,
    pub lags: LagCriterion,
    pub max_lag: usize,
    pub alpha: f64,
    pub correction: Correction,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let gc = GcConfig::default();
        Self {
            coi_labels: Vec::new(),
            background_labels: None,
            reduction: Reduction::default(),
            l_window: AutoCount::Auto,
            l_filter: AutoCount::Auto,
            n_freq: AutoCount::Auto,
            kernel: Kernel::default(),
            k_scores: ComponentRule::default(),
            sidedness: Sidedness::default(),
            scale: false,
            interactions: false,
            lags: gc.lags,
            max_lag: gc.max_lag,
            alpha: gc.alpha,
            correction: gc.correction,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Checks every field that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        if self.coi_labels.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "at least 2 channels of interest are required, got {}",
                self.coi_labels.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.coi_labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::InvalidParameter(format!(
                "channel of interest '{dup}' is listed twice"
            )));
        }
        if let Some(bg) = &self.background_labels {
            if let Some(l) = bg.iter().find(|l| seen.contains(l.as_str())) {
                return Err(Error::InvalidParameter(format!(
                    "channel '{l}' is both a channel of interest and background"
                )));
            }
        }
        match self.k_scores {
            ComponentRule::Count(0) => {
                return Err(Error::InvalidParameter(
                    "k_scores must be at least 1".into(),
                ));
            }
            ComponentRule::VarianceThreshold(th) if !(th > 0.0 && th <= 1.0) => {
                return Err(Error::InvalidParameter(format!(
                    "variance threshold {th} must lie in (0, 1]"
                )));
            }
            _ => {}
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha {} must lie in (0, 1)",
                self.alpha
            )));
        }
        match self.lags {
            LagCriterion::Fixed(0) => Err(Error::InvalidParameter(
                "lag order must be at least 1".into(),
            )),
            LagCriterion::Bic | LagCriterion::Aic if self.max_lag == 0 => {
                Err(Error::InvalidParameter("max_lag must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn gc_config(&self) -> GcConfig {
        GcConfig {
            lags: self.lags,
            max_lag: self.max_lag,
            alpha: self.alpha,
            correction: self.correction,
        }
    }

    pub fn dpca_config(&self) -> DpcaConfig {
        DpcaConfig {
            l_window: self.l_window.get(),
            l_filter: self.l_filter.get(),
            n_freq: self.n_freq.get(),
            kernel: self.kernel,
            components: self.k_scores,
            sidedness: self.sidedness,
            scale: self.scale,
        }
    }

    fn regression_spec(&self) -> RegressionSpec {
        RegressionSpec {
            include_intercept: true,
            include_interactions: self.interactions,
        }
    }
}

/// Parameters as actually used, after automatic defaults were resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedParams {
    pub reduction: Reduction,
    pub n_observations: usize,
    pub background: Vec<String>,
    pub l_window: Option<usize>,
    pub l_filter: Option<usize>,
    pub n_freq: Option<usize>,
    pub k_scores: usize,
}

/// Output of [`analyze`].
#[derive(Debug, Clone)]
pub struct Analysis {
    pub connectivity: ConnectivityMatrix,
    /// Channels of interest with the background influence removed.
    pub residuals: MultiChannelSeries,
    /// Background scores used in the regression; absent without reduction.
    pub scores: Option<ScoreMatrix>,
    pub resolved: ResolvedParams,
    pub explained_variance: Vec<f64>,
    pub dropped_channels: Vec<String>,
    pub boundary_margin: usize,
}

/// Serialized summary of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub config: PipelineConfig,
    pub resolved: ResolvedParams,
    pub explained_variance: Vec<f64>,
    pub dropped_channels: Vec<String>,
    pub boundary_margin: usize,
    pub tests: Vec<GcTestResult>,
}

impl Analysis {
    pub fn report(&self, config: &PipelineConfig) -> AnalysisReport {
        AnalysisReport {
            schema_version: SCHEMA_VERSION,
            config: config.clone(),
            resolved: self.resolved.clone(),
            explained_variance: self.explained_variance.clone(),
            dropped_channels: self.dropped_channels.clone(),
            boundary_margin: self.boundary_margin,
            tests: self.connectivity.entries.clone(),
        }
    }
}

/// Splits channels into the COI panel and the background panel.
pub fn split_channels(
    series: &MultiChannelSeries,
    cfg: &PipelineConfig,
) -> Result<(MultiChannelSeries, Option<MultiChannelSeries>)> {
    let coi = series.select_labels(&cfg.coi_labels)?;
    let background: Vec<String> = match &cfg.background_labels {
        Some(bg) => bg.clone(),
        None => series
            .labels()
            .iter()
            .filter(|l| !cfg.coi_labels.contains(l))
            .cloned()
            .collect(),
    };
    if background.is_empty() {
        if cfg.reduction == Reduction::None {
            return Ok((coi, None));
        }
        return Err(Error::InvalidInput(
            "no background channels remain outside the channels of interest".into(),
        ));
    }
    Ok((coi, Some(series.select_labels(&background)?)))
}

/// Runs background reduction, residualization and pairwise tests.
pub fn analyze(series: &MultiChannelSeries, cfg: &PipelineConfig) -> Result<Analysis> {
    cfg.validate()?;
    let (coi, background) =
        split_channels(series, cfg).map_err(|e| e.context("selecting channels"))?;
    let bg_labels = background
        .as_ref()
        .map(|b| b.labels().to_vec())
        .unwrap_or_default();
    let mut resolved = ResolvedParams {
        reduction: cfg.reduction,
        n_observations: series.len(),
        background: bg_labels,
        l_window: None,
        l_filter: None,
        n_freq: None,
        k_scores: 0,
    };
    let (scores, explained_variance, dropped_channels) = match (cfg.reduction, &background) {
        (Reduction::Spectral, Some(bg)) => {
            let fit = fit_dpca(bg, &cfg.dpca_config()).map_err(|e| e.context("spectral-dpca"))?;
            resolved.l_window = Some(fit.l_window);
            resolved.l_filter = Some(fit.l_filter);
            resolved.n_freq = Some(fit.n_freq);
            resolved.k_scores = fit.k_scores;
            (Some(fit.scores), fit.explained_variance, fit.dropped)
        }
        (Reduction::Static, Some(bg)) => {
            let fit = fit_static_pca(bg, cfg.k_scores).map_err(|e| e.context("static-pca"))?;
            resolved.k_scores = fit.k_scores;
            (Some(fit.scores), fit.explained_variance, fit.dropped)
        }
        _ => (None, Vec::new(), Vec::new()),
    };
    let boundary_margin = scores.as_ref().map_or(0, |s| s.boundary_margin);

    let residuals = residualize_all(&coi, scores.as_ref(), &cfg.regression_spec())
        .map_err(|e| e.context("confound-removal"))?;
    let connectivity =
        pairwise_gc(&residuals, &cfg.gc_config()).map_err(|e| e.context("granger"))?;
    Ok(Analysis {
        connectivity,
        residuals,
        scores,
        resolved,
        explained_variance,
        dropped_channels,
        boundary_margin,
    })
}

/// Residualizes every channel once on the shared design.
fn residualize_all(
    coi: &MultiChannelSeries,
    scores: Option<&ScoreMatrix>,
    spec: &RegressionSpec,
) -> Result<MultiChannelSeries> {
    let columns: Vec<Vec<f64>> = match scores {
        Some(scores) => {
            let design = build_design(scores, spec);
            let droppable = interaction_columns(scores.k_scores(), spec);
            (0..coi.n_channels())
                .into_par_iter()
                .map(|j| {
                    residualize_channel(coi.channel(j), &design, &droppable)
                        .map(|fit| fit.residuals)
                        .map_err(|e| e.context(format!("residualizing {}", coi.labels()[j])))
                })
                .collect::<Result<_>>()?
        }
        None => {
            let means = coi.means();
            (0..coi.n_channels())
                .map(|j| coi.channel(j).iter().map(|v| v - means[j]).collect())
                .collect()
        }
    };
    MultiChannelSeries::from_columns(columns, coi.labels().to_vec())
}
