//! Synthetic EEG-like networks with planted `X_i -> Y_i` links.
//!
//! Every random draw comes from a ChaCha8 stream keyed by the master seed and
//! a fixed stream id, so output does not depend on thread count or on the
//! order in which channels are produced.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::MultiChannelSeries;

/// Samples discarded at the start of each autoregressive band.
pub const BURN_IN: usize = 200;
/// Nominal sampling rate used to place the default bands.
pub const NOMINAL_RATE_HZ: f64 = 160.0;

/// Pole modulus of the default bands.
pub const DEFAULT_POLE_RADIUS: f64 = 0.5;

/// Presample rows kept so lagged terms exist at the first output row.
const PRESAMPLE: usize = 3;

const STREAM_BAND: u64 = 1;
const STREAM_CHANNEL: u64 = 100;
const STREAM_PRIVATE_BAND: u64 = 10_000;
const STREAM_INFLUENCE: u64 = 1_000_000;
const STREAM_EFFECT: u64 = 2_000_000;
const STREAM_CAUSATIVE: u64 = 3_000_000;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// One latent oscillation, an AR(2) with complex poles `r exp(+-i rho)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: String,
    pub r: f64,
    pub rho: f64,
    pub sigma: f64,
}

impl BandSpec {
    /// A band whose stationary variance is one.
    pub fn unit_variance(name: &str, r: f64, rho: f64) -> Self {
        let mut b = Self {
            name: name.to_string(),
            r,
            rho,
            sigma: 1.0,
        };
        b.sigma = 1.0 / b.stationary_variance().sqrt();
        b
    }

    /// A unit-variance band centred on `hz` at the nominal sampling rate.
    pub fn at_hz(name: &str, r: f64, hz: f64) -> Self {
        Self::unit_variance(name, r, 2.0 * PI * hz / NOMINAL_RATE_HZ)
    }

    pub fn coefficients(&self) -> (f64, f64) {
        (2.0 * self.r * self.rho.cos(), -self.r * self.r)
    }

    /// Variance of the stationary process.
    pub fn stationary_variance(&self) -> f64 {
        let (p1, p2) = self.coefficients();
        self.sigma * self.sigma * (1.0 - p2) / ((1.0 + p2) * ((1.0 - p2).powi(2) - p1 * p1))
    }

    pub fn validate(&self) -> Result<()> {
        let (p1, p2) = self.coefficients();
        let stationary = p1 + p2 < 1.0 && p2 - p1 < 1.0 && p2.abs() < 1.0;
        if !(self.r >= 0.0 && self.r < 1.0) || !(0.0..=PI).contains(&self.rho) || !stationary {
            return Err(Error::InvalidParameter(format!(
                "band '{}' (r = {}, rho = {}) is not stationary",
                self.name, self.r, self.rho
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "band '{}' needs a positive innovation scale",
                self.name
            )));
        }
        Ok(())
    }

    /// Delta, theta, alpha, beta and gamma at 2, 6, 10, 20 and 40 Hz.
    pub fn eeg_defaults(r: f64) -> Vec<BandSpec> {
        [
            ("delta", 2.0),
            ("theta", 6.0),
            ("alpha", 10.0),
            ("beta", 20.0),
            ("gamma", 40.0),
        ]
        .iter()
        .map(|&(name, hz)| BandSpec::at_hz(name, r, hz))
        .collect()
    }
}

/// Realization of length `t` after discarding [`BURN_IN`] samples.
pub fn ar2_band<R: Rng + ?Sized>(t: usize, spec: &BandSpec, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    if t < 100 {
        return Err(Error::InvalidParameter(format!(
            "band length {t} is below 100"
        )));
    }
    let (p1, p2) = spec.coefficients();
    let mut out = Vec::with_capacity(t);
    let (mut v1, mut v2) = (0.0, 0.0);
    for i in 0..BURN_IN + t {
        let e: f64 = StandardNormal.sample(rng);
        let v = p1 * v1 + p2 * v2 + spec.sigma * e;
        v2 = v1;
        v1 = v;
        if i >= BURN_IN {
            out.push(v);
        }
    }
    Ok(out)
}

/// How outer channels act on the paired channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Linear,
    Nonlinear,
    Causative,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Scheme::Linear),
            "nonlinear" => Ok(Scheme::Nonlinear),
            "causative" => Ok(Scheme::Causative),
            other => Err(Error::InvalidParameter(format!("unknown scheme '{other}'"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Linear => "linear",
            Scheme::Nonlinear => "nonlinear",
            Scheme::Causative => "causative",
        })
    }
}

/// Whether channels mix one network-wide set of band processes or draw
/// their own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LatentMode {
    Shared,
    #[default]
    PerChannel,
}

/// Everything that defines a simulated network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Paired channels (`X` and `Y` together); must be even.
    pub n: usize,
    pub n_external: usize,
    pub t: usize,
    pub scheme: Scheme,
    pub n_influencers: usize,
    pub influence_weight: f64,
    pub interaction_scale: f64,
    pub mu: f64,
    /// Fixed `(psi_1, psi_2)` for every pair; drawn as `+-1.5` and rescaled when absent.
    pub effect_coeffs: Option<[f64; 2]>,
    pub sigma_eps: f64,
    pub sigma_xi: f64,
    pub sigma_nu: f64,
    pub bands: Vec<BandSpec>,
    /// Band mixing weights are drawn from `Uniform(low, high)`.
    pub mixing_range: [f64; 2],
    pub latent: LatentMode,
    /// Outer-channel indices eligible as influencers; all of them when absent.
    pub connected: Option<Vec<usize>>,
    /// Give `Y_i` the same influencers and weights as `X_i`.
    pub shared_influencers: bool,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n: 20,
            n_external: 108,
            t: 2000,
            scheme: Scheme::Linear,
            n_influencers: 30,
            influence_weight: 0.1,
            interaction_scale: 0.1,
            mu: 0.8,
            effect_coeffs: None,
            sigma_eps: 1.0,
            sigma_xi: 1.0,
            sigma_nu: 1.0,
            bands: BandSpec::eeg_defaults(DEFAULT_POLE_RADIUS),
            mixing_range: [0.5, 1.5],
            latent: LatentMode::PerChannel,
            connected: None,
            shared_influencers: false,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn n_pairs(&self) -> usize {
        self.n / 2
    }

    pub fn n_total(&self) -> usize {
        self.n + self.n_external
    }

    fn connected_set(&self) -> Vec<usize> {
        self.connected
            .clone()
            .unwrap_or_else(|| (0..self.n_external).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n < 2 || !self.n.is_multiple_of(2) {
            return bad(format!(
                "paired channel count {} must be even and at least 2",
                self.n
            ));
        }
        if self.t < 100 {
            return bad(format!("series length {} is below 100", self.t));
        }
        if self.bands.is_empty() {
            return bad("at least one band is required".into());
        }
        for b in &self.bands {
            b.validate()?;
        }
        for (name, s) in [
            ("sigma_eps", self.sigma_eps),
            ("sigma_xi", self.sigma_xi),
            ("sigma_nu", self.sigma_nu),
        ] {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        let [lo, hi] = self.mixing_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad("mixing range must satisfy low <= high".into());
        }
        if !(self.influence_weight >= 0.0 && self.influence_weight.is_finite()) {
            return bad("influence weight must be non-negative".into());
        }
        if !(self.interaction_scale >= 0.0 && self.interaction_scale.is_finite()) {
            return bad("interaction scale must be non-negative".into());
        }
        if self.mu.is_nan() || self.mu.abs() >= 1.0 {
            return bad(format!("mu = {} must lie in (-1, 1)", self.mu));
        }
        let connected = self.connected_set();
        if let Some(&j) = connected.iter().find(|&&j| j >= self.n_external) {
            return bad(format!(
                "connected index {j} exceeds {} outer channels",
                self.n_external
            ));
        }
        let mut uniq = connected.clone();
        uniq.sort_unstable();
        uniq.dedup();
        if uniq.len() != connected.len() {
            return bad("connected set has duplicates".into());
        }
        if self.n_influencers > connected.len() {
            return bad(format!(
                "{} influencers requested but only {} connected outer channels",
                self.n_influencers,
                connected.len()
            ));
        }
        Ok(())
    }
}

/// The planted structure of a simulated network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub labels: Vec<String>,
    /// `(cause, effect)` channel indices, one `X_i -> Y_i` per pair.
    pub edges: Vec<(usize, usize)>,
    /// Outer-channel indices (0-based among `Z`) acting on each paired channel.
    pub influencers: Vec<Vec<usize>>,
    /// Realized weights, aligned with `influencers`.
    pub weights: Vec<Vec<f64>>,
    /// `(psi_1, psi_2)` used for each pair.
    pub effect_coeffs: Vec<[f64; 2]>,
}

impl GroundTruth {
    /// Labels of the planted edges.
    pub fn edge_labels(&self) -> Vec<(String, String)> {
        self.edges
            .iter()
            .map(|&(c, e)| (self.labels[c].clone(), self.labels[e].clone()))
            .collect()
    }
}

/// Channel labels `X1.., Y1.., Z1..`.
pub fn network_labels(n: usize, n_external: usize) -> Vec<String> {
    let half = n / 2;
    (1..=half)
        .map(|i| format!("X{i}"))
        .chain((1..=half).map(|i| format!("Y{i}")))
        .chain((1..=n_external).map(|j| format!("Z{j}")))
        .collect()
}

/// Uninfluenced network with [`PRESAMPLE`] extra leading rows.
#[derive(Debug, Clone)]
pub struct Network {
    /// One vector per channel, each of length `t + PRESAMPLE`.
    columns: Vec<Vec<f64>>,
    labels: Vec<String>,
    t: usize,
}

impl Network {
    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    /// The last `t` rows as a series.
    pub fn series(&self) -> Result<MultiChannelSeries> {
        let cols = self
            .columns
            .iter()
            .map(|c| c[PRESAMPLE..].to_vec())
            .collect();
        Ok(MultiChannelSeries::from_columns(cols, self.labels.clone())?
            .with_sample_rate(NOMINAL_RATE_HZ))
    }
}

/// Largest `c` in `(0, 1]` such that `y_t = c psi_1 y_{t-1} + c psi_2 y_{t-2}`
/// has spectral radius at most `bound`.
pub fn stationarity_scale(psi: [f64; 2], bound: f64) -> f64 {
    let radius = |c: f64| {
        let (a, b) = (c * psi[0], c * psi[1]);
        let disc = a * a + 4.0 * b;
        if disc >= 0.0 {
            let s = disc.sqrt();
            ((a + s) / 2.0).abs().max(((a - s) / 2.0).abs())
        } else {
            (-b).sqrt()
        }
    };
    if radius(1.0) <= bound {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if radius(mid) <= bound {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn effect_coeffs(cfg: &NetworkConfig, pair: usize) -> [f64; 2] {
    if let Some(psi) = cfg.effect_coeffs {
        return psi;
    }
    let mut rng = stream(cfg.seed, STREAM_EFFECT + pair as u64);
    let psi = [0, 1].map(|_| if rng.random_bool(0.5) { 1.5 } else { -1.5 });
    let c = stationarity_scale(psi, 0.95);
    psi.map(|p| c * p)
}

/// Generates the uninfluenced network: `X_i`, `Y_i` and `Z_j` channels.
pub fn generate_base(cfg: &NetworkConfig) -> Result<(Network, Vec<[f64; 2]>)> {
    cfg.validate()?;
    let ext = cfg.t + PRESAMPLE;
    let n_bands = cfg.bands.len();
    let shared: Vec<Vec<f64>> = match cfg.latent {
        LatentMode::Shared => cfg
            .bands
            .iter()
            .enumerate()
            .map(|(b, spec)| ar2_band(ext, spec, &mut stream(cfg.seed, STREAM_BAND + b as u64)))
            .collect::<Result<_>>()?,
        LatentMode::PerChannel => Vec::new(),
    };
    let half = cfg.n_pairs();
    // Mixed channels: X_1..X_half then Z_1..Z_ext.
    let n_mixed = half + cfg.n_external;
    let [lo, hi] = cfg.mixing_range;
    let mixed: Vec<Vec<f64>> = (0..n_mixed)
        .into_par_iter()
        .map(|c| -> Result<Vec<f64>> {
            let mut rng = stream(cfg.seed, STREAM_CHANNEL + c as u64);
            let weights: Vec<f64> = (0..n_bands)
                .map(|_| {
                    if lo == hi {
                        lo
                    } else {
                        rng.random_range(lo..hi)
                    }
                })
                .collect();
            let private: Vec<Vec<f64>> = match cfg.latent {
                LatentMode::Shared => Vec::new(),
                LatentMode::PerChannel => cfg
                    .bands
                    .iter()
                    .enumerate()
                    .map(|(b, spec)| {
                        let id = STREAM_PRIVATE_BAND + (c * n_bands + b) as u64;
                        ar2_band(ext, spec, &mut stream(cfg.seed, id))
                    })
                    .collect::<Result<_>>()?,
            };
            let bands = if private.is_empty() {
                &shared
            } else {
                &private
            };
            Ok((0..ext)
                .map(|t| {
                    let latent: f64 = weights.iter().zip(bands).map(|(w, b)| w * b[t]).sum();
                    latent + cfg.sigma_eps * normal(&mut rng)
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let psis: Vec<[f64; 2]> = (0..half).map(|i| effect_coeffs(cfg, i)).collect();
    let ys: Vec<Vec<f64>> = (0..half)
        .into_par_iter()
        .map(|i| {
            let x = &mixed[i];
            let psi = psis[i];
            let mut rng = stream(cfg.seed, STREAM_CHANNEL + (n_mixed + i) as u64);
            (0..ext)
                .map(|t| {
                    let xi = cfg.sigma_xi * normal(&mut rng);
                    let lag1 = if t >= 1 { x[t - 1] } else { 0.0 };
                    let lag2 = if t >= 2 { x[t - 2] } else { 0.0 };
                    psi[0] * lag1 + psi[1] * lag2 + xi
                })
                .collect()
        })
        .collect();

    let mut columns = Vec::with_capacity(cfg.n_total());
    columns.extend(mixed[..half].iter().cloned());
    columns.extend(ys);
    columns.extend(mixed[half..].iter().cloned());
    Ok((
        Network {
            columns,
            labels: network_labels(cfg.n, cfg.n_external),
            t: cfg.t,
        },
        psis,
    ))
}

/// Outer-channel indices and weights acting on each paired channel.
pub type InfluencerDraw = (Vec<Vec<usize>>, Vec<Vec<f64>>);

/// Draws influencer sets and weights for every paired channel.
pub fn draw_influencers(cfg: &NetworkConfig) -> Result<InfluencerDraw> {
    cfg.validate()?;
    let connected = cfg.connected_set();
    let w = cfg.influence_weight;
    let half = cfg.n_pairs();
    let draw = |p: usize| {
        let mut rng = stream(cfg.seed, STREAM_INFLUENCE + p as u64);
        let idx: Vec<usize> = sample(&mut rng, connected.len(), cfg.n_influencers)
            .into_iter()
            .map(|i| connected[i])
            .collect();
        let weights: Vec<f64> = idx
            .iter()
            .map(|_| {
                if w == 0.0 {
                    0.0
                } else {
                    rng.random_range(w * 15.0 / 16.0..=w * 17.0 / 16.0)
                }
            })
            .collect();
        (idx, weights)
    };
    let (mut sets, mut weights) = (Vec::with_capacity(cfg.n), Vec::with_capacity(cfg.n));
    for p in 0..cfg.n {
        let source = if cfg.shared_influencers && p >= half {
            p - half
        } else {
            p
        };
        let (s, w) = draw(source);
        sets.push(s);
        weights.push(w);
    }
    Ok((sets, weights))
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn outer<'a>(net: &'a Network, cfg: &NetworkConfig, j: usize) -> &'a [f64] {
    &net.columns[cfg.n + j]
}

fn check_truth(net: &Network, truth: &GroundTruth, cfg: &NetworkConfig) -> Result<()> {
    if net.columns.len() != cfg.n_total()
        || truth.influencers.len() != cfg.n
        || truth.weights.len() != cfg.n
    {
        return Err(Error::DimensionMismatch {
            expected: cfg.n_total(),
            found: net.columns.len(),
        });
    }
    Ok(())
}

fn replace_paired(
    net: &Network,
    cfg: &NetworkConfig,
    f: impl Fn(usize) -> Vec<f64> + Sync + Send,
) -> Result<MultiChannelSeries> {
    let paired: Vec<Vec<f64>> = (0..cfg.n).into_par_iter().map(f).collect();
    let cols = (0..cfg.n_total())
        .map(|c| {
            let full = if c < cfg.n {
                &paired[c]
            } else {
                &net.columns[c]
            };
            full[PRESAMPLE..].to_vec()
        })
        .collect();
    Ok(MultiChannelSeries::from_columns(cols, net.labels.clone())?
        .with_sample_rate(NOMINAL_RATE_HZ))
}

/// `X*_i(t) = X_i(t) + sum_j W_ij Z_j(t)`, likewise for `Y_i`.
pub fn apply_linear_influence(
    net: &Network,
    truth: &GroundTruth,
    cfg: &NetworkConfig,
) -> Result<MultiChannelSeries> {
    check_truth(net, truth, cfg)?;
    replace_paired(net, cfg, |p| {
        let mut out = net.columns[p].clone();
        for (&j, &w) in truth.influencers[p].iter().zip(&truth.weights[p]) {
            for (o, z) in out.iter_mut().zip(outer(net, cfg, j)) {
                *o += w * z;
            }
        }
        out
    })
}

/// Adds `softplus(L_i(t)) + w* sum_{j<k} W_ij W_ik Z_j(t) Z_k(t)`.
pub fn apply_nonlinear_influence(
    net: &Network,
    truth: &GroundTruth,
    cfg: &NetworkConfig,
) -> Result<MultiChannelSeries> {
    check_truth(net, truth, cfg)?;
    replace_paired(net, cfg, |p| {
        let base = &net.columns[p];
        (0..base.len())
            .map(|t| {
                let (mut lin, mut sq) = (0.0, 0.0);
                for (&j, &w) in truth.influencers[p].iter().zip(&truth.weights[p]) {
                    let a = w * outer(net, cfg, j)[t];
                    lin += a;
                    sq += a * a;
                }
                // sum_{j<k} a_j a_k = ((sum a)^2 - sum a^2) / 2
                base[t] + softplus(lin) + cfg.interaction_scale * 0.5 * (lin * lin - sq)
            })
            .collect()
    })
}

/// `X*_i(t) = mu X_i(t-1) + sum_j W_ij Z_j(t-1) + nu_i(t)`, likewise for `Y_i`.
pub fn apply_causative_influence(
    net: &Network,
    truth: &GroundTruth,
    cfg: &NetworkConfig,
) -> Result<MultiChannelSeries> {
    check_truth(net, truth, cfg)?;
    replace_paired(net, cfg, |p| {
        let base = &net.columns[p];
        let mut rng = stream(cfg.seed, STREAM_CAUSATIVE + p as u64);
        (0..base.len())
            .map(|t| {
                let nu = cfg.sigma_nu * normal(&mut rng);
                if t == 0 {
                    return nu;
                }
                let infl: f64 = truth.influencers[p]
                    .iter()
                    .zip(&truth.weights[p])
                    .map(|(&j, &w)| w * outer(net, cfg, j)[t - 1])
                    .sum();
                cfg.mu * base[t - 1] + infl + nu
            })
            .collect()
    })
}

/// Generates a network and applies the configured influence scheme.
pub fn gen_network(cfg: &NetworkConfig) -> Result<(MultiChannelSeries, GroundTruth)> {
    let (net, psis) = generate_base(cfg)?;
    let (influencers, weights) = draw_influencers(cfg)?;
    let half = cfg.n_pairs();
    let truth = GroundTruth {
        labels: net.labels.clone(),
        edges: (0..half).map(|i| (i, half + i)).collect(),
        influencers,
        weights,
        effect_coeffs: psis,
    };
    let series = match cfg.scheme {
        Scheme::Linear => apply_linear_influence(&net, &truth, cfg)?,
        Scheme::Nonlinear => apply_nonlinear_influence(&net, &truth, cfg)?,
        Scheme::Causative => apply_causative_influence(&net, &truth, cfg)?,
    };
    Ok((series, truth))
}
