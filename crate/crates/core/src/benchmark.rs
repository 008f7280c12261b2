//! Simulate, analyze and score over a grid of network settings.

use std::io::Write;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dpca::ComponentRule;
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::metrics::{accuracy, confusion, kappa, mcc, Scope};
use crate::pipeline::{analyze, PipelineConfig, Reduction};
use crate::simgen::{gen_network, NetworkConfig, Scheme};

/// A sweep over schemes, weights, influencer counts, component rules and
/// reductions, each repeated `replicates` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Base network; the swept fields and the seed are overridden per cell.
    pub network: NetworkConfig,
    /// Base analysis; empty `coi_labels` means every paired channel.
    pub pipeline: PipelineConfig,
    pub schemes: Vec<Scheme>,
    pub weights: Vec<f64>,
    pub n_influencers: Vec<usize>,
    pub k_scores: Vec<ComponentRule>,
    pub reductions: Vec<Reduction>,
    pub replicates: usize,
    /// Replicate `r` of every cell uses seed `seed + r`.
    pub seed: u64,
    /// Pairs scored in the `accuracy`, `mcc` and `kappa` columns.
    pub scope: Scope,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            pipeline: PipelineConfig::default(),
            schemes: vec![Scheme::Linear],
            weights: vec![0.1],
            n_influencers: vec![30],
            k_scores: vec![ComponentRule::default()],
            reductions: vec![Reduction::Spectral],
            replicates: 10,
            seed: 0,
            scope: Scope::AllCoi,
        }
    }
}

/// One point of the grid, without the replicate index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub scheme: Scheme,
    pub weight: f64,
    pub n_influencers: usize,
    pub k_scores: ComponentRule,
    pub reduction: Reduction,
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} w={} k={} scores={} {}",
            self.scheme,
            self.weight,
            self.n_influencers,
            rule_label(self.k_scores),
            self.reduction
        )
    }
}

/// Accuracy, MCC and kappa over one set of pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub mcc: f64,
    pub kappa: f64,
}

/// Metrics of one replicate of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub cell: usize,
    pub replicate: usize,
    /// Components actually retained.
    pub k_used: usize,
    /// Over the sweep's scope.
    pub scores: Scores,
    /// Over both directions of each planted pair.
    pub designed: Scores,
}

/// Per-cell mean and standard error over the successful replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: Cell,
    pub n: usize,
    pub mean: Scores,
    pub std_err: Scores,
    pub designed_mean: Scores,
    pub designed_std_err: Scores,
    pub k_used_mean: f64,
}

/// Everything a sweep produced, in deterministic cell-then-replicate order.
#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub cells: Vec<Cell>,
    pub results: Vec<ReplicateResult>,
    /// `(cell, replicate, message)` for every failed replicate.
    pub failures: Vec<(usize, usize, String)>,
}

/// Column label for a component rule: a bare count or a decimal threshold.
pub fn rule_label(rule: ComponentRule) -> String {
    match rule {
        ComponentRule::Count(k) => k.to_string(),
        ComponentRule::VarianceThreshold(th) => format!("{th:?}"),
    }
}

/// Parses the output of [`rule_label`]: integers are counts, decimals thresholds.
pub fn parse_rule(s: &str) -> Result<ComponentRule> {
    let bad = || {
        Error::InvalidParameter(format!(
            "'{s}' is neither a component count nor a variance threshold"
        ))
    };
    if s.contains(['.', 'e', 'E']) {
        let th: f64 = s.parse().map_err(|_| bad())?;
        if !(th > 0.0 && th <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "variance threshold {th} must lie in (0, 1]"
            )));
        }
        Ok(ComponentRule::VarianceThreshold(th))
    } else {
        s.parse().map(ComponentRule::Count).map_err(|_| bad())
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let empty = |axis: &str| {
            Err(Error::InvalidParameter(format!(
                "sweep axis '{axis}' is empty"
            )))
        };
        if self.schemes.is_empty() {
            return empty("schemes");
        }
        if self.weights.is_empty() {
            return empty("weights");
        }
        if self.n_influencers.is_empty() {
            return empty("n_influencers");
        }
        if self.k_scores.is_empty() {
            return empty("k_scores");
        }
        if self.reductions.is_empty() {
            return empty("reductions");
        }
        if self.replicates == 0 {
            return Err(Error::InvalidParameter(
                "at least one replicate is required".into(),
            ));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "influence weight {w} must be non-negative"
            )));
        }
        let mut probe = self.pipeline.clone();
        if probe.coi_labels.is_empty() {
            probe.coi_labels = vec!["a".into(), "b".into()];
        }
        for &k_scores in &self.k_scores {
            PipelineConfig {
                k_scores,
                ..probe.clone()
            }
            .validate()?;
        }
        Ok(())
    }

    /// Grid points in output order: scheme, weight, influencers, rule, reduction.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &scheme in &self.schemes {
            for &weight in &self.weights {
                for &n_influencers in &self.n_influencers {
                    for &k_scores in &self.k_scores {
                        for &reduction in &self.reductions {
                            out.push(Cell {
                                scheme,
                                weight,
                                n_influencers,
                                k_scores,
                                reduction,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    fn network_for(&self, cell: &Cell, replicate: usize) -> NetworkConfig {
        NetworkConfig {
            scheme: cell.scheme,
            influence_weight: cell.weight,
            n_influencers: cell.n_influencers,
            seed: self.seed.wrapping_add(replicate as u64),
            ..self.network.clone()
        }
    }
}

fn score_set(c: &crate::metrics::ConfusionCounts) -> Result<Scores> {
    Ok(Scores {
        accuracy: accuracy(c)?,
        mcc: mcc(c)?,
        kappa: kappa(c)?,
    })
}

/// Runs the whole sweep. Networks are simulated once per replicate and
/// shared by every rule and reduction at that grid point.
pub fn run_sweep(sweep: &SweepConfig) -> Result<BenchmarkOutcome> {
    sweep.validate()?;
    let cells = sweep.cells();
    let per_network = sweep.k_scores.len() * sweep.reductions.len();
    let n_networks = cells.len() / per_network;
    let jobs: Vec<(usize, usize)> = (0..n_networks)
        .flat_map(|g| (0..sweep.replicates).map(move |r| (g, r)))
        .collect();
    info!(
        "running {} cells x {} replicates",
        cells.len(),
        sweep.replicates
    );

    let outcomes: Vec<Vec<(usize, usize, Result<ReplicateResult>)>> = jobs
        .par_iter()
        .map(|&(g, r)| {
            let group = &cells[g * per_network..(g + 1) * per_network];
            let net_cfg = sweep.network_for(&group[0], r);
            let simulated = gen_network(&net_cfg).map_err(|e| e.context("simulate"));
            group
                .iter()
                .enumerate()
                .map(|(off, cell)| {
                    let index = g * per_network + off;
                    let res =
                        simulated
                            .as_ref()
                            .map_err(clone_error)
                            .and_then(|(series, truth)| {
                                let mut cfg = PipelineConfig {
                                    k_scores: cell.k_scores,
                                    reduction: cell.reduction,
                                    ..sweep.pipeline.clone()
                                };
                                if cfg.coi_labels.is_empty() {
                                    cfg.coi_labels = truth.labels[..net_cfg.n].to_vec();
                                }
                                let a = analyze(series, &cfg).map_err(|e| e.context("analyze"))?;
                                let eval = |scope| {
                                    confusion(&a.connectivity, truth, scope)
                                        .and_then(|c| score_set(&c))
                                        .map_err(|e| e.context("evaluate"))
                                };
                                Ok(ReplicateResult {
                                    cell: index,
                                    replicate: r,
                                    k_used: a.resolved.k_scores,
                                    scores: eval(sweep.scope)?,
                                    designed: eval(Scope::DesignedPairs)?,
                                })
                            });
                    (index, r, res)
                })
                .collect()
        })
        .collect();

    let mut flat: Vec<(usize, usize, Result<ReplicateResult>)> =
        outcomes.into_iter().flatten().collect();
    flat.sort_by_key(|(c, r, _)| (*c, *r));
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (c, r, res) in flat {
        match res {
            Ok(row) => results.push(row),
            Err(e) => {
                warn!("cell {} ({}) replicate {r} failed: {e}", c, cells[c]);
                failures.push((c, r, e.to_string()));
            }
        }
    }
    Ok(BenchmarkOutcome {
        cells,
        results,
        failures,
    })
}

/// Errors are not `Clone`; a shared simulation failure is re-raised by message.
fn clone_error(e: &Error) -> Error {
    Error::InvalidInput(e.to_string())
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn summarize(
    rows: &[&ReplicateResult],
    pick: impl Fn(&ReplicateResult) -> Scores,
) -> (Scores, Scores) {
    let col =
        |f: &dyn Fn(&Scores) -> f64| mean_se(&rows.iter().map(|r| f(&pick(r))).collect::<Vec<_>>());
    let (am, ase) = col(&|s| s.accuracy);
    let (mm, mse) = col(&|s| s.mcc);
    let (km, kse) = col(&|s| s.kappa);
    (
        Scores {
            accuracy: am,
            mcc: mm,
            kappa: km,
        },
        Scores {
            accuracy: ase,
            mcc: mse,
            kappa: kse,
        },
    )
}

impl BenchmarkOutcome {
    pub fn summaries(&self) -> Vec<CellSummary> {
        self.cells
            .iter()
            .enumerate()
            .map(|(i, &cell)| {
                let rows: Vec<&ReplicateResult> =
                    self.results.iter().filter(|r| r.cell == i).collect();
                let (mean, std_err) = summarize(&rows, |r| r.scores);
                let (designed_mean, designed_std_err) = summarize(&rows, |r| r.designed);
                let k: Vec<f64> = rows.iter().map(|r| r.k_used as f64).collect();
                CellSummary {
                    cell,
                    n: rows.len(),
                    mean,
                    std_err,
                    designed_mean,
                    designed_std_err,
                    k_used_mean: mean_se(&k).0,
                }
            })
            .collect()
    }

    /// Detail rows in cell-then-replicate order, then one mean row per cell.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(e.into());
        w.write_record([
            "scheme",
            "weight",
            "n_influencers",
            "k_scores",
            "replicate",
            "accuracy",
            "mcc",
            "kappa",
            "method",
            "k_used",
            "accuracy_designed",
            "mcc_designed",
            "kappa_designed",
        ])
        .map_err(io)?;
        let num = |v: f64| {
            if v.is_nan() {
                String::new()
            } else {
                fmt_f64(v)
            }
        };
        let record = |cell: &Cell, rep: String, s: Scores, d: Scores, k: String| {
            vec![
                cell.scheme.to_string(),
                format!("{:?}", cell.weight),
                cell.n_influencers.to_string(),
                rule_label(cell.k_scores),
                rep,
                num(s.accuracy),
                num(s.mcc),
                num(s.kappa),
                cell.reduction.to_string(),
                k,
                num(d.accuracy),
                num(d.mcc),
                num(d.kappa),
            ]
        };
        for r in &self.results {
            let cell = &self.cells[r.cell];
            w.write_record(record(
                cell,
                r.replicate.to_string(),
                r.scores,
                r.designed,
                r.k_used.to_string(),
            ))
            .map_err(io)?;
        }
        for s in self.summaries() {
            w.write_record(record(
                &s.cell,
                "mean".into(),
                s.mean,
                s.designed_mean,
                num(s.k_used_mean),
            ))
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }
}
