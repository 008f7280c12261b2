//! Scoring detected links against the planted ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::granger::ConnectivityMatrix;
use crate::simgen::GroundTruth;

/// Confusion counts over a set of ordered pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

/// Which ordered pairs are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Every ordered pair among the tested channels.
    #[default]
    AllCoi,
    /// Both directions of each planted pair: `X_i -> Y_i` and `Y_i -> X_i`.
    DesignedPairs,
    /// Every ordered pair of the whole network; untested pairs count as absent.
    Full,
}

/// Counts over explicit boolean adjacency matrices and a pair list.
pub fn confusion_from_adjacency(
    predicted: &[Vec<bool>],
    actual: &[Vec<bool>],
    pairs: &[(usize, usize)],
) -> Result<ConfusionCounts> {
    let m = predicted.len();
    if actual.len() != m || predicted.iter().chain(actual).any(|r| r.len() != m) {
        return Err(Error::InvalidInput(
            "adjacency matrices must be square and equally sized".into(),
        ));
    }
    let mut c = ConfusionCounts::default();
    for &(i, j) in pairs {
        if i >= m || j >= m || i == j {
            return Err(Error::InvalidInput(format!(
                "pair ({i}, {j}) is not an off-diagonal entry"
            )));
        }
        c.add(predicted[i][j], actual[i][j]);
    }
    Ok(c)
}

/// Compares a connectivity matrix with the planted edges.
pub fn confusion(
    predicted: &ConnectivityMatrix,
    truth: &GroundTruth,
    scope: Scope,
) -> Result<ConfusionCounts> {
    if let Some(e) = predicted
        .entries
        .iter()
        .find(|e| !predicted.labels.contains(&e.cause) || !predicted.labels.contains(&e.effect))
    {
        return Err(Error::InvalidInput(format!(
            "test {} -> {} names a channel outside the matrix labels",
            e.cause, e.effect
        )));
    }
    confusion_for_labels(&predicted.labels, &predicted.adjacency(), truth, scope)
}

/// Like [`confusion`] for a bare adjacency over `tested` (`adjacency[i][j]`: `i` causes `j`).
pub fn confusion_for_labels(
    tested: &[String],
    adjacency: &[Vec<bool>],
    truth: &GroundTruth,
    scope: Scope,
) -> Result<ConfusionCounts> {
    let m = tested.len();
    if adjacency.len() != m || adjacency.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidInput(format!("adjacency must be {m} x {m}")));
    }
    let index = |label: &str| {
        truth.labels.iter().position(|l| l == label).ok_or_else(|| {
            Error::InvalidInput(format!("channel '{label}' is not in the ground truth"))
        })
    };
    let tested: Vec<usize> = tested.iter().map(|l| index(l)).collect::<Result<_>>()?;
    let n = truth.labels.len();
    let mut pred = vec![vec![false; n]; n];
    for (a, &i) in tested.iter().enumerate() {
        for (b, &j) in tested.iter().enumerate() {
            pred[i][j] = a != b && adjacency[a][b];
        }
    }
    let mut actual = vec![vec![false; n]; n];
    for &(c, e) in &truth.edges {
        actual[c][e] = true;
    }
    let pairs: Vec<(usize, usize)> = match scope {
        Scope::AllCoi => tested
            .iter()
            .flat_map(|&i| {
                tested
                    .iter()
                    .filter(move |&&j| j != i)
                    .map(move |&j| (i, j))
            })
            .collect(),
        Scope::DesignedPairs => {
            if let Some(&(c, e)) = truth
                .edges
                .iter()
                .find(|(c, e)| !tested.contains(c) || !tested.contains(e))
            {
                return Err(Error::InvalidInput(format!(
                    "planted pair {} -> {} was not tested",
                    truth.labels[c], truth.labels[e]
                )));
            }
            truth
                .edges
                .iter()
                .flat_map(|&(c, e)| [(c, e), (e, c)])
                .collect()
        }
        Scope::Full => (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect(),
    };
    confusion_from_adjacency(&pred, &actual, &pairs)
}

fn check(c: &ConfusionCounts) -> Result<f64> {
    match c.total() {
        0 => Err(Error::InvalidInput("confusion counts are empty".into())),
        n => Ok(n as f64),
    }
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    let n = check(c)?;
    Ok((c.tp + c.tn) as f64 / n)
}

/// Matthews correlation; zero when any marginal is empty.
pub fn mcc(c: &ConfusionCounts) -> Result<f64> {
    check(c)?;
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(((tp * tn - fp * fn_) / den).clamp(-1.0, 1.0))
}

/// Cohen's kappa; when chance agreement is total, 1 for perfect agreement and 0 otherwise.
pub fn kappa(c: &ConfusionCounts) -> Result<f64> {
    let n = check(c)?;
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let po = (tp + tn) / n;
    let pe = ((tp + fp) * (tp + fn_) + (fn_ + tn) * (fp + tn)) / (n * n);
    if 1.0 - pe == 0.0 {
        return Ok(if po == 1.0 { 1.0 } else { 0.0 });
    }
    Ok((po - pe) / (1.0 - pe))
}

/// Keeps an edge when it appears in at least `threshold` of the inputs.
pub fn consensus_graph(adjacencies: &[Vec<Vec<bool>>], threshold: f64) -> Result<Vec<Vec<bool>>> {
    let first = adjacencies.first().ok_or_else(|| {
        Error::InvalidInput("consensus needs at least one adjacency matrix".into())
    })?;
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold {threshold} must lie in (0, 1]"
        )));
    }
    let rows = first.len();
    let shape_ok = |a: &Vec<Vec<bool>>| {
        a.len() == rows && a.iter().zip(first).all(|(r, f)| r.len() == f.len())
    };
    if !adjacencies.iter().all(shape_ok) {
        return Err(Error::InvalidInput(
            "adjacency matrices differ in shape".into(),
        ));
    }
    let need = threshold * adjacencies.len() as f64 - 1e-9;
    Ok((0..rows)
        .map(|i| {
            (0..first[i].len())
                .map(|j| adjacencies.iter().filter(|a| a[i][j]).count() as f64 >= need)
                .collect()
        })
        .collect())
}
