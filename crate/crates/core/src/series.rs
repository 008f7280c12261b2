//! The panel of synchronized signals that flows through every stage.

use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A `T x n` panel of real-valued, synchronized channels.
///
/// Values are stored column-major, so each channel is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelSeries {
    values: DMatrix<f64>,
    labels: Vec<String>,
    sample_rate: Option<f64>,
}

impl MultiChannelSeries {
    /// Builds a validated series from a `T x n` matrix and one label per column.
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let (t, n) = values.shape();
        if t < 2 {
            return Err(Error::InvalidInput(format!(
                "series needs at least 2 time points, got {t}"
            )));
        }
        if n < 1 {
            return Err(Error::InvalidInput(
                "series needs at least one channel".into(),
            ));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: labels.len(),
            });
        }
        let mut seen = HashSet::with_capacity(n);
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate channel label '{label}'"
                )));
            }
        }
        for j in 0..n {
            if let Some(i) = values.column(j).iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite value in channel '{}' at time {i}",
                    labels[j]
                )));
            }
        }
        Ok(Self {
            values,
            labels,
            sample_rate: None,
        })
    }

    /// Builds a series from per-channel vectors of equal length.
    pub fn from_columns(columns: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        let t = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != t) {
            return Err(Error::DimensionMismatch {
                expected: t,
                found: bad.len(),
            });
        }
        let n = columns.len();
        let values = DMatrix::from_fn(t, n, |i, j| columns[j][i]);
        Self::new(values, labels)
    }

    pub fn with_sample_rate(mut self, rate: f64) -> Self {
        self.sample_rate = Some(rate);
        self
    }

    pub fn sample_rate(&self) -> Option<f64> {
        self.sample_rate
    }

    /// Number of time points.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn n_channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn channel(&self, j: usize) -> &[f64] {
        let t = self.len();
        &self.values.as_slice()[j * t..(j + 1) * t]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Looks up a channel by label.
    pub fn channel_by_label(&self, label: &str) -> Result<&[f64]> {
        self.index_of(label)
            .map(|j| self.channel(j))
            .ok_or_else(|| Error::InvalidInput(format!("unknown channel label '{label}'")))
    }

    /// A new series holding the listed channels, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let n = self.n_channels();
        if let Some(&bad) = indices.iter().find(|&&j| j >= n) {
            return Err(Error::InvalidInput(format!(
                "channel index {bad} out of range for {n} channels"
            )));
        }
        let columns = indices.iter().map(|&j| self.channel(j).to_vec()).collect();
        let labels = indices.iter().map(|&j| self.labels[j].clone()).collect();
        let mut out = Self::from_columns(columns, labels)?;
        out.sample_rate = self.sample_rate;
        Ok(out)
    }

    pub fn select_labels<S: AsRef<str>>(&self, labels: &[S]) -> Result<Self> {
        let indices = labels
            .iter()
            .map(|l| {
                self.index_of(l.as_ref()).ok_or_else(|| {
                    Error::InvalidInput(format!("unknown channel label '{}'", l.as_ref()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.select(&indices)
    }

    /// Appends channels, keeping labels unique.
    pub fn append(&self, columns: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        let mut all_cols: Vec<Vec<f64>> = (0..self.n_channels())
            .map(|j| self.channel(j).to_vec())
            .collect();
        let mut all_labels = self.labels.clone();
        all_cols.extend(columns);
        all_labels.extend(labels);
        let mut out = Self::from_columns(all_cols, all_labels)?;
        out.sample_rate = self.sample_rate;
        Ok(out)
    }

    /// Per-channel sample means.
    pub fn means(&self) -> Vec<f64> {
        let t = self.len() as f64;
        (0..self.n_channels())
            .map(|j| self.channel(j).iter().sum::<f64>() / t)
            .collect()
    }

    /// The mean-removed panel as a matrix.
    pub fn centered(&self) -> DMatrix<f64> {
        let means = self.means();
        let mut out = self.values.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.add_scalar_mut(-means[j]);
        }
        out
    }
}
