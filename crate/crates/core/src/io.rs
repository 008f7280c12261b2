//! Reading and writing series, derived channels, and analysis reports.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::granger::ConnectivityMatrix;
use crate::series::MultiChannelSeries;

/// Number format used for every float written to CSV: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parses a header-plus-rows CSV into a series.
pub fn read_series_from<R: Read>(reader: R) -> Result<MultiChannelSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let csv_err = |e: csv::Error, row: usize| Error::Format {
        row,
        column: 0,
        message: e.to_string(),
    };
    let labels: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(e, 1))?
        .iter()
        .map(str::to_string)
        .collect();
    if labels.is_empty() || labels.iter().any(String::is_empty) {
        return Err(Error::Format {
            row: 1,
            column: 0,
            message: "header must name every column".into(),
        });
    }
    let mut seen = HashSet::new();
    for (c, l) in labels.iter().enumerate() {
        if !seen.insert(l) {
            return Err(Error::Format {
                row: 1,
                column: c + 1,
                message: format!("duplicate label '{l}'"),
            });
        }
    }
    let n = labels.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n];
    for (i, rec) in rdr.records().enumerate() {
        // Row numbers are 1-based file lines; the header is line 1.
        let row = i + 2;
        let rec = rec.map_err(|e| csv_err(e, row))?;
        if rec.len() != n {
            return Err(Error::Format {
                row,
                column: rec.len().min(n) + 1,
                message: format!("expected {n} cells, found {}", rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Format {
                row,
                column: c + 1,
                message: format!("cannot parse '{cell}' as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Format {
                    row,
                    column: c + 1,
                    message: format!("non-finite value '{cell}'"),
                });
            }
            columns[c].push(v);
        }
    }
    MultiChannelSeries::from_columns(columns, labels)
}

pub fn read_series(path: &Path) -> Result<MultiChannelSeries> {
    let file = File::open(path)
        .map_err(|e| Error::from(e).context(format!("opening {}", path.display())))?;
    read_series_from(file).map_err(|e| e.context(format!("reading {}", path.display())))
}

pub fn write_series_to<W: Write>(series: &MultiChannelSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(series.labels()).map_err(io)?;
    let n = series.n_channels();
    for t in 0..series.len() {
        w.write_record((0..n).map(|c| fmt_f64(series.channel(c)[t])))
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_series(series: &MultiChannelSeries, path: &Path) -> Result<()> {
    let file = File::create(path)
        .map_err(|e| Error::from(e).context(format!("creating {}", path.display())))?;
    write_series_to(series, BufWriter::new(file))
}

/// Derived channels appended to a recording.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationSpec {
    /// `a - b`, labelled `a-b`.
    pub pair_differences: Vec<(String, String)>,
    /// Mean of a label set under a new label.
    pub regional_averages: Vec<(String, Vec<String>)>,
    /// Centre minus the mean of its neighbours, labelled `lap(centre)`.
    pub laplacians: Vec<(String, Vec<String>)>,
    /// `a * b`, labelled `a*b`.
    pub products: Vec<(String, String)>,
}

impl AugmentationSpec {
    pub fn len(&self) -> usize {
        self.pair_differences.len()
            + self.regional_averages.len()
            + self.laplacians.len()
            + self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Appends the derived channels, in spec order.
pub fn augment_channels(
    series: &MultiChannelSeries,
    spec: &AugmentationSpec,
) -> Result<MultiChannelSeries> {
    let get = |label: &str| {
        series
            .index_of(label)
            .map(|j| series.channel(j))
            .ok_or_else(|| Error::InvalidSpec(format!("unknown channel '{label}'")))
    };
    let mean_of = |labels: &[String]| -> Result<Vec<f64>> {
        if labels.is_empty() {
            return Err(Error::InvalidSpec(
                "an average needs at least one channel".into(),
            ));
        }
        let mut acc = vec![0.0; series.len()];
        for l in labels {
            for (a, v) in acc.iter_mut().zip(get(l)?) {
                *a += v;
            }
        }
        let k = labels.len() as f64;
        Ok(acc.into_iter().map(|a| a / k).collect())
    };
    let mut cols = Vec::with_capacity(spec.len());
    let mut labels = Vec::with_capacity(spec.len());
    for (a, b) in &spec.pair_differences {
        let (x, y) = (get(a)?, get(b)?);
        cols.push(x.iter().zip(y).map(|(p, q)| p - q).collect());
        labels.push(format!("{a}-{b}"));
    }
    for (name, set) in &spec.regional_averages {
        cols.push(mean_of(set)?);
        labels.push(name.clone());
    }
    for (centre, neighbours) in &spec.laplacians {
        let c = get(centre)?;
        let m = mean_of(neighbours)?;
        cols.push(c.iter().zip(&m).map(|(p, q)| p - q).collect());
        labels.push(format!("lap({centre})"));
    }
    for (a, b) in &spec.products {
        let (x, y) = (get(a)?, get(b)?);
        cols.push(x.iter().zip(y).map(|(p, q)| p * q).collect());
        labels.push(format!("{a}*{b}"));
    }
    let mut seen: HashSet<&str> = series.labels().iter().map(String::as_str).collect();
    if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
        return Err(Error::InvalidSpec(format!(
            "derived label '{dup}' is not unique"
        )));
    }
    series.append(cols, labels)
}

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Paths of the files produced by [`write_report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub json: PathBuf,
    pub adjacency: PathBuf,
    pub dot: PathBuf,
}

/// Writes `<stem>.json`, `<stem>_adjacency.csv` and `<stem>.dot` into `dir`.
pub fn write_report<T: Serialize>(
    report: &T,
    connectivity: &ConnectivityMatrix,
    dir: &Path,
    stem: &str,
) -> Result<ReportFiles> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::from(e).context(format!("creating {}", dir.display())))?;
    let files = ReportFiles {
        json: dir.join(format!("{stem}.json")),
        adjacency: dir.join(format!("{stem}_adjacency.csv")),
        dot: dir.join(format!("{stem}.dot")),
    };
    let create = |p: &Path| {
        File::create(p)
            .map(BufWriter::new)
            .map_err(|e| Error::from(e).context(format!("creating {}", p.display())))
    };
    let mut json = create(&files.json)?;
    serde_json::to_writer_pretty(&mut json, report)?;
    json.write_all(b"\n")?;
    json.flush()?;
    write_adjacency(connectivity, create(&files.adjacency)?)?;
    let mut dot = create(&files.dot)?;
    dot.write_all(to_dot(connectivity).as_bytes())?;
    dot.flush()?;
    Ok(files)
}

/// Square 0/1 matrix with labels on both axes and an empty diagonal.
pub fn write_adjacency<W: Write>(connectivity: &ConnectivityMatrix, writer: W) -> Result<()> {
    write_adjacency_matrix(&connectivity.labels, &connectivity.adjacency(), writer)
}

/// [`write_adjacency`] for a bare matrix; `adjacency[i][j]` means `i` causes `j`.
pub fn write_adjacency_matrix<W: Write>(
    labels: &[String],
    adjacency: &[Vec<bool>],
    writer: W,
) -> Result<()> {
    let m = labels.len();
    if adjacency.len() != m || adjacency.iter().any(|r| r.len() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: adjacency.len(),
        });
    }
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(std::iter::once("").chain(labels.iter().map(String::as_str)))
        .map_err(io)?;
    for (i, l) in labels.iter().enumerate() {
        let cells = (0..m).map(|j| match (i == j, adjacency[i][j]) {
            (true, _) => "",
            (false, true) => "1",
            (false, false) => "0",
        });
        w.write_record(std::iter::once(l.as_str()).chain(cells))
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_adjacency`]; empty cells read as `false`.
pub fn read_adjacency_from<R: Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<bool>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(reader);
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(r) => r.map_err(|e| Error::Format {
            row: 1,
            column: 0,
            message: e.to_string(),
        })?,
        None => return Err(Error::InvalidInput("adjacency file is empty".into())),
    };
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut adj = Vec::with_capacity(labels.len());
    for (r, rec) in rows.enumerate() {
        let row = r + 2;
        let rec = rec.map_err(|e| Error::Format {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if rec.get(0) != labels.get(r).map(String::as_str) {
            return Err(Error::Format {
                row,
                column: 1,
                message: "row label does not match the header".into(),
            });
        }
        let cells = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, c)| match c.trim() {
                "1" => Ok(true),
                "0" | "" => Ok(false),
                other => Err(Error::Format {
                    row,
                    column: j + 2,
                    message: format!("expected 0 or 1, found '{other}'"),
                }),
            })
            .collect::<Result<Vec<bool>>>()?;
        adj.push(cells);
    }
    if adj.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: adj.len(),
        });
    }
    Ok((labels, adj))
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Digraph with every channel as a node and significant links as edges.
pub fn to_dot(connectivity: &ConnectivityMatrix) -> String {
    let mut out = String::from("digraph connectivity {\n");
    for l in &connectivity.labels {
        out.push_str(&format!("  {};\n", dot_id(l)));
    }
    for e in connectivity.entries.iter().filter(|e| e.reject) {
        out.push_str(&format!(
            "  {} -> {} [label=\"p={:.3e}\"];\n",
            dot_id(&e.cause),
            dot_id(&e.effect),
            e.p_value
        ));
    }
    out.push_str("}\n");
    out
}
