use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::Args;
use log::{info, warn};
use serde::de::DeserializeOwned;
use serde_json::json;

use hdgc::benchmark::{parse_rule, run_sweep, SweepConfig};
use hdgc::dpca::{ComponentRule, Kernel, Sidedness};
use hdgc::granger::{Correction, LagCriterion};
use hdgc::io::{
    augment_channels, read_adjacency_from, read_series, write_adjacency_matrix, write_report,
    write_series, AugmentationSpec,
};
use hdgc::metrics::{
    accuracy, confusion_for_labels, consensus_graph, kappa, mcc, ConfusionCounts, Scope,
};
use hdgc::pipeline::{
    analyze as run_pipeline, AnalysisReport, AutoCount, PipelineConfig, Reduction,
};
use hdgc::simgen::{gen_network, GroundTruth, NetworkConfig, Scheme};

use crate::{Common, UsageError};

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Loads a config file; malformed JSON is a usage error.
fn load_config<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
}

/// Loads a data file; malformed JSON is a data error.
fn load_data<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text)
        .map_err(hdgc::Error::from)
        .with_context(|| format!("parsing {}", path.display()))
}

fn check_config(r: hdgc::Result<()>) -> anyhow::Result<()> {
    r.map_err(|e| UsageError(format!("invalid configuration: {e}")).into())
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn parse_correction(s: &str) -> Result<Correction, String> {
    match s.to_ascii_lowercase().as_str() {
        "none" => Ok(Correction::None),
        "bh" | "benjamini_hochberg" | "fdr" => Ok(Correction::BenjaminiHochberg),
        other => Err(format!(
            "unknown correction '{other}' (expected none or bh)"
        )),
    }
}

fn parse_scope(s: &str) -> Result<Scope, String> {
    match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "all_coi" | "coi" => Ok(Scope::AllCoi),
        "designed_pairs" | "designed" => Ok(Scope::DesignedPairs),
        "full" => Ok(Scope::Full),
        other => Err(format!(
            "unknown scope '{other}' (expected all_coi, designed_pairs or full)"
        )),
    }
}

fn parse_k_scores(s: &str) -> Result<ComponentRule, String> {
    parse_rule(s).map_err(|e| e.to_string())
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Network config (JSON); flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// linear, nonlinear or causative.
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Paired channels of interest (even).
    #[arg(long)]
    n: Option<usize>,
    /// Outer channels.
    #[arg(long)]
    n_external: Option<usize>,
    /// Series length.
    #[arg(long)]
    length: Option<usize>,
    /// Influence weight.
    #[arg(long)]
    weight: Option<f64>,
    /// Outer channels acting on each paired channel.
    #[arg(long)]
    influencers: Option<usize>,
}

pub fn simulate(common: &Common, args: SimulateArgs) -> anyhow::Result<()> {
    let mut cfg: NetworkConfig = match &args.config {
        Some(p) => load_config(p)?,
        None => NetworkConfig::default(),
    };
    if let Some(v) = args.scheme {
        cfg.scheme = v;
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.n_external {
        cfg.n_external = v;
    }
    if let Some(v) = args.length {
        cfg.t = v;
    }
    if let Some(v) = args.weight {
        cfg.influence_weight = v;
    }
    if let Some(v) = args.influencers {
        cfg.n_influencers = v;
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    check_config(cfg.validate())?;

    let (series, truth) = gen_network(&cfg).context("simulate")?;
    create_dir(&common.output_dir)?;
    let series_path = common.output_dir.join("series.csv");
    let truth_path = common.output_dir.join("truth.json");
    write_series(&series, &series_path)?;
    write_json(&truth_path, &truth)?;
    info!("{} scheme, seed {}", cfg.scheme, cfg.seed);
    println!(
        "wrote {} ({} x {}) and {}",
        series_path.display(),
        series.len(),
        series.n_channels(),
        truth_path.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Series CSV with one labelled column per channel.
    input: PathBuf,
    /// Pipeline config (JSON); flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Channels of interest, comma-separated.
    #[arg(long, value_delimiter = ',')]
    coi: Option<Vec<String>>,
    /// Background channels, comma-separated (default: every other channel).
    #[arg(long, value_delimiter = ',')]
    background: Option<Vec<String>>,
    /// spectral, static or none.
    #[arg(long)]
    reduction: Option<Reduction>,
    /// Retained scores: a count (`3`) or a variance threshold (`0.75`).
    #[arg(long, value_parser = parse_k_scores)]
    k_scores: Option<ComponentRule>,
    /// Lag window for the spectral estimate, or `auto`.
    #[arg(long)]
    l_window: Option<AutoCount>,
    /// Filter half-length, or `auto`.
    #[arg(long)]
    l_filter: Option<AutoCount>,
    /// Frequency grid size, or `auto`.
    #[arg(long)]
    n_freq: Option<AutoCount>,
    /// Lag-window kernel.
    #[arg(long)]
    kernel: Option<Kernel>,
    /// two-sided or one-sided filters.
    #[arg(long)]
    sidedness: Option<Sidedness>,
    /// Add pairwise products of scores to the confound regression.
    #[arg(long)]
    interactions: bool,
    /// bic, aic or fixed:<p>.
    #[arg(long)]
    lags: Option<LagCriterion>,
    /// Largest order tried by bic/aic.
    #[arg(long)]
    max_lag: Option<usize>,
    /// Significance level.
    #[arg(long)]
    alpha: Option<f64>,
    /// none or bh.
    #[arg(long, value_parser = parse_correction)]
    correction: Option<Correction>,
    /// Base name of the report files.
    #[arg(long, default_value = "report")]
    stem: String,
}

pub fn analyze(common: &Common, args: AnalyzeArgs) -> anyhow::Result<()> {
    let mut cfg: PipelineConfig = match &args.config {
        Some(p) => load_config(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = args.coi {
        cfg.coi_labels = v;
    }
    if let Some(v) = args.background {
        cfg.background_labels = Some(v);
    }
    if let Some(v) = args.reduction {
        cfg.reduction = v;
    }
    if let Some(v) = args.k_scores {
        cfg.k_scores = v;
    }
    if let Some(v) = args.l_window {
        cfg.l_window = v;
    }
    if let Some(v) = args.l_filter {
        cfg.l_filter = v;
    }
    if let Some(v) = args.n_freq {
        cfg.n_freq = v;
    }
    if let Some(v) = args.kernel {
        cfg.kernel = v;
    }
    if let Some(v) = args.sidedness {
        cfg.sidedness = v;
    }
    if args.interactions {
        cfg.interactions = true;
    }
    if let Some(v) = args.lags {
        cfg.lags = v;
    }
    if let Some(v) = args.max_lag {
        cfg.max_lag = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.correction {
        cfg.correction = v;
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    check_config(cfg.validate())?;

    let series = read_series(&args.input)?;
    let analysis = run_pipeline(&series, &cfg)?;
    for l in &analysis.dropped_channels {
        warn!("background channel {l} was dropped");
    }
    let files = write_report(
        &analysis.report(&cfg),
        &analysis.connectivity,
        &common.output_dir,
        &args.stem,
    )?;
    info!(
        "{} reduction, {} scores, {} tests",
        analysis.resolved.reduction,
        analysis.resolved.k_scores,
        analysis.connectivity.entries.len()
    );
    for e in analysis.connectivity.entries.iter().filter(|e| e.reject) {
        println!("{} -> {}\tp={:.3e}", e.cause, e.effect, e.p_value);
    }
    println!("wrote {}", files.json.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    /// Sweep config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replicates per cell.
    #[arg(long)]
    replicates: Option<usize>,
    /// Name of the metrics CSV inside the output directory.
    #[arg(long, default_value = "benchmark.csv")]
    output: String,
}

pub fn benchmark(common: &Common, args: BenchmarkArgs) -> anyhow::Result<()> {
    let mut sweep: SweepConfig = match &args.config {
        Some(p) => load_config(p)?,
        None => SweepConfig::default(),
    };
    if let Some(v) = args.replicates {
        sweep.replicates = v;
    }
    if let Some(v) = common.seed {
        sweep.seed = v;
    }
    check_config(sweep.validate())?;

    let cells = sweep.cells().len();
    info!("{cells} cells x {} replicates", sweep.replicates);
    let outcome = run_sweep(&sweep)?;
    create_dir(&common.output_dir)?;
    let path = common.output_dir.join(&args.output);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    outcome.write_csv(BufWriter::new(file))?;
    println!("wrote {}", path.display());
    let total = cells * sweep.replicates;
    match outcome.failures.len() {
        0 => Ok(()),
        n => Err(anyhow!("{n} of {total} runs failed")),
    }
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Report JSON files or adjacency CSVs.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Ground truth written by `simulate`.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// all_coi, designed_pairs or full.
    #[arg(long, default_value = "all_coi", value_parser = parse_scope)]
    scope: Scope,
    /// Keep edges found in at least this fraction of the inputs.
    #[arg(long)]
    consensus: Option<f64>,
}

type Adjacency = (Vec<String>, Vec<Vec<bool>>);

fn load_adjacency(path: &Path) -> anyhow::Result<Adjacency> {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        return read_adjacency_from(BufReader::new(file))
            .with_context(|| format!("parsing {}", path.display()));
    }
    let report: AnalysisReport = load_data(path)?;
    let labels = report.config.coi_labels;
    let index = |l: &str| {
        labels
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| anyhow!("{}: test names unknown channel '{l}'", path.display()))
    };
    let mut adj = vec![vec![false; labels.len()]; labels.len()];
    for t in &report.tests {
        adj[index(&t.cause)?][index(&t.effect)?] = t.reject;
    }
    Ok((labels, adj))
}

fn scores(c: &ConfusionCounts) -> anyhow::Result<serde_json::Value> {
    Ok(json!({
        "tp": c.tp,
        "fp": c.fp,
        "fn": c.fn_,
        "tn": c.tn,
        "accuracy": accuracy(c)?,
        "mcc": mcc(c)?,
        "kappa": kappa(c)?,
    }))
}

pub fn evaluate(common: &Common, args: EvaluateArgs) -> anyhow::Result<()> {
    if args.truth.is_none() && args.consensus.is_none() {
        return Err(UsageError("evaluate needs --truth, --consensus or both".into()).into());
    }
    let truth: Option<GroundTruth> = args.truth.as_deref().map(load_data).transpose()?;
    let inputs: Vec<Adjacency> = args
        .inputs
        .iter()
        .map(|p| load_adjacency(p))
        .collect::<anyhow::Result<_>>()?;

    let mut out = json!({ "scope": args.scope });
    if let Some(truth) = &truth {
        let mut per_input = Vec::with_capacity(inputs.len());
        for (path, (labels, adj)) in args.inputs.iter().zip(&inputs) {
            let c = confusion_for_labels(labels, adj, truth, args.scope)
                .with_context(|| format!("scoring {}", path.display()))?;
            let mut entry = scores(&c)?;
            entry["input"] = json!(path.display().to_string());
            println!(
                "{}\taccuracy={:.4}\tmcc={:.4}\tkappa={:.4}",
                path.display(),
                entry["accuracy"],
                entry["mcc"],
                entry["kappa"]
            );
            per_input.push(entry);
        }
        out["inputs"] = json!(per_input);
    }

    create_dir(&common.output_dir)?;
    if let Some(threshold) = args.consensus {
        let labels = &inputs[0].0;
        if let Some((p, _)) = args
            .inputs
            .iter()
            .zip(&inputs)
            .find(|(_, (l, _))| l != labels)
        {
            return Err(hdgc::Error::InvalidInput(format!(
                "{} has different channels from {}",
                p.display(),
                args.inputs[0].display()
            ))
            .context("consensus")
            .into());
        }
        let adjs: Vec<Vec<Vec<bool>>> = inputs.iter().map(|(_, a)| a.clone()).collect();
        let graph = consensus_graph(&adjs, threshold).map_err(|e| e.context("consensus"))?;
        let path = common.output_dir.join("consensus_adjacency.csv");
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_adjacency_matrix(labels, &graph, BufWriter::new(file))?;
        let mut entry = json!({ "threshold": threshold, "n_inputs": inputs.len() });
        if let Some(truth) = &truth {
            let c = confusion_for_labels(labels, &graph, truth, args.scope)?;
            entry["scores"] = scores(&c)?;
            println!(
                "consensus\taccuracy={:.4}\tmcc={:.4}\tkappa={:.4}",
                entry["scores"]["accuracy"], entry["scores"]["mcc"], entry["scores"]["kappa"]
            );
        }
        out["consensus"] = entry;
        println!("wrote {}", path.display());
    }
    let path = common.output_dir.join("evaluation.json");
    write_json(&path, &out)?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    /// Series CSV to extend.
    input: PathBuf,
    /// Augmentation spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Name of the augmented CSV inside the output directory.
    #[arg(long, default_value = "augmented.csv")]
    output: String,
}

pub fn augment(common: &Common, args: AugmentArgs) -> anyhow::Result<()> {
    let spec: AugmentationSpec = load_config(&args.spec)?;
    let series = read_series(&args.input)?;
    let out = augment_channels(&series, &spec).context("augment")?;
    create_dir(&common.output_dir)?;
    let path = common.output_dir.join(&args.output);
    write_series(&out, &path)?;
    println!(
        "wrote {} ({} channels, {} derived)",
        path.display(),
        out.n_channels(),
        spec.len()
    );
    Ok(())
}
