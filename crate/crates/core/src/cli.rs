//! Command implementations behind the `cfsurv` binary.
//!
//! Every command reads an optional flat JSON config; command-line flags
//! override its fields. Output files are deterministic functions of the
//! inputs and the seed.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::conformal::{
    conformalize, conformalize_naive, ConformalConfig, ConformalModel, MeanBackend, Predictor,
    QuantileBackend, ScoreKind, WeightSpec,
};
use crate::data::{format_value, load_csv, load_covariates_csv, split, CsvTable, Dataset, Schema};
use crate::error::{Error, Result};
use crate::estimators::BernoulliKind;
use crate::extensions::{conformalize_counterfactual, conformalize_mondrian, GroupPartition, MondrianModel, PropensitySpec};
use crate::simulation::{
    evaluate, generate, resolve_c0, run_experiment, C0Policy, AutoC0, EvaluationReport, ExperimentConfig,
    ExperimentReport, GeneratorKind, GeneratorSpec, OracleInfo, Simulated,
};

#[derive(Debug, Parser)]
#[command(name = "cfsurv", version, about = "Calibrated lower predictive bounds for censored survival times")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a simulated dataset as CSV.
    Gen(GenArgs),
    /// Fit a conformal model and write it as JSON.
    Fit(FitArgs),
    /// Compute bounds for covariate rows.
    Predict(PredictArgs),
    /// Score a fitted model on a labelled test CSV.
    Evaluate(EvaluateArgs),
    /// Run replicated simulations.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Generator kind, e.g. table1-uvt-homo.
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run metadata JSON output.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long)]
    pub score: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// A number, `auto-train` or `auto-calib`.
    #[arg(long)]
    pub c0: Option<String>,
    /// Comma-separated candidate thresholds.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// `estimated` or `unit`.
    #[arg(long)]
    pub weights: Option<String>,
    /// `logistic` or `knn-frequency`.
    #[arg(long)]
    pub censoring_model: Option<String>,
    #[arg(long)]
    pub floor: Option<f64>,
    /// `knn` or `linear-pinball`.
    #[arg(long)]
    pub quantile_backend: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Covariate column defining Mondrian groups: its distinct levels, or
    /// `sign:<column>` for the groups `x < 0` and `x >= 0`.
    #[arg(long)]
    pub groups: Option<String>,
    #[arg(long)]
    pub per_group_training: bool,
    /// Treatment indicator column; bounds target the treated outcome.
    #[arg(long)]
    pub treatment: Option<String>,
    /// Use the `c_end` column as the censoring time.
    #[arg(long)]
    pub two_censoring: bool,
    /// Fit the unweighted baseline on observed times instead.
    #[arg(long)]
    pub naive: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Bounds CSV output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Report JSON output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub strata: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Comma-separated list of cqr, cdr, cmr, naive.
    #[arg(long, alias = "method")]
    pub methods: Option<String>,
    #[arg(long)]
    pub c0: Option<String>,
    #[arg(long)]
    pub weights: Option<String>,
    /// Worker threads; defaults to `CFS_JOBS`, then all cores.
    #[arg(long, env = "CFS_JOBS")]
    pub jobs: Option<usize>,
    /// Report JSON output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub strata: Option<PathBuf>,
}

/// Entry point used by the binary.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Experiment(a) => cmd_experiment(a),
    }
}

/// JSON written to standard error on failure.
pub fn error_json(e: &Error) -> String {
    serde_json::json!({
        "error": {
            "kind": e.kind().as_str(),
            "message": e.to_string(),
        }
    })
    .to_string()
}

fn read_config(path: Option<&Path>) -> Result<Map<String, Value>> {
    let Some(path) = path else { return Ok(Map::new()) };
    match serde_json::from_str::<Value>(&std::fs::read_to_string(path)?)? {
        Value::Object(m) => Ok(m),
        _ => Err(Error::invalid(format!("config {} is not a JSON object", path.display()))),
    }
}

fn set<T: Serialize>(m: &mut Map<String, Value>, key: &str, v: Option<T>) -> Result<()> {
    if let Some(v) = v {
        m.insert(key.to_string(), serde_json::to_value(v)?);
    }
    Ok(())
}

fn set_flag(m: &mut Map<String, Value>, key: &str, on: bool) {
    if on {
        m.insert(key.to_string(), Value::Bool(true));
    }
}

fn list<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<Vec<T>> {
    s.split(',').map(|p| p.trim().parse()).collect()
}

fn numbers(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::invalid(format!("`{p}` is not a number"))))
        .collect()
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn csv_writer(path: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::invalid(format!("missing required `{what}` (flag or config field)")))
}

// ---------------------------------------------------------------- gen

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GenConfig {
    generator: GeneratorKind,
    n: usize,
    seed: u64,
    out: Option<PathBuf>,
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let mut m = read_config(a.config.as_deref())?;
    if let Some(g) = a.generator {
        m.insert("generator".into(), serde_json::to_value(GeneratorKind::from_name(&g)?)?);
    }
    set(&mut m, "n", a.n)?;
    set(&mut m, "seed", a.seed)?;
    set(&mut m, "out", a.out)?;
    let cfg: GenConfig = serde_json::from_value(Value::Object(m))?;
    let sim = generate(&GeneratorSpec {
        kind: cfg.generator.clone(),
        n: cfg.n,
        seed: cfg.seed,
    })?;
    let two = matches!(cfg.generator, GeneratorKind::TwoCensoring);
    write_simulated_csv(&sim, two, cfg.out.as_deref())
}

/// Dataset columns plus the ground truth (`mu`, `sigma`, `latent_time`,
/// `treatment`) when the generator provides it.
pub fn write_simulated_csv(sim: &Simulated, two_censoring: bool, path: Option<&Path>) -> Result<()> {
    let ds = &sim.dataset;
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = (1..=ds.p()).map(|j| format!("x{j}")).collect();
    header.push(if two_censoring { "c_end" } else { "censoring" }.into());
    header.extend(["observed", "event", "true_time"].map(String::from));
    if sim.params.is_some() {
        header.extend(["mu", "sigma"].map(String::from));
    }
    header.push("latent_time".into());
    if sim.treated.is_some() {
        header.push("treatment".into());
    }
    w.write_record(&header)?;
    for (i, r) in ds.records().iter().enumerate() {
        let mut row: Vec<String> = r.x.iter().map(|&v| format_value(v)).collect();
        row.push(format_value(r.c));
        row.push(format_value(r.t_tilde));
        row.push(if r.event { "1" } else { "0" }.into());
        row.push(r.t_true.map(format_value).unwrap_or_default());
        if let Some(p) = &sim.params {
            row.push(format_value(p[i].0));
            row.push(format_value(p[i].1));
        }
        row.push(format_value(sim.latent[i]));
        if let Some(t) = &sim.treated {
            row.push(if t[i] { "1" } else { "0" }.into());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    Estimated,
    Unit,
}

impl std::str::FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "estimated" => Ok(WeightMode::Estimated),
            "unit" => Ok(WeightMode::Unit),
            other => Err(Error::invalid(format!("unknown weight mode `{other}`"))),
        }
    }
}

/// Resolved configuration of a `fit` run; recorded in the metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub meta: Option<PathBuf>,
    pub score: ScoreKind,
    pub alpha: f64,
    pub c0: C0Policy,
    pub grid: Option<Vec<f64>>,
    pub holdout_fraction: f64,
    pub seed: u64,
    pub train_fraction: f64,
    pub weights: WeightMode,
    pub censoring_model: BernoulliKind,
    pub floor: f64,
    pub quantile_backend: QuantileBackend,
    pub mean_backend: MeanBackend,
    pub k: Option<usize>,
    pub censoring_k: Option<usize>,
    pub covariates: Vec<String>,
    pub censoring_column: String,
    pub observed_column: String,
    pub event_column: String,
    pub true_time_column: String,
    pub groups: Option<String>,
    pub per_group_training: bool,
    pub treatment: Option<String>,
    pub propensity: PropensitySpec,
    pub two_censoring: bool,
    pub naive: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        let s = Schema::default();
        Self {
            data: None,
            out: None,
            meta: None,
            score: ScoreKind::Cqr,
            alpha: 0.1,
            c0: C0Policy::Auto(AutoC0::AutoTrain),
            grid: None,
            holdout_fraction: 0.25,
            seed: 1,
            train_fraction: 0.5,
            weights: WeightMode::Estimated,
            censoring_model: BernoulliKind::Logistic,
            floor: 0.05,
            quantile_backend: QuantileBackend::Knn,
            mean_backend: MeanBackend::Knn,
            k: None,
            censoring_k: None,
            covariates: Vec::new(),
            censoring_column: s.censoring,
            observed_column: s.observed,
            event_column: s.event,
            true_time_column: s.true_time,
            groups: None,
            per_group_training: false,
            treatment: None,
            propensity: PropensitySpec::default(),
            two_censoring: false,
            naive: false,
        }
    }
}

impl FitConfig {
    fn schema(&self) -> Schema {
        Schema {
            covariates: self.covariates.clone(),
            censoring: if self.two_censoring { "c_end".into() } else { self.censoring_column.clone() },
            observed: self.observed_column.clone(),
            event: self.event_column.clone(),
            true_time: self.true_time_column.clone(),
        }
    }

    pub fn conformal(&self) -> ConformalConfig {
        ConformalConfig {
            score: self.score,
            alpha: self.alpha,
            quantile_backend: self.quantile_backend,
            mean_backend: self.mean_backend,
            k: self.k,
            censoring_k: self.censoring_k,
            weights: match self.weights {
                WeightMode::Unit => WeightSpec::Unit,
                WeightMode::Estimated => WeightSpec::Estimated {
                    model: self.censoring_model,
                    floor: self.floor,
                },
            },
            pinball: Default::default(),
        }
    }
}

/// A fitted model as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum FittedModel {
    Standard(ConformalModel),
    Mondrian(MondrianModel),
}

impl FittedModel {
    pub fn predictor(&self) -> &dyn Predictor {
        match self {
            FittedModel::Standard(m) => m,
            FittedModel::Mondrian(m) => m,
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            FittedModel::Standard(m) => m.alpha,
            FittedModel::Mondrian(m) => m.alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: String,
    /// Covariate column names, in model order.
    pub covariates: Vec<String>,
    pub model: FittedModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub version: String,
    pub command: String,
    pub config: FitConfig,
    pub c0: Option<f64>,
    pub n: usize,
    pub n_train: usize,
    pub n_calib: usize,
    pub split_seed: u64,
}

fn covariate_names(path: &Path, schema: &Schema) -> Result<Vec<String>> {
    let table = CsvTable::read(path)?;
    let cols = table.covariate_columns(&schema.covariates)?;
    Ok(cols.into_iter().map(|c| table.headers[c].clone()).collect())
}

fn treatment_flags(path: &Path, column: &str) -> Result<Vec<bool>> {
    let table = CsvTable::read(path)?;
    let col = table.require(column)?;
    (1..=table.rows.len())
        .map(|row| {
            table.optional_flag(row, Some(col))?.ok_or_else(|| Error::InvalidRow {
                row,
                message: format!("column `{column}`: missing treatment flag"),
            })
        })
        .collect()
}

/// Fit as configured; returns the model file and its metadata.
pub fn fit_from_config(cfg: &FitConfig) -> Result<(ModelFile, FitMetadata)> {
    let data = required(&cfg.data, "data")?;
    let schema = cfg.schema();
    let ds = load_csv(data, &schema)?;
    let names = covariate_names(data, &schema)?;
    let ccfg = cfg.conformal();
    ccfg.validate()?;
    let sp = split(&ds, cfg.train_fraction, cfg.seed)?;
    let (model, c0) = if cfg.naive {
        (FittedModel::Standard(conformalize_naive(&ds, &sp, &ccfg)?), None)
    } else {
        let c0 = resolve_c0(cfg.c0, &ds, &sp, cfg.grid.as_deref(), &ccfg, cfg.holdout_fraction, cfg.seed)?;
        let model = if let Some(g) = &cfg.groups {
            let (by_sign, name) = match g.strip_prefix("sign:") {
                Some(rest) => (true, rest),
                None => (false, g.as_str()),
            };
            let col = names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
            let part = if by_sign {
                GroupPartition::sign(col)
            } else {
                GroupPartition::levels_from(&ds.covariates(&sp.train), col)?
            };
            FittedModel::Mondrian(conformalize_mondrian(&ds, &sp, c0, &ccfg, &part, cfg.per_group_training)?)
        } else if let Some(t) = &cfg.treatment {
            let treated = treatment_flags(data, t)?;
            FittedModel::Standard(conformalize_counterfactual(&ds, &treated, &sp, c0, &ccfg, &cfg.propensity)?)
        } else {
            FittedModel::Standard(conformalize(&ds, &sp, c0, &ccfg)?)
        };
        (model, Some(c0))
    };
    let meta = FitMetadata {
        version: env!("CARGO_PKG_VERSION").into(),
        command: "fit".into(),
        config: cfg.clone(),
        c0,
        n: ds.len(),
        n_train: sp.train.len(),
        n_calib: sp.calib.len(),
        split_seed: sp.seed,
    };
    Ok((
        ModelFile {
            version: env!("CARGO_PKG_VERSION").into(),
            covariates: names,
            model,
        },
        meta,
    ))
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let mut m = read_config(a.config.as_deref())?;
    set(&mut m, "data", a.data)?;
    set(&mut m, "out", a.out)?;
    set(&mut m, "meta", a.meta)?;
    set(&mut m, "score", a.score.map(|s| s.parse::<ScoreKind>()).transpose()?)?;
    set(&mut m, "alpha", a.alpha)?;
    set(&mut m, "c0", a.c0.map(|s| s.parse::<C0Policy>()).transpose()?)?;
    set(&mut m, "grid", a.grid.map(|s| numbers(&s)).transpose()?)?;
    set(&mut m, "seed", a.seed)?;
    set(&mut m, "train_fraction", a.train_fraction)?;
    set(&mut m, "weights", a.weights.map(|s| s.parse::<WeightMode>()).transpose()?)?;
    set(&mut m, "censoring_model", a.censoring_model)?;
    set(&mut m, "floor", a.floor)?;
    set(&mut m, "quantile_backend", a.quantile_backend)?;
    set(&mut m, "k", a.k)?;
    set(&mut m, "groups", a.groups)?;
    set(&mut m, "treatment", a.treatment)?;
    set_flag(&mut m, "per_group_training", a.per_group_training);
    set_flag(&mut m, "two_censoring", a.two_censoring);
    set_flag(&mut m, "naive", a.naive);
    let cfg: FitConfig = serde_json::from_value(Value::Object(m))?;
    let out = required(&cfg.out, "out")?.to_path_buf();
    let (model, meta) = fit_from_config(&cfg)?;
    write_json(&model, Some(&out))?;
    match &cfg.meta {
        Some(p) => write_json(&meta, Some(p)),
        None => write_json(&meta, Some(&out.with_extension("meta.json"))),
    }
}

// ---------------------------------------------------------------- predict

pub fn load_model(path: &Path) -> Result<ModelFile> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn row_ids(path: &Path) -> Result<Vec<String>> {
    let table = CsvTable::read(path)?;
    Ok(match table.column("id") {
        Some(c) => table.rows.iter().map(|r| r.get(c).unwrap_or("").to_string()).collect(),
        None => (1..=table.rows.len()).map(|i| i.to_string()).collect(),
    })
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let file = load_model(&a.model)?;
    let rows = load_covariates_csv(&a.data, &file.covariates)?;
    let ids = row_ids(&a.data)?;
    let model = file.model.predictor();
    let mut w = csv_writer(a.out.as_deref())?;
    w.write_record(["id", "lpb", "eta", "p_inf", "uninformative", "clamped_at_c0"])?;
    for (id, x) in ids.iter().zip(&rows) {
        let o = model.predict(x)?;
        w.write_record([
            id.clone(),
            format_value(o.lpb),
            format_value(o.eta),
            format_value(o.p_inf),
            o.uninformative.to_string(),
            o.clamped_at_c0.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- evaluate

fn optional_column(table: &CsvTable, name: &str) -> Result<Option<Vec<f64>>> {
    let Some(col) = table.column(name) else { return Ok(None) };
    (1..=table.rows.len()).map(|r| table.number(r, col)).collect::<Result<Vec<_>>>().map(Some)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let file = load_model(&a.model)?;
    let schema = Schema {
        covariates: file.covariates.clone(),
        ..Schema::default()
    };
    let table = CsvTable::read(&a.data)?;
    if table.column("censoring").is_none() && table.column("c_end").is_some() {
        return evaluate_with(&file, &a, &Schema { censoring: "c_end".into(), ..schema }, &table);
    }
    evaluate_with(&file, &a, &schema, &table)
}

fn evaluate_with(file: &ModelFile, a: &EvaluateArgs, schema: &Schema, table: &CsvTable) -> Result<()> {
    let test: Dataset = load_csv(&a.data, schema)?;
    let params = match (optional_column(table, "mu")?, optional_column(table, "sigma")?) {
        (Some(m), Some(s)) => Some(m.into_iter().zip(s).collect()),
        _ => None,
    };
    let oracle = OracleInfo {
        alpha: file.model.alpha(),
        params,
        latent: optional_column(table, "latent_time")?,
    };
    let report = evaluate(file.model.predictor(), &test, Some(&oracle))?;
    write_json(&report, a.out.as_deref())?;
    if let Some(p) = &a.strata {
        write_strata_rows(&[("model", &report)], p)?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

fn write_strata_rows(reports: &[(&str, &EvaluationReport)], path: &Path) -> Result<()> {
    let mut w = csv_writer(Some(path))?;
    w.write_record(["method", "stratum", "var_lo", "var_hi", "coverage", "mean_ratio"])?;
    for (name, r) in reports {
        for s in &r.strata {
            w.write_record([
                name.to_string(),
                s.stratum.to_string(),
                format_value(s.var_lo),
                format_value(s.var_hi),
                opt(s.coverage),
                format_value(s.mean_ratio),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- experiment

pub fn experiment_config(a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut m = read_config(a.config.as_deref())?;
    // Output and worker settings are not part of the experiment definition.
    for key in ["out", "strata", "jobs"] {
        m.remove(key);
    }
    if let Some(g) = &a.generator {
        m.insert("generator".into(), serde_json::to_value(GeneratorKind::from_name(g)?)?);
    }
    set(&mut m, "n_train", a.n_train)?;
    set(&mut m, "n_test", a.n_test)?;
    set(&mut m, "replications", a.replications)?;
    set(&mut m, "seed", a.seed)?;
    set(&mut m, "alpha", a.alpha)?;
    set(&mut m, "methods", a.methods.as_deref().map(list::<crate::simulation::Method>).transpose()?)?;
    set(&mut m, "c0", a.c0.as_deref().map(str::parse::<C0Policy>).transpose()?)?;
    if let Some(w) = &a.weights {
        let spec = match w.parse::<WeightMode>()? {
            WeightMode::Unit => WeightSpec::Unit,
            WeightMode::Estimated => WeightSpec::default(),
        };
        m.insert("weights".into(), serde_json::to_value(spec)?);
    }
    Ok(serde_json::from_value(Value::Object(m))?)
}

/// Per-method stratum averages as CSV.
pub fn write_experiment_strata(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(Some(path))?;
    w.write_record(["method", "stratum", "var_lo", "var_hi", "coverage", "mean_ratio"])?;
    for s in &report.summaries {
        for row in &s.strata {
            w.write_record([
                s.method.as_str().to_string(),
                row.stratum.to_string(),
                format_value(row.var_lo),
                format_value(row.var_hi),
                opt(row.coverage),
                format_value(row.mean_ratio),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> Result<()> {
    let cfg = experiment_config(&a)?;
    let report = run_experiment(&cfg, a.jobs)?;
    write_json(&report, a.out.as_deref())?;
    if let Some(p) = &a.strata {
        write_experiment_strata(&report, p)?;
    }
    Ok(())
}
