use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate, EvaluationReport, OracleInfo};
use super::generators::{generate, GeneratorKind, GeneratorSpec, Simulated};
use crate::conformal::{
    conformalize, conformalize_naive, ConformalConfig, MeanBackend, Predictor, QuantileBackend,
    ScoreKind, WeightSpec,
};
use crate::data::{split, Dataset, SplitIndices};
use crate::error::{Error, Result};
use crate::estimators::PinballOptions;
use crate::extensions::{conformalize_counterfactual, conformalize_mondrian, GroupPartition, PropensitySpec};
use crate::rng::derive_seed;
use crate::threshold::{select_c0_calib, select_c0_train, ThresholdGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cqr,
    Cdr,
    Cmr,
    /// Unweighted split CQR on the observed times.
    Naive,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cqr => "cqr",
            Method::Cdr => "cdr",
            Method::Cmr => "cmr",
            Method::Naive => "naive",
        }
    }

    pub fn score(self) -> Option<ScoreKind> {
        match self {
            Method::Cqr => Some(ScoreKind::Cqr),
            Method::Cdr => Some(ScoreKind::Cdr),
            Method::Cmr => Some(ScoreKind::Cmr),
            Method::Naive => None,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cqr" => Ok(Method::Cqr),
            "cdr" => Ok(Method::Cdr),
            "cmr" => Ok(Method::Cmr),
            "naive" => Ok(Method::Naive),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AutoC0 {
    AutoTrain,
    AutoCalib,
}

/// A fixed threshold or a selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum C0Policy {
    Fixed(f64),
    Auto(AutoC0),
}

impl std::str::FromStr for C0Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto-train" => Ok(C0Policy::Auto(AutoC0::AutoTrain)),
            "auto-calib" => Ok(C0Policy::Auto(AutoC0::AutoCalib)),
            _ => s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .map(C0Policy::Fixed)
                .ok_or_else(|| Error::invalid(format!("c0 must be a nonnegative number, `auto-train` or `auto-calib`, got `{s}`"))),
        }
    }
}

/// Resolve a policy to a threshold; returns the threshold for `split`.
#[allow(clippy::too_many_arguments)]
pub fn resolve_c0(
    policy: C0Policy,
    ds: &Dataset,
    split: &SplitIndices,
    grid: Option<&[f64]>,
    cfg: &ConformalConfig,
    holdout_fraction: f64,
    seed: u64,
) -> Result<f64> {
    let make_grid = || match grid {
        Some(g) => ThresholdGrid::explicit(g.to_vec()),
        None => ThresholdGrid::censoring_deciles(ds, &split.train),
    };
    match policy {
        C0Policy::Fixed(c0) => Ok(c0),
        C0Policy::Auto(AutoC0::AutoTrain) => {
            Ok(select_c0_train(ds, &split.train, &make_grid()?, cfg, holdout_fraction, seed)?.c0)
        }
        C0Policy::Auto(AutoC0::AutoCalib) => Ok(select_c0_calib(ds, split, &make_grid()?, cfg)?.c0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MondrianOptions {
    /// Covariate index (0-based) whose sign defines the two groups.
    pub column: usize,
    #[serde(default)]
    pub per_group_training: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub generator: GeneratorKind,
    pub n_train: usize,
    pub n_test: usize,
    pub replications: usize,
    pub seed: u64,
    pub alpha: f64,
    pub train_fraction: f64,
    pub methods: Vec<Method>,
    pub c0: C0Policy,
    pub grid: Option<Vec<f64>>,
    pub holdout_fraction: f64,
    pub weights: WeightSpec,
    pub quantile_backend: QuantileBackend,
    pub naive_backend: QuantileBackend,
    pub mean_backend: MeanBackend,
    pub k: Option<usize>,
    pub censoring_k: Option<usize>,
    pub pinball: PinballOptions,
    pub mondrian: Option<MondrianOptions>,
    /// Counterfactual mode; needs a generator with treatment assignment.
    pub propensity: Option<PropensitySpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorKind::Table1UvtHomo,
            n_train: 3000,
            n_test: 3000,
            replications: 1,
            seed: 1,
            alpha: 0.1,
            train_fraction: 0.5,
            methods: vec![Method::Cqr, Method::Naive],
            c0: C0Policy::Auto(AutoC0::AutoTrain),
            grid: None,
            holdout_fraction: 0.25,
            weights: WeightSpec::default(),
            quantile_backend: QuantileBackend::Knn,
            naive_backend: QuantileBackend::LinearPinball,
            mean_backend: MeanBackend::Knn,
            k: None,
            censoring_k: None,
            pinball: PinballOptions::default(),
            mondrian: None,
            propensity: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods requested"));
        }
        if self.n_test == 0 {
            return Err(Error::invalid("n_test must be at least 1"));
        }
        self.conformal(ScoreKind::Cqr).validate()
    }

    pub fn conformal(&self, score: ScoreKind) -> ConformalConfig {
        ConformalConfig {
            score,
            alpha: self.alpha,
            quantile_backend: self.quantile_backend,
            mean_backend: self.mean_backend,
            k: self.k,
            censoring_k: self.censoring_k,
            weights: self.weights,
            pinball: self.pinball,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: Method,
    pub c0: Option<f64>,
    pub report: EvaluationReport,
    /// Mondrian runs only: coverage within each group.
    pub group_coverage: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: usize,
    pub seed: u64,
    pub runs: Vec<MethodRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub stratum: usize,
    pub var_lo: f64,
    pub var_hi: f64,
    pub coverage: Option<f64>,
    pub mean_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    pub min: f64,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        // Linear interpolation between order statistics.
        let q = |p: f64| {
            let h = p * (s.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            s[lo] + (h - lo as f64) * (s[hi] - s[lo])
        };
        Some(Self {
            mean,
            sd,
            se: sd / n.sqrt(),
            min: s[0],
            q05: q(0.05),
            median: q(0.5),
            q95: q(0.95),
            max: s[s.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub coverage: Option<Spread>,
    pub coverage_capped: Option<Spread>,
    pub coverage_latent: Option<Spread>,
    pub mean_lpb: Spread,
    pub mean_ratio: Option<Spread>,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub c0: Option<Spread>,
    /// Runs where `beta_lo <= coverage <= beta_hi` failed.
    pub beta_violations: usize,
    pub strata: Vec<StratumSummary>,
    pub group_coverage: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub config: ExperimentConfig,
    pub summaries: Vec<MethodSummary>,
    pub replications: Vec<ReplicationResult>,
}

fn oracle_for(sim: &Simulated, alpha: f64) -> OracleInfo {
    let latent_differs = sim
        .dataset
        .records()
        .iter()
        .zip(&sim.latent)
        .any(|(r, &t)| r.t_true != Some(t));
    OracleInfo {
        alpha,
        params: sim.params.clone(),
        latent: latent_differs.then(|| sim.latent.clone()),
    }
}

fn run_method(
    cfg: &ExperimentConfig,
    method: Method,
    train: &Simulated,
    split: &SplitIndices,
    test: &Simulated,
    oracle: &OracleInfo,
    seed: u64,
) -> Result<MethodRun> {
    let ds = &train.dataset;
    let Some(score) = method.score() else {
        let naive_cfg = ConformalConfig {
            quantile_backend: cfg.naive_backend,
            ..cfg.conformal(ScoreKind::Cqr)
        };
        let model = conformalize_naive(ds, split, &naive_cfg)?;
        return Ok(MethodRun {
            method,
            c0: None,
            report: evaluate(&model, &test.dataset, Some(oracle))?,
            group_coverage: None,
        });
    };
    let ccfg = cfg.conformal(score);
    let c0 = resolve_c0(cfg.c0, ds, split, cfg.grid.as_deref(), &ccfg, cfg.holdout_fraction, seed)?;
    let (report, group_coverage) = if let Some(m) = &cfg.mondrian {
        let part = GroupPartition::sign(m.column);
        let model = conformalize_mondrian(ds, split, c0, &ccfg, &part, m.per_group_training)?;
        let report = evaluate(&model, &test.dataset, Some(oracle))?;
        (report, Some(group_coverages(&model, &part, test)?))
    } else if let Some(prop) = &cfg.propensity {
        let treated = train
            .treated
            .as_ref()
            .ok_or_else(|| Error::invalid("counterfactual mode needs a generator with treatment_prob"))?;
        let model = conformalize_counterfactual(ds, treated, split, c0, &ccfg, prop)?;
        (evaluate(&model, &test.dataset, Some(oracle))?, None)
    } else {
        let model = conformalize(ds, split, c0, &ccfg)?;
        (evaluate(&model, &test.dataset, Some(oracle))?, None)
    };
    Ok(MethodRun {
        method,
        c0: Some(c0),
        report,
        group_coverage,
    })
}

fn group_coverages(model: &dyn Predictor, part: &GroupPartition, test: &Simulated) -> Result<Vec<f64>> {
    let mut hits = vec![0usize; part.k()];
    let mut counts = vec![0usize; part.k()];
    for (r, &t) in test.dataset.records().iter().zip(&test.latent) {
        let g = part.assign(&r.x)? - 1;
        counts[g] += 1;
        if t >= model.predict(&r.x)?.lpb {
            hits[g] += 1;
        }
    }
    Ok(hits
        .iter()
        .zip(&counts)
        .map(|(&h, &c)| if c == 0 { f64::NAN } else { h as f64 / c as f64 })
        .collect())
}

/// One replication: fresh training and test draws, one split, every method.
pub fn run_replication(cfg: &ExperimentConfig, replication: usize) -> Result<ReplicationResult> {
    let seed = derive_seed(cfg.seed, &[replication as u64]);
    let wrap = |e: Error| Error::Replication {
        replication,
        seed,
        source: Box::new(e),
    };
    let inner = || -> Result<Vec<MethodRun>> {
        let train = generate(&GeneratorSpec {
            kind: cfg.generator.clone(),
            n: cfg.n_train,
            seed: derive_seed(seed, &[1]),
        })?;
        let test = generate(&GeneratorSpec {
            kind: cfg.generator.clone(),
            n: cfg.n_test,
            seed: derive_seed(seed, &[2]),
        })?;
        let sp = split(&train.dataset, cfg.train_fraction, derive_seed(seed, &[3]))?;
        let oracle = oracle_for(&test, cfg.alpha);
        cfg.methods
            .iter()
            .map(|&m| run_method(cfg, m, &train, &sp, &test, &oracle, derive_seed(seed, &[4])))
            .collect()
    };
    Ok(ReplicationResult {
        replication,
        seed,
        runs: inner().map_err(wrap)?,
    })
}

fn summarize(method: Method, runs: &[&MethodRun]) -> MethodSummary {
    let collect = |f: &dyn Fn(&MethodRun) -> Option<f64>| -> Option<Spread> {
        let v: Option<Vec<f64>> = runs.iter().map(|r| f(r)).collect();
        v.and_then(|v| Spread::of(&v))
    };
    let mean = |f: &dyn Fn(&MethodRun) -> f64| runs.iter().map(|r| f(r)).sum::<f64>() / runs.len() as f64;
    let beta_violations = runs
        .iter()
        .filter(|r| {
            r.report
                .coverage
                .is_some_and(|c| !(r.report.beta_lo <= c && c <= r.report.beta_hi))
        })
        .count();
    let n_strata = runs.iter().map(|r| r.report.strata.len()).min().unwrap_or(0);
    let strata = (0..n_strata)
        .map(|s| {
            let rows: Vec<_> = runs.iter().map(|r| &r.report.strata[s]).collect();
            let m = rows.len() as f64;
            let cov: Option<Vec<f64>> = rows.iter().map(|r| r.coverage).collect();
            StratumSummary {
                stratum: s + 1,
                var_lo: rows.iter().map(|r| r.var_lo).sum::<f64>() / m,
                var_hi: rows.iter().map(|r| r.var_hi).sum::<f64>() / m,
                coverage: cov.map(|c| c.iter().sum::<f64>() / m),
                mean_ratio: rows.iter().map(|r| r.mean_ratio).sum::<f64>() / m,
            }
        })
        .collect();
    let group_coverage = runs[0].group_coverage.as_ref().map(|g0| {
        (0..g0.len())
            .map(|g| {
                runs.iter()
                    .map(|r| r.group_coverage.as_ref().map_or(f64::NAN, |v| v[g]))
                    .sum::<f64>()
                    / runs.len() as f64
            })
            .collect()
    });
    MethodSummary {
        method,
        coverage: collect(&|r| r.report.coverage),
        coverage_capped: collect(&|r| r.report.coverage_capped),
        coverage_latent: collect(&|r| r.report.coverage_latent),
        mean_lpb: collect(&|r| Some(r.report.mean_lpb)).expect("at least one run"),
        mean_ratio: collect(&|r| r.report.mean_ratio),
        beta_lo: mean(&|r| r.report.beta_lo),
        beta_hi: mean(&|r| r.report.beta_hi),
        c0: collect(&|r| r.c0),
        beta_violations,
        strata,
        group_coverage,
    }
}

/// Run every replication, in parallel on `jobs` threads (all cores when
/// `None`). Results are ordered by replication index.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Invariant(format!("cannot start worker pool: {e}")))?;
    let replications = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|r| run_replication(cfg, r))
            .collect::<Result<Vec<_>>>()
    })?;
    let summaries = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            let runs: Vec<&MethodRun> = replications.iter().map(|r| &r.runs[j]).collect();
            summarize(m, &runs)
        })
        .collect();
    Ok(ExperimentReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        summaries,
        replications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c0_policy_parsing() {
        assert_eq!("2.5".parse::<C0Policy>().unwrap(), C0Policy::Fixed(2.5));
        assert_eq!("auto-train".parse::<C0Policy>().unwrap(), C0Policy::Auto(AutoC0::AutoTrain));
        assert!("-1".parse::<C0Policy>().is_err());
        assert!("soon".parse::<C0Policy>().is_err());
        let j: C0Policy = serde_json::from_str("\"auto-calib\"").unwrap();
        assert_eq!(j, C0Policy::Auto(AutoC0::AutoCalib));
        let j: C0Policy = serde_json::from_str("3").unwrap();
        assert_eq!(j, C0Policy::Fixed(3.0));
    }

    #[test]
    fn spread_quantiles() {
        let s = Spread::of(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.median, 3.0);
        assert_eq!(s.min, 1.0);
        assert!((s.q95 - 4.8).abs() < 1e-12);
        assert!(Spread::of(&[]).is_none());
    }

    #[test]
    fn small_experiment_is_deterministic() {
        let cfg = ExperimentConfig {
            n_train: 300,
            n_test: 200,
            replications: 3,
            methods: vec![Method::Cqr, Method::Cdr, Method::Naive],
            ..Default::default()
        };
        let a = run_experiment(&cfg, Some(2)).unwrap();
        let b = run_experiment(&cfg, Some(1)).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.summaries.len(), 3);
        assert!(a.summaries.iter().all(|s| s.beta_violations == 0));
    }
}
