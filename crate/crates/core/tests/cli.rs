use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cfsurv::cli::{fit_from_config, load_model, FitConfig, FittedModel};
use cfsurv::conformal::ScoreKind;
use cfsurv::data::load_covariates_csv;
use serde_json::Value;

fn cfsurv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfsurv")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
    data: PathBuf,
}

impl Fixture {
    fn new(generator: &str, n: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data.csv");
        let out = cfsurv(&["gen", "--generator", generator, "--n", &n.to_string(), "--seed", "5", "--out", s(&data)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        Fixture { dir, data }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn fit(&self, model: &str, extra: &[&str]) -> Output {
        let model = self.path(model);
        let meta = self.path("meta.json");
        let mut args = vec!["fit", "--data", s(&self.data), "--out", s(&model), "--meta", s(&meta), "--seed", "9"];
        args.extend_from_slice(extra);
        cfsurv(&args)
    }
}

#[test]
fn fit_happy_path_records_score_and_c0() {
    let f = Fixture::new("table1-uvt-homo", 800);
    assert!(f.fit("model.json", &[]).status.success());
    let file = load_model(&f.path("model.json")).unwrap();
    let FittedModel::Standard(m) = &file.model else { panic!("standard model expected") };
    assert_eq!(m.score, ScoreKind::Cqr);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(f.path("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["c0"].as_f64(), m.c0);
    assert_eq!(meta["n"], 800);
    assert!(meta["version"].is_string());
}

#[test]
fn missing_column_is_a_schema_error() {
    let f = Fixture::new("table1-uvt-homo", 50);
    let text = std::fs::read_to_string(&f.data).unwrap();
    let cut: String = text
        .lines()
        .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n");
    let bad = f.path("bad.csv");
    std::fs::write(&bad, cut).unwrap();
    let out = cfsurv(&["fit", "--data", s(&bad), "--out", s(&f.path("m.json"))]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "schema");
}

#[test]
fn numeric_garbage_is_rejected() {
    let f = Fixture::new("table1-uvt-homo", 20);
    let text = std::fs::read_to_string(&f.data).unwrap().replacen('\n', "\nabc,", 1);
    let bad = f.path("bad.csv");
    std::fs::write(&bad, text).unwrap();
    let out = cfsurv(&["fit", "--data", s(&bad), "--out", s(&f.path("m.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn same_config_twice_is_byte_identical() {
    let f = Fixture::new("table1-uvt-hetero", 600);
    assert!(f.fit("a.json", &["--score", "cdr"]).status.success());
    assert!(f.fit("b.json", &["--score", "cdr"]).status.success());
    assert_eq!(std::fs::read(f.path("a.json")).unwrap(), std::fs::read(f.path("b.json")).unwrap());
}

#[test]
fn predict_row_counts() {
    let f = Fixture::new("table1-uvt-homo", 600);
    assert!(f.fit("model.json", &[]).status.success());
    let one = f.path("one.csv");
    std::fs::write(&one, "x1\n1.5\n").unwrap();
    let empty = f.path("empty.csv");
    std::fs::write(&empty, "x1\n").unwrap();
    let model = f.path("model.json");
    let out = cfsurv(&["predict", "--model", s(&model), "--data", s(&one)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("1,"));
    let out = cfsurv(&["predict", "--model", s(&model), "--data", s(&empty)]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim_end(), "id,lpb,eta,p_inf,uninformative,clamped_at_c0");
}

#[test]
fn reloaded_model_predicts_like_in_memory() {
    let f = Fixture::new("table1-uvt-hetero", 900);
    for score in ["cqr", "cdr", "cmr"] {
        let name = format!("{score}.json");
        assert!(f.fit(&name, &["--score", score]).status.success());
        let cfg: FitConfig = serde_json::from_value(serde_json::json!({
            "data": f.data, "seed": 9, "score": score
        }))
        .unwrap();
        let (memory, _) = fit_from_config(&cfg).unwrap();
        let disk = load_model(&f.path(&name)).unwrap();
        let rows = load_covariates_csv(&f.data, &disk.covariates).unwrap();
        for x in &rows {
            let a = memory.model.predictor().predict(x).unwrap();
            let b = disk.model.predictor().predict(x).unwrap();
            assert!((a.lpb - b.lpb).abs() <= 1e-12, "{score}: {a:?} vs {b:?}");
            assert!((a.p_inf - b.p_inf).abs() <= 1e-12);
        }
    }
}

#[test]
fn evaluate_writes_report_and_strata() {
    let f = Fixture::new("table1-uvt-hetero", 1500);
    assert!(f.fit("model.json", &["--score", "cdr"]).status.success());
    let (report, strata) = (f.path("report.json"), f.path("strata.csv"));
    let out = cfsurv(&[
        "evaluate", "--model", s(&f.path("model.json")), "--data", s(&f.data), "--out", s(&report),
        "--strata", s(&strata),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let cov = r["coverage"].as_f64().unwrap();
    assert!(r["beta_lo"].as_f64().unwrap() <= cov && cov <= r["beta_hi"].as_f64().unwrap());
    assert_eq!(std::fs::read_to_string(&strata).unwrap().lines().count(), 11);
}

#[test]
fn mondrian_and_two_censoring_fits() {
    let f = Fixture::new("two-censoring", 1500);
    assert!(f.fit("tc.json", &["--two-censoring"]).status.success());
    let g = Fixture::new("table1-uvt-homo", 1500);
    let out = g.fit("mond.json", &["--groups", "sign:x1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(matches!(load_model(&g.path("mond.json")).unwrap().model, FittedModel::Mondrian(_)));
}

#[test]
fn experiment_subcommand_reports_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp.json");
    let res = cfsurv(&[
        "experiment", "--generator", "table1-uvt-homo", "--n-train", "600", "--n-test", "300",
        "--replications", "2", "--seed", "3", "--out", s(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["replications"].as_array().unwrap().len(), 2);
    assert_eq!(r["summaries"].as_array().unwrap().len(), 2);
}

#[test]
fn bad_flag_values_exit_nonzero() {
    let out = cfsurv(&["experiment", "--alpha", "1.5", "--replications", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"]["message"].is_string());
}
