//! Survival records, CSV ingestion, seeded splitting and subpopulation
//! selection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// One unit under Type-I right censoring.
///
/// `c` is always observed; `t_tilde = min(t, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub x: Vec<f64>,
    pub c: f64,
    pub t_tilde: f64,
    /// True survival time, known only in simulations.
    pub t_true: Option<f64>,
    /// Whether `t_tilde` is the survival time rather than the censoring time.
    pub event: bool,
}

impl SurvivalRecord {
    /// Build a record, checking the censoring invariants.
    ///
    /// When `event` is `None` it is derived: from `t_true` if present,
    /// otherwise `t_tilde < c` (a record with `t_tilde == c` counts as censored).
    pub fn new(
        x: Vec<f64>,
        c: f64,
        t_tilde: f64,
        t_true: Option<f64>,
        event: Option<bool>,
    ) -> std::result::Result<Self, String> {
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(format!("non-finite covariate value {bad}"));
        }
        // Censoring may be +inf (no censoring); NaN or negatives are rejected.
        if c.is_nan() || c < 0.0 {
            return Err(format!("invalid censoring time {c}"));
        }
        if !t_tilde.is_finite() || t_tilde < 0.0 {
            return Err(format!("invalid observed time {t_tilde}"));
        }
        if t_tilde > c {
            return Err(format!("observed time {t_tilde} exceeds censoring time {c}"));
        }
        if let Some(t) = t_true {
            if t.is_nan() || t < 0.0 {
                return Err(format!("invalid true time {t}"));
            }
            if t.min(c) != t_tilde {
                return Err(format!(
                    "observed time {t_tilde} differs from min(true time {t}, censoring {c})"
                ));
            }
        }
        let event = event.unwrap_or(match t_true {
            Some(t) => t <= c,
            None => t_tilde < c,
        });
        Ok(Self {
            x,
            c,
            t_tilde,
            t_true,
            event,
        })
    }
}

/// An ordered, nonempty collection of records sharing one covariate dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<SurvivalRecord>,
    p: usize,
}

impl Dataset {
    pub fn new(records: Vec<SurvivalRecord>) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::invalid("dataset must contain at least one record"))?;
        let p = first.x.len();
        for (i, r) in records.iter().enumerate() {
            if r.x.len() != p {
                return Err(Error::InvalidRow {
                    row: i + 1,
                    message: format!("expected {p} covariates, found {}", r.x.len()),
                });
            }
        }
        Ok(Self { records, p })
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &SurvivalRecord {
        &self.records[i]
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Covariate dimension.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn covariates(&self, idx: &[usize]) -> Vec<&[f64]> {
        idx.iter().map(|&i| self.records[i].x.as_slice()).collect()
    }

    /// A new dataset holding the given rows, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Dataset::new(idx.iter().map(|&i| self.records[i].clone()).collect())
    }

    pub fn into_records(self) -> Vec<SurvivalRecord> {
        self.records
    }
}

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    /// Covariate columns, in order. Empty means "every column named `x<k>`",
    /// sorted by `k`.
    pub covariates: Vec<String>,
    pub censoring: String,
    pub observed: String,
    /// Optional event flag column (0/1 or true/false).
    pub event: String,
    /// Optional true survival time column (simulation output).
    pub true_time: String,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            covariates: Vec::new(),
            censoring: "censoring".into(),
            observed: "observed".into(),
            event: "event".into(),
            true_time: "true_time".into(),
        }
    }
}

/// Parsed CSV with located columns; shared by the different file readers.
pub(crate) struct CsvTable {
    pub headers: Vec<String>,
    pub rows: Vec<csv::StringRecord>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let headers = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { headers, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.column(name).ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    /// Covariate column indices: explicit names, or all `x<k>` columns by `k`.
    pub fn covariate_columns(&self, names: &[String]) -> Result<Vec<usize>> {
        if !names.is_empty() {
            return names.iter().map(|n| self.require(n)).collect();
        }
        let mut found: Vec<(usize, usize)> = self
            .headers
            .iter()
            .enumerate()
            .filter_map(|(col, h)| {
                h.strip_prefix('x')
                    .and_then(|k| k.parse::<usize>().ok())
                    .map(|k| (k, col))
            })
            .collect();
        if found.is_empty() {
            return Err(Error::MissingColumn("x1".into()));
        }
        found.sort_unstable();
        Ok(found.into_iter().map(|(_, col)| col).collect())
    }

    /// Parse a numeric cell; `row` is 1-based over data rows.
    pub fn number(&self, row: usize, col: usize) -> Result<f64> {
        let raw = self.rows[row - 1].get(col).unwrap_or("").trim();
        let v = parse_number(raw).ok_or_else(|| Error::InvalidRow {
            row,
            message: format!("column `{}`: cannot parse `{raw}` as a number", self.headers[col]),
        })?;
        if v.is_nan() {
            return Err(Error::InvalidRow {
                row,
                message: format!("column `{}`: NaN value", self.headers[col]),
            });
        }
        Ok(v)
    }

    pub fn optional_number(&self, row: usize, col: Option<usize>) -> Result<Option<f64>> {
        match col {
            None => Ok(None),
            Some(c) if self.rows[row - 1].get(c).unwrap_or("").trim().is_empty() => Ok(None),
            Some(c) => self.number(row, c).map(Some),
        }
    }

    pub fn optional_flag(&self, row: usize, col: Option<usize>) -> Result<Option<bool>> {
        let Some(c) = col else { return Ok(None) };
        let raw = self.rows[row - 1].get(c).unwrap_or("").trim();
        match raw.to_ascii_lowercase().as_str() {
            "" => Ok(None),
            "1" | "1.0" | "true" => Ok(Some(true)),
            "0" | "0.0" | "false" => Ok(Some(false)),
            _ => Err(Error::InvalidRow {
                row,
                message: format!("column `{}`: `{raw}` is not a boolean", self.headers[c]),
            }),
        }
    }

    pub fn covariate_row(&self, row: usize, cols: &[usize]) -> Result<Vec<f64>> {
        cols.iter()
            .map(|&c| {
                let v = self.number(row, c)?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::InvalidRow {
                        row,
                        message: format!("column `{}`: non-finite value", self.headers[c]),
                    })
                }
            })
            .collect()
    }
}

fn parse_number(raw: &str) -> Option<f64> {
    match raw.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        _ => raw.parse::<f64>().ok(),
    }
}

/// Load a dataset from CSV; row order is preserved.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let table = CsvTable::read(path.as_ref())?;
    let xcols = table.covariate_columns(&schema.covariates)?;
    let ccol = table.require(&schema.censoring)?;
    let tcol = table.require(&schema.observed)?;
    let ecol = table.column(&schema.event);
    let truecol = table.column(&schema.true_time);
    let mut records = Vec::with_capacity(table.rows.len());
    for row in 1..=table.rows.len() {
        let x = table.covariate_row(row, &xcols)?;
        let c = table.number(row, ccol)?;
        let t = table.number(row, tcol)?;
        let t_true = table.optional_number(row, truecol)?;
        let event = table.optional_flag(row, ecol)?;
        let rec = SurvivalRecord::new(x, c, t, t_true, event)
            .map_err(|message| Error::InvalidRow { row, message })?;
        records.push(rec);
    }
    Dataset::new(records)
}

/// Load covariate rows only (for prediction). A 0-row file yields an empty list.
pub fn load_covariates_csv(path: impl AsRef<Path>, columns: &[String]) -> Result<Vec<Vec<f64>>> {
    let table = CsvTable::read(path.as_ref())?;
    let xcols = table.covariate_columns(columns)?;
    (1..=table.rows.len())
        .map(|row| table.covariate_row(row, &xcols))
        .collect()
}

/// Round to 12 significant digits and print the shortest representation of
/// the rounded value. Non-finite values print as `inf` / `-inf`.
pub fn format_value(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// Write a dataset with the default column names.
pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=ds.p()).map(|j| format!("x{j}")).collect();
    header.extend(["censoring", "observed", "event", "true_time"].map(String::from));
    w.write_record(&header)?;
    for r in ds.records() {
        let mut row: Vec<String> = r.x.iter().map(|&v| format_value(v)).collect();
        row.push(format_value(r.c));
        row.push(format_value(r.t_tilde));
        row.push(if r.event { "1".into() } else { "0".into() });
        row.push(r.t_true.map(format_value).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Disjoint training and calibration folds, in permutation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub calib: Vec<usize>,
    pub seed: u64,
}

/// Randomly split all row indices of `ds` into training and calibration folds.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<SplitIndices> {
    let idx: Vec<usize> = (0..ds.len()).collect();
    split_indices(&idx, train_fraction, seed)
}

/// Split an arbitrary index set; `|train| = round(train_fraction * n)`.
pub fn split_indices(idx: &[usize], train_fraction: f64, seed: u64) -> Result<SplitIndices> {
    let n = idx.len();
    if n < 4 {
        return Err(Error::invalid(format!("need at least 4 units to split, got {n}")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} leaves an empty fold for n = {n}"
        )));
    }
    let mut perm = idx.to_vec();
    SimRng::new(seed).shuffle(&mut perm);
    let calib = perm.split_off(n_train);
    Ok(SplitIndices {
        train: perm,
        calib,
        seed,
    })
}

/// Units with `C_i >= c0` among `idx`, with capped outcomes `min(t~_i, c0)`.
pub fn select_subpopulation(
    ds: &Dataset,
    idx: &[usize],
    c0: f64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if c0.is_nan() || c0 < 0.0 {
        return Err(Error::invalid(format!("threshold c0 must be nonnegative, got {c0}")));
    }
    let (sel, y): (Vec<usize>, Vec<f64>) = idx
        .iter()
        .filter(|&&i| ds.record(i).c >= c0)
        .map(|&i| (i, ds.record(i).t_tilde.min(c0)))
        .unzip();
    if sel.is_empty() {
        return Err(Error::EmptySelection { c0 });
    }
    Ok((sel, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(x: f64, c: f64, t: f64) -> SurvivalRecord {
        SurvivalRecord::new(vec![x], c, t, None, None).unwrap()
    }

    #[test]
    fn record_invariants() {
        assert!(SurvivalRecord::new(vec![0.0], 3.0, 5.0, None, None).is_err());
        assert!(SurvivalRecord::new(vec![f64::NAN], 3.0, 1.0, None, None).is_err());
        assert!(SurvivalRecord::new(vec![0.0], 3.0, 2.0, Some(2.5), None).is_err());
        let r = SurvivalRecord::new(vec![0.0], 3.0, 3.0, Some(7.0), None).unwrap();
        assert!(!r.event);
        // unknown event flag with t~ == c is treated as censored
        assert!(!rec(0.0, 3.0, 3.0).event);
        assert!(rec(0.0, 3.0, 2.0).event);
    }

    #[test]
    fn dataset_rejects_mixed_dimension() {
        let a = rec(0.0, 1.0, 1.0);
        let b = SurvivalRecord::new(vec![0.0, 1.0], 1.0, 1.0, None, None).unwrap();
        assert!(Dataset::new(vec![a, b]).is_err());
        assert!(Dataset::new(vec![]).is_err());
    }

    #[test]
    fn split_is_deterministic_and_bijective() {
        let ds = Dataset::new((0..10).map(|i| rec(i as f64, 5.0, 1.0)).collect()).unwrap();
        let a = split(&ds, 0.5, 7).unwrap();
        let b = split(&ds, 0.5, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.train.len(), a.calib.len()), (5, 5));
        let mut all: Vec<usize> = a.train.iter().chain(&a.calib).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn split_seeds_differ() {
        let ds = Dataset::new((0..10).map(|i| rec(i as f64, 5.0, 1.0)).collect()).unwrap();
        let base = split(&ds, 0.5, 0).unwrap();
        let differ = (1..=100)
            .filter(|&s| split(&ds, 0.5, s).unwrap() != SplitIndices { seed: s, ..base.clone() })
            .count();
        assert!(differ >= 99, "{differ}");
    }

    #[test]
    fn split_errors() {
        let ds = Dataset::new((0..10).map(|i| rec(i as f64, 5.0, 1.0)).collect()).unwrap();
        assert!(split(&ds, 0.01, 1).is_err());
        assert!(split(&ds, 0.99, 1).is_err());
        assert!(split(&ds, 1.0, 1).is_err());
        let small = Dataset::new((0..3).map(|i| rec(i as f64, 5.0, 1.0)).collect()).unwrap();
        assert!(split(&small, 0.5, 1).is_err());
    }

    #[test]
    fn subpopulation_hand_example() {
        let ds = Dataset::new(vec![rec(0.0, 3.0, 2.0), rec(0.0, 10.0, 9.0), rec(0.0, 14.0, 14.0)])
            .unwrap();
        let (sel, y) = select_subpopulation(&ds, &[0, 1, 2], 10.0).unwrap();
        assert_eq!(sel, vec![1, 2]);
        assert_eq!(y, vec![9.0, 10.0]);
        let (sel, y) = select_subpopulation(&ds, &[0, 1, 2], 0.0).unwrap();
        assert_eq!(sel, vec![0, 1, 2]);
        assert!(y.iter().all(|&v| v == 0.0));
        assert!(matches!(
            select_subpopulation(&ds, &[0, 1, 2], 20.0),
            Err(Error::EmptySelection { .. })
        ));
    }

    #[test]
    fn capped_outcome_equals_capped_true_time() {
        let mut rng = SimRng::new(11);
        let records: Vec<_> = (0..500)
            .map(|_| {
                let t = rng.exponential(0.5);
                let c = rng.exponential(0.3);
                SurvivalRecord::new(vec![0.0], c, t.min(c), Some(t), None).unwrap()
            })
            .collect();
        let ds = Dataset::new(records).unwrap();
        let idx: Vec<usize> = (0..ds.len()).collect();
        let c0 = 1.5;
        let (sel, y) = select_subpopulation(&ds, &idx, c0).unwrap();
        for (&i, &yi) in sel.iter().zip(&y) {
            let r = ds.record(i);
            assert_eq!(yi, r.t_true.unwrap().min(c0));
            assert!(yi <= c0 && yi <= r.t_tilde);
        }
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(
            &path,
            "x1,x2,censoring,observed\n0.5,1,3,2\n1.5,2,4,4\n2.5,3,10,1.25\n",
        )
        .unwrap();
        let ds = load_csv(&path, &Schema::default()).unwrap();
        assert_eq!((ds.len(), ds.p()), (3, 2));
        assert!(!ds.record(1).event);

        let out = dir.path().join("o.csv");
        save_csv(&ds, &out).unwrap();
        let again = load_csv(&out, &Schema::default()).unwrap();
        assert_eq!(ds, again);
        let out2 = dir.path().join("o2.csv");
        save_csv(&again, &out2).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&out2).unwrap());

        std::fs::write(&path, "x1,censoring,observed\n0.5,3,2\n0.1,3,5\n").unwrap();
        match load_csv(&path, &Schema::default()) {
            Err(Error::InvalidRow { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "x1,observed\n0.5,2\n").unwrap();
        assert!(matches!(
            load_csv(&path, &Schema::default()),
            Err(Error::MissingColumn(c)) if c == "censoring"
        ));
        std::fs::write(&path, "x1,censoring,observed\ninf,3,2\n").unwrap();
        assert!(load_csv(&path, &Schema::default()).is_err());
    }

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_value(0.1), "0.1");
        assert_eq!(format_value(std::f64::consts::PI), "3.14159265359");
        assert_eq!(format_value(f64::INFINITY), "inf");
        assert_eq!(format_value(1234567.891234567), "1234567.89123");
    }
}
