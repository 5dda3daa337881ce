use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SurvivalRecord};
use crate::error::{Error, Result};

/// A unit subject to an end-of-study censoring time `c_end` (always
/// observed) and a loss-to-follow-up time `c_loss` (observed only through
/// `t_tilde = min(T, c_end, c_loss)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoCensoringRecord {
    pub x: Vec<f64>,
    pub c_end: f64,
    pub t_tilde: f64,
    /// Simulation only.
    pub t_true: Option<f64>,
    /// Simulation only.
    pub c_loss: Option<f64>,
}

/// Treat `c_end` as the censoring time and `T' = min(T, c_loss)` as the
/// outcome. Bounds valid for `T'` are valid for `T`.
pub fn two_censoring_adapt(rows: &[TwoCensoringRecord]) -> Result<Dataset> {
    let mut out = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let row_err = |message: String| Error::InvalidRow { row: i + 1, message };
        if r.t_tilde > r.c_end {
            return Err(row_err(format!(
                "observed time {} exceeds end-of-study time {}",
                r.t_tilde, r.c_end
            )));
        }
        let t_prime = match (r.t_true, r.c_loss) {
            (Some(t), Some(l)) => Some(t.min(l)),
            (Some(t), None) => Some(t),
            _ => None,
        };
        out.push(SurvivalRecord::new(r.x.clone(), r.c_end, r.t_tilde, t_prime, None).map_err(row_err)?);
    }
    Dataset::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, c_end: f64, c_loss: f64) -> TwoCensoringRecord {
        TwoCensoringRecord {
            x: vec![0.0],
            c_end,
            t_tilde: t.min(c_end).min(c_loss),
            t_true: Some(t),
            c_loss: Some(c_loss),
        }
    }

    #[test]
    fn hand_built_rows() {
        let rows = vec![row(3.0, 5.0, 10.0), row(8.0, 5.0, 10.0), row(4.0, 6.0, 2.0)];
        let ds = two_censoring_adapt(&rows).unwrap();
        let t: Vec<f64> = ds.records().iter().map(|r| r.t_tilde).collect();
        assert_eq!(t, vec![3.0, 5.0, 2.0]);
        let tp: Vec<f64> = ds.records().iter().map(|r| r.t_true.unwrap()).collect();
        assert_eq!(tp, vec![3.0, 8.0, 2.0]);
        assert_eq!(ds.record(0).c, 5.0);
        assert!(ds.record(0).event && !ds.record(1).event && ds.record(2).event);
    }

    #[test]
    fn no_attrition_is_standard() {
        let rows = vec![row(3.0, 5.0, f64::INFINITY), row(8.0, 5.0, f64::INFINITY)];
        let ds = two_censoring_adapt(&rows).unwrap();
        let plain = Dataset::new(vec![
            SurvivalRecord::new(vec![0.0], 5.0, 3.0, Some(3.0), None).unwrap(),
            SurvivalRecord::new(vec![0.0], 5.0, 5.0, Some(8.0), None).unwrap(),
        ])
        .unwrap();
        assert_eq!(ds, plain);
    }

    #[test]
    fn rejects_observed_after_end() {
        let mut r = row(3.0, 5.0, 10.0);
        r.t_tilde = 6.0;
        assert!(matches!(two_censoring_adapt(&[r]), Err(Error::InvalidRow { row: 1, .. })));
    }
}
