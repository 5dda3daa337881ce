use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calibration scores `V_i` with weights `W_i`, kept sorted by score.
///
/// The quantile of the weighted mixture `sum_i p_i delta_{V_i} + p_inf delta_inf`
/// is evaluated by binary search over prefix sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCalibration", into = "RawCalibration")]
pub struct CalibrationSet {
    scores: Vec<f64>,
    weights: Vec<f64>,
    prefix: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawCalibration {
    scores: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<RawCalibration> for CalibrationSet {
    type Error = Error;

    fn try_from(raw: RawCalibration) -> Result<Self> {
        CalibrationSet::new(raw.scores, raw.weights)
    }
}

impl From<CalibrationSet> for RawCalibration {
    fn from(c: CalibrationSet) -> Self {
        RawCalibration {
            scores: c.scores,
            weights: c.weights,
        }
    }
}

impl CalibrationSet {
    pub fn new(scores: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Degenerate("empty calibration set".into()));
        }
        if scores.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} scores but {} weights",
                scores.len(),
                weights.len()
            )));
        }
        if let Some(v) = scores.iter().find(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!("non-finite conformity score {v}")));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Degenerate(format!("calibration weight {w} is not positive and finite")));
        }
        let mut pairs: Vec<(f64, f64)> = scores.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let (scores, weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let mut prefix = Vec::with_capacity(weights.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for w in &weights {
            acc += w;
            prefix.push(acc);
        }
        Ok(Self {
            scores,
            weights,
            prefix,
        })
    }

    /// Equal unit weights.
    pub fn unweighted(scores: Vec<f64>) -> Result<Self> {
        let n = scores.len();
        Self::new(scores, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Scores in ascending order.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Weights aligned with [`scores`](Self::scores).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.prefix[self.len()]
    }

    /// Mass `w_test / (sum W + w_test)` placed at `+inf`.
    pub fn p_inf(&self, w_test: f64) -> f64 {
        if w_test.is_infinite() {
            return 1.0;
        }
        w_test / (self.total_weight() + w_test)
    }

    /// `sup{z : Q(V <= z) < level}` for the mixture with test weight `w_test`;
    /// `+inf` when the finite atoms never reach `level`.
    pub fn quantile(&self, level: f64, w_test: f64) -> f64 {
        if w_test.is_infinite() {
            return f64::INFINITY;
        }
        let total = self.total_weight() + w_test;
        // Smallest j with prefix[j] / total >= level.
        let (mut lo, mut hi) = (1, self.len() + 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.prefix[mid] / total >= level {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        if lo > self.len() {
            f64::INFINITY
        } else {
            self.scores[lo - 1]
        }
    }
}

/// Free-function form of [`CalibrationSet::quantile`].
pub fn weighted_quantile(cal: &CalibrationSet, w_test: f64, level: f64) -> f64 {
    cal.quantile(level, w_test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_atom_example() {
        let cal = CalibrationSet::unweighted((1..=9).map(f64::from).collect()).unwrap();
        assert_eq!(weighted_quantile(&cal, 1.0, 0.9), 9.0);
        assert!((cal.p_inf(1.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn unreachable_level_is_infinite() {
        let cal = CalibrationSet::unweighted(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(weighted_quantile(&cal, 1.0, 0.9), f64::INFINITY);
    }

    #[test]
    fn rescaling_by_seventeen() {
        let scores = vec![0.3, -1.0, 2.5, 0.7, 0.7];
        let weights = vec![1.0, 2.0, 0.5, 3.0, 1.5];
        let a = CalibrationSet::new(scores.clone(), weights.clone()).unwrap();
        let b = CalibrationSet::new(scores, weights.iter().map(|w| 17.0 * w).collect()).unwrap();
        for level in [0.1, 0.3, 0.5, 0.8, 0.9] {
            assert_eq!(a.quantile(level, 1.2), b.quantile(level, 17.0 * 1.2));
        }
    }

    #[test]
    fn ties_count_together() {
        let cal = CalibrationSet::unweighted(vec![1.0, 2.0, 2.0, 2.0]).unwrap();
        // CDF: 0.2 at 1, 0.8 at 2.
        assert_eq!(cal.quantile(0.2, 1.0), 1.0);
        assert_eq!(cal.quantile(0.21, 1.0), 2.0);
        assert_eq!(cal.quantile(0.8, 1.0), 2.0);
        assert_eq!(cal.quantile(0.81, 1.0), f64::INFINITY);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(CalibrationSet::new(vec![], vec![]).is_err());
        assert!(CalibrationSet::new(vec![1.0], vec![0.0]).is_err());
        assert!(CalibrationSet::new(vec![f64::NAN], vec![1.0]).is_err());
        assert!(CalibrationSet::new(vec![1.0, 2.0], vec![1.0]).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let cal = CalibrationSet::new(vec![3.0, 1.0], vec![0.5, 2.0]).unwrap();
        let s = serde_json::to_string(&cal).unwrap();
        let back: CalibrationSet = serde_json::from_str(&s).unwrap();
        assert_eq!(cal, back);
    }
}
