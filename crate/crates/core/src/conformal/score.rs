use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{CdfModel, MeanModel, NeighborCdf, QuantileModel};

/// Conformity score family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    /// `m(x) - y`
    Cmr,
    /// `q_alpha(x) - y`
    Cqr,
    /// `alpha - F(y | x)`
    Cdr,
}

impl ScoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Cmr => "cmr",
            ScoreKind::Cqr => "cqr",
            ScoreKind::Cdr => "cdr",
        }
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cmr" => Ok(ScoreKind::Cmr),
            "cqr" => Ok(ScoreKind::Cqr),
            "cdr" => Ok(ScoreKind::Cdr),
            other => Err(Error::invalid(format!("unknown score kind `{other}`"))),
        }
    }
}

/// Fitted outcome model behind a score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeModel {
    Mean(MeanModel),
    Quantile(QuantileModel),
    Cdf(CdfModel),
}

impl OutcomeModel {
    pub fn dim(&self) -> usize {
        match self {
            OutcomeModel::Mean(m) => m.dim(),
            OutcomeModel::Quantile(m) => m.dim(),
            OutcomeModel::Cdf(m) => m.dim(),
        }
    }

    fn matches(&self, kind: ScoreKind) -> bool {
        matches!(
            (kind, self),
            (ScoreKind::Cmr, OutcomeModel::Mean(_))
                | (ScoreKind::Cqr, OutcomeModel::Quantile(_))
                | (ScoreKind::Cdr, OutcomeModel::Cdf(_))
        )
    }

    /// Evaluate the model at `x` once; scores and bounds follow from the result.
    pub fn predict(&self, kind: ScoreKind, alpha: f64, x: &[f64]) -> Result<OutcomePrediction> {
        if !self.matches(kind) {
            return Err(Error::KindMismatch(format!(
                "score {} cannot use this outcome model",
                kind.as_str()
            )));
        }
        Ok(match self {
            OutcomeModel::Mean(m) => OutcomePrediction::Point(m.predict(x)?),
            OutcomeModel::Quantile(m) => OutcomePrediction::Point(m.predict(x)?),
            OutcomeModel::Cdf(m) => OutcomePrediction::Cdf {
                cdf: m.neighborhood(x)?,
                alpha,
            },
        })
    }
}

/// Outcome model evaluated at one covariate vector.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomePrediction {
    /// `m(x)` or `q_alpha(x)`.
    Point(f64),
    Cdf { cdf: NeighborCdf, alpha: f64 },
}

impl OutcomePrediction {
    pub fn score(&self, y: f64) -> f64 {
        match self {
            OutcomePrediction::Point(m) => m - y,
            OutcomePrediction::Cdf { cdf, alpha } => alpha - cdf.cdf(y),
        }
    }

    /// `inf{y : V(x, y) <= eta}` before capping and flooring.
    pub fn invert(&self, eta: f64) -> f64 {
        match self {
            OutcomePrediction::Point(m) => m - eta,
            // Evaluate exactly the expression used for the score so that the
            // bound agrees with `score(y) <= eta` in floating point.
            OutcomePrediction::Cdf { cdf, alpha } => cdf.first_where(|f| alpha - f <= eta),
        }
    }
}

/// `V(x, y)` for the given score family and fitted model.
pub fn conformity_score(
    kind: ScoreKind,
    model: &OutcomeModel,
    alpha: f64,
    x: &[f64],
    y: f64,
) -> Result<f64> {
    Ok(model.predict(kind, alpha, x)?.score(y))
}

/// Lower predictive bound at one test point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpbOutput {
    pub lpb: f64,
    pub eta: f64,
    pub p_inf: f64,
    pub clamped_at_c0: bool,
    pub uninformative: bool,
}

/// Turn a calibration cutoff into a bound in `[0, c0]`.
pub fn lpb_from_eta(pred: &OutcomePrediction, eta: f64, p_inf: f64, c0: Option<f64>) -> LpbOutput {
    if eta == f64::INFINITY {
        return LpbOutput {
            lpb: 0.0,
            eta,
            p_inf,
            clamped_at_c0: false,
            uninformative: true,
        };
    }
    let raw = pred.invert(eta);
    let (capped, clamped) = match c0 {
        Some(c0) if raw >= c0 => (c0, true),
        _ => (raw, false),
    };
    LpbOutput {
        lpb: capped.max(0.0),
        eta,
        p_inf,
        clamped_at_c0: clamped,
        uninformative: false,
    }
}
