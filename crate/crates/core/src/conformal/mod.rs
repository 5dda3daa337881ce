//! Weighted split conformal calibration of lower predictive bounds.

mod model;
mod quantile;
mod score;

pub use model::{
    calibration_set, conformalize, conformalize_naive, fit_outcome, fit_weights, ConformalConfig,
    ConformalModel, MeanBackend, Predictor, QuantileBackend, WeightModel, WeightSpec,
};
pub use quantile::{weighted_quantile, CalibrationSet};
pub use score::{conformity_score, lpb_from_eta, LpbOutput, OutcomeModel, OutcomePrediction, ScoreKind};
