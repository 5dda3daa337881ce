//! Calibrated lower predictive bounds (LPBs) on right-censored survival
//! times.
//!
//! The pipeline restricts attention to units whose censoring time exceeds a
//! threshold `c0`, treats `min(T~, c0)` as the outcome, and corrects the
//! resulting covariate shift with weights `1 / P(C >= c0 | X)` inside a split
//! conformal calibration. The bound `L(x)` satisfies
//! `P(T >= L(X)) >= 1 - alpha` whenever either the censoring mechanism or the
//! outcome model is estimated well, and exactly when the censoring mechanism
//! is known.
//!
//! Modules:
//! - [`data`]: records, CSV ingestion, seeded splitting, subpopulation selection.
//! - [`estimators`]: k-NN conditional CDF/mean, linear pinball regression,
//!   logistic and k-NN censoring models.
//! - [`conformal`]: conformity scores, weighted quantile, LPB construction.
//! - [`threshold`]: data-adaptive choice of `c0` and the discrete `c_bar` bound.
//! - [`extensions`]: Mondrian calibration, counterfactual weights, two censoring times.
//! - [`simulation`]: data generating processes and coverage evaluation.
//! - [`cli`]: command implementations behind the `cfsurv` binary.

pub mod cli;
pub mod conformal;
pub mod data;
pub mod error;
pub mod estimators;
pub mod extensions;
pub mod rng;
pub mod simulation;
pub mod threshold;

pub use conformal::{
    conformalize, conformalize_naive, CalibrationSet, ConformalConfig, ConformalModel, LpbOutput,
    Predictor, ScoreKind,
};
pub use data::{Dataset, SplitIndices, SurvivalRecord};
pub use error::{Error, ErrorKind, Result};
