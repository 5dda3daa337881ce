use serde::{Deserialize, Serialize};

use crate::conformal::{fit_outcome, ConformalConfig, ConformalModel, WeightModel, WeightSpec};
use crate::data::{select_subpopulation, Dataset, SplitIndices, SurvivalRecord};
use crate::error::{Error, Result};
use crate::estimators::{fit_censoring, BernoulliKind, CensoringModel};

/// A unit with its treatment assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentRecord {
    pub record: SurvivalRecord,
    pub treated: bool,
}

/// Estimator for the propensity `P(W = 1 | x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropensitySpec {
    pub model: BernoulliKind,
    pub floor: f64,
}

impl Default for PropensitySpec {
    fn default() -> Self {
        Self {
            model: BernoulliKind::Logistic,
            floor: 0.05,
        }
    }
}

/// `1 / (c_hat(x) * e_hat(x))`.
pub fn counterfactual_weight(censoring: &CensoringModel, propensity: &CensoringModel, x: &[f64]) -> Result<f64> {
    WeightModel::Counterfactual {
        censoring: censoring.clone(),
        propensity: propensity.clone(),
    }
    .weight(x)
}

/// Bounds on the treated potential outcome. The outcome model and the
/// calibration scores use treated units with `C >= c0`; the censoring and
/// propensity models are fitted on all training units.
pub fn conformalize_counterfactual(
    ds: &Dataset,
    treated: &[bool],
    split: &SplitIndices,
    c0: f64,
    cfg: &ConformalConfig,
    propensity: &PropensitySpec,
) -> Result<ConformalModel> {
    cfg.validate()?;
    if treated.len() != ds.len() {
        return Err(Error::invalid(format!(
            "{} treatment flags for {} records",
            treated.len(),
            ds.len()
        )));
    }
    let (model, floor) = match cfg.weights {
        WeightSpec::Estimated { model, floor } => (model, floor),
        WeightSpec::Unit => {
            return Err(Error::invalid("counterfactual weights need an estimated censoring model"))
        }
    };
    let only_treated = |idx: &[usize]| -> Vec<usize> { idx.iter().copied().filter(|&i| treated[i]).collect() };

    let (train_sel, train_y) = select_subpopulation(ds, &only_treated(&split.train), c0)?;
    let outcome = fit_outcome(cfg, &ds.covariates(&train_sel), &train_y)?;

    let train_x = ds.covariates(&split.train);
    let c: Vec<f64> = split.train.iter().map(|&i| ds.record(i).c).collect();
    let censoring = fit_censoring(&train_x, &c, c0, model, floor, cfg.censoring_k)?;
    let w: Vec<bool> = split.train.iter().map(|&i| treated[i]).collect();
    let prop = CensoringModel::fit_labels(&train_x, &w, propensity.model, propensity.floor, cfg.censoring_k)?;

    let (cal_sel, cal_y) = select_subpopulation(ds, &only_treated(&split.calib), c0)?;
    ConformalModel::from_parts(
        cfg.score,
        cfg.alpha,
        Some(c0),
        outcome,
        WeightModel::Counterfactual {
            censoring,
            propensity: prop,
        },
        &ds.covariates(&cal_sel),
        &cal_y,
        (split.train.len(), split.calib.len(), train_sel.len()),
    )
}
