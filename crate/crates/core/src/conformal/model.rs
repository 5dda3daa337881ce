use serde::{Deserialize, Serialize};

use super::quantile::CalibrationSet;
use super::score::{lpb_from_eta, LpbOutput, OutcomeModel, OutcomePrediction, ScoreKind};
use crate::data::{select_subpopulation, Dataset, SplitIndices};
use crate::error::{Error, Result};
use crate::estimators::{
    default_k, fit_censoring, fit_knn_cdf, fit_knn_mean, fit_least_squares, fit_linear_pinball,
    BernoulliKind, CensoringModel, PinballOptions, QuantileModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantileBackend {
    Knn,
    LinearPinball,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanBackend {
    Knn,
    LeastSquares,
}

/// How calibration weights are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum WeightSpec {
    /// `w = 1` everywhere (known, completely independent censoring).
    Unit,
    /// `w = 1 / c_hat(x)` with `c_hat` fitted on the training fold.
    Estimated { model: BernoulliKind, floor: f64 },
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Estimated {
            model: BernoulliKind::Logistic,
            floor: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConformalConfig {
    pub score: ScoreKind,
    pub alpha: f64,
    pub quantile_backend: QuantileBackend,
    pub mean_backend: MeanBackend,
    /// Neighbor count for the outcome model; `None` means `ceil(n^0.7)`.
    pub k: Option<usize>,
    /// Neighbor count for a k-NN censoring model.
    pub censoring_k: Option<usize>,
    pub weights: WeightSpec,
    pub pinball: PinballOptions,
}

impl Default for ConformalConfig {
    fn default() -> Self {
        Self {
            score: ScoreKind::Cqr,
            alpha: 0.1,
            quantile_backend: QuantileBackend::Knn,
            mean_backend: MeanBackend::Knn,
            k: None,
            censoring_k: None,
            weights: WeightSpec::default(),
            pinball: PinballOptions::default(),
        }
    }
}

impl ConformalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if let WeightSpec::Estimated { floor, .. } = self.weights {
            if !(floor > 0.0 && floor <= 1.0) {
                return Err(Error::invalid(format!("weight floor must lie in (0, 1], got {floor}")));
            }
        }
        Ok(())
    }
}

/// Fitted weight function `w(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum WeightModel {
    Unit,
    Censoring { censoring: CensoringModel },
    /// `1 / (c_hat(x) * e_hat(x))` for treated units.
    Counterfactual {
        censoring: CensoringModel,
        propensity: CensoringModel,
    },
}

impl WeightModel {
    pub fn weight(&self, x: &[f64]) -> Result<f64> {
        match self {
            WeightModel::Unit => Ok(1.0),
            WeightModel::Censoring { censoring } => Ok(1.0 / censoring.predict_survival(x)?),
            WeightModel::Counterfactual {
                censoring,
                propensity,
            } => Ok(1.0 / (censoring.predict_survival(x)? * propensity.predict_survival(x)?)),
        }
    }
}

/// Anything that maps covariates to a lower predictive bound.
pub trait Predictor: Sync {
    fn predict(&self, x: &[f64]) -> Result<LpbOutput>;
    fn dim(&self) -> usize;
    /// Cap applied to every bound, if any.
    fn c0(&self) -> Option<f64>;

    fn predict_batch(&self, xs: &[&[f64]]) -> Result<Vec<LpbOutput>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

/// Outcome model, weight model and calibration scores, ready to predict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalModel {
    pub score: ScoreKind,
    pub alpha: f64,
    /// `None` for the uncapped naive baseline.
    pub c0: Option<f64>,
    pub outcome: OutcomeModel,
    pub weights: WeightModel,
    pub calibration: CalibrationSet,
    pub n_train: usize,
    pub n_calib: usize,
    /// Training units used by the outcome model.
    pub n_train_selected: usize,
}

impl ConformalModel {
    /// Score the calibration units and assemble the model.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        score: ScoreKind,
        alpha: f64,
        c0: Option<f64>,
        outcome: OutcomeModel,
        weights: WeightModel,
        calib_x: &[&[f64]],
        calib_y: &[f64],
        counts: (usize, usize, usize),
    ) -> Result<Self> {
        let calibration = calibration_set(score, alpha, &outcome, &weights, calib_x, calib_y)?;
        Ok(Self {
            score,
            alpha,
            c0,
            outcome,
            weights,
            calibration,
            n_train: counts.0,
            n_calib: counts.1,
            n_train_selected: counts.2,
        })
    }

    pub fn prediction(&self, x: &[f64]) -> Result<OutcomePrediction> {
        self.outcome.predict(self.score, self.alpha, x)
    }
}

impl Predictor for ConformalModel {
    fn predict(&self, x: &[f64]) -> Result<LpbOutput> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let pred = self.prediction(x)?;
        let w = self.weights.weight(x)?;
        let eta = self.calibration.quantile(1.0 - self.alpha, w);
        Ok(lpb_from_eta(&pred, eta, self.calibration.p_inf(w), self.c0))
    }

    fn dim(&self) -> usize {
        self.outcome.dim()
    }

    fn c0(&self) -> Option<f64> {
        self.c0
    }
}

/// Scores `V(X_i, Y_i)` and weights `w(X_i)` for calibration units.
pub fn calibration_set(
    score: ScoreKind,
    alpha: f64,
    outcome: &OutcomeModel,
    weights: &WeightModel,
    x: &[&[f64]],
    y: &[f64],
) -> Result<CalibrationSet> {
    let mut scores = Vec::with_capacity(x.len());
    let mut ws = Vec::with_capacity(x.len());
    for (xi, &yi) in x.iter().zip(y) {
        scores.push(outcome.predict(score, alpha, xi)?.score(yi));
        ws.push(weights.weight(xi)?);
    }
    CalibrationSet::new(scores, ws)
}

/// Fit the outcome model required by `cfg.score` on `(x, y)`.
pub fn fit_outcome(cfg: &ConformalConfig, x: &[&[f64]], y: &[f64]) -> Result<OutcomeModel> {
    let k = cfg.k.unwrap_or_else(|| default_k(x.len())).min(x.len());
    Ok(match cfg.score {
        ScoreKind::Cqr => match cfg.quantile_backend {
            QuantileBackend::Knn => {
                OutcomeModel::Quantile(QuantileModel::knn(fit_knn_cdf(x, y, k)?, cfg.alpha))
            }
            QuantileBackend::LinearPinball => OutcomeModel::Quantile(
                fit_linear_pinball(x, y, cfg.alpha, &cfg.pinball)?.model,
            ),
        },
        ScoreKind::Cdr => OutcomeModel::Cdf(fit_knn_cdf(x, y, k)?),
        ScoreKind::Cmr => OutcomeModel::Mean(match cfg.mean_backend {
            MeanBackend::Knn => fit_knn_mean(x, y, k)?,
            MeanBackend::LeastSquares => fit_least_squares(x, y)?,
        }),
    })
}

/// Fit the weight model on training units (all of them, not only `C >= c0`).
pub fn fit_weights(cfg: &ConformalConfig, ds: &Dataset, train: &[usize], c0: f64) -> Result<WeightModel> {
    Ok(match cfg.weights {
        WeightSpec::Unit => WeightModel::Unit,
        WeightSpec::Estimated { model, floor } => {
            let c: Vec<f64> = train.iter().map(|&i| ds.record(i).c).collect();
            WeightModel::Censoring {
                censoring: fit_censoring(&ds.covariates(train), &c, c0, model, floor, cfg.censoring_k)?,
            }
        }
    })
}

/// Weighted split conformal calibration at threshold `c0`.
pub fn conformalize(
    ds: &Dataset,
    split: &SplitIndices,
    c0: f64,
    cfg: &ConformalConfig,
) -> Result<ConformalModel> {
    cfg.validate()?;
    let (train_sel, train_y) = select_subpopulation(ds, &split.train, c0)?;
    let outcome = fit_outcome(cfg, &ds.covariates(&train_sel), &train_y)?;
    let weights = fit_weights(cfg, ds, &split.train, c0)?;
    let (cal_sel, cal_y) = select_subpopulation(ds, &split.calib, c0)?;
    ConformalModel::from_parts(
        cfg.score,
        cfg.alpha,
        Some(c0),
        outcome,
        weights,
        &ds.covariates(&cal_sel),
        &cal_y,
        (split.train.len(), split.calib.len(), train_sel.len()),
    )
}

/// Unweighted split CQR on the observed times, no threshold.
pub fn conformalize_naive(ds: &Dataset, split: &SplitIndices, cfg: &ConformalConfig) -> Result<ConformalModel> {
    cfg.validate()?;
    let cfg = ConformalConfig {
        score: ScoreKind::Cqr,
        ..cfg.clone()
    };
    let ty = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&i| ds.record(i).t_tilde).collect() };
    let outcome = fit_outcome(&cfg, &ds.covariates(&split.train), &ty(&split.train))?;
    ConformalModel::from_parts(
        ScoreKind::Cqr,
        cfg.alpha,
        None,
        outcome,
        WeightModel::Unit,
        &ds.covariates(&split.calib),
        &ty(&split.calib),
        (split.train.len(), split.calib.len(), split.train.len()),
    )
}
