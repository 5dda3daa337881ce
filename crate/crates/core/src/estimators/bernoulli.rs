use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_xy, default_k, KnnIndex, Standardizer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BernoulliKind {
    Logistic,
    KnnFrequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticOptions {
    pub ridge: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            ridge: 1e-6,
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

/// Estimator of `P(label = 1 | x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BernoulliModel {
    Constant {
        p: f64,
    },
    /// Coefficients act on standardized covariates.
    Logistic {
        standardizer: Standardizer,
        intercept: f64,
        coefficients: Vec<f64>,
        iterations: usize,
        converged: bool,
    },
    KnnFrequency {
        index: KnnIndex,
    },
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Fit a conditional Bernoulli probability. When every label is identical
/// the result is the constant model at the empirical rate.
pub fn fit_bernoulli(
    x: &[&[f64]],
    labels: &[bool],
    kind: BernoulliKind,
    k: Option<usize>,
    opts: &LogisticOptions,
) -> Result<BernoulliModel> {
    check_xy(x, labels.len())?;
    let n = labels.len();
    let ones = labels.iter().filter(|&&l| l).count();
    if ones == 0 || ones == n {
        return Ok(BernoulliModel::Constant {
            p: ones as f64 / n as f64,
        });
    }
    match kind {
        BernoulliKind::Logistic => fit_logistic(x, labels, opts),
        BernoulliKind::KnnFrequency => {
            let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
            let k = k.unwrap_or_else(|| default_k(n));
            Ok(BernoulliModel::KnnFrequency {
                index: KnnIndex::fit(x, &y, k)?,
            })
        }
    }
}

fn fit_logistic(x: &[&[f64]], labels: &[bool], opts: &LogisticOptions) -> Result<BernoulliModel> {
    let st = Standardizer::fit(x)?;
    let (n, p) = (x.len(), st.dim());
    let d = p + 1;
    let mut design = DMatrix::<f64>::zeros(n, d);
    for (i, row) in x.iter().enumerate() {
        design[(i, 0)] = 1.0;
        for (j, v) in st.transform(row).into_iter().enumerate() {
            design[(i, j + 1)] = v;
        }
    }
    let y = DVector::from_iterator(n, labels.iter().map(|&l| if l { 1.0 } else { 0.0 }));
    let lambda = opts.ridge;

    // Penalized negative log-likelihood.
    let objective = |beta: &DVector<f64>| -> f64 {
        let eta = &design * beta;
        let nll: f64 = eta
            .iter()
            .zip(y.iter())
            .map(|(&e, &yi)| softplus(e) - yi * e)
            .sum();
        nll + 0.5 * lambda * beta.norm_squared()
    };

    let mut beta = DVector::<f64>::zeros(d);
    let mut obj = objective(&beta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let eta = &design * &beta;
        let mu = eta.map(sigmoid);
        let grad = design.transpose() * (&mu - &y) + &beta * lambda;
        if grad.norm() / n as f64 <= opts.tol {
            converged = true;
            break;
        }
        let wts = mu.map(|m| m * (1.0 - m));
        let mut hess = DMatrix::<f64>::identity(d, d) * lambda;
        for i in 0..n {
            let w = wts[i];
            if w == 0.0 {
                continue;
            }
            let row = design.row(i);
            hess.ger(w, &row.transpose(), &row.transpose(), 1.0);
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => hess
                .lu()
                .solve(&grad)
                .ok_or_else(|| Error::Degenerate("singular logistic Hessian".into()))?,
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &beta - &step * t;
            let cand_obj = objective(&cand);
            if cand_obj.is_finite() && cand_obj <= obj {
                beta = cand;
                obj = cand_obj;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No descent along the Newton direction: at a numerical optimum.
            converged = true;
            break;
        }
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Degenerate("logistic fit diverged".into()));
    }
    Ok(BernoulliModel::Logistic {
        standardizer: st,
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        iterations,
        converged,
    })
}

impl BernoulliModel {
    pub fn dim(&self) -> Option<usize> {
        match self {
            BernoulliModel::Constant { .. } => None,
            BernoulliModel::Logistic { standardizer, .. } => Some(standardizer.dim()),
            BernoulliModel::KnnFrequency { index } => Some(index.dim()),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            BernoulliModel::Constant { p } => Ok(*p),
            BernoulliModel::Logistic {
                standardizer,
                intercept,
                coefficients,
                ..
            } => {
                standardizer.check_dim(x)?;
                let z = standardizer.transform(x);
                let eta = intercept + coefficients.iter().zip(&z).map(|(b, v)| b * v).sum::<f64>();
                Ok(sigmoid(eta))
            }
            BernoulliModel::KnnFrequency { index } => {
                let ys = index.neighbor_responses(x)?;
                Ok(ys.iter().sum::<f64>() / ys.len() as f64)
            }
        }
    }
}

/// Floored estimate of `P(C >= c0 | x)`, or of a propensity `P(W = 1 | x)`
/// when `c0` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringModel {
    pub kind: BernoulliKind,
    pub c0: Option<f64>,
    pub floor: f64,
    pub model: BernoulliModel,
}

fn check_floor(floor: f64) -> Result<()> {
    if !(floor > 0.0 && floor <= 1.0) {
        return Err(Error::invalid(format!("floor must lie in (0, 1], got {floor}")));
    }
    Ok(())
}

pub fn fit_censoring(
    x: &[&[f64]],
    c: &[f64],
    c0: f64,
    kind: BernoulliKind,
    floor: f64,
    k: Option<usize>,
) -> Result<CensoringModel> {
    check_floor(floor)?;
    if !(c0 >= 0.0) {
        return Err(Error::invalid(format!("c0 must be nonnegative, got {c0}")));
    }
    let labels: Vec<bool> = c.iter().map(|&ci| ci >= c0).collect();
    let model = fit_bernoulli(x, &labels, kind, k, &LogisticOptions::default())?;
    Ok(CensoringModel {
        kind,
        c0: Some(c0),
        floor,
        model,
    })
}

impl CensoringModel {
    /// Same machinery fitted on arbitrary binary labels.
    pub fn fit_labels(
        x: &[&[f64]],
        labels: &[bool],
        kind: BernoulliKind,
        floor: f64,
        k: Option<usize>,
    ) -> Result<Self> {
        check_floor(floor)?;
        let model = fit_bernoulli(x, labels, kind, k, &LogisticOptions::default())?;
        Ok(Self {
            kind,
            c0: None,
            floor,
            model,
        })
    }

    pub fn constant(p: f64, floor: f64) -> Self {
        Self {
            kind: BernoulliKind::Logistic,
            c0: None,
            floor,
            model: BernoulliModel::Constant { p },
        }
    }

    pub fn predict_survival(&self, x: &[f64]) -> Result<f64> {
        Ok(self.model.predict(x)?.clamp(self.floor, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;

    fn rows(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(|r| r.as_slice()).collect()
    }

    #[test]
    fn independent_censoring_is_flat() {
        let mut rng = SimRng::new(31);
        let n = 2000;
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.uniform_range(0.0, 4.0)]).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.exponential(0.4)).collect();
        let c0 = 2.0;
        let marginal = c.iter().filter(|&&v| v >= c0).count() as f64 / n as f64;
        for kind in [BernoulliKind::Logistic, BernoulliKind::KnnFrequency] {
            let m = fit_censoring(&rows(&x), &c, c0, kind, 0.05, None).unwrap();
            let close = (0..200)
                .filter(|_| {
                    let q = m.predict_survival(&[rng.uniform_range(0.0, 4.0)]).unwrap();
                    (q - marginal).abs() <= 0.1
                })
                .count();
            assert!(close >= 180, "{kind:?}: {close}");
        }
    }

    #[test]
    fn all_labels_above_threshold() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let m = fit_censoring(&rows(&x), &[5.0, 6.0, 7.0], 1.0, BernoulliKind::Logistic, 0.05, None)
            .unwrap();
        assert_eq!(m.model, BernoulliModel::Constant { p: 1.0 });
        assert_eq!(m.predict_survival(&[100.0]).unwrap(), 1.0);
    }

    #[test]
    fn floor_is_exact() {
        // Far from the data the fitted probability is far below 0.001.
        let mut rng = SimRng::new(5);
        let x: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.uniform_range(-1.0, 1.0)]).collect();
        let c: Vec<f64> = x
            .iter()
            .map(|r| if rng.uniform() < sigmoid(-3.0 * r[0]) { 10.0 } else { 0.0 })
            .collect();
        let m = fit_censoring(&rows(&x), &c, 1.0, BernoulliKind::Logistic, 0.05, None).unwrap();
        assert!(m.model.predict(&[5.0]).unwrap() < 0.001);
        assert_eq!(m.predict_survival(&[5.0]).unwrap(), 0.05);
    }

    #[test]
    fn separable_data_ranks_perfectly() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 4.0, (i % 3) as f64]).collect();
        let labels: Vec<bool> = (0..40).map(|i| i >= 20).collect();
        let m = fit_bernoulli(&rows(&x), &labels, BernoulliKind::Logistic, None, &LogisticOptions::default())
            .unwrap();
        let scores: Vec<f64> = x.iter().map(|r| m.predict(r).unwrap()).collect();
        assert!(scores.iter().all(|s| s.is_finite()));
        let lowest_pos = (20..40).map(|i| scores[i]).fold(f64::INFINITY, f64::min);
        let highest_neg = (0..20).map(|i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
        assert!(lowest_pos > highest_neg);
    }

    #[test]
    fn predictions_respect_floor_and_one() {
        let mut rng = SimRng::new(12);
        let x: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.normal(), rng.normal()]).collect();
        let c: Vec<f64> = x.iter().map(|r| (r[0] + rng.normal()).exp()).collect();
        for kind in [BernoulliKind::Logistic, BernoulliKind::KnnFrequency] {
            let m = fit_censoring(&rows(&x), &c, 1.0, kind, 0.2, Some(7)).unwrap();
            for _ in 0..200 {
                let q = m
                    .predict_survival(&[3.0 * rng.normal(), 3.0 * rng.normal()])
                    .unwrap();
                assert!((0.2..=1.0).contains(&q));
            }
        }
    }

    #[test]
    fn logistic_matches_known_coefficients() {
        let mut rng = SimRng::new(99);
        let n = 20000;
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.normal()]).collect();
        let labels: Vec<bool> = x.iter().map(|r| rng.uniform() < sigmoid(0.5 + 1.5 * r[0])).collect();
        let m = fit_bernoulli(&rows(&x), &labels, BernoulliKind::Logistic, None, &LogisticOptions::default())
            .unwrap();
        let p0 = m.predict(&[0.0]).unwrap();
        let p1 = m.predict(&[1.0]).unwrap();
        assert!((p0 - sigmoid(0.5)).abs() < 0.03, "{p0}");
        assert!((p1 - sigmoid(2.0)).abs() < 0.03, "{p1}");
    }
}
