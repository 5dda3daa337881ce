use serde::{Deserialize, Serialize};

use super::{check_xy, CdfModel, Standardizer};
use crate::error::{Error, Result};

/// Check loss `rho_alpha(u) = u * (alpha - 1{u < 0})`.
pub fn pinball_loss(u: f64, alpha: f64) -> f64 {
    if u < 0.0 {
        u * (alpha - 1.0)
    } else {
        u * alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PinballOptions {
    pub steps: usize,
    /// Initial step `s0` in standardized units; step `t` is `s0 / sqrt(t)`.
    pub step0: f64,
    pub tol: f64,
}

impl Default for PinballOptions {
    fn default() -> Self {
        Self {
            steps: 5000,
            step0: 1.0,
            tol: 1e-6,
        }
    }
}

/// Conditional quantile estimator at a fixed level `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QuantileModel {
    KnnCdf {
        cdf: CdfModel,
        alpha: f64,
    },
    LinearPinball {
        intercept: f64,
        coefficients: Vec<f64>,
        alpha: f64,
        converged: bool,
    },
}

impl QuantileModel {
    pub fn knn(cdf: CdfModel, alpha: f64) -> Self {
        QuantileModel::KnnCdf { cdf, alpha }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            QuantileModel::KnnCdf { alpha, .. } | QuantileModel::LinearPinball { alpha, .. } => {
                *alpha
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            QuantileModel::KnnCdf { cdf, .. } => cdf.dim(),
            QuantileModel::LinearPinball { coefficients, .. } => coefficients.len(),
        }
    }

    /// Predicted `alpha`-quantile at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            QuantileModel::KnnCdf { cdf, alpha } => cdf.predict_quantile(x, *alpha),
            QuantileModel::LinearPinball {
                intercept,
                coefficients,
                ..
            } => {
                if x.len() != coefficients.len() {
                    return Err(Error::DimensionMismatch {
                        expected: coefficients.len(),
                        got: x.len(),
                    });
                }
                Ok(intercept + coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PinballFit {
    pub model: QuantileModel,
    /// Mean check loss of the returned coefficients on the fitting sample.
    pub objective: f64,
    pub converged: bool,
}

/// Linear quantile regression by subgradient descent on the mean check loss.
///
/// Covariates and response are standardized, the iterate starts at zero and
/// moves with step `s0 / sqrt(t)`. The best iterate seen is returned. The fit
/// is flagged converged when the best objective improved by at most `tol`
/// over the final tenth of the iterations.
pub fn fit_linear_pinball(
    x: &[&[f64]],
    y: &[f64],
    alpha: f64,
    opts: &PinballOptions,
) -> Result<PinballFit> {
    check_xy(x, y.len())?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("quantile level must lie in (0, 1), got {alpha}")));
    }
    let st = Standardizer::fit(x)?;
    let (n, p) = (x.len(), st.dim());
    if n <= p + 1 {
        return Err(Error::Degenerate(format!(
            "pinball regression needs n > p + 1 (n = {n}, p = {p})"
        )));
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let y_sd = {
        let v = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
        if v.sqrt() > 1e-12 {
            v.sqrt()
        } else {
            1.0
        }
    };
    // Row-major design with a leading 1 column.
    let mut design = Vec::with_capacity(n * (p + 1));
    for row in x {
        design.push(1.0);
        design.extend(st.transform(row));
    }
    let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_sd).collect();

    let d = p + 1;
    let mut beta = vec![0.0; d];
    let mut best_beta = beta.clone();
    let mut best_obj = f64::INFINITY;
    let mut best_at_checkpoint = f64::INFINITY;
    let checkpoint = opts.steps - opts.steps / 10;
    let mut grad = vec![0.0; d];
    let mut zero_grad = false;

    for t in 0..=opts.steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut obj = 0.0;
        for (i, &yi) in ys.iter().enumerate() {
            let row = &design[i * d..(i + 1) * d];
            let u = yi - row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
            obj += pinball_loss(u, alpha);
            let psi = if u < 0.0 { alpha - 1.0 } else { alpha };
            for (g, a) in grad.iter_mut().zip(row) {
                *g -= psi * a;
            }
        }
        obj /= n as f64;
        if obj < best_obj {
            best_obj = obj;
            best_beta.copy_from_slice(&beta);
        }
        if t == checkpoint {
            best_at_checkpoint = best_obj;
        }
        if t == opts.steps {
            break;
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt() / n as f64;
        if norm == 0.0 || obj == 0.0 {
            zero_grad = true;
            break;
        }
        let step = opts.step0 / ((t + 1) as f64).sqrt();
        for (b, g) in beta.iter_mut().zip(&grad) {
            *b -= step * g / n as f64;
        }
    }
    let converged = zero_grad || best_at_checkpoint - best_obj <= opts.tol;

    let coefficients: Vec<f64> = (0..p)
        .map(|j| best_beta[j + 1] * y_sd / st.scales[j])
        .collect();
    let intercept = y_mean + y_sd * best_beta[0]
        - coefficients
            .iter()
            .zip(&st.means)
            .map(|(b, m)| b * m)
            .sum::<f64>();

    let objective_of = |b0: f64, b: &[f64]| -> f64 {
        x.iter()
            .zip(y)
            .map(|(row, &yi)| {
                let pred = b0 + b.iter().zip(row.iter()).map(|(c, v)| c * v).sum::<f64>();
                pinball_loss(yi - pred, alpha)
            })
            .sum::<f64>()
            / n as f64
    };
    let mut fitted = (intercept, coefficients);
    let mut objective = objective_of(fitted.0, &fitted.1);
    let zero = vec![0.0; p];
    let zero_obj = objective_of(0.0, &zero);
    if zero_obj < objective {
        fitted = (0.0, zero);
        objective = zero_obj;
    }
    Ok(PinballFit {
        model: QuantileModel::LinearPinball {
            intercept: fitted.0,
            coefficients: fitted.1,
            alpha,
            converged,
        },
        objective,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;

    fn rows(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(|r| r.as_slice()).collect()
    }

    #[test]
    fn constant_response_is_exact() {
        let mut rng = SimRng::new(2);
        let x: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.normal(), rng.normal()]).collect();
        let y = vec![3.0; 50];
        let fit = fit_linear_pinball(&rows(&x), &y, 0.3, &PinballOptions::default()).unwrap();
        match fit.model {
            QuantileModel::LinearPinball {
                intercept,
                ref coefficients,
                ..
            } => {
                assert!((intercept - 3.0).abs() < 1e-12);
                assert!(coefficients.iter().all(|c| c.abs() < 1e-12));
            }
            _ => unreachable!(),
        }
        assert!(fit.objective.abs() < 1e-12);
        assert!(fit.converged);
    }

    #[test]
    fn low_quantile_of_uniform() {
        // Order-statistic oracle: the sample 0.1-quantile of the responses.
        let mut rng = SimRng::new(8);
        let y: Vec<f64> = (0..2000).map(|_| rng.uniform()).collect();
        let x = vec![vec![0.0]; 2000];
        let fit = fit_linear_pinball(&rows(&x), &y, 0.1, &PinballOptions::default()).unwrap();
        let b0 = fit.model.predict(&[0.0]).unwrap();
        let mut sorted = y.clone();
        sorted.sort_by(f64::total_cmp);
        let order_stat = sorted[(0.1f64 * 2000.0).ceil() as usize - 1];
        assert!((b0 - 0.1).abs() < 0.05, "{b0}");
        assert!((b0 - order_stat).abs() < 0.02, "{b0} vs {order_stat}");
    }

    #[test]
    fn never_worse_than_zero() {
        let mut rng = SimRng::new(4);
        let x: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.normal()]).collect();
        let y: Vec<f64> = (0..30).map(|_| 100.0 * rng.normal()).collect();
        let opts = PinballOptions {
            steps: 3,
            ..Default::default()
        };
        let fit = fit_linear_pinball(&rows(&x), &y, 0.5, &opts).unwrap();
        let zero: f64 = y.iter().map(|&v| pinball_loss(v, 0.5)).sum::<f64>() / 30.0;
        assert!(fit.objective <= zero);
    }

    #[test]
    fn rejects_small_samples() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!(fit_linear_pinball(&rows(&x), &[1.0, 2.0], 0.5, &PinballOptions::default()).is_err());
    }
}
