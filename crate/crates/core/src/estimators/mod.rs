//! Built-in estimators for the outcome and censoring models.
//!
//! All estimators standardize covariates with statistics computed on their
//! fitting sample only, and keep those statistics frozen for prediction.

mod bernoulli;
mod knn;
mod mean;
mod pinball;

pub use bernoulli::{
    fit_bernoulli, fit_censoring, BernoulliKind, BernoulliModel, CensoringModel, LogisticOptions,
};
pub use knn::{fit_knn_cdf, CdfModel, KnnIndex, NeighborCdf};
pub use mean::{fit_knn_mean, fit_least_squares, MeanModel};
pub use pinball::{fit_linear_pinball, pinball_loss, PinballFit, PinballOptions, QuantileModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default neighbor count `ceil(n^0.7)`, capped at `n`.
pub fn default_k(n: usize) -> usize {
    ((n as f64).powf(0.7).ceil() as usize).clamp(1, n.max(1))
}

/// Per-column z-scoring; zero-variance columns get scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Degenerate("cannot standardize an empty sample".into()));
        }
        let p = rows[0].len();
        let mut means = vec![0.0; p];
        for r in rows {
            if r.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: r.len(),
                });
            }
            for (m, v) in means.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n as f64);
        let mut scales = vec![0.0; p];
        for r in rows {
            for ((s, v), m) in scales.iter_mut().zip(r.iter()).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut scales {
            let sd = (*s / n as f64).sqrt();
            *s = if sd > 1e-12 { sd } else { 1.0 };
        }
        Ok(Self { means, scales })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn transform_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            x.iter()
                .zip(&self.means)
                .zip(&self.scales)
                .map(|((v, m), s)| (v - m) / s),
        );
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        self.transform_into(x, &mut out);
        out
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

pub(crate) fn check_xy(x: &[&[f64]], n_y: usize) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Degenerate("empty fitting sample".into()));
    }
    if x.len() != n_y {
        return Err(Error::invalid(format!(
            "{} covariate rows but {} responses",
            x.len(),
            n_y
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_k_growth() {
        assert_eq!(default_k(1), 1);
        assert_eq!(default_k(10), 6);
        assert_eq!(default_k(1000), 126);
    }

    #[test]
    fn standardizer_zero_variance() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = Standardizer::fit(&refs).unwrap();
        assert_eq!(s.means, vec![2.0, 5.0]);
        assert_eq!(s.scales, vec![1.0, 1.0]);
        assert_eq!(s.transform(&[3.0, 6.0]), vec![1.0, 1.0]);
    }
}
