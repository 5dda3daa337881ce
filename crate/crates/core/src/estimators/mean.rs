use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_xy, KnnIndex, Standardizer};
use crate::error::{Error, Result};

/// Conditional mean estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeanModel {
    KnnMean { index: KnnIndex },
    LinearLeastSquares { intercept: f64, coefficients: Vec<f64> },
}

pub fn fit_knn_mean(x: &[&[f64]], y: &[f64], k: usize) -> Result<MeanModel> {
    Ok(MeanModel::KnnMean {
        index: KnnIndex::fit(x, y, k)?,
    })
}

/// Ordinary least squares with intercept, solved by SVD on standardized
/// covariates (rank-deficient designs get the minimum-norm solution).
pub fn fit_least_squares(x: &[&[f64]], y: &[f64]) -> Result<MeanModel> {
    check_xy(x, y.len())?;
    let st = Standardizer::fit(x)?;
    let (n, p) = (x.len(), st.dim());
    let mut design = DMatrix::<f64>::zeros(n, p + 1);
    for (i, row) in x.iter().enumerate() {
        design[(i, 0)] = 1.0;
        for (j, v) in st.transform(row).into_iter().enumerate() {
            design[(i, j + 1)] = v;
        }
    }
    let rhs = DVector::from_column_slice(y);
    let beta = design
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Degenerate(format!("least squares failed: {e}")))?;
    let coefficients: Vec<f64> = (0..p).map(|j| beta[j + 1] / st.scales[j]).collect();
    let intercept = beta[0]
        - coefficients
            .iter()
            .zip(&st.means)
            .map(|(b, m)| b * m)
            .sum::<f64>();
    Ok(MeanModel::LinearLeastSquares {
        intercept,
        coefficients,
    })
}

impl MeanModel {
    pub fn dim(&self) -> usize {
        match self {
            MeanModel::KnnMean { index } => index.dim(),
            MeanModel::LinearLeastSquares { coefficients, .. } => coefficients.len(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            MeanModel::KnnMean { index } => {
                let ys = index.neighbor_responses(x)?;
                Ok(ys.iter().sum::<f64>() / ys.len() as f64)
            }
            MeanModel::LinearLeastSquares {
                intercept,
                coefficients,
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn least_squares_recovers_line() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 1.0]).collect();
        let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let y: Vec<f64> = x.iter().map(|r| 1.5 - 0.25 * r[0]).collect();
        let m = fit_least_squares(&rows, &y).unwrap();
        assert!((m.predict(&[4.0, 1.0]).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn knn_mean_averages_neighbors() {
        let x = [vec![0.0], vec![1.0], vec![10.0]];
        let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let m = fit_knn_mean(&rows, &[2.0, 4.0, 100.0], 2).unwrap();
        assert_eq!(m.predict(&[0.4]).unwrap(), 3.0);
    }
}
