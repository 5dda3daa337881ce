use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{check_xy, Standardizer};
use crate::error::{Error, Result};

/// Brute-force nearest-neighbor index over standardized covariates.
/// Distance ties are broken toward the smaller training index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnIndex {
    pub standardizer: Standardizer,
    /// Row-major standardized training covariates.
    pub points: Vec<f64>,
    pub responses: Vec<f64>,
    pub k: usize,
}

impl KnnIndex {
    pub fn fit(x: &[&[f64]], y: &[f64], k: usize) -> Result<Self> {
        check_xy(x, y.len())?;
        if k < 1 || k > x.len() {
            return Err(Error::invalid(format!(
                "neighbor count k = {k} must lie in 1..={}",
                x.len()
            )));
        }
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!("non-finite response {v}")));
        }
        let standardizer = Standardizer::fit(x)?;
        let mut points = Vec::with_capacity(x.len() * standardizer.dim());
        let mut buf = Vec::new();
        for row in x {
            standardizer.transform_into(row, &mut buf);
            points.extend_from_slice(&buf);
        }
        Ok(Self {
            standardizer,
            points,
            responses: y.to_vec(),
            k,
        })
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    /// Indices of the `k` nearest training points, nearest first.
    pub fn neighbors(&self, x: &[f64]) -> Result<Vec<usize>> {
        self.standardizer.check_dim(x)?;
        let z = self.standardizer.transform(x);
        let p = self.dim();
        let mut dist: Vec<(f64, usize)> = (0..self.n())
            .map(|i| {
                let row = &self.points[i * p..(i + 1) * p];
                let d = row.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                (d, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
        };
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
            dist.truncate(self.k);
        }
        dist.sort_unstable_by(cmp);
        Ok(dist.into_iter().map(|(_, i)| i).collect())
    }

    /// Responses of the `k` nearest neighbors.
    pub fn neighbor_responses(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .neighbors(x)?
            .into_iter()
            .map(|i| self.responses[i])
            .collect())
    }
}

/// Empirical CDF of a neighborhood: `F(y) = #{j : Y_j <= y} / k`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborCdf {
    sorted: Vec<f64>,
}

impl NeighborCdf {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_unstable_by(f64::total_cmp);
        Self { sorted: values }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.sorted
    }

    fn k(&self) -> f64 {
        self.sorted.len() as f64
    }

    pub fn cdf(&self, y: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= y) as f64 / self.k()
    }

    /// `sup { z : F(z) < a }`: `-inf` for `a <= 0`, `+inf` for `a > 1`.
    pub fn quantile(&self, a: f64) -> f64 {
        // The sup is attained at the first atom whose CDF reaches `a`.
        self.first_where(|f| f >= a)
    }

    /// `inf { y : pred(F(y)) }` for a predicate monotone in `F`; evaluates the
    /// predicate at `F = 0` for `y -> -inf` and at each atom in turn.
    pub fn first_where(&self, pred: impl Fn(f64) -> bool) -> f64 {
        if pred(0.0) {
            return f64::NEG_INFINITY;
        }
        let k = self.k();
        let mut m = 0;
        while m < self.sorted.len() {
            let v = self.sorted[m];
            let count = self.sorted.partition_point(|&s| s <= v);
            if pred(count as f64 / k) {
                return v;
            }
            m = count;
        }
        f64::INFINITY
    }
}

/// k-NN conditional distribution estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfModel {
    pub index: KnnIndex,
}

pub fn fit_knn_cdf(x: &[&[f64]], y: &[f64], k: usize) -> Result<CdfModel> {
    Ok(CdfModel {
        index: KnnIndex::fit(x, y, k)?,
    })
}

impl CdfModel {
    pub fn dim(&self) -> usize {
        self.index.dim()
    }

    pub fn neighborhood(&self, x: &[f64]) -> Result<NeighborCdf> {
        Ok(NeighborCdf::new(self.index.neighbor_responses(x)?))
    }

    pub fn predict_cdf(&self, x: &[f64], y: f64) -> Result<f64> {
        Ok(self.neighborhood(x)?.cdf(y))
    }

    pub fn predict_quantile(&self, x: &[f64], a: f64) -> Result<f64> {
        Ok(self.neighborhood(x)?.quantile(a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use proptest::prelude::*;

    fn rows(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(|r| r.as_slice()).collect()
    }

    #[test]
    fn one_neighbor_step() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let m = fit_knn_cdf(&rows(&x), &[5.0, 6.0, 7.0], 1).unwrap();
        assert_eq!(m.predict_cdf(&[0.9], 5.99).unwrap(), 0.0);
        assert_eq!(m.predict_cdf(&[0.9], 6.0).unwrap(), 1.0);
        assert_eq!(m.predict_quantile(&[0.9], 0.5).unwrap(), 6.0);
    }

    #[test]
    fn quantile_sup_rule() {
        let x = vec![vec![0.0]; 4];
        let m = fit_knn_cdf(&rows(&x), &[1.0, 2.0, 3.0, 4.0], 4).unwrap();
        assert_eq!(m.predict_quantile(&[0.0], 0.5).unwrap(), 2.0);
        assert_eq!(m.predict_quantile(&[0.0], 0.51).unwrap(), 3.0);
        assert_eq!(m.predict_quantile(&[0.0], 1.0).unwrap(), 4.0);
        assert_eq!(m.predict_quantile(&[0.0], 0.0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(m.predict_quantile(&[0.0], 1.5).unwrap(), f64::INFINITY);
    }

    #[test]
    fn quantile_with_ties() {
        let cdf = NeighborCdf::new(vec![2.0, 1.0, 2.0, 2.0, 5.0]);
        assert_eq!(cdf.cdf(2.0), 0.8);
        assert_eq!(cdf.quantile(0.3), 2.0);
        assert_eq!(cdf.quantile(0.8), 2.0);
        assert_eq!(cdf.quantile(0.81), 5.0);
    }

    #[test]
    fn full_neighborhood_is_marginal() {
        let mut rng = SimRng::new(5);
        let x: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.uniform(), rng.uniform()]).collect();
        let y: Vec<f64> = (0..40).map(|_| rng.normal()).collect();
        let m = fit_knn_cdf(&rows(&x), &y, 40).unwrap();
        for q in [-1.0, 0.0, 0.3, 2.0] {
            let marginal = y.iter().filter(|&&v| v <= q).count() as f64 / 40.0;
            for probe in [[0.1, 0.9], [5.0, -3.0]] {
                assert_eq!(m.predict_cdf(&probe, q).unwrap(), marginal);
            }
        }
    }

    #[test]
    fn ties_prefer_smaller_index() {
        let x = vec![vec![1.0], vec![-1.0], vec![1.0], vec![-1.0]];
        let idx = KnnIndex::fit(&rows(&x), &[0.0, 1.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(idx.neighbors(&[0.0]).unwrap(), vec![0, 1]);
    }

    #[test]
    fn errors() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(fit_knn_cdf(&rows(&x), &[1.0, 2.0], 3).is_err());
        assert!(fit_knn_cdf(&rows(&x), &[1.0, 2.0], 0).is_err());
        assert!(fit_knn_cdf(&rows(&x), &[1.0], 1).is_err());
        let m = fit_knn_cdf(&rows(&x), &[1.0, 2.0], 1).unwrap();
        assert!(matches!(
            m.predict_cdf(&[0.0, 1.0], 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn quantile_monotone_and_galois(
            ys in prop::collection::vec(-5.0f64..5.0, 1..30),
            a in 0.001f64..1.0,
            b in 0.001f64..1.0,
        ) {
            let cdf = NeighborCdf::new(ys);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(cdf.quantile(lo) <= cdf.quantile(hi));
            let q = cdf.quantile(a);
            if q.is_finite() {
                prop_assert!(cdf.cdf(q) >= a);
            }
            let c = cdf.cdf(q);
            prop_assert!((0.0..=1.0).contains(&c));
        }
    }
}
