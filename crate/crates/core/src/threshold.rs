//! Data-adaptive choice of the threshold `c0` and the discrete-covariate
//! estimate of the largest admissible threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{conformalize, ConformalConfig, Predictor};
use crate::data::{split_indices, Dataset, SplitIndices};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridSource {
    Explicit,
    CensoringDeciles,
}

/// Strictly increasing, nonempty set of candidate thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid {
    candidates: Vec<f64>,
    source: GridSource,
}

impl ThresholdGrid {
    pub fn explicit(mut candidates: Vec<f64>) -> Result<Self> {
        if let Some(c) = candidates.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::invalid(format!("threshold candidate {c} is not a finite nonnegative number")));
        }
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();
        if candidates.is_empty() {
            return Err(Error::invalid("threshold grid is empty"));
        }
        Ok(Self {
            candidates,
            source: GridSource::Explicit,
        })
    }

    /// Deciles 10%..90% of the censoring times of `idx`, using the
    /// `sup{z : F(z) < a}` quantile rule. Infinite times are ignored.
    pub fn censoring_deciles(ds: &Dataset, idx: &[usize]) -> Result<Self> {
        let mut c: Vec<f64> = idx
            .iter()
            .map(|&i| ds.record(i).c)
            .filter(|c| c.is_finite())
            .collect();
        if c.is_empty() {
            return Err(Error::Degenerate("no finite censoring times to build a grid".into()));
        }
        c.sort_by(f64::total_cmp);
        let n = c.len();
        let candidates = (1..=9)
            .map(|d| {
                let rank = ((d as f64 / 10.0) * n as f64 - 1e-9).ceil().max(1.0) as usize;
                c[rank.min(n) - 1]
            })
            .collect();
        let mut grid = Self::explicit(candidates)?;
        grid.source = GridSource::CensoringDeciles;
        Ok(grid)
    }

    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }

    pub fn source(&self) -> GridSource {
        self.source
    }
}

/// Outcome of a threshold search: the choice and every candidate's mean LPB
/// (`None` for skipped candidates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C0Selection {
    pub c0: f64,
    pub evaluations: Vec<(f64, Option<f64>)>,
}

fn mean_lpb(model: &dyn Predictor, xs: &[&[f64]]) -> Result<f64> {
    let mut total = 0.0;
    for x in xs {
        total += model.predict(x)?.lpb;
    }
    Ok(total / xs.len() as f64)
}

fn argmax(evaluations: Vec<(f64, Option<f64>)>) -> Result<C0Selection> {
    let mut best: Option<(f64, f64)> = None;
    for &(c0, v) in &evaluations {
        if let Some(v) = v {
            // Strict improvement only: ties keep the smaller threshold.
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((c0, v));
            }
        }
    }
    match best {
        Some((c0, _)) => Ok(C0Selection { c0, evaluations }),
        None => Err(Error::Degenerate(
            "every threshold candidate left an empty calibration subpopulation".into(),
        )),
    }
}

fn evaluate_candidates(
    ds: &Dataset,
    fit_split: &SplitIndices,
    eval_idx: &[usize],
    grid: &ThresholdGrid,
    cfg: &ConformalConfig,
) -> Result<C0Selection> {
    let xs = ds.covariates(eval_idx);
    let evaluations = grid
        .candidates()
        .par_iter()
        .map(|&c0| match conformalize(ds, fit_split, c0, cfg) {
            Ok(model) => Ok((c0, Some(mean_lpb(&model, &xs)?))),
            Err(Error::EmptySelection { .. }) => Ok((c0, None)),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    argmax(evaluations)
}

/// Choose `c0` inside the training fold: hold out `holdout_fraction` of it,
/// run the whole calibration on the rest per candidate (itself split in
/// half), and maximize the mean bound on the holdout units.
pub fn select_c0_train(
    ds: &Dataset,
    train: &[usize],
    grid: &ThresholdGrid,
    cfg: &ConformalConfig,
    holdout_fraction: f64,
    seed: u64,
) -> Result<C0Selection> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "holdout fraction must lie in (0, 1), got {holdout_fraction}"
        )));
    }
    let outer = split_indices(train, 1.0 - holdout_fraction, derive_seed(seed, &[0xc0]))?;
    let inner = split_indices(&outer.train, 0.5, derive_seed(seed, &[0xc1]))?;
    evaluate_candidates(ds, &inner, &outer.calib, grid, cfg)
}

/// Choose `c0` by the mean bound over the calibration covariates of `split`.
pub fn select_c0_calib(
    ds: &Dataset,
    split: &SplitIndices,
    grid: &ThresholdGrid,
    cfg: &ConformalConfig,
) -> Result<C0Selection> {
    evaluate_candidates(ds, split, &split.calib, grid, cfg)
}

/// `min_l c_bar_l`, where `c_bar_l` is the `ceil(2 eta n_l)`-th largest
/// censoring time among units at covariate level `l`.
pub fn estimate_c_bar_discrete(levels: &[f64], c: &[f64], eta: f64) -> Result<f64> {
    if levels.len() != c.len() {
        return Err(Error::invalid(format!("{} levels but {} censoring times", levels.len(), c.len())));
    }
    if levels.is_empty() {
        return Err(Error::Degenerate("no observations".into()));
    }
    if !(eta > 0.0 && eta < 0.5) {
        return Err(Error::invalid(format!("eta must lie in (0, 0.5), got {eta}")));
    }
    let mut pairs: Vec<(f64, f64)> = levels.iter().copied().zip(c.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut best = f64::INFINITY;
    let mut start = 0;
    while start < pairs.len() {
        let level = pairs[start].0;
        let end = start + pairs[start..].partition_point(|p| p.0 == level);
        let n_l = end - start;
        let rank = ((2.0 * eta * n_l as f64) - 1e-9).ceil().max(1.0) as usize;
        best = best.min(pairs[start + rank.min(n_l) - 1].1);
        start = end;
    }
    Ok(best)
}
