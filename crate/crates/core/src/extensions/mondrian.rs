use serde::{Deserialize, Serialize};

use crate::conformal::{
    calibration_set, fit_outcome, fit_weights, lpb_from_eta, CalibrationSet, ConformalConfig,
    LpbOutput, OutcomeModel, Predictor, ScoreKind, WeightModel,
};
use crate::data::{select_subpopulation, Dataset, SplitIndices};
use crate::error::{Error, Result};

/// How a covariate vector is mapped to a group in `1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum GroupRule {
    /// Group 1 when `x[column] < 0`, group 2 otherwise.
    Sign { column: usize },
    /// Group `j + 1` when `x[column] == levels[j]`.
    Levels { column: usize, levels: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub rule: GroupRule,
}

impl GroupPartition {
    pub fn sign(column: usize) -> Self {
        Self {
            rule: GroupRule::Sign { column },
        }
    }

    /// One group per distinct value of `column` among `rows`, in ascending order.
    pub fn levels_from(rows: &[&[f64]], column: usize) -> Result<Self> {
        let mut levels = Vec::new();
        for r in rows {
            let v = *r.get(column).ok_or(Error::DimensionMismatch {
                expected: column + 1,
                got: r.len(),
            })?;
            levels.push(v);
        }
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        if levels.is_empty() {
            return Err(Error::invalid("cannot build groups from zero rows"));
        }
        Ok(Self {
            rule: GroupRule::Levels { column, levels },
        })
    }

    pub fn k(&self) -> usize {
        match &self.rule {
            GroupRule::Sign { .. } => 2,
            GroupRule::Levels { levels, .. } => levels.len(),
        }
    }

    pub fn assign(&self, x: &[f64]) -> Result<usize> {
        let column = match &self.rule {
            GroupRule::Sign { column } | GroupRule::Levels { column, .. } => *column,
        };
        let v = *x.get(column).ok_or(Error::DimensionMismatch {
            expected: column + 1,
            got: x.len(),
        })?;
        match &self.rule {
            GroupRule::Sign { .. } => Ok(if v < 0.0 { 1 } else { 2 }),
            GroupRule::Levels { levels, .. } => levels
                .iter()
                .position(|&l| l == v)
                .map(|j| j + 1)
                .ok_or_else(|| Error::invalid(format!("value {v} of column {column} matches no group"))),
        }
    }
}

/// Cutoff computed from the calibration units of one group; an empty group
/// gives `+inf`.
pub fn mondrian_eta(sets: &[Option<CalibrationSet>], group: usize, w_test: f64, level: f64) -> f64 {
    match sets.get(group.wrapping_sub(1)) {
        Some(Some(cal)) => cal.quantile(level, w_test),
        _ => f64::INFINITY,
    }
}

/// Conformal model calibrated separately within each group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MondrianModel {
    pub score: ScoreKind,
    pub alpha: f64,
    pub c0: f64,
    pub partition: GroupPartition,
    /// One shared model, or one per group.
    pub outcomes: Vec<OutcomeModel>,
    pub weights: WeightModel,
    pub calibration: Vec<Option<CalibrationSet>>,
}

impl MondrianModel {
    fn outcome(&self, group: usize) -> &OutcomeModel {
        if self.outcomes.len() == 1 {
            &self.outcomes[0]
        } else {
            &self.outcomes[group - 1]
        }
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.calibration
            .iter()
            .map(|c| c.as_ref().map_or(0, |c| c.len()))
            .collect()
    }
}

impl Predictor for MondrianModel {
    fn predict(&self, x: &[f64]) -> Result<LpbOutput> {
        let g = self.partition.assign(x)?;
        let pred = self.outcome(g).predict(self.score, self.alpha, x)?;
        let w = self.weights.weight(x)?;
        let eta = mondrian_eta(&self.calibration, g, w, 1.0 - self.alpha);
        let p_inf = self.calibration[g - 1].as_ref().map_or(1.0, |c| c.p_inf(w));
        Ok(lpb_from_eta(&pred, eta, p_inf, Some(self.c0)))
    }

    fn dim(&self) -> usize {
        self.outcomes[0].dim()
    }

    fn c0(&self) -> Option<f64> {
        Some(self.c0)
    }
}

fn by_group(part: &GroupPartition, ds: &Dataset, idx: &[usize], y: &[f64]) -> Result<Vec<(Vec<usize>, Vec<f64>)>> {
    let mut groups = vec![(Vec::new(), Vec::new()); part.k()];
    for (&i, &yi) in idx.iter().zip(y) {
        let g = part.assign(&ds.record(i).x)?;
        groups[g - 1].0.push(i);
        groups[g - 1].1.push(yi);
    }
    Ok(groups)
}

/// Group-conditional calibration. With `per_group_training` each group gets
/// its own outcome model; otherwise one model is fitted on all groups.
pub fn conformalize_mondrian(
    ds: &Dataset,
    split: &SplitIndices,
    c0: f64,
    cfg: &ConformalConfig,
    partition: &GroupPartition,
    per_group_training: bool,
) -> Result<MondrianModel> {
    cfg.validate()?;
    let (train_sel, train_y) = select_subpopulation(ds, &split.train, c0)?;
    let outcomes = if per_group_training {
        by_group(partition, ds, &train_sel, &train_y)?
            .into_iter()
            .enumerate()
            .map(|(g, (idx, y))| {
                if idx.is_empty() {
                    return Err(Error::Degenerate(format!("group {} has no training units", g + 1)));
                }
                fit_outcome(cfg, &ds.covariates(&idx), &y)
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![fit_outcome(cfg, &ds.covariates(&train_sel), &train_y)?]
    };
    let weights = fit_weights(cfg, ds, &split.train, c0)?;
    let (cal_sel, cal_y) = select_subpopulation(ds, &split.calib, c0)?;
    let mut calibration = Vec::with_capacity(partition.k());
    for (g, (idx, y)) in by_group(partition, ds, &cal_sel, &cal_y)?.into_iter().enumerate() {
        if idx.is_empty() {
            calibration.push(None);
            continue;
        }
        let outcome = if outcomes.len() == 1 { &outcomes[0] } else { &outcomes[g] };
        calibration.push(Some(calibration_set(
            cfg.score,
            cfg.alpha,
            outcome,
            &weights,
            &ds.covariates(&idx),
            &y,
        )?));
    }
    Ok(MondrianModel {
        score: cfg.score,
        alpha: cfg.alpha,
        c0,
        partition: partition.clone(),
        outcomes,
        weights,
        calibration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_group_matches_plain_quantile() {
        let cal = CalibrationSet::new(vec![0.5, -1.0, 2.0, 0.1], vec![1.0, 3.0, 0.5, 2.0]).unwrap();
        let sets = vec![Some(cal.clone())];
        for level in [0.1, 0.5, 0.7, 0.9] {
            assert_eq!(
                mondrian_eta(&sets, 1, 1.3, level).to_bits(),
                cal.quantile(level, 1.3).to_bits()
            );
        }
    }

    #[test]
    fn disjoint_groups_use_their_own_scores() {
        // Group 1 scores 1..3, group 2 scores 10..12, unit weights.
        let g1 = CalibrationSet::unweighted(vec![1.0, 2.0, 3.0]).unwrap();
        let g2 = CalibrationSet::unweighted(vec![10.0, 11.0, 12.0]).unwrap();
        let sets = vec![Some(g1), Some(g2)];
        // Level 0.5 over 4 atoms (one at inf): cumulative 0.25, 0.5 -> second atom.
        assert_eq!(mondrian_eta(&sets, 1, 1.0, 0.5), 2.0);
        assert_eq!(mondrian_eta(&sets, 2, 1.0, 0.5), 11.0);
        assert_eq!(mondrian_eta(&sets, 2, 1.0, 0.8), f64::INFINITY);
    }

    #[test]
    fn empty_group_is_uninformative() {
        let sets = vec![Some(CalibrationSet::unweighted(vec![1.0]).unwrap()), None];
        assert_eq!(mondrian_eta(&sets, 2, 1.0, 0.1), f64::INFINITY);
    }

    #[test]
    fn partition_rules() {
        let p = GroupPartition::sign(1);
        assert_eq!(p.assign(&[5.0, -0.1]).unwrap(), 1);
        assert_eq!(p.assign(&[5.0, 0.0]).unwrap(), 2);
        assert!(p.assign(&[5.0]).is_err());
        let rows: Vec<&[f64]> = vec![&[1.0], &[0.0], &[1.0]];
        let l = GroupPartition::levels_from(&rows, 0).unwrap();
        assert_eq!(l.k(), 2);
        assert_eq!(l.assign(&[0.0]).unwrap(), 1);
        assert_eq!(l.assign(&[1.0]).unwrap(), 2);
        assert!(l.assign(&[0.5]).is_err());
    }
}
