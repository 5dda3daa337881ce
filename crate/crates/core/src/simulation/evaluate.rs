use serde::{Deserialize, Serialize};

use super::normal::{lognormal_variance, oracle_quantile_aft};
use crate::conformal::Predictor;
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Ground truth available to a simulation study.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OracleInfo {
    /// Level of the oracle quantile `q_alpha(x)` used for ratios.
    pub alpha: f64,
    /// `(mu, sigma)` of `log T` per test unit.
    pub params: Option<Vec<(f64, f64)>>,
    /// Latent target time per test unit, when it differs from `t_true`.
    pub latent: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub stratum: usize,
    pub var_lo: f64,
    pub var_hi: f64,
    pub n: usize,
    pub coverage: Option<f64>,
    pub mean_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_test: usize,
    /// Fraction with `t_true >= L`.
    pub coverage: Option<f64>,
    /// Fraction with `min(t_true, c0) >= L`.
    pub coverage_capped: Option<f64>,
    /// Fraction of the latent times with `latent >= L`.
    pub coverage_latent: Option<f64>,
    pub mean_lpb: f64,
    /// Fraction with `t~ >= L`.
    pub beta_lo: f64,
    /// One minus the fraction of observed events with `t~ < L`.
    pub beta_hi: f64,
    pub mean_ratio: Option<f64>,
    pub uninformative_fraction: f64,
    pub clamped_fraction: f64,
    pub strata: Vec<StratumRow>,
}

fn fraction(flags: impl Iterator<Item = bool>, n: usize) -> f64 {
    flags.filter(|&b| b).count() as f64 / n as f64
}

/// Predict on every test unit and summarize the bounds.
pub fn evaluate(model: &dyn Predictor, test: &Dataset, oracle: Option<&OracleInfo>) -> Result<EvaluationReport> {
    let xs = test.covariates(&(0..test.len()).collect::<Vec<_>>());
    let out = model.predict_batch(&xs)?;
    let lpb: Vec<f64> = out.iter().map(|o| o.lpb).collect();
    let mut report = evaluate_bounds(&lpb, test, model.c0(), oracle)?;
    report.uninformative_fraction = fraction(out.iter().map(|o| o.uninformative), out.len());
    report.clamped_fraction = fraction(out.iter().map(|o| o.clamped_at_c0), out.len());
    Ok(report)
}

/// Summaries for precomputed bounds `lpb[i]` on test unit `i`.
pub fn evaluate_bounds(
    lpb: &[f64],
    test: &Dataset,
    c0: Option<f64>,
    oracle: Option<&OracleInfo>,
) -> Result<EvaluationReport> {
    let n = test.len();
    if n == 0 {
        return Err(Error::invalid("empty test set"));
    }
    if lpb.len() != n {
        return Err(Error::invalid(format!("{} bounds for {} test units", lpb.len(), n)));
    }
    let recs = test.records();
    let truth: Option<Vec<f64>> = recs.iter().map(|r| r.t_true).collect();
    let coverage = truth
        .as_ref()
        .map(|t| fraction(t.iter().zip(lpb).map(|(t, l)| t >= l), n));
    let coverage_capped = truth.as_ref().map(|t| {
        let cap = c0.unwrap_or(f64::INFINITY);
        fraction(t.iter().zip(lpb).map(|(t, l)| t.min(cap) >= *l), n)
    });
    let latent = oracle.and_then(|o| o.latent.as_ref());
    if let Some(l) = latent {
        if l.len() != n {
            return Err(Error::invalid("latent times do not match the test set"));
        }
    }
    let coverage_latent = latent.map(|t| fraction(t.iter().zip(lpb).map(|(t, l)| t >= l), n));
    let beta_lo = fraction(recs.iter().zip(lpb).map(|(r, l)| r.t_tilde >= *l), n);
    let beta_hi = 1.0 - fraction(recs.iter().zip(lpb).map(|(r, l)| r.t_tilde < *l && r.event), n);

    let mut report = EvaluationReport {
        n_test: n,
        coverage,
        coverage_capped,
        coverage_latent,
        mean_lpb: lpb.iter().sum::<f64>() / n as f64,
        beta_lo,
        beta_hi,
        ..Default::default()
    };

    if let Some((alpha, params)) = oracle.and_then(|o| o.params.as_ref().map(|p| (o.alpha, p))) {
        if params.len() != n {
            return Err(Error::invalid("oracle parameters do not match the test set"));
        }
        let ratios = params
            .iter()
            .zip(lpb)
            .map(|(&(mu, sigma), l)| Ok(l / oracle_quantile_aft(mu, sigma, alpha)?))
            .collect::<Result<Vec<f64>>>()?;
        report.mean_ratio = Some(ratios.iter().sum::<f64>() / n as f64);
        // Coverage in strata uses the latent target when one is given.
        let target: Option<&Vec<f64>> = latent.or(truth.as_ref());
        let var: Vec<f64> = params.iter().map(|&(m, s)| lognormal_variance(m, s)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| var[a].total_cmp(&var[b]).then(a.cmp(&b)));
        let strata = 10.min(n);
        for s in 0..strata {
            let members = &order[s * n / strata..(s + 1) * n / strata];
            let m = members.len();
            report.strata.push(StratumRow {
                stratum: s + 1,
                var_lo: var[members[0]],
                var_hi: var[members[m - 1]],
                n: m,
                coverage: target.map(|t| fraction(members.iter().map(|&i| t[i] >= lpb[i]), m)),
                mean_ratio: members.iter().map(|&i| ratios[i]).sum::<f64>() / m as f64,
            });
        }
    }
    Ok(report)
}
