use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal quantile: Acklam's rational approximation followed by one
/// Newton step on [`norm_cdf`]. Returns `-inf` / `+inf` at 0 / 1.
pub fn norm_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383_577_518_672_69e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if density > 0.0 {
        x - (norm_cdf(x) - p) / density
    } else {
        x
    }
}

/// `a`-quantile of `exp(N(mu, sigma^2))`.
pub fn oracle_quantile_aft(mu: f64, sigma: f64, a: f64) -> Result<f64> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::invalid(format!("quantile level must lie in (0, 1), got {a}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    Ok((mu + sigma * norm_quantile(a)).exp())
}

/// `Var(T)` for `log T ~ N(mu, sigma^2)`.
pub fn lognormal_variance(mu: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    s2.exp_m1() * (2.0 * mu + s2).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_is_exp_mu() {
        assert!((oracle_quantile_aft(1.3, 0.7, 0.5).unwrap() - 1.3f64.exp()).abs() < 1e-12);
        assert_eq!(norm_quantile(0.5), 0.0);
    }

    #[test]
    fn tenth_percentile() {
        let q = oracle_quantile_aft(0.0, 1.0, 0.1).unwrap();
        assert!((q - 0.27760624).abs() < 1e-8, "{q}");
    }

    #[test]
    fn variance_monotone_in_sigma() {
        let mut prev = 0.0;
        for i in 1..50 {
            let v = lognormal_variance(1.0, i as f64 / 10.0);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn rejects_bad_levels() {
        assert!(oracle_quantile_aft(0.0, 1.0, 0.0).is_err());
        assert!(oracle_quantile_aft(0.0, 1.0, 1.0).is_err());
        assert!(oracle_quantile_aft(0.0, 0.0, 0.5).is_err());
    }
}
