//! Least-squares fit of `ln(loss)` against the epoch index.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CurveFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// OLS of `ln(lossᵢ)` on `i`. A flat series has `r2 = 0` by convention.
pub fn fit_log_curve(losses: &[f64]) -> Result<CurveFit> {
    if losses.len() < 3 {
        return Err(Error::Domain(format!("need at least 3 points, got {}", losses.len())));
    }
    if let Some((i, v)) = losses.iter().enumerate().find(|(_, &v)| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("loss at epoch {i} is {v}; a log fit needs positive values")));
    }
    let logs: Vec<f64> = losses.iter().map(|&v| libm::log(v)).collect();
    Ok(ols(&logs))
}

/// Like [`fit_log_curve`] but values below `floor` are raised to it first.
pub fn fit_log_curve_clamped(losses: &[f64], floor: f64) -> Result<CurveFit> {
    if !(floor > 0.0) {
        return Err(Error::Domain(format!("clamp floor must be positive, got {floor}")));
    }
    let clamped: Vec<f64> = losses.iter().map(|&v| if v < floor { floor } else { v }).collect();
    fit_log_curve(&clamped)
}

fn ols(ys: &[f64]) -> CurveFit {
    let n = ys.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (i, &y) in ys.iter().enumerate() {
        let dx = i as f64 - mean_x;
        let dy = y - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    if syy == 0.0 {
        return CurveFit {
            slope: 0.0,
            intercept: mean_y,
            r2: 0.0,
        };
    }
    let ss_res: f64 = ys
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let r = y - (intercept + slope * i as f64);
            r * r
        })
        .sum();
    CurveFit {
        slope,
        intercept,
        r2: (1.0 - ss_res / syy).clamp(0.0, 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_exponential() {
        let losses: Vec<f64> = (0..32).map(|i| libm::exp(-0.1 * i as f64)).collect();
        let fit = fit_log_curve(&losses).unwrap();
        assert!((fit.slope + 0.1).abs() < 1e-10);
        assert!(fit.intercept.abs() < 1e-10);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_has_zero_r2() {
        let fit = fit_log_curve(&[0.5; 10]).unwrap();
        assert_eq!((fit.slope, fit.r2), (0.0, 0.0));
    }

    #[test]
    fn rejects_short_and_non_positive() {
        assert!(matches!(fit_log_curve(&[1.0, 0.5]), Err(Error::Domain(_))));
        assert!(matches!(fit_log_curve(&[1.0, 0.0, 0.5]), Err(Error::Domain(_))));
        assert!(fit_log_curve_clamped(&[1.0, 0.0, 0.5], 1e-6).is_ok());
    }
}
