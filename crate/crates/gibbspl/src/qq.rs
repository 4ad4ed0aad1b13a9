//! Normal QQ data for replicated estimates.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::Result;
use gibbspl_core::Error as CoreError;

#[derive(Debug, Clone, PartialEq)]
pub struct QqData {
    /// `(normal quantile, standardized order statistic)`, ascending.
    pub pairs: Vec<(f64, f64)>,
    /// Squared Pearson correlation of the pairs.
    pub r2: f64,
}

/// Standardizes `values` by their mean and population SD and pairs the
/// order statistics with standard normal quantiles at `(i - 0.5) / M`.
pub fn qq_data(values: &[f64]) -> Result<QqData> {
    let m = values.len();
    if m < 2 {
        return Err(CoreError::TooFewValues { needed: 2, got: m }.into());
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64).sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(CoreError::DegenerateSd.into());
    }
    let mut z: Vec<f64> = values.iter().map(|v| (v - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let pairs: Vec<(f64, f64)> =
        z.iter().enumerate().map(|(i, &v)| (normal.inverse_cdf((i as f64 + 0.5) / m as f64), v)).collect();
    Ok(QqData { r2: squared_correlation(&pairs), pairs })
}

fn squared_correlation(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy * sxy / (sxx * syy)
}
