//! Normal variance–covariance VaR.

use super::{check_rolling, mean_sd, rolling, VarSeries};
use crate::error::Result;
use crate::special::normal_quantile;
use crate::timeseries::ReturnSeries;

/// `z_p * sigma` for mean-zero normal returns.
pub fn variance_covariance_var(sigma: f64, p: f64) -> f64 {
    normal_quantile(p) * sigma
}

/// Uses the sample standard deviation of each trailing window.
pub fn var_variance_covariance(returns: &ReturnSeries, window: usize, p: f64) -> Result<VarSeries> {
    check_rolling(returns, window, 2, p)?;
    rolling(returns, window, |_, w| {
        Ok(variance_covariance_var(mean_sd(w).1, p))
    })
}
