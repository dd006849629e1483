//! Peaks-over-threshold VaR with the threshold fixed at a loss percentile.

use super::{check_rolling, rolling, VarSeries};
use crate::brt::evt_var_at_threshold;
use crate::error::{Error, Result};
use crate::gpd::TailFit;
use crate::timeseries::{empirical_quantile, ReturnSeries};

pub const MIN_EVT_WINDOW: usize = 100;

/// Tail fit and VaR of one window with the threshold at the `percentile` of losses.
pub fn plain_evt_var(window: &[f64], p: f64, percentile: f64) -> Result<(TailFit, f64)> {
    if !(percentile > 0.0 && percentile < 1.0) {
        return Err(Error::invalid(format!(
            "threshold percentile {percentile} outside (0, 1)"
        )));
    }
    let losses: Vec<f64> = window.iter().map(|r| -r).collect();
    let u = empirical_quantile(&losses, percentile)?;
    evt_var_at_threshold(window, -u, p)
}

pub fn var_plain_evt(
    returns: &ReturnSeries,
    window: usize,
    p: f64,
    percentile: f64,
) -> Result<VarSeries> {
    check_rolling(returns, window, MIN_EVT_WINDOW, p)?;
    rolling(returns, window, |_, w| {
        plain_evt_var(w, p, percentile).map(|(_, v)| v)
    })
}
