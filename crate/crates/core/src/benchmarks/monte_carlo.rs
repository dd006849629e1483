//! Geometric Brownian motion Monte Carlo.
//!
//! Drift and volatility are calibrated from the trailing log returns; a GBM
//! step over one day then has a normal log return with that mean and
//! variance, which is what is simulated.

use rand_distr::{Distribution, StandardNormal};

use super::{check_rolling, mean_sd, rolling, VarSeries};
use crate::error::{Error, Result};
use crate::seed::SeedTree;
use crate::timeseries::ReturnSeries;

pub const MIN_PATHS: usize = 1000;

/// One-day VaR (positive loss) from `n_paths` simulated log returns.
pub fn monte_carlo_var(mu: f64, sigma: f64, p: f64, n_paths: usize, seed: SeedTree) -> Result<f64> {
    if n_paths < MIN_PATHS {
        return Err(Error::invalid(format!(
            "need at least {MIN_PATHS} paths, got {n_paths}"
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Data(format!(
            "degenerate volatility {sigma} for simulation"
        )));
    }
    let mut rng = seed.rng();
    // drift of the price process is mu + sigma^2/2, so the log return has mean mu
    let mut sims: Vec<f64> = (0..n_paths)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            mu + sigma * z
        })
        .collect();
    let h = (n_paths - 1) as f64 * (1.0 - p);
    let lo = h.floor() as usize;
    let (_, q_lo, rest) = sims.select_nth_unstable_by(lo, f64::total_cmp);
    let q_lo = *q_lo;
    let q_hi = if lo + 1 < n_paths {
        rest.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        q_lo
    };
    Ok(-(q_lo + (h - lo as f64) * (q_hi - q_lo)))
}

pub fn var_monte_carlo_gbm(
    returns: &ReturnSeries,
    window: usize,
    p: f64,
    n_paths: usize,
    seed: u64,
) -> Result<VarSeries> {
    check_rolling(returns, window, 2, p)?;
    let root = SeedTree::new(seed).child("montecarlo");
    rolling(returns, window, |t, w| {
        let (mu, sigma) = mean_sd(w);
        monte_carlo_var(mu, sigma, p, n_paths, root.index(t as u64))
    })
}
