//! Historical simulation.

use super::{check_rolling, rolling, VarSeries};
use crate::error::Result;
use crate::timeseries::{quantile_sorted, ReturnSeries};

/// Negated type-7 `(1-p)` quantile of each trailing window.
pub fn var_historical(returns: &ReturnSeries, window: usize, p: f64) -> Result<VarSeries> {
    check_rolling(returns, window, 1, p)?;
    let mut buf = Vec::with_capacity(window);
    rolling(returns, window, |_, w| {
        buf.clear();
        buf.extend_from_slice(w);
        buf.sort_by(f64::total_cmp);
        Ok(-quantile_sorted(&buf, 1.0 - p))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{empirical_quantile, DatedSeries};
    use chrono::NaiveDate;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn series(v: Vec<f64>) -> ReturnSeries {
        DatedSeries::from_values(NaiveDate::from_ymd_opt(2015, 1, 5).unwrap(), v).unwrap()
    }

    #[test]
    fn constant_window() {
        let s = var_historical(&series(vec![-0.02; 80]), 50, 0.95).unwrap();
        assert_eq!(s.len(), 30);
        assert!(s.var_loss.iter().all(|v| (v - 0.02).abs() < 1e-15));
    }

    #[test]
    fn matches_brute_force_and_normal_quantile() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let v: Vec<f64> = (0..3000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = var_historical(&series(v.clone()), 2000, 0.95).unwrap();
        for (k, var) in s.var_loss.iter().enumerate().step_by(97) {
            let oracle = -empirical_quantile(&v[k..k + 2000], 1.0 - 0.95).unwrap();
            assert_eq!(*var, oracle);
        }
        assert!((s.var_loss[0] - 1.6449).abs() < 0.08);
        assert_eq!(s.dates[0], series(v).date(2000));
    }
}
