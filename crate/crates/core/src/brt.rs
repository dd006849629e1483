//! Realized break-even risk thresholds.
//!
//! For a date `t` the realized threshold is the negative return `u` from the
//! trailing EVT window whose peaks-over-threshold VaR comes closest to a
//! forward-looking target computed from returns after `t`. It uses future
//! data by construction and only ever feeds the regression inside a
//! training window.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gpd::{evt_var, fit_tail, TailFit, MIN_EXCEEDANCES};
use crate::timeseries::{quantile_sorted, Date, ReturnSeries, WindowSpec};

/// Gaps closer than this are treated as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// What the EVT VaR is matched against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrtTarget {
    /// Historical VaR of the next `horizon` returns.
    ForwardHistoricalVar { horizon: usize },
    /// The next day's return, as a loss.
    NextDayReturn,
}

impl Default for BrtTarget {
    fn default() -> Self {
        BrtTarget::ForwardHistoricalVar { horizon: 50 }
    }
}

impl BrtTarget {
    pub fn horizon(&self) -> usize {
        match self {
            BrtTarget::ForwardHistoricalVar { horizon } => *horizon,
            BrtTarget::NextDayReturn => 1,
        }
    }
}

impl FromStr for BrtTarget {
    type Err = Error;

    /// Accepts `forward`, `forward-<h>` and `nextday`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "nextday" | "next-day" => Ok(BrtTarget::NextDayReturn),
            "forward" => Ok(BrtTarget::default()),
            _ => {
                let h = s
                    .strip_prefix("forward-")
                    .and_then(|h| h.parse::<usize>().ok())
                    .filter(|&h| h >= 1)
                    .ok_or_else(|| {
                        Error::invalid(format!(
                            "unknown target `{s}` (forward|forward-<h>|nextday)"
                        ))
                    })?;
                Ok(BrtTarget::ForwardHistoricalVar { horizon: h })
            }
        }
    }
}

impl fmt::Display for BrtTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BrtTarget::ForwardHistoricalVar { horizon } => write!(f, "forward-{horizon}"),
            BrtTarget::NextDayReturn => f.write_str("nextday"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrtPoint {
    pub date: Date,
    /// Threshold as a (negative) return.
    pub brt: f64,
    /// `|VaR_EVT(brt) - target|`.
    pub objective_gap: f64,
    pub candidates_searched: usize,
    pub target_loss: f64,
    pub var_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrtGap {
    pub date: Date,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BrtSeries {
    pub points: Vec<BrtPoint>,
    pub gaps: Vec<BrtGap>,
}

impl BrtSeries {
    pub fn get(&self, date: Date) -> Option<&BrtPoint> {
        self.points
            .binary_search_by_key(&date, |p| p.date)
            .ok()
            .map(|i| &self.points[i])
    }
}

/// Historical VaR (as a positive loss) of returns `t+1 ..= t+horizon`.
pub fn historical_forward_var(returns: &[f64], t: usize, horizon: usize, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("confidence {p} outside (0, 1)")));
    }
    if horizon == 0 {
        return Err(Error::invalid("forward horizon must be at least 1"));
    }
    let end = t + horizon;
    if end >= returns.len() {
        return Err(Error::InsufficientData {
            what: "forward historical VaR",
            needed: end + 1,
            got: returns.len(),
        });
    }
    let mut future = returns[t + 1..=end].to_vec();
    future.sort_by(f64::total_cmp);
    Ok(-quantile_sorted(&future, 1.0 - p))
}

/// Distinct negative returns that leave at least [`MIN_EXCEEDANCES`] returns
/// strictly below them, sorted ascending.
pub fn candidate_thresholds(window: &[f64]) -> Vec<f64> {
    let mut neg: Vec<f64> = window.iter().copied().filter(|r| *r < 0.0).collect();
    neg.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    for (i, &c) in neg.iter().enumerate() {
        if i > 0 && neg[i - 1] == c {
            continue;
        }
        // neg is sorted, so i values lie strictly below c
        if i >= MIN_EXCEEDANCES {
            out.push(c);
        }
    }
    out
}

/// EVT tail fit and VaR (positive loss) of `window` at a return-space threshold.
pub fn evt_var_at_threshold(window: &[f64], threshold: f64, p: f64) -> Result<(TailFit, f64)> {
    let losses: Vec<f64> = window.iter().map(|r| -r).collect();
    let fit = fit_tail(&losses, -threshold)?;
    let var = evt_var(&fit, p)?;
    Ok((fit, var))
}

/// Objective value of each candidate; `None` where the tail fit fails.
pub fn candidate_gaps(
    window: &[f64],
    candidates: &[f64],
    target_loss: f64,
    p: f64,
) -> Vec<Option<(f64, f64)>> {
    candidates
        .iter()
        .map(|&c| {
            evt_var_at_threshold(window, c, p)
                .ok()
                .map(|(_, var)| ((var - target_loss).abs(), var))
        })
        .collect()
}

/// Realized threshold at index `t` of `returns`.
pub fn realized_brt(
    returns: &ReturnSeries,
    t: usize,
    evt_window: usize,
    target: BrtTarget,
    p: f64,
) -> Result<BrtPoint> {
    let values = returns.values();
    if t + 1 < evt_window || t >= values.len() {
        return Err(Error::InsufficientData {
            what: "EVT window",
            needed: evt_window,
            got: (t + 1).min(values.len()),
        });
    }
    let target_loss = historical_forward_var(values, t, target.horizon(), p)?;
    let window = &values[t + 1 - evt_window..=t];
    let candidates = candidate_thresholds(window);
    if candidates.is_empty() {
        return Err(Error::TooFewExceedances {
            found: window
                .iter()
                .filter(|r| **r < 0.0)
                .count()
                .saturating_sub(1),
            required: MIN_EXCEEDANCES,
        });
    }
    let gaps = candidate_gaps(window, &candidates, target_loss, p);
    let min_gap = gaps
        .iter()
        .flatten()
        .map(|(g, _)| *g)
        .fold(f64::INFINITY, f64::min);
    if !min_gap.is_finite() {
        return Err(Error::Data(format!(
            "every tail fit failed on {} candidates",
            candidates.len()
        )));
    }
    // ties go to the candidate nearest zero (most exceedances)
    let (idx, (gap, var)) = gaps
        .iter()
        .enumerate()
        .filter_map(|(i, g)| g.map(|g| (i, g)))
        .filter(|(_, (g, _))| *g <= min_gap + TIE_TOLERANCE)
        .max_by(|a, b| candidates[a.0].total_cmp(&candidates[b.0]))
        .expect("min_gap is attained");
    Ok(BrtPoint {
        date: returns.date(t),
        brt: candidates[idx],
        objective_gap: gap,
        candidates_searched: candidates.len(),
        target_loss,
        var_loss: var,
    })
}

/// Realized thresholds over the regression span of every training window
/// that has at least one day left to forecast.
///
/// A date's threshold depends only on its own EVT and forward windows, so
/// dates shared by overlapping training windows are evaluated once.
pub fn brt_series(
    returns: &ReturnSeries,
    spec: &WindowSpec,
    target: BrtTarget,
    p: f64,
) -> Result<BrtSeries> {
    spec.validate()?;
    if returns.len() <= spec.train_len {
        return Err(Error::InsufficientData {
            what: "realized threshold series",
            needed: spec.train_len + 1,
            got: returns.len(),
        });
    }
    if target.horizon() > spec.hist_len {
        return Err(Error::invalid(format!(
            "target horizon {} exceeds the forward window of {} days",
            target.horizon(),
            spec.hist_len
        )));
    }
    let mut indices: Vec<usize> = spec
        .window_starts(returns.len())
        .into_iter()
        .flat_map(|t| spec.regression_range(t))
        .collect();
    indices.sort_unstable();
    indices.dedup();
    Ok(brt_at_indices(returns, &indices, spec.evt_len, target, p))
}

/// Evaluates [`realized_brt`] at each index (in parallel), preserving order.
pub fn brt_at_indices(
    returns: &ReturnSeries,
    indices: &[usize],
    evt_window: usize,
    target: BrtTarget,
    p: f64,
) -> BrtSeries {
    let results: Vec<(usize, Result<BrtPoint>)> = indices
        .par_iter()
        .map(|&t| (t, realized_brt(returns, t, evt_window, target, p)))
        .collect();
    let mut out = BrtSeries::default();
    for (t, r) in results {
        match r {
            Ok(pt) => out.points.push(pt),
            Err(e) => out.gaps.push(BrtGap {
                date: returns.date(t),
                reason: e.to_string(),
            }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::DatedSeries;
    use chrono::NaiveDate;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn start() -> Date {
        NaiveDate::from_ymd_opt(2010, 1, 4).unwrap()
    }

    fn normal_returns(n: usize, sd: f64, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, sd).unwrap();
        (0..n).map(|_| dist.sample(&mut rng)).collect()
    }

    #[test]
    fn target_parsing() {
        assert_eq!(
            "nextday".parse::<BrtTarget>().unwrap(),
            BrtTarget::NextDayReturn
        );
        assert_eq!(
            "forward".parse::<BrtTarget>().unwrap(),
            BrtTarget::ForwardHistoricalVar { horizon: 50 }
        );
        assert_eq!(
            "forward-20".parse::<BrtTarget>().unwrap(),
            BrtTarget::ForwardHistoricalVar { horizon: 20 }
        );
        assert!("forward-0".parse::<BrtTarget>().is_err());
        assert_eq!(
            BrtTarget::NextDayReturn
                .to_string()
                .parse::<BrtTarget>()
                .unwrap(),
            BrtTarget::NextDayReturn
        );
    }

    #[test]
    fn forward_var_of_constant_window() {
        let mut r = vec![0.0; 10];
        r.extend(vec![-0.02; 50]);
        for &p in &[0.9, 0.95, 0.99] {
            let v = historical_forward_var(&r, 9, 50, p).unwrap();
            assert!((v - 0.02).abs() < 1e-15);
        }
        assert!(historical_forward_var(&r, 10, 50, 0.95).is_err());
    }

    #[test]
    fn forward_var_of_normal_sample() {
        // averaged over seeds to keep the check tight; 1.645 sigma in loss units
        let mut acc = 0.0;
        let reps = 200;
        for seed in 0..reps {
            let r = normal_returns(51, 0.01, seed);
            acc += historical_forward_var(&r, 0, 50, 0.95).unwrap();
        }
        let mean = acc / reps as f64;
        assert!((mean - 0.0164).abs() < 0.0015, "{mean}");
    }

    #[test]
    fn one_day_horizon_is_next_return() {
        let r = [0.01, -0.013, 0.02];
        assert!((historical_forward_var(&r, 0, 1, 0.95).unwrap() - 0.013).abs() < 1e-15);
        assert!((historical_forward_var(&r, 1, 1, 0.95).unwrap() + 0.02).abs() < 1e-15);
    }

    #[test]
    fn candidates_respect_minimum_exceedances() {
        let window: Vec<f64> = (1..=15)
            .map(|i| -(i as f64) * 0.001)
            .chain([0.01, -0.001])
            .collect();
        let c = candidate_thresholds(&window);
        // 15 distinct negatives, the smallest 10 cannot be thresholds
        assert_eq!(c.len(), 5);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        for &u in &c {
            assert!(window.iter().filter(|r| **r < u).count() >= MIN_EXCEEDANCES);
        }
    }

    #[test]
    fn single_candidate_is_returned() {
        // 11 distinct negatives: only the largest leaves 10 below it
        let mut r: Vec<f64> = (0..89).map(|i| 0.001 + i as f64 * 1e-4).collect();
        r.extend((1..=11).map(|i| -0.003 * i as f64));
        r.extend(normal_returns(50, 0.01, 3));
        let s = DatedSeries::from_values(start(), r).unwrap();
        let pt = realized_brt(&s, 99, 100, BrtTarget::default(), 0.95).unwrap();
        assert_eq!(pt.candidates_searched, 1);
        assert_eq!(pt.brt, -0.003);
    }

    #[test]
    fn constant_series_has_no_candidates() {
        let s = DatedSeries::from_values(start(), vec![0.001; 625]).unwrap();
        let spec = WindowSpec::default();
        let out = brt_series(&s, &spec, BrtTarget::default(), 0.95).unwrap();
        assert!(out.points.is_empty());
        assert_eq!(out.gaps.len(), 450);
    }

    #[test]
    fn emitted_threshold_is_global_minimizer() {
        let r = normal_returns(200, 0.012, 21);
        let s = DatedSeries::from_values(start(), r.clone()).unwrap();
        for t in [99, 120, 149] {
            let pt = realized_brt(&s, t, 100, BrtTarget::default(), 0.95).unwrap();
            let window = &r[t - 99..=t];
            let target = historical_forward_var(&r, t, 50, 0.95).unwrap();
            assert!(window.contains(&pt.brt));
            for c in candidate_thresholds(window) {
                if let Ok((_, var)) = evt_var_at_threshold(window, c, 0.95) {
                    assert!((var - target).abs() >= pt.objective_gap - TIE_TOLERANCE);
                }
            }
        }
    }

    #[test]
    fn series_length_per_window() {
        let r = normal_returns(625, 0.01, 5);
        let s = DatedSeries::from_values(start(), r).unwrap();
        let spec = WindowSpec::default();
        let out = brt_series(&s, &spec, BrtTarget::default(), 0.95).unwrap();
        assert_eq!(out.points.len() + out.gaps.len(), 450);
        assert_eq!(out.points.first().map(|p| p.date), Some(s.date(100)));
        assert!(out
            .points
            .iter()
            .all(|p| p.brt < 0.0 && p.objective_gap >= 0.0));
        assert!(out.points.windows(2).all(|w| w[0].date < w[1].date));
    }
}
