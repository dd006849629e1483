//! Threshold regression and the rolling Uncertain-EVT forecast.
//!
//! For every training window of `train_len` days the realized thresholds on
//! its regression span are regressed on lagged variance and prior-month
//! ambiguity. The fitted model predicts the threshold for the next block, and
//! the GPD is refit on the trailing EVT window at that threshold. The
//! resulting VaR is held for the whole block.

use std::fmt;

use log::warn;
use rayon::prelude::*;

use crate::ambiguity::{ambiguity_series, AmbiguitySeries, BinScheme};
use crate::benchmarks::VarSeries;
use crate::brt::{brt_series, candidate_thresholds, BrtPoint, BrtSeries, BrtTarget};
use crate::error::{Error, Result};
use crate::gpd::{evt_var, fit_tail, TailFit, MIN_EXCEEDANCES};
use crate::timeseries::{rolling_variance_values, Date, IntradayPanel, ReturnSeries, WindowSpec};

pub const MIN_REGRESSION_ROWS: usize = 30;
/// Predicted thresholds at or above zero are replaced by this value.
pub const BRT_CLAMP: f64 = -1e-6;

const REGRESSORS: [&str; 2] = ["variance", "ambiguity"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionFit {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Standard errors of (beta0, beta1, beta2).
    pub stderrs: [f64; 3],
    pub r_squared: f64,
    pub n_obs: usize,
}

impl RegressionFit {
    pub fn coefficients(&self) -> [f64; 3] {
        [self.beta0, self.beta1, self.beta2]
    }
}

/// Ordinary least squares of `y` on an intercept, `x1` and `x2`.
///
/// Regressors are centred and scaled before a Householder QR, so wildly
/// different magnitudes (variances near 1e-4 against ambiguity in the
/// hundreds) do not cost precision.
pub fn fit_ols(y: &[f64], x1: &[f64], x2: &[f64]) -> Result<RegressionFit> {
    let n = y.len();
    if x1.len() != n || x2.len() != n {
        return Err(Error::Misaligned(format!(
            "regression columns have lengths {n}, {}, {}",
            x1.len(),
            x2.len()
        )));
    }
    if n < MIN_REGRESSION_ROWS {
        return Err(Error::InsufficientData {
            what: "threshold regression",
            needed: MIN_REGRESSION_ROWS,
            got: n,
        });
    }
    if y.iter().chain(x1).chain(x2).any(|v| !v.is_finite()) {
        return Err(Error::invalid("regression inputs must be finite"));
    }
    let nf = n as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / nf;
    let (my, m1, m2) = (mean(y), mean(x1), mean(x2));

    let mut cols = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut scales = [0.0; 2];
    for (k, (x, m)) in [(x1, m1), (x2, m2)].into_iter().enumerate() {
        let c: Vec<f64> = x.iter().map(|v| v - m).collect();
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        let size = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if norm <= 1e-12 * size * nf.sqrt() || norm == 0.0 {
            return Err(Error::RankDeficient {
                regressor: REGRESSORS[k].to_string(),
            });
        }
        scales[k] = norm;
        cols[k] = c.into_iter().map(|v| v / norm).collect();
    }
    let mut rhs: Vec<f64> = y.iter().map(|v| v - my).collect();

    // Householder QR of the unit-norm n x 2 block, applied to rhs as we go.
    let mut r = [[0.0; 2]; 2];
    for k in 0..2 {
        let alpha = {
            let norm = cols[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if cols[k][k] > 0.0 {
                -norm
            } else {
                norm
            }
        };
        if alpha.abs() < 1e-10 {
            return Err(Error::RankDeficient {
                regressor: REGRESSORS[k].to_string(),
            });
        }
        let mut v: Vec<f64> = cols[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        let reflect = |col: &mut [f64]| {
            let dot: f64 = v.iter().zip(&col[k..]).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in col[k..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        };
        for col in cols[k..].iter_mut() {
            reflect(col);
        }
        reflect(&mut rhs);
        for j in k..2 {
            r[k][j] = cols[j][k];
        }
    }
    // back-substitution in the scaled coordinates
    let g1 = rhs[1] / r[1][1];
    let g0 = (rhs[0] - r[0][1] * g1) / r[0][0];
    let b1 = g0 / scales[0];
    let b2 = g1 / scales[1];
    let b0 = my - b1 * m1 - b2 * m2;

    let rss: f64 = (0..n)
        .map(|i| {
            let e = y[i] - b0 - b1 * x1[i] - b2 * x2[i];
            e * e
        })
        .sum();
    let tss: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let s2 = rss / (nf - 3.0);

    // (R'R)^-1 = R^-1 R^-T for the scaled slopes
    let inv = [
        [1.0 / r[0][0], -r[0][1] / (r[0][0] * r[1][1])],
        [0.0, 1.0 / r[1][1]],
    ];
    let mut cov = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let g: f64 = (0..2).map(|k| inv[i][k] * inv[j][k]).sum();
            cov[i][j] = s2 * g / (scales[i] * scales[j]);
        }
    }
    let xbar = [m1, m2];
    let mut var0 = s2 / nf;
    for i in 0..2 {
        for j in 0..2 {
            var0 += xbar[i] * cov[i][j] * xbar[j];
        }
    }
    Ok(RegressionFit {
        beta0: b0,
        beta1: b1,
        beta2: b2,
        stderrs: [var0.sqrt(), cov[0][0].sqrt(), cov[1][1].sqrt()],
        r_squared: if tss > 0.0 { 1.0 - rss / tss } else { 1.0 },
        n_obs: n,
    })
}

/// Lagged regressors for every date of a daily series.
#[derive(Debug, Clone)]
pub struct Regressors {
    dates: Vec<Date>,
    variance: Vec<Option<f64>>,
    ambiguity: Vec<Option<f64>>,
}

impl Regressors {
    /// At index `t`: the sample variance of the `lag` returns before `t`
    /// (indices `t-lag ..= t-1`) and the ambiguity of the last complete
    /// calendar month before `t`'s month.
    pub fn new(returns: &ReturnSeries, ambiguity: &AmbiguitySeries, lag: usize) -> Result<Self> {
        if lag < 2 {
            return Err(Error::invalid("variance window must be at least 2"));
        }
        let n = returns.len();
        let mut variance = vec![None; n];
        if n > lag {
            let vals = rolling_variance_values(&returns.values()[..n - 1], lag);
            for (i, v) in vals.into_iter().enumerate() {
                variance[i + lag] = Some(v);
            }
        }
        let ambiguity = returns
            .dates()
            .iter()
            .map(|&d| ambiguity.prior_month_value(d))
            .collect();
        Ok(Regressors {
            dates: returns.dates().to_vec(),
            variance,
            ambiguity,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn at_index(&self, t: usize) -> Option<(f64, f64)> {
        Some((
            self.variance.get(t).copied()??,
            self.ambiguity.get(t).copied()??,
        ))
    }

    pub fn at(&self, date: Date) -> Option<(f64, f64)> {
        let t = self.dates.binary_search(&date).ok()?;
        self.at_index(t)
    }
}

/// Regresses realized thresholds on their dates' regressors, dropping rows
/// where either regressor is unavailable.
pub fn fit_brt_regression(points: &[BrtPoint], regressors: &Regressors) -> Result<RegressionFit> {
    let mut y = Vec::with_capacity(points.len());
    let mut x1 = Vec::with_capacity(points.len());
    let mut x2 = Vec::with_capacity(points.len());
    for pt in points {
        if let Some((v, a)) = regressors.at(pt.date) {
            y.push(pt.brt);
            x1.push(v);
            x2.push(a);
        }
    }
    fit_ols(&y, &x1, &x2)
}

/// Linear prediction; the boolean is set when the prediction was clamped.
pub fn predict_brt(fit: &RegressionFit, variance: f64, ambiguity: f64) -> (f64, bool) {
    let raw = fit.beta0 + fit.beta1 * variance + fit.beta2 * ambiguity;
    if raw >= 0.0 {
        (BRT_CLAMP, true)
    } else {
        (raw, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ForecastFlags {
    /// The regression predicted a non-negative threshold.
    pub clamped: bool,
    /// Too few exceedances at the predicted threshold; the nearest admissible
    /// candidate closer to zero was used instead.
    pub relaxed: bool,
}

impl fmt::Display for ForecastFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.clamped {
            parts.push("clamped");
        }
        if self.relaxed {
            parts.push("relaxed");
        }
        f.write_str(&parts.join("|"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarForecast {
    pub date: Date,
    /// Predicted threshold as a (negative) return.
    pub brt_hat: f64,
    pub var_loss: f64,
    pub var_return: f64,
    /// Tail fit actually used; `gpd.params.u` differs from `-brt_hat` when relaxed.
    pub gpd: TailFit,
    pub flags: ForecastFlags,
}

/// Tail fit and VaR from the trailing `evt_window` returns at threshold `brt_hat`.
///
/// `history` must end at the last observation before the forecast. Returns the
/// fit, the VaR as a positive loss, and whether the threshold had to be relaxed.
pub fn uncertain_evt_var(
    history: &[f64],
    evt_window: usize,
    brt_hat: f64,
    p: f64,
) -> Result<(TailFit, f64, bool)> {
    if history.len() < evt_window || evt_window == 0 {
        return Err(Error::InsufficientData {
            what: "EVT window",
            needed: evt_window.max(1),
            got: history.len(),
        });
    }
    if !brt_hat.is_finite() {
        return Err(Error::invalid("predicted threshold is not finite"));
    }
    let window = &history[history.len() - evt_window..];
    let below = window.iter().filter(|r| **r < brt_hat).count();
    let (threshold, relaxed) = if below >= MIN_EXCEEDANCES {
        (brt_hat, false)
    } else {
        let first = candidate_thresholds(window)
            .into_iter()
            .find(|c| *c > brt_hat);
        match first {
            Some(c) => (c, true),
            None => {
                return Err(Error::TooFewExceedances {
                    found: below,
                    required: MIN_EXCEEDANCES,
                })
            }
        }
    };
    let losses: Vec<f64> = window.iter().map(|r| -r).collect();
    let fit = fit_tail(&losses, -threshold)?;
    let var = evt_var(&fit, p)?;
    Ok((fit, var, relaxed))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub spec: WindowSpec,
    pub target: BrtTarget,
    pub p: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            spec: WindowSpec::default(),
            target: BrtTarget::default(),
            p: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowResult {
    pub start: usize,
    pub fit: RegressionFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedWindow {
    pub start: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub forecasts: Vec<VarForecast>,
    pub brt: BrtSeries,
    pub windows: Vec<WindowResult>,
    pub skipped: Vec<SkippedWindow>,
}

impl PipelineOutput {
    pub fn var_series(&self) -> VarSeries {
        VarSeries {
            dates: self.forecasts.iter().map(|f| f.date).collect(),
            var_loss: self.forecasts.iter().map(|f| f.var_loss).collect(),
        }
    }
}

/// Runs the rolling forecast, computing monthly ambiguity from the panel.
pub fn run_pipeline(
    daily: &ReturnSeries,
    panel: &IntradayPanel,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    let amb = ambiguity_series(panel, &BinScheme::default());
    run_pipeline_with_ambiguity(daily, &amb, config)
}

pub fn run_pipeline_with_ambiguity(
    daily: &ReturnSeries,
    ambiguity: &AmbiguitySeries,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    let spec = config.spec;
    if !(config.p > 0.0 && config.p < 1.0) {
        return Err(Error::invalid(format!(
            "confidence {} outside (0, 1)",
            config.p
        )));
    }
    let brt = brt_series(daily, &spec, config.target, config.p)?;
    let regressors = Regressors::new(daily, ambiguity, spec.lag)?;
    let starts = spec.window_starts(daily.len());

    let results: Vec<(usize, Result<(RegressionFit, Vec<VarForecast>)>)> = starts
        .par_iter()
        .map(|&t| {
            (
                t,
                forecast_window(daily, &brt, &regressors, &spec, config.p, t),
            )
        })
        .collect();

    let mut out = PipelineOutput {
        forecasts: Vec::new(),
        brt,
        windows: Vec::new(),
        skipped: Vec::new(),
    };
    for (start, r) in results {
        match r {
            Ok((fit, mut fc)) => {
                out.windows.push(WindowResult { start, fit });
                out.forecasts.append(&mut fc);
            }
            Err(e) => {
                warn!("window starting {} skipped: {e}", daily.date(start));
                out.skipped.push(SkippedWindow {
                    start,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

fn forecast_window(
    daily: &ReturnSeries,
    brt: &BrtSeries,
    regressors: &Regressors,
    spec: &WindowSpec,
    p: f64,
    start: usize,
) -> Result<(RegressionFit, Vec<VarForecast>)> {
    let points: Vec<BrtPoint> = spec
        .regression_range(start)
        .filter_map(|t| brt.get(daily.date(t)).cloned())
        .collect();
    let fit = fit_brt_regression(&points, regressors)?;

    let first = start + spec.train_len;
    let (variance, ambiguity) = regressors
        .at_index(first)
        .ok_or_else(|| Error::Data(format!("no regressors available for {}", daily.date(first))))?;
    let (brt_hat, clamped) = predict_brt(&fit, variance, ambiguity);
    let (gpd, var_loss, relaxed) =
        uncertain_evt_var(&daily.values()[..first], spec.evt_len, brt_hat, p)?;
    let flags = ForecastFlags { clamped, relaxed };
    let end = (first + spec.forecast_len).min(daily.len());
    let forecasts = (first..end)
        .map(|t| VarForecast {
            date: daily.date(t),
            brt_hat,
            var_loss,
            var_return: -var_loss,
            gpd,
            flags,
        })
        .collect();
    Ok((fit, forecasts))
}
