//! Benchmark VaR models.
//!
//! Every model forecasts the VaR for day `t` from the `window` returns before
//! it (indices `t-window ..= t-1`), so the first forecast lands on index
//! `window`. Models with a parametric fit re-estimate every `refit_every`
//! days and roll their recursion forward daily in between.

pub mod caviar;
pub mod egarch;
pub mod garch;
pub mod historical;
pub mod monte_carlo;
pub mod plain_evt;
pub mod variance_covariance;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::timeseries::{Date, ReturnSeries};

pub use caviar::{fit_caviar, tick_loss, var_caviar, CaviarFit, CaviarModel, CaviarParams};
pub use egarch::{fit_egarch, var_egarch, EgarchFit, EgarchParams};
pub use garch::{fit_garch, var_garch, GarchFit, GarchParams};
pub use historical::var_historical;
pub use monte_carlo::{monte_carlo_var, var_monte_carlo_gbm};
pub use plain_evt::{plain_evt_var, var_plain_evt};
pub use variance_covariance::{var_variance_covariance, variance_covariance_var};

/// Innovation law for the GARCH-family models.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Innovation {
    #[default]
    Normal,
    /// Unit-variance Student's t; the degrees of freedom are estimated.
    StudentT,
}

impl FromStr for Innovation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(Innovation::Normal),
            "t" | "student_t" | "student-t" => Ok(Innovation::StudentT),
            other => Err(Error::invalid(format!("unknown innovation `{other}`"))),
        }
    }
}

/// A fitted conditional distribution's innovation, with its dof if any.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dist {
    Normal,
    StudentT { dof: f64 },
}

impl Dist {
    /// Lower-tail quantile of the unit-variance innovation.
    pub fn quantile(&self, q: f64) -> f64 {
        match *self {
            Dist::Normal => crate::special::normal_quantile(q),
            Dist::StudentT { dof } => crate::special::standardized_t_quantile(q, dof),
        }
    }

    pub fn abs_mean(&self) -> f64 {
        match *self {
            Dist::Normal => (2.0 / std::f64::consts::PI).sqrt(),
            Dist::StudentT { dof } => crate::special::standardized_t_abs_mean(dof),
        }
    }

    pub(crate) fn ln_pdf(&self, z: f64) -> f64 {
        match *self {
            Dist::Normal => -0.5 * (z * z + (2.0 * std::f64::consts::PI).ln()),
            Dist::StudentT { dof } => crate::special::standardized_t_ln_pdf(z, dof),
        }
    }
}

/// Maps an unconstrained value to degrees of freedom above 2.
pub(crate) fn dof_from_raw(c: f64) -> f64 {
    2.0 + c.clamp(-10.0, 6.0).exp()
}

pub(crate) fn raw_from_dof(dof: f64) -> f64 {
    (dof - 2.0).ln()
}

/// A dated VaR forecast series in loss units.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VarSeries {
    pub dates: Vec<Date>,
    pub var_loss: Vec<f64>,
}

impl VarSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn var_return(&self) -> impl Iterator<Item = f64> + '_ {
        self.var_loss.iter().map(|v| -v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Date, f64)> + '_ {
        self.dates
            .iter()
            .copied()
            .zip(self.var_loss.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkConfig {
    pub window: usize,
    pub p: f64,
    pub refit_every: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub garch_order: (usize, usize),
    pub innovation: Innovation,
    pub evt_percentile: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            window: 600,
            p: 0.95,
            refit_every: 25,
            n_paths: 10_000,
            seed: 0,
            garch_order: (1, 1),
            innovation: Innovation::Normal,
            evt_percentile: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchmarkModel {
    Historical,
    MonteCarlo,
    VarianceCovariance,
    Garch,
    Egarch,
    Caviar,
    PlainEvt,
}

impl BenchmarkModel {
    pub const ALL: [BenchmarkModel; 7] = [
        BenchmarkModel::PlainEvt,
        BenchmarkModel::Egarch,
        BenchmarkModel::Garch,
        BenchmarkModel::Caviar,
        BenchmarkModel::MonteCarlo,
        BenchmarkModel::Historical,
        BenchmarkModel::VarianceCovariance,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BenchmarkModel::Historical => "historical",
            BenchmarkModel::MonteCarlo => "montecarlo",
            BenchmarkModel::VarianceCovariance => "varcov",
            BenchmarkModel::Garch => "garch",
            BenchmarkModel::Egarch => "egarch",
            BenchmarkModel::Caviar => "caviar",
            BenchmarkModel::PlainEvt => "evt",
        }
    }
}

impl fmt::Display for BenchmarkModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        BenchmarkModel::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::invalid(format!("unknown model `{s}`")))
    }
}

pub fn run_benchmark(
    model: BenchmarkModel,
    returns: &ReturnSeries,
    cfg: &BenchmarkConfig,
) -> Result<VarSeries> {
    match model {
        BenchmarkModel::Historical => var_historical(returns, cfg.window, cfg.p),
        BenchmarkModel::MonteCarlo => {
            var_monte_carlo_gbm(returns, cfg.window, cfg.p, cfg.n_paths, cfg.seed)
        }
        BenchmarkModel::VarianceCovariance => var_variance_covariance(returns, cfg.window, cfg.p),
        BenchmarkModel::Garch => var_garch(returns, cfg),
        BenchmarkModel::Egarch => var_egarch(returns, cfg),
        BenchmarkModel::Caviar => var_caviar(returns, cfg),
        BenchmarkModel::PlainEvt => var_plain_evt(returns, cfg.window, cfg.p, cfg.evt_percentile),
    }
}

pub(crate) fn check_rolling(
    returns: &ReturnSeries,
    window: usize,
    min_window: usize,
    p: f64,
) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("confidence {p} outside (0, 1)")));
    }
    if window < min_window {
        return Err(Error::invalid(format!(
            "window {window} below the minimum of {min_window}"
        )));
    }
    if returns.len() <= window {
        return Err(Error::InsufficientData {
            what: "rolling VaR",
            needed: window + 1,
            got: returns.len(),
        });
    }
    Ok(())
}

/// Applies `f` to each trailing window and dates the result at the next day.
pub(crate) fn rolling<F>(returns: &ReturnSeries, window: usize, mut f: F) -> Result<VarSeries>
where
    F: FnMut(usize, &[f64]) -> Result<f64>,
{
    let x = returns.values();
    let mut out = VarSeries::default();
    for t in window..x.len() {
        out.dates.push(returns.date(t));
        out.var_loss.push(f(t, &x[t - window..t])?);
    }
    Ok(out)
}

/// Block-refit driver: `fit` estimates on the window ending before each block
/// start (and receives the window's first index), `step` produces the VaR for a day given the fitted state and all
/// returns before it.
pub(crate) fn block_refit<S, Fit, Step>(
    returns: &ReturnSeries,
    window: usize,
    refit_every: usize,
    mut fit: Fit,
    mut step: Step,
) -> Result<VarSeries>
where
    Fit: FnMut(usize, &[f64]) -> Result<S>,
    Step: FnMut(&mut S, &[f64], usize) -> f64,
{
    if refit_every == 0 {
        return Err(Error::invalid("refit interval must be positive"));
    }
    let x = returns.values();
    let mut out = VarSeries::default();
    let mut block = window;
    while block < x.len() {
        let mut state = fit(block - window, &x[block - window..block])?;
        let end = (block + refit_every).min(x.len());
        for t in block..end {
            out.dates.push(returns.date(t));
            out.var_loss.push(step(&mut state, x, t));
        }
        block = end;
    }
    Ok(out)
}

pub(crate) fn mean_sd(x: &[f64]) -> (f64, f64) {
    // shifted by the first value so a constant window has exactly zero spread
    let n = x.len() as f64;
    let shift = x[0];
    let md = x.iter().map(|v| v - shift).sum::<f64>() / n;
    let v = x.iter().map(|v| (v - shift - md).powi(2)).sum::<f64>() / (n - 1.0);
    (shift + md, v.sqrt())
}
