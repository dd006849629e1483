//! Asymmetric-slope CAViaR, fitted by minimizing the quantile (tick) loss.
//!
//! `q_t = b1 + b2 q_{t-1} + b3 (x_{t-1})^+ + b4 (x_{t-1})^-` is the
//! `(1-p)`-quantile of the return itself, so it is negative and the VaR
//! is `-q_t`.

use rand::Rng;

use super::{block_refit, check_rolling, BenchmarkConfig, VarSeries};
use crate::error::{Error, Result};
use crate::optim::NelderMead;
use crate::seed::SeedTree;
use crate::timeseries::{empirical_quantile, ReturnSeries};

pub const MIN_OBSERVATIONS: usize = 250;
pub const RANDOM_RESTARTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CaviarModel {
    /// `q_t = b1`; the optimum is a sample quantile.
    Constant,
    #[default]
    AsymmetricSlope,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaviarParams {
    pub beta: [f64; 4],
}

pub fn positive_part(x: f64) -> f64 {
    x.max(0.0)
}

pub fn negative_part(x: f64) -> f64 {
    (-x).max(0.0)
}

impl CaviarParams {
    /// Quantile path `q_0 ..= q_n`; `q_n` is the forecast after `x` ends.
    pub fn quantiles(&self, x: &[f64], q_init: f64) -> Vec<f64> {
        let [b1, b2, b3, b4] = self.beta;
        let mut q = Vec::with_capacity(x.len() + 1);
        q.push(q_init);
        for (t, &xt) in x.iter().enumerate() {
            q.push(b1 + b2 * q[t] + b3 * positive_part(xt) + b4 * negative_part(xt));
        }
        q
    }
}

/// Mean tick loss `(theta - 1{x < q}) (x - q)`.
pub fn tick_loss(x: &[f64], q: &[f64], theta: f64) -> f64 {
    let total: f64 = x
        .iter()
        .zip(q)
        .map(|(&xt, &qt)| {
            let d = xt - qt;
            if d < 0.0 {
                (theta - 1.0) * d
            } else {
                theta * d
            }
        })
        .sum();
    total / x.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaviarFit {
    pub params: CaviarParams,
    pub loss: f64,
    /// Recursion start: the empirical quantile of the first tenth of the sample.
    pub q_init: f64,
    pub converged: bool,
}

pub fn fit_caviar(
    returns: &[f64],
    p: f64,
    model: CaviarModel,
    seed: SeedTree,
) -> Result<CaviarFit> {
    if returns.len() < MIN_OBSERVATIONS {
        return Err(Error::InsufficientData {
            what: "CAViaR fit",
            needed: MIN_OBSERVATIONS,
            got: returns.len(),
        });
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("confidence {p} outside (0, 1)")));
    }
    let theta = 1.0 - p;
    let n = returns.len();
    let scale = (returns.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
    if !(scale > 0.0) {
        return Err(Error::Data("CAViaR fit on a constant-zero series".into()));
    }
    let z: Vec<f64> = returns.iter().map(|r| r / scale).collect();
    let q_init = empirical_quantile(&z[..(n / 10).max(1)], theta)?;

    let nm = NelderMead {
        max_evals: 1500,
        f_tol: 1e-12,
        x_tol: 1e-8,
        restarts: 1,
    };
    let (best_beta, best) = match model {
        CaviarModel::Constant => {
            let f = |b: &[f64]| tick_loss(&z, &vec![b[0]; n], theta);
            let m = nm.minimize(f, &[q_init], &[0.25]);
            ([m.point[0], 0.0, 0.0, 0.0], m)
        }
        CaviarModel::AsymmetricSlope => {
            let mut buf = Vec::with_capacity(n + 1);
            let mut f = |b: &[f64]| {
                if b[1].abs() >= 1.0 {
                    return f64::INFINITY;
                }
                buf.clear();
                buf.push(q_init);
                for t in 0..n - 1 {
                    let xt = z[t];
                    buf.push(
                        b[0] + b[1] * buf[t] + b[2] * positive_part(xt) + b[3] * negative_part(xt),
                    );
                }
                tick_loss(&z, &buf, theta)
            };
            let mut rng = seed.child("caviar").rng();
            let mut starts = vec![vec![0.1 * q_init, 0.9, -0.05, -0.2]];
            for _ in 0..RANDOM_RESTARTS {
                starts.push(vec![
                    rng.random_range(-0.5..0.5),
                    rng.random_range(0.0..0.99),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.8..0.2),
                ]);
            }
            let steps = [0.1, 0.05, 0.1, 0.1];
            let mut best: Option<crate::optim::Minimum> = None;
            for s in &starts {
                let m = nm.minimize(&mut f, s, &steps);
                if best.as_ref().is_none_or(|b| m.value < b.value) {
                    best = Some(m);
                }
            }
            let m = best.expect("at least one start");
            ([m.point[0], m.point[1], m.point[2], m.point[3]], m)
        }
    };
    if !best.value.is_finite() {
        return Err(Error::NonConvergence {
            message: "CAViaR loss not finite at any start".into(),
            best_point: best.point,
            best_value: best.value,
        });
    }
    if !best.converged {
        log::warn!("CAViaR search hit its evaluation budget; using the best point found");
    }
    Ok(CaviarFit {
        params: CaviarParams {
            beta: [
                best_beta[0] * scale,
                best_beta[1],
                best_beta[2],
                best_beta[3],
            ],
        },
        loss: best.value * scale,
        q_init: q_init * scale,
        converged: best.converged,
    })
}

pub fn var_caviar(returns: &ReturnSeries, cfg: &BenchmarkConfig) -> Result<VarSeries> {
    check_rolling(returns, cfg.window, MIN_OBSERVATIONS, cfg.p)?;
    let root = SeedTree::new(cfg.seed).child("caviar");
    block_refit(
        returns,
        cfg.window,
        cfg.refit_every,
        |start, w| {
            let fit = fit_caviar(
                w,
                cfg.p,
                CaviarModel::AsymmetricSlope,
                root.index(start as u64),
            )?;
            Ok((start, fit))
        },
        |(start, fit), x, t| {
            let q = fit.params.quantiles(&x[*start..t], fit.q_init);
            -q[t - *start]
        },
    )
}
