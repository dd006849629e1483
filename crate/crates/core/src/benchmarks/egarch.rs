//! EGARCH on log variance with mean-zero returns.
//!
//! ```text
//! ln h_t = omega + sum_k beta_k g(Z_{t-k}) + sum_k alpha_k ln h_{t-k}
//! g(Z)   = theta Z + lambda (|Z| - E|Z|)
//! ```
//!
//! `beta_k` only ever multiplies `g`, whose own coefficients already set its
//! scale, so `beta_1` is fixed at 1. Higher-order `beta_k` are estimated.

use super::{
    block_refit, check_rolling, dof_from_raw, raw_from_dof, BenchmarkConfig, Dist, Innovation,
    VarSeries,
};
use crate::error::{Error, Result};
use crate::optim::NelderMead;
use crate::timeseries::ReturnSeries;

pub const MIN_OBSERVATIONS: usize = 250;
const MAX_ALPHA_SUM: f64 = 0.9999;
const LN_H_LIMIT: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EgarchParams {
    pub omega: f64,
    /// Coefficients on `g(Z_{t-k})`; the first is always 1.
    pub beta: Vec<f64>,
    /// Coefficients on lagged log variance.
    pub alpha: Vec<f64>,
    pub theta: f64,
    pub lambda: f64,
    pub dist: Dist,
}

impl EgarchParams {
    pub fn g(&self, z: f64) -> f64 {
        self.theta * z + self.lambda * (z.abs() - self.dist.abs_mean())
    }

    pub fn is_stationary(&self) -> bool {
        self.alpha.iter().map(|a| a.abs()).sum::<f64>() < MAX_ALPHA_SUM
    }

    /// Log variances `ln h_0 ..= ln h_n`; pre-sample log variances are
    /// `ln_h_init` and pre-sample shocks contribute nothing.
    pub fn log_variances(&self, x: &[f64], ln_h_init: f64) -> Vec<f64> {
        let mut lh: Vec<f64> = Vec::with_capacity(x.len() + 1);
        let mut gz: Vec<f64> = Vec::with_capacity(x.len());
        for t in 0..=x.len() {
            let mut v = self.omega;
            for (k, b) in self.beta.iter().enumerate() {
                if t > k {
                    v += b * gz[t - 1 - k];
                }
            }
            for (k, a) in self.alpha.iter().enumerate() {
                v += a * if t > k { lh[t - 1 - k] } else { ln_h_init };
            }
            let v = v.clamp(-LN_H_LIMIT, LN_H_LIMIT);
            lh.push(v);
            if t < x.len() {
                gz.push(self.g(x[t] * (-0.5 * v).exp()));
            }
        }
        lh
    }

    pub fn neg_log_likelihood(&self, x: &[f64], ln_h_init: f64) -> f64 {
        let lh = self.log_variances(x, ln_h_init);
        let mut nll = 0.0;
        for (xt, l) in x.iter().zip(&lh) {
            if l.abs() >= LN_H_LIMIT {
                return f64::INFINITY;
            }
            nll -= self.dist.ln_pdf(xt * (-0.5 * l).exp()) - 0.5 * l;
        }
        nll
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgarchFit {
    pub params: EgarchParams,
    pub neg_log_likelihood: f64,
    pub converged: bool,
    pub ln_h_init: f64,
}

/// Layout of the free vector: omega, alpha_1..a, theta, lambda, beta_2..b, [dof].
fn decode(v: &[f64], n_alpha: usize, n_beta: usize, innovation: Innovation) -> EgarchParams {
    let omega = v[0];
    let alpha = v[1..1 + n_alpha].to_vec();
    let theta = v[1 + n_alpha];
    let lambda = v[2 + n_alpha];
    let mut beta = vec![1.0];
    beta.extend_from_slice(&v[3 + n_alpha..3 + n_alpha + n_beta - 1]);
    let dist = match innovation {
        Innovation::Normal => Dist::Normal,
        Innovation::StudentT => Dist::StudentT {
            dof: dof_from_raw(v[v.len() - 1]),
        },
    };
    EgarchParams {
        omega,
        beta,
        alpha,
        theta,
        lambda,
        dist,
    }
}

/// QMLE of a mean-zero EGARCH with `n_alpha` log-variance lags and `n_beta`
/// shock lags.
pub fn fit_egarch(
    returns: &[f64],
    n_alpha: usize,
    n_beta: usize,
    innovation: Innovation,
) -> Result<EgarchFit> {
    if returns.len() < MIN_OBSERVATIONS {
        return Err(Error::InsufficientData {
            what: "EGARCH fit",
            needed: MIN_OBSERVATIONS,
            got: returns.len(),
        });
    }
    if n_alpha == 0 || n_beta == 0 {
        return Err(Error::invalid("EGARCH orders must be at least 1"));
    }
    let n = returns.len() as f64;
    let scale2 = returns.iter().map(|r| r * r).sum::<f64>() / n;
    if !(scale2 > 0.0) {
        return Err(Error::Data("EGARCH fit on a constant-zero series".into()));
    }
    let z: Vec<f64> = returns.iter().map(|r| r / scale2.sqrt()).collect();

    let objective = |v: &[f64]| {
        let params = decode(v, n_alpha, n_beta, innovation);
        if !params.is_stationary() {
            return f64::INFINITY;
        }
        params.neg_log_likelihood(&z, 0.0)
    };
    let mut x0 = vec![0.0];
    x0.extend(std::iter::repeat_n(0.9 / n_alpha as f64, n_alpha));
    x0.extend([-0.05, 0.15]);
    x0.extend(std::iter::repeat_n(0.0, n_beta - 1));
    if innovation == Innovation::StudentT {
        x0.push(raw_from_dof(8.0));
    }
    let mut steps = vec![0.05; x0.len()];
    steps[0] = 0.1;
    let nm = NelderMead {
        max_evals: 800 * x0.len(),
        f_tol: 1e-10,
        x_tol: 1e-7,
        restarts: 2,
    };
    let mut best = nm.minimize(objective, &x0, &steps);
    let mut alt0 = x0.clone();
    alt0[1..1 + n_alpha]
        .iter_mut()
        .for_each(|a| *a = 0.3 / n_alpha as f64);
    let alt = nm.minimize(objective, &alt0, &steps);
    if alt.value < best.value {
        best = alt;
    }
    if !best.value.is_finite() {
        return Err(Error::NonConvergence {
            message: "EGARCH likelihood not finite anywhere visited".into(),
            best_point: best.point,
            best_value: best.value,
        });
    }
    let mut params = decode(&best.point, n_alpha, n_beta, innovation);
    // undo the scaling: ln h = ln h_scaled + ln scale2
    params.omega += (1.0 - params.alpha.iter().sum::<f64>()) * scale2.ln();
    Ok(EgarchFit {
        params,
        neg_log_likelihood: best.value + 0.5 * n * scale2.ln(),
        converged: best.converged,
        ln_h_init: scale2.ln(),
    })
}

/// Rolling EGARCH VaR using the GARCH order setting as (alpha lags, beta lags).
pub fn var_egarch(returns: &ReturnSeries, cfg: &BenchmarkConfig) -> Result<VarSeries> {
    check_rolling(returns, cfg.window, MIN_OBSERVATIONS, cfg.p)?;
    let (n_alpha, n_beta) = cfg.garch_order;
    let p = cfg.p;
    block_refit(
        returns,
        cfg.window,
        cfg.refit_every,
        |start, w| {
            let fit = fit_egarch(w, n_alpha, n_beta, cfg.innovation)?;
            let z = -fit.params.dist.quantile(1.0 - p);
            Ok((start, fit, z))
        },
        |(start, fit, z), x, t| {
            let lh = fit.params.log_variances(&x[*start..t], fit.ln_h_init);
            *z * (0.5 * lh[t - *start]).exp()
        },
    )
}
