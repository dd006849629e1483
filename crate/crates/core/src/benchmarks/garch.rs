//! GARCH(p, q) by quasi maximum likelihood with mean-zero returns.
//!
//! `h_t = alpha0 + sum_i alpha_i e_{t-i}^2 + sum_j beta_j h_{t-j}`.
//!
//! The data are divided by their root mean square before fitting.
//! The optimizer works on unconstrained coordinates: `ln alpha0`, a logistic
//! total persistence `sum alpha + sum beta < 1`, and softmax shares splitting
//! that persistence among the lags.

use super::{
    block_refit, check_rolling, dof_from_raw, raw_from_dof, BenchmarkConfig, Dist, Innovation,
    VarSeries,
};
use crate::error::{Error, Result};
use crate::optim::NelderMead;
use crate::timeseries::ReturnSeries;

pub const MIN_OBSERVATIONS: usize = 250;
const MAX_PERSISTENCE: f64 = 0.9999;

#[derive(Debug, Clone, PartialEq)]
pub struct GarchParams {
    pub alpha0: f64,
    /// ARCH terms on lagged squared returns.
    pub alpha: Vec<f64>,
    /// GARCH terms on lagged variances.
    pub beta: Vec<f64>,
    pub dist: Dist,
}

impl GarchParams {
    pub fn persistence(&self) -> f64 {
        self.alpha.iter().sum::<f64>() + self.beta.iter().sum::<f64>()
    }

    pub fn unconditional_variance(&self) -> f64 {
        self.alpha0 / (1.0 - self.persistence())
    }

    /// Conditional variances `h_0 ..= h_n` for `x` (the last one is the
    /// forecast for the day after `x` ends). Pre-sample squared returns and
    /// variances are set to `h_init`.
    pub fn variances(&self, x: &[f64], h_init: f64) -> Vec<f64> {
        let mut h = Vec::with_capacity(x.len() + 1);
        for t in 0..=x.len() {
            let mut v = self.alpha0;
            for (i, a) in self.alpha.iter().enumerate() {
                v += a * if t > i { x[t - 1 - i].powi(2) } else { h_init };
            }
            for (j, b) in self.beta.iter().enumerate() {
                v += b * if t > j { h[t - 1 - j] } else { h_init };
            }
            h.push(v);
        }
        h
    }

    pub fn neg_log_likelihood(&self, x: &[f64], h_init: f64) -> f64 {
        let h = self.variances(x, h_init);
        let mut nll = 0.0;
        for (xt, ht) in x.iter().zip(&h) {
            if !(*ht > 0.0) {
                return f64::INFINITY;
            }
            nll -= self.dist.ln_pdf(xt / ht.sqrt()) - 0.5 * ht.ln();
        }
        nll
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GarchFit {
    pub params: GarchParams,
    pub neg_log_likelihood: f64,
    pub converged: bool,
    /// Mean squared return, used for pre-sample values.
    pub h_init: f64,
}

fn decode(theta: &[f64], q: usize, p: usize, innovation: Innovation) -> GarchParams {
    let alpha0 = theta[0].clamp(-50.0, 50.0).exp();
    let persistence = MAX_PERSISTENCE / (1.0 + (-theta[1]).exp());
    let k = q + p;
    // the last share's logit is pinned at zero
    let logits: Vec<f64> = (0..k)
        .map(|i| if i + 1 < k { theta[2 + i] } else { 0.0 })
        .collect();
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
    let total: f64 = w.iter().sum();
    let shares: Vec<f64> = w.iter().map(|v| persistence * v / total).collect();
    let dist = match innovation {
        Innovation::Normal => Dist::Normal,
        Innovation::StudentT => Dist::StudentT {
            dof: dof_from_raw(theta[theta.len() - 1]),
        },
    };
    GarchParams {
        alpha0,
        alpha: shares[..q].to_vec(),
        beta: shares[q..].to_vec(),
        dist,
    }
}

fn encode(alpha0: f64, alpha: &[f64], beta: &[f64], dof: Option<f64>) -> Vec<f64> {
    let shares: Vec<f64> = alpha.iter().chain(beta).copied().collect();
    let persistence: f64 = shares.iter().sum();
    let frac = persistence / MAX_PERSISTENCE;
    let mut theta = vec![alpha0.ln(), (frac / (1.0 - frac)).ln()];
    let last = shares[shares.len() - 1];
    for s in &shares[..shares.len() - 1] {
        theta.push((s / last).ln());
    }
    if let Some(d) = dof {
        theta.push(raw_from_dof(d));
    }
    theta
}

/// QMLE of a mean-zero GARCH(`p_order`, `q_order`): `q_order` ARCH lags and
/// `p_order` GARCH lags.
pub fn fit_garch(
    returns: &[f64],
    p_order: usize,
    q_order: usize,
    innovation: Innovation,
) -> Result<GarchFit> {
    if returns.len() < MIN_OBSERVATIONS {
        return Err(Error::InsufficientData {
            what: "GARCH fit",
            needed: MIN_OBSERVATIONS,
            got: returns.len(),
        });
    }
    if q_order == 0 {
        return Err(Error::invalid("GARCH needs at least one ARCH lag"));
    }
    let n = returns.len() as f64;
    let scale2 = returns.iter().map(|r| r * r).sum::<f64>() / n;
    if !(scale2 > 0.0) {
        return Err(Error::Data("GARCH fit on a constant-zero series".into()));
    }
    let scale = scale2.sqrt();
    let z: Vec<f64> = returns.iter().map(|r| r / scale).collect();

    let alpha = vec![0.05 / q_order as f64; q_order];
    let beta = vec![0.90 / p_order.max(1) as f64; p_order];
    let dof = matches!(innovation, Innovation::StudentT).then_some(8.0);
    let x0 = encode(0.05, &alpha, &beta, dof);
    let steps = vec![0.5; x0.len()];
    let objective =
        |theta: &[f64]| decode(theta, q_order, p_order, innovation).neg_log_likelihood(&z, 1.0);
    let nm = NelderMead {
        max_evals: 600 * x0.len(),
        f_tol: 1e-10,
        x_tol: 1e-7,
        restarts: 2,
    };
    let mut best = nm.minimize(objective, &x0, &steps);
    // a low-persistence start catches fits with little volatility clustering
    let alt0 = encode(
        0.8,
        &vec![0.1 / q_order as f64; q_order],
        &vec![0.1 / p_order.max(1) as f64; p_order],
        dof,
    );
    let alt = nm.minimize(objective, &alt0, &steps);
    if alt.value < best.value {
        best = alt;
    }
    if !best.value.is_finite() {
        return Err(Error::NonConvergence {
            message: "GARCH likelihood not finite anywhere visited".into(),
            best_point: best.point,
            best_value: best.value,
        });
    }
    let mut params = decode(&best.point, q_order, p_order, innovation);
    params.alpha0 *= scale2;
    Ok(GarchFit {
        params,
        neg_log_likelihood: best.value + n * scale.ln(),
        converged: best.converged,
        h_init: scale2,
    })
}

/// Rolling GARCH VaR; refit every `cfg.refit_every` days, variance recursion daily.
pub fn var_garch(returns: &ReturnSeries, cfg: &BenchmarkConfig) -> Result<VarSeries> {
    check_rolling(returns, cfg.window, MIN_OBSERVATIONS, cfg.p)?;
    let (p_order, q_order) = cfg.garch_order;
    let window = cfg.window;
    let p = cfg.p;
    block_refit(
        returns,
        window,
        cfg.refit_every,
        |start, w| {
            let fit = fit_garch(w, p_order, q_order, cfg.innovation)?;
            let z = -fit.params.dist.quantile(1.0 - p);
            Ok((start, fit, z))
        },
        |(start, fit, z), x, t| {
            // recursion runs on from the start of the estimation window
            let h = fit.params.variances(&x[*start..t], fit.h_init);
            *z * h[t - *start].sqrt()
        },
    )
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    pub(crate) fn simulate(alpha0: f64, a: f64, b: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut h = alpha0 / (1.0 - a - b);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n + 500 {
            let z: f64 = StandardNormal.sample(&mut rng);
            let x = h.sqrt() * z;
            out.push(x);
            h = alpha0 + a * x * x + b * h;
        }
        out.split_off(500)
    }

    #[test]
    fn hand_recursion() {
        let params = GarchParams {
            alpha0: 0.1,
            alpha: vec![0.2],
            beta: vec![0.7],
            dist: Dist::Normal,
        };
        let h = params.variances(&[1.0, -2.0, 0.5], 1.0);
        let h1 = 0.1 + 0.2 * 1.0 + 0.7 * 1.0;
        let h2 = 0.1 + 0.2 * 1.0 + 0.7 * h1;
        let h3 = 0.1 + 0.2 * 4.0 + 0.7 * h2;
        let h4 = 0.1 + 0.2 * 0.25 + 0.7 * h3;
        for (a, b) in h.iter().zip([h1, h2, h3, h4]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn recovers_simulated_parameters() {
        let x = simulate(1e-6, 0.08, 0.90, 20_000, 1);
        let fit = fit_garch(&x, 1, 1, Innovation::Normal).unwrap();
        let g = &fit.params;
        assert!((g.alpha0 / 1e-6 - 1.0).abs() < 0.25, "{g:?}");
        assert!((g.alpha[0] / 0.08 - 1.0).abs() < 0.25, "{g:?}");
        assert!((g.beta[0] / 0.90 - 1.0).abs() < 0.25, "{g:?}");
        assert!(g.persistence() < 1.0);
    }

    #[test]
    fn iid_data_has_little_arch_effect() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..3000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.01 * z
            })
            .collect();
        let fit = fit_garch(&x, 1, 1, Innovation::Normal).unwrap();
        let v = x.iter().map(|r| r * r).sum::<f64>() / x.len() as f64;
        assert!(fit.params.alpha[0] < 0.05, "{:?}", fit.params);
        let uv = fit.params.unconditional_variance();
        assert!((uv / v - 1.0).abs() < 0.1, "{uv} vs {v}");
    }

    #[test]
    fn student_t_fit_and_positive_forecasts() {
        let x = simulate(2e-6, 0.1, 0.85, 1500, 3);
        let fit = fit_garch(&x, 1, 1, Innovation::StudentT).unwrap();
        match fit.params.dist {
            Dist::StudentT { dof } => assert!(dof > 2.0),
            _ => unreachable!(),
        }
        assert!(fit
            .params
            .variances(&x, fit.h_init)
            .iter()
            .all(|h| *h > 0.0));
        let higher = fit_garch(&x, 2, 1, Innovation::Normal).unwrap();
        assert_eq!(higher.params.beta.len(), 2);
        assert!(higher.params.persistence() < 1.0);
    }

    #[test]
    fn encode_decode_round_trip() {
        let theta = encode(0.3, &[0.05, 0.02], &[0.8], Some(6.0));
        let g = decode(&theta, 2, 1, Innovation::StudentT);
        assert!((g.alpha0 - 0.3).abs() < 1e-12);
        assert!((g.alpha[0] - 0.05).abs() < 1e-12 && (g.alpha[1] - 0.02).abs() < 1e-12);
        assert!((g.beta[0] - 0.8).abs() < 1e-12);
        match g.dist {
            Dist::StudentT { dof } => assert!((dof - 6.0).abs() < 1e-12),
            _ => unreachable!(),
        }
    }
}
