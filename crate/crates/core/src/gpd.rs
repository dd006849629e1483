//! Generalized Pareto tail model: distribution functions, maximum-likelihood
//! fitting and the peaks-over-threshold VaR.
//!
//! All tail math works in loss space, `L = -r >= 0`. A threshold `u` is a
//! loss level; the tail sample consists of the excesses `L - u` of losses
//! strictly above `u`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::optim::golden_section;
use crate::seed::SeedTree;

/// Fewer exceedances than this make the likelihood too flat to trust.
pub const MIN_EXCEEDANCES: usize = 10;

/// Below this `|xi|` the exponential limit is used.
pub const XI_ZERO_TOL: f64 = 1e-9;

/// Search box for the shape parameter.
pub const XI_BOUNDS: (f64, f64) = (-0.5, 1.5);

/// Upper bound on the scale, as a multiple of the largest excess.
const SIGMA_MAX_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdParams {
    pub xi: f64,
    pub sigma: f64,
    pub u: f64,
}

impl GpdParams {
    pub fn new(xi: f64, sigma: f64, u: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "GPD scale must be positive, got {sigma}"
            )));
        }
        if !xi.is_finite() || !u.is_finite() {
            return Err(Error::invalid("GPD shape and threshold must be finite"));
        }
        Ok(Self { xi, sigma, u })
    }

    /// Right end of the excess support; finite only for `xi < 0`.
    pub fn support_end(&self) -> f64 {
        if self.xi < -XI_ZERO_TOL {
            -self.sigma / self.xi
        } else {
            f64::INFINITY
        }
    }
}

/// A GPD fitted above a threshold, with the counts needed for tail VaR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    pub params: GpdParams,
    /// Size of the whole sample the threshold was applied to.
    pub n: usize,
    /// Number of observations beyond the threshold.
    pub n_u: usize,
    pub loglik: f64,
}

/// Result of [`fit_gpd_mle`] on a set of excesses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleFit {
    pub xi: f64,
    pub sigma: f64,
    pub loglik: f64,
    pub evals: usize,
}

/// `P(X - u <= x | X > u)` for an excess `x`.
pub fn gpd_cdf(x: f64, params: &GpdParams) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= params.support_end() {
        return 1.0;
    }
    let z = x / params.sigma;
    if params.xi.abs() < XI_ZERO_TOL {
        -(-z).exp_m1()
    } else {
        -(-(params.xi * z).ln_1p() / params.xi).exp_m1()
    }
}

/// GPD density of an excess `x`; zero outside the support.
pub fn gpd_pdf(x: f64, params: &GpdParams) -> f64 {
    if x < 0.0 || x >= params.support_end() {
        return 0.0;
    }
    let z = x / params.sigma;
    if params.xi.abs() < XI_ZERO_TOL {
        (-z).exp() / params.sigma
    } else {
        (-(1.0 / params.xi + 1.0) * (params.xi * z).ln_1p()).exp() / params.sigma
    }
}

/// Log-likelihood of excesses; `-inf` when any excess is outside the support.
pub fn gpd_log_likelihood(excesses: &[f64], xi: f64, sigma: f64) -> f64 {
    if !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let n = excesses.len() as f64;
    let mut acc = 0.0;
    if xi.abs() < XI_ZERO_TOL {
        // first-order expansion of (1 + 1/xi) ln(1 + xi z) about xi = 0
        for &x in excesses {
            let z = x / sigma;
            acc += z + xi * (z - 0.5 * z * z);
        }
    } else {
        let k = 1.0 + 1.0 / xi;
        for &x in excesses {
            let t = xi * x / sigma;
            if t <= -1.0 {
                return f64::NEG_INFINITY;
            }
            acc += k * t.ln_1p();
        }
    }
    -n * sigma.ln() - acc
}

/// Maximum-likelihood `(xi, sigma)` for non-negative excesses.
///
/// Works on the profile likelihood in `theta = xi / sigma`: for fixed
/// `theta` the shape estimate is `mean(ln(1 + theta x))` and the scale
/// follows as `xi / theta`. The search is a bounded grid over
/// `s = theta * max(x)` followed by golden-section refinement around the
/// best grid point, restricted to `xi` in [`XI_BOUNDS`] and
/// `sigma <= 10 * max excess`. Data are rescaled by their mean first, which
/// makes the estimate scale-equivariant.
pub fn fit_gpd_mle(excesses: &[f64]) -> Result<MleFit> {
    if excesses.len() < MIN_EXCEEDANCES {
        return Err(Error::TooFewExceedances {
            found: excesses.len(),
            required: MIN_EXCEEDANCES,
        });
    }
    if let Some(x) = excesses.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::invalid(format!(
            "excesses must be finite and non-negative, got {x}"
        )));
    }
    let n = excesses.len() as f64;
    let scale = excesses.iter().sum::<f64>() / n;
    if scale <= 0.0 {
        return Err(Error::Data("all excesses are zero".into()));
    }
    let y: Vec<f64> = excesses.iter().map(|x| x / scale).collect();
    let y_max = y.iter().copied().fold(0.0, f64::max);
    let sigma_max = SIGMA_MAX_FACTOR * y_max;

    let mut evals = 0usize;
    let mut profile = |s: f64| -> (f64, f64, f64) {
        evals += 1;
        profile_point(&y, s / y_max, sigma_max)
    };

    let mut grid: Vec<f64> = NEG_GRID.to_vec();
    grid.push(0.0);
    grid.extend((-12..=12).map(|k| 10f64.powf(k as f64 / 3.0)));
    let values: Vec<f64> = grid.iter().map(|&s| profile(s).2).collect();
    let (best, best_ll) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .expect("grid is non-empty");
    if !best_ll.is_finite() {
        return Err(Error::NonConvergence {
            message: "no admissible point on the shape grid".into(),
            best_point: vec![],
            best_value: best_ll,
        });
    }
    let lo = if best == 0 {
        -1.0 + 1e-12
    } else {
        grid[best - 1]
    };
    let hi = if best + 1 == grid.len() {
        grid[best] * 2.0
    } else {
        grid[best + 1]
    };
    let tol = 1e-11 * (hi - lo).abs().max(1e-6);
    let (s, neg_ll) = golden_section(|s| -profile(s).2, lo, hi, tol);
    let (s, ll) = if -neg_ll >= best_ll {
        (s, -neg_ll)
    } else {
        (grid[best], best_ll)
    };
    let (xi, sigma_y, _) = profile(s);
    if !ll.is_finite() {
        return Err(Error::NonConvergence {
            message: format!("profile likelihood search failed after {evals} evaluations"),
            best_point: vec![xi, sigma_y * scale],
            best_value: ll,
        });
    }
    let sigma = sigma_y * scale;
    Ok(MleFit {
        xi,
        sigma,
        loglik: gpd_log_likelihood(excesses, xi, sigma),
        evals,
    })
}

const NEG_GRID: [f64; 18] = [
    -0.999_999, -0.999_99, -0.999_9, -0.999, -0.99, -0.95, -0.9, -0.8, -0.7, -0.6, -0.5, -0.4,
    -0.3, -0.2, -0.1, -0.03, -0.01, -0.001,
];

/// Profile estimates `(xi, sigma, loglik)` at `theta`; loglik is `-inf` when
/// the point violates the search box or the support.
fn profile_point(y: &[f64], theta: f64, sigma_max: f64) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let mut sum_log = 0.0;
    for &v in y {
        let t = theta * v;
        if t <= -1.0 {
            return (f64::NAN, f64::NAN, f64::NEG_INFINITY);
        }
        sum_log += t.ln_1p();
    }
    let xi = sum_log / n;
    let sigma = if theta.abs() * sigma_max < 1e-12 {
        // theta -> 0: xi / theta -> mean(y) - theta mean(y^2) / 2
        let m1 = y.iter().sum::<f64>() / n;
        let m2 = y.iter().map(|v| v * v).sum::<f64>() / n;
        m1 - 0.5 * theta * m2
    } else {
        xi / theta
    };
    if !(XI_BOUNDS.0..=XI_BOUNDS.1).contains(&xi) || !(sigma > 0.0 && sigma <= sigma_max) {
        return (xi, sigma, f64::NEG_INFINITY);
    }
    (xi, sigma, gpd_log_likelihood(y, xi, sigma))
}

/// Losses strictly above `u`, returned as excesses `L - u`.
pub fn excesses_above(losses: &[f64], u: f64) -> Vec<f64> {
    losses.iter().filter(|&&l| l > u).map(|l| l - u).collect()
}

/// Fits the tail of a loss sample above loss threshold `u`.
pub fn fit_tail(losses: &[f64], u: f64) -> Result<TailFit> {
    let ex = excesses_above(losses, u);
    let fit = fit_gpd_mle(&ex)?;
    Ok(TailFit {
        params: GpdParams::new(fit.xi, fit.sigma, u)?,
        n: losses.len(),
        n_u: ex.len(),
        loglik: fit.loglik,
    })
}

/// Peaks-over-threshold VaR (a positive loss) at confidence `p`.
pub fn evt_var(fit: &TailFit, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("confidence {p} outside (0, 1)")));
    }
    if fit.n_u == 0 || fit.n == 0 {
        return Err(Error::TooFewExceedances {
            found: fit.n_u,
            required: 1,
        });
    }
    let GpdParams { xi, sigma, u } = fit.params;
    let ratio = fit.n as f64 / fit.n_u as f64 * (1.0 - p);
    let ln_ratio = ratio.ln();
    if xi.abs() < XI_ZERO_TOL {
        Ok(u - sigma * ln_ratio)
    } else {
        Ok(u + sigma / xi * (-xi * ln_ratio).exp_m1())
    }
}

/// Inverse-CDF draws of GPD excesses.
pub fn sample_gpd(params: &GpdParams, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = SeedTree::new(seed).child("gpd").rng();
    (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            let ln_tail = (-u).ln_1p();
            if params.xi.abs() < XI_ZERO_TOL {
                -params.sigma * ln_tail
            } else {
                params.sigma / params.xi * (-params.xi * ln_tail).exp_m1()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn params(xi: f64, sigma: f64) -> GpdParams {
        GpdParams::new(xi, sigma, 0.0).unwrap()
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(gpd_cdf(0.0, &params(0.3, 2.0)), 0.0);
        assert!((gpd_cdf(LN_2, &params(0.0, 1.0)) - 0.5).abs() < 1e-15);
        assert!((gpd_cdf(2.0, &params(0.5, 1.0)) - 0.75).abs() < 1e-15);
        // beyond the finite support for xi < 0
        assert_eq!(gpd_cdf(5.0, &params(-0.5, 1.0)), 1.0);
        assert_eq!(gpd_cdf(2.0, &params(-0.5, 1.0)), 1.0);
    }

    #[test]
    fn pdf_examples() {
        assert!((gpd_pdf(0.0, &params(0.0, 1.0)) - 1.0).abs() < 1e-15);
        assert_eq!(gpd_pdf(3.0, &params(-0.5, 1.0)), 0.0);
        assert_eq!(gpd_pdf(-1.0, &params(0.2, 1.0)), 0.0);
    }

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn pdf_integrates_to_one() {
        for &(xi, sigma) in &[(0.0, 1.0), (0.3, 1.5), (-0.2, 1.0), (-0.4, 0.5)] {
            let p = params(xi, sigma);
            let total = if xi < 0.0 {
                simpson(
                    |x| gpd_pdf(x, &p),
                    0.0,
                    p.support_end() * (1.0 - 1e-15),
                    200_000,
                )
            } else {
                // mass beyond the cut-off is added analytically
                let cut = 2_000.0 * sigma;
                simpson(|x| gpd_pdf(x, &p), 0.0, cut, 400_000) + (1.0 - gpd_cdf(cut, &p))
            };
            assert!((total - 1.0).abs() < 1e-6, "xi={xi}: {total}");
        }
    }

    #[test]
    fn pdf_matches_cdf_derivative() {
        for &(xi, sigma) in &[(0.0, 1.0), (0.5, 2.0), (-0.3, 1.0), (1e-10, 1.0)] {
            let p = params(xi, sigma);
            let h = 1e-5;
            for i in 1..40 {
                let x = i as f64 * 0.07;
                if x + h >= p.support_end() {
                    break;
                }
                let fd = (gpd_cdf(x + h, &p) - gpd_cdf(x - h, &p)) / (2.0 * h);
                assert!((fd - gpd_pdf(x, &p)).abs() < 1e-6, "xi={xi} x={x}");
            }
        }
    }

    #[test]
    fn cdf_is_monotone() {
        for &(xi, sigma) in &[(0.0, 1.0), (0.8, 0.3), (-0.45, 1.0)] {
            let p = params(xi, sigma);
            let mut prev = 0.0;
            for i in 0..500 {
                let c = gpd_cdf(i as f64 * 0.01, &p);
                assert!(c >= prev);
                prev = c;
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = params(0.2, 1.0);
        assert_eq!(sample_gpd(&p, 100, 5), sample_gpd(&p, 100, 5));
        assert_ne!(sample_gpd(&p, 100, 5), sample_gpd(&p, 100, 6));
    }

    #[test]
    fn exponential_sample_mean() {
        let x = sample_gpd(&params(0.0, 2.0), 10_000, 1);
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        // exponential: sd = sigma
        assert!((mean - 2.0).abs() < 3.0 * 2.0 / n.sqrt());
    }

    #[test]
    fn sample_quartile_matches_inverse_cdf() {
        // xi = 0.5: G(x) = 0.75 at x = 2 sigma
        let sigma = 1.3;
        let mut x = sample_gpd(&params(0.5, sigma), 10_000, 2);
        x.sort_by(f64::total_cmp);
        let q75 = crate::timeseries::quantile_sorted(&x, 0.75);
        assert!((q75 - 2.0 * sigma).abs() < 0.1 * sigma);
    }

    #[test]
    fn sample_kolmogorov_distance() {
        for &(xi, sigma) in &[(0.0, 1.0), (0.3, 1.0), (-0.2, 2.0)] {
            let p = params(xi, sigma);
            let mut x = sample_gpd(&p, 10_000, 9);
            x.sort_by(f64::total_cmp);
            let n = x.len() as f64;
            let d = x
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let c = gpd_cdf(*v, &p);
                    (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
                })
                .fold(0.0, f64::max);
            assert!(d < 0.02, "xi={xi}: D={d}");
        }
    }

    #[test]
    fn mle_recovers_heavy_tail() {
        let x = sample_gpd(&params(0.3, 1.0), 10_000, 3);
        let fit = fit_gpd_mle(&x).unwrap();
        assert!((fit.xi - 0.3).abs() < 0.05, "{fit:?}");
        assert!((fit.sigma - 1.0).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn mle_recovers_exponential() {
        let x = sample_gpd(&params(0.0, 2.0), 10_000, 4);
        let fit = fit_gpd_mle(&x).unwrap();
        assert!(fit.xi.abs() < 0.05, "{fit:?}");
        assert!((fit.sigma - 2.0).abs() < 0.1, "{fit:?}");
    }

    #[test]
    fn mle_is_scale_equivariant() {
        let x = sample_gpd(&params(0.25, 0.7), 2_000, 8);
        let scaled: Vec<f64> = x.iter().map(|v| v * 10.0).collect();
        let a = fit_gpd_mle(&x).unwrap();
        let b = fit_gpd_mle(&scaled).unwrap();
        assert!((a.xi - b.xi).abs() < 1e-6);
        assert!((b.sigma / (10.0 * a.sigma) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mle_is_a_local_maximum() {
        use rand::SeedableRng;
        let x = sample_gpd(&params(0.2, 1.0), 500, 12);
        let fit = fit_gpd_mle(&x).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let dxi: f64 = rng.random_range(-0.05..0.05);
            let ds: f64 = rng.random_range(-0.05..0.05);
            let ll = gpd_log_likelihood(&x, fit.xi + dxi, fit.sigma * (1.0 + ds));
            assert!(fit.loglik >= ll - 1e-9);
        }
    }

    #[test]
    fn too_few_exceedances() {
        let err = fit_gpd_mle(&[0.1; 9]).unwrap_err();
        assert!(matches!(
            err,
            Error::TooFewExceedances {
                found: 9,
                required: 10
            }
        ));
        assert!(fit_gpd_mle(&[0.1, -0.2, 0.3, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]).is_err());
    }

    #[test]
    fn var_at_degenerate_ratio_is_threshold() {
        let fit = TailFit {
            params: GpdParams::new(0.5, 1.0, 2.0).unwrap(),
            n: 200,
            n_u: 10,
            loglik: 0.0,
        };
        // (n/n_u)(1-p) = 20 * 0.05 = 1
        let v = evt_var(&fit, 0.95).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let zero = TailFit { n_u: 0, ..fit };
        assert!(evt_var(&zero, 0.95).is_err());
    }

    #[test]
    fn var_continuity_across_zero_shape() {
        for &(sigma, n, n_u) in &[(1.0, 1000, 50), (0.02, 100, 12), (3.0, 500, 200)] {
            let mk = |xi| TailFit {
                params: GpdParams::new(xi, sigma, 0.5).unwrap(),
                n,
                n_u,
                loglik: 0.0,
            };
            for &p in &[0.95, 0.99] {
                let a = evt_var(&mk(1e-8), p).unwrap();
                let b = evt_var(&mk(0.0), p).unwrap();
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn var_exceedance_probability_is_nominal() {
        for (seed, &(xi, sigma)) in [(0.2, 1.0), (0.0, 0.5), (-0.3, 2.0)].iter().enumerate() {
            let losses = sample_gpd(&params(xi, sigma), 2_000, seed as u64);
            let u = crate::timeseries::empirical_quantile(&losses, 0.8).unwrap();
            let fit = fit_tail(&losses, u).unwrap();
            for &p in &[0.9, 0.95, 0.99] {
                let var = evt_var(&fit, p).unwrap();
                let implied = fit.n_u as f64 / fit.n as f64 * (1.0 - gpd_cdf(var - u, &fit.params));
                assert!((implied - (1.0 - p)).abs() < 1e-9);
            }
            assert!(evt_var(&fit, 0.99).unwrap() > evt_var(&fit, 0.95).unwrap());
        }
    }
}
