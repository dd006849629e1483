//! VaR backtests: Kupiec unconditional coverage, Christoffersen conditional
//! coverage, and the Diebold–Mariano sign test on squared forecast errors.

use crate::benchmarks::VarSeries;
use crate::error::{Error, Result};
use crate::special::{beta_reg, chi2_sf, normal_sf};
use crate::timeseries::{Date, ReturnSeries};

pub const SIGNIFICANCE: f64 = 0.05;
/// One-sided 5% normal critical value for the DM sign statistic.
pub const DM_CRITICAL_VALUE: f64 = 1.64;
pub const DM_MIN_LARGE_SAMPLE: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NullDistribution {
    ChiSquared(u32),
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub null: NullDistribution,
    pub reject_at_5pct: bool,
}

impl TestResult {
    fn chi2(statistic: f64, dof: u32) -> Self {
        // rounding can leave a log-likelihood ratio a hair below zero
        let statistic = statistic.max(0.0);
        let p_value = chi2_sf(statistic, dof as f64).clamp(0.0, 1.0);
        TestResult {
            statistic,
            p_value,
            null: NullDistribution::ChiSquared(dof),
            reject_at_5pct: p_value < SIGNIFICANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViolationSeries {
    pub dates: Vec<Date>,
    pub violated: Vec<bool>,
    pub n00: usize,
    pub n01: usize,
    pub n10: usize,
    pub n11: usize,
}

impl ViolationSeries {
    pub fn from_flags(dates: Vec<Date>, violated: Vec<bool>) -> Result<Self> {
        if dates.len() != violated.len() {
            return Err(Error::Misaligned(format!(
                "{} dates for {} violation flags",
                dates.len(),
                violated.len()
            )));
        }
        let mut n = [[0usize; 2]; 2];
        for w in violated.windows(2) {
            n[w[0] as usize][w[1] as usize] += 1;
        }
        Ok(ViolationSeries {
            dates,
            violated,
            n00: n[0][0],
            n01: n[0][1],
            n10: n[1][0],
            n11: n[1][1],
        })
    }

    pub fn len(&self) -> usize {
        self.violated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.violated.is_empty()
    }

    pub fn count(&self) -> usize {
        self.violated.iter().filter(|v| **v).count()
    }

    pub fn ratio(&self) -> f64 {
        self.count() as f64 / self.len() as f64
    }
}

/// Flags `r_t < -var_loss_t` on every VaR date; each date must exist in `returns`.
pub fn violations(returns: &ReturnSeries, var: &VarSeries) -> Result<ViolationSeries> {
    let flags = var
        .iter()
        .map(|(d, v)| {
            let i = returns
                .position(d)
                .ok_or_else(|| Error::Misaligned(format!("no return on VaR date {d}")))?;
            Ok(returns.value(i) < -v)
        })
        .collect::<Result<Vec<bool>>>()?;
    ViolationSeries::from_flags(var.dates.clone(), flags)
}

/// `a ln b` with the `0 ln 0 = 0` convention.
fn xlogy(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * b.ln()
    }
}

/// Binomial log likelihood of `x` hits in `n` trials at rate `pi`.
fn bernoulli_ll(x: f64, n: f64, pi: f64) -> f64 {
    xlogy(n - x, 1.0 - pi) + xlogy(x, pi)
}

/// Kupiec likelihood-ratio test of `x` violations in `t` days against `rate`.
pub fn kupiec_test(x: usize, t: usize, rate: f64) -> Result<TestResult> {
    if x > t || t == 0 {
        return Err(Error::invalid(format!("{x} violations in {t} days")));
    }
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::invalid(format!(
            "violation rate {rate} outside (0, 1)"
        )));
    }
    let (xf, tf) = (x as f64, t as f64);
    let lr = -2.0 * bernoulli_ll(xf, tf, rate) + 2.0 * bernoulli_ll(xf, tf, xf / tf);
    Ok(TestResult::chi2(lr, 1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChristoffersenTest {
    pub unconditional: TestResult,
    pub independence: TestResult,
    /// `LR_cc = LR_uc + LR_ind` against chi-squared(2).
    pub conditional: TestResult,
    pub pi0: f64,
    pub pi1: f64,
}

pub fn christoffersen_test(v: &ViolationSeries, rate: f64) -> Result<ChristoffersenTest> {
    if v.len() < 2 {
        return Err(Error::InsufficientData {
            what: "conditional coverage test",
            needed: 2,
            got: v.len(),
        });
    }
    let uc = kupiec_test(v.count(), v.len(), rate)?;
    let (n00, n01, n10, n11) = (v.n00 as f64, v.n01 as f64, v.n10 as f64, v.n11 as f64);
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let pi0 = ratio(n01, n00 + n01);
    let pi1 = ratio(n11, n10 + n11);
    let pi = ratio(n01 + n11, n00 + n01 + n10 + n11);
    let lr_ind = -2.0 * bernoulli_ll(n01 + n11, n00 + n01 + n10 + n11, pi)
        + 2.0 * (bernoulli_ll(n01, n00 + n01, pi0) + bernoulli_ll(n11, n10 + n11, pi1));
    let independence = TestResult::chi2(lr_ind, 1);
    Ok(ChristoffersenTest {
        unconditional: uc,
        independence,
        conditional: TestResult::chi2(uc.statistic + independence.statistic, 2),
        pi0,
        pi1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmResult {
    /// Number of strictly positive loss differentials.
    pub s2: usize,
    pub n: usize,
    /// `(S2 - n/2) / sqrt(n/4)`.
    pub s2a: f64,
    /// Two-sided normal p-value of `s2a`.
    pub p_value: f64,
    /// Two-sided exact binomial p-value of `s2`.
    pub p_value_exact: f64,
    pub reject_at_5pct: bool,
}

impl DmResult {
    /// One-sided reading: model `a` has significantly smaller squared errors.
    pub fn a_better(&self) -> bool {
        self.s2a < -DM_CRITICAL_VALUE
    }
}

/// `P(X <= k)` for `X ~ Binomial(n, 1/2)`.
fn binom_half_cdf(k: usize, n: usize) -> f64 {
    if k >= n {
        1.0
    } else {
        beta_reg((n - k) as f64, (k + 1) as f64, 0.5)
    }
}

/// Sign test on `d_t = e_a,t^2 - e_b,t^2`; ties count as non-positive.
pub fn diebold_mariano(e_a: &[f64], e_b: &[f64]) -> Result<DmResult> {
    if e_a.len() != e_b.len() {
        return Err(Error::Misaligned(format!(
            "error series of lengths {} and {}",
            e_a.len(),
            e_b.len()
        )));
    }
    let n = e_a.len();
    if n == 0 {
        return Err(Error::invalid("empty error series"));
    }
    if n < DM_MIN_LARGE_SAMPLE {
        log::warn!("sign test on {n} days; prefer the exact binomial p-value");
    }
    let s2 = e_a
        .iter()
        .zip(e_b)
        .filter(|(&a, &b)| a * a - b * b > 0.0)
        .count();
    let nf = n as f64;
    let s2a = (s2 as f64 - 0.5 * nf) / (0.25 * nf).sqrt();
    let p_value = (2.0 * normal_sf(s2a.abs())).min(1.0);
    let lower = binom_half_cdf(s2, n);
    let upper = if s2 == 0 {
        1.0
    } else {
        1.0 - binom_half_cdf(s2 - 1, n)
    };
    let p_value_exact = (2.0 * lower.min(upper)).min(1.0);
    Ok(DmResult {
        s2,
        n,
        s2a,
        p_value,
        p_value_exact,
        reject_at_5pct: p_value < SIGNIFICANCE,
    })
}

/// Forecast errors `e_d = var_return_d - r_d`: the VaR dated `d` is built from
/// returns up to `d-1`, so `r_d` is its next-day return.
pub fn forecast_errors(var: &VarSeries, returns: &ReturnSeries) -> Result<Vec<f64>> {
    var.iter()
        .map(|(d, v)| {
            let i = returns
                .position(d)
                .ok_or_else(|| Error::Misaligned(format!("no return on VaR date {d}")))?;
            Ok(-v - returns.value(i))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub model: String,
    pub days: usize,
    pub violations: usize,
    pub ratio: f64,
    pub kupiec: TestResult,
    pub christoffersen: ChristoffersenTest,
}

pub fn validate_model(
    model: &str,
    returns: &ReturnSeries,
    var: &VarSeries,
    p: f64,
) -> Result<ValidationRow> {
    let v = violations(returns, var)?;
    let rate = 1.0 - p;
    Ok(ValidationRow {
        model: model.to_string(),
        days: v.len(),
        violations: v.count(),
        ratio: v.ratio(),
        kupiec: kupiec_test(v.count(), v.len(), rate)?,
        christoffersen: christoffersen_test(&v, rate)?,
    })
}

/// Pairwise `S2a` over the dates every pair has in common. The diagonal is the
/// self-comparison value `-sqrt(T)` (all differentials are ties).
pub fn dm_matrix(
    models: &[(String, VarSeries)],
    returns: &ReturnSeries,
) -> Result<Vec<Vec<DmResult>>> {
    let errors: Vec<Vec<(Date, f64)>> = models
        .iter()
        .map(|(_, var)| {
            let e = forecast_errors(var, returns)?;
            Ok(var.dates.iter().copied().zip(e).collect())
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(models.len());
    for a in &errors {
        let mut row = Vec::with_capacity(models.len());
        for b in &errors {
            let (ea, eb) = align(a, b);
            row.push(diebold_mariano(&ea, &eb)?);
        }
        out.push(row);
    }
    Ok(out)
}

fn align(a: &[(Date, f64)], b: &[(Date, f64)]) -> (Vec<f64>, Vec<f64>) {
    let (mut i, mut j) = (0, 0);
    let (mut ea, mut eb) = (Vec::new(), Vec::new());
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                ea.push(a[i].1);
                eb.push(b[j].1);
                i += 1;
                j += 1;
            }
        }
    }
    (ea, eb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gamma_q;
    use crate::timeseries::{business_days, DatedSeries};
    use chrono::NaiveDate;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn start() -> Date {
        NaiveDate::from_ymd_opt(2012, 3, 1).unwrap()
    }

    fn flags(v: Vec<bool>) -> ViolationSeries {
        ViolationSeries::from_flags(business_days(start(), v.len()), v).unwrap()
    }

    #[test]
    fn kupiec_reference_values() {
        let at_null = kupiec_test(5, 100, 0.05).unwrap();
        assert!(at_null.statistic.abs() < 1e-12);
        assert!((at_null.p_value - 1.0).abs() < 1e-12);
        let zero = kupiec_test(0, 100, 0.05).unwrap();
        assert!((zero.statistic - (-200.0 * 0.95f64.ln())).abs() < 1e-12);
        assert!((zero.statistic - 10.259).abs() < 1e-3);
        assert!(zero.reject_at_5pct);
        let all = kupiec_test(10, 10, 0.05).unwrap();
        assert!((all.statistic + 20.0 * 0.05f64.ln()).abs() < 1e-12);
        assert!(kupiec_test(11, 10, 0.05).is_err());
    }

    #[test]
    fn chi2_p_values_match_incomplete_gamma() {
        for i in 0..50 {
            let x = 0.1 + i as f64 * 0.4;
            let r = TestResult::chi2(x, 1);
            assert!((r.p_value - gamma_q(0.5, x / 2.0)).abs() < 1e-6);
            assert!((TestResult::chi2(x, 2).p_value - (-x / 2.0).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn violation_counting() {
        let returns = DatedSeries::from_values(start(), vec![-0.01, 0.02, -0.03, 0.0]).unwrap();
        let inf = VarSeries {
            dates: returns.dates().to_vec(),
            var_loss: vec![f64::INFINITY; 4],
        };
        assert_eq!(violations(&returns, &inf).unwrap().count(), 0);
        let tight = VarSeries {
            dates: returns.dates().to_vec(),
            var_loss: returns.values().iter().map(|r| -r - 1e-9).collect(),
        };
        assert_eq!(violations(&returns, &tight).unwrap().count(), 4);
        let wrong = VarSeries {
            dates: vec![NaiveDate::from_ymd_opt(1999, 1, 1).unwrap()],
            var_loss: vec![0.01],
        };
        assert!(matches!(
            violations(&returns, &wrong),
            Err(Error::Misaligned(_))
        ));
    }

    #[test]
    fn alternating_transitions() {
        let v = flags((0..101).map(|i| i % 2 == 1).collect());
        assert_eq!((v.n00, v.n11), (0, 0));
        assert_eq!(v.n01, 50);
        assert_eq!(v.n10, 50);
        assert_eq!(v.n00 + v.n01 + v.n10 + v.n11, v.len() - 1);
    }

    #[test]
    fn christoffersen_collapses_to_kupiec_when_independent() {
        // pi0 = pi1 = 1/2 by construction: 0 0 1 1 0 0 1 1 ... plus closing 0
        let pattern: Vec<bool> = (0..41).map(|i| (i / 2) % 2 == 1).collect();
        let v = flags(pattern);
        let c = christoffersen_test(&v, 0.05).unwrap();
        assert!((c.pi0 - c.pi1).abs() < 1e-15, "{} {}", c.pi0, c.pi1);
        assert!(c.independence.statistic.abs() < 1e-12);
        assert!((c.conditional.statistic - c.unconditional.statistic).abs() < 1e-12);
    }

    #[test]
    fn clustered_violations_reject_independence() {
        let mut pattern = vec![false; 200];
        pattern[100..110].iter_mut().for_each(|v| *v = true);
        let c = christoffersen_test(&flags(pattern), 0.05).unwrap();
        assert!(c.independence.statistic > 20.0);
        assert!(c.independence.reject_at_5pct && c.conditional.reject_at_5pct);
    }

    #[test]
    fn dm_reference_values() {
        let e = vec![0.01; 100];
        let same = diebold_mariano(&e, &e).unwrap();
        assert_eq!(same.s2, 0);
        assert!((same.s2a + 10.0).abs() < 1e-12);
        let a: Vec<f64> = (0..100)
            .map(|i| if i % 2 == 0 { 0.02 } else { 0.0 })
            .collect();
        let half = diebold_mariano(&a, &e).unwrap();
        assert_eq!(half.s2, 50);
        assert_eq!(half.s2a, 0.0);
        assert!((half.p_value - 1.0).abs() < 1e-12);
        assert!((half.p_value_exact - 1.0).abs() < 1e-12);
        assert!(diebold_mariano(&a, &e[..99]).is_err());
    }

    #[test]
    fn exact_binomial_small_case() {
        // n = 10, s2 = 1: two-sided 2 * (1 + 10) / 1024
        let a = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let b = [0.5; 10];
        let r = diebold_mariano(&a, &b).unwrap();
        assert_eq!(r.s2, 1);
        assert!((r.p_value_exact - 22.0 / 1024.0).abs() < 1e-12);
    }

    #[test]
    fn forecast_errors_shift_linearly() {
        let returns = DatedSeries::from_values(start(), vec![-0.01, 0.02, -0.03]).unwrap();
        let perfect = VarSeries {
            dates: returns.dates().to_vec(),
            var_loss: returns.values().iter().map(|r| -r).collect(),
        };
        assert!(forecast_errors(&perfect, &returns)
            .unwrap()
            .iter()
            .all(|e| *e == 0.0));
        let shifted = VarSeries {
            dates: perfect.dates.clone(),
            var_loss: perfect.var_loss.iter().map(|v| v - 0.5).collect(),
        };
        for e in forecast_errors(&shifted, &returns).unwrap() {
            assert!((e - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn dm_matrix_structure() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let returns = DatedSeries::from_values(
            start(),
            (0..80).map(|_| rng.random_range(-0.02..0.02)).collect(),
        )
        .unwrap();
        let models: Vec<(String, VarSeries)> = (0..3)
            .map(|k| {
                let var = VarSeries {
                    dates: returns.dates()[k * 5..].to_vec(),
                    var_loss: (k * 5..80).map(|_| rng.random_range(0.0..0.04)).collect(),
                };
                (format!("m{k}"), var)
            })
            .collect();
        let m = dm_matrix(&models, &returns).unwrap();
        for (i, row) in m.iter().enumerate() {
            assert!((row[i].s2a + (row[i].n as f64).sqrt()).abs() < 1e-12);
            for (j, r) in row.iter().enumerate() {
                if i != j {
                    let other = &m[j][i];
                    assert_eq!(r.n, other.n);
                    // no ties with continuous draws: the counts are complementary
                    assert_eq!(r.s2 + other.s2, r.n);
                    assert!((r.s2a + other.s2a).abs() < 1e-12);
                }
            }
        }
        assert_eq!(m[0][2].n, 70);
    }

    proptest! {
        #[test]
        fn statistics_non_negative(bits in proptest::collection::vec(any::<bool>(), 2..300), rate in 0.01f64..0.5) {
            let v = flags(bits);
            let c = christoffersen_test(&v, rate).unwrap();
            prop_assert!(c.unconditional.statistic >= 0.0);
            prop_assert!(c.independence.statistic >= 0.0);
            prop_assert!(c.conditional.statistic >= c.unconditional.statistic);
            prop_assert!((0.0..=1.0).contains(&c.conditional.p_value));
        }

        #[test]
        fn kupiec_depends_only_on_counts(mut bits in proptest::collection::vec(any::<bool>(), 1..200), seed in 0u64..100) {
            let a = flags(bits.clone());
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for i in (1..bits.len()).rev() {
                bits.swap(i, rng.random_range(0..=i));
            }
            let b = flags(bits);
            let ka = kupiec_test(a.count(), a.len(), 0.05).unwrap();
            let kb = kupiec_test(b.count(), b.len(), 0.05).unwrap();
            prop_assert_eq!(ka, kb);
        }

        #[test]
        fn swapping_arguments_mirrors_sign_count(xs in proptest::collection::vec(-1.0f64..1.0, 2..100), ys in proptest::collection::vec(-1.0f64..1.0, 2..100)) {
            let n = xs.len().min(ys.len());
            let ab = diebold_mariano(&xs[..n], &ys[..n]).unwrap();
            let ba = diebold_mariano(&ys[..n], &xs[..n]).unwrap();
            let neg = (0..n).filter(|&i| xs[i] * xs[i] - ys[i] * ys[i] < 0.0).count();
            prop_assert_eq!(ba.s2, neg);
            prop_assert!(ab.s2 + ba.s2 <= n);
        }
    }
}
