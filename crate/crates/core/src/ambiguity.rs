//! Monthly ambiguity from intraday return histograms.
//!
//! Each day's intraday returns are binned on a fixed variable-width grid;
//! the monthly measure is
//!
//! ```text
//! mho2 = sum_i  Var_days[P_i] * E_days[P_i] / (w_i (1 - w_i))
//! ```
//!
//! where `P_i` is the share of a day's returns in bin `i`, `w_i` the bin
//! width as a return fraction, and mean and (population) variance run over
//! the days of the month.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::Datelike;

use crate::error::{Error, Result};
use crate::timeseries::{Date, IntradayPanel, MIN_INTRADAY_RETURNS};

/// Bin layout in basis points: (outer edge of the band, bin width), from the centre outwards.
const BANDS_BP: [(i32, i32); 5] = [(200, 10), (300, 20), (400, 25), (500, 50), (600, 100)];
/// Width assigned to the two open-ended bins beyond the last band.
const CATCH_ALL_BP: i32 = 100;

fn bp(v: i32) -> f64 {
    v as f64 / 10_000.0
}

/// Histogram bins: `edges` are the finite boundaries; bin 0 is `(-inf, edges[0])`,
/// bin `i` is `[edges[i-1], edges[i])` and the last bin is `[edges[last], inf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinScheme {
    edges: Vec<f64>,
    widths: Vec<f64>,
}

impl Default for BinScheme {
    fn default() -> Self {
        build_bins()
    }
}

impl BinScheme {
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn len(&self) -> usize {
        self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.widths.is_empty()
    }

    pub fn bin_of(&self, r: f64) -> usize {
        self.edges.partition_point(|&e| e <= r)
    }
}

/// The variable-width scheme: 0.1% bins on [-2%, 2%], widening to 0.2%,
/// 0.25%, 0.5% and 1% out to ±6%, plus an open 1%-wide bin on each side.
pub fn build_bins() -> BinScheme {
    let mut positive_bp = vec![0];
    let mut inner = 0;
    for &(outer, width) in &BANDS_BP {
        let mut e = inner;
        while e < outer {
            e += width;
            positive_bp.push(e);
        }
        inner = outer;
    }
    let mut edges_bp: Vec<i32> = positive_bp.iter().skip(1).rev().map(|e| -e).collect();
    edges_bp.extend(&positive_bp);
    let mut widths = vec![bp(CATCH_ALL_BP)];
    widths.extend(edges_bp.windows(2).map(|w| bp(w[1] - w[0])));
    widths.push(bp(CATCH_ALL_BP));
    BinScheme {
        edges: edges_bp.into_iter().map(bp).collect(),
        widths,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailyBinProbabilities {
    pub date: Date,
    pub probs: Vec<f64>,
}

pub fn daily_bin_probabilities(
    date: Date,
    returns: &[f64],
    scheme: &BinScheme,
) -> Result<DailyBinProbabilities> {
    if returns.len() < MIN_INTRADAY_RETURNS {
        return Err(Error::InsufficientData {
            what: "daily intraday histogram",
            needed: MIN_INTRADAY_RETURNS,
            got: returns.len(),
        });
    }
    let mut counts = vec![0usize; scheme.len()];
    for &r in returns {
        counts[scheme.bin_of(r)] += 1;
    }
    let total = returns.len() as f64;
    Ok(DailyBinProbabilities {
        date,
        probs: counts.into_iter().map(|c| c as f64 / total).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn of(date: Date) -> Self {
        YearMonth {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn previous(&self) -> Self {
        if self.month == 1 {
            YearMonth {
                year: self.year - 1,
                month: 12,
            }
        } else {
            YearMonth {
                year: self.year,
                month: self.month - 1,
            }
        }
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("month `{s}` is not YYYY-MM"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(YearMonth { year, month })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbiguityValue {
    pub month: YearMonth,
    pub mho2: f64,
    pub days_used: usize,
}

/// Per-bin terms `Var[P_i] E[P_i] / (w_i (1 - w_i))` across the given days.
pub fn bin_contributions(days: &[DailyBinProbabilities], scheme: &BinScheme) -> Result<Vec<f64>> {
    if days.len() < 2 {
        return Err(Error::InsufficientData {
            what: "monthly ambiguity",
            needed: 2,
            got: days.len(),
        });
    }
    if let Some(d) = days.iter().find(|d| d.probs.len() != scheme.len()) {
        return Err(Error::invalid(format!(
            "{} has {} bins, scheme has {}",
            d.date,
            d.probs.len(),
            scheme.len()
        )));
    }
    let n = days.len() as f64;
    Ok(scheme
        .widths()
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let mean = days.iter().map(|d| d.probs[i]).sum::<f64>() / n;
            // shifted by the first day so identical days give exactly zero
            let p0 = days[0].probs[i];
            let shift = days.iter().map(|d| d.probs[i] - p0).sum::<f64>() / n;
            let var = days
                .iter()
                .map(|d| (d.probs[i] - p0 - shift).powi(2))
                .sum::<f64>()
                / n;
            var * mean / (w * (1.0 - w))
        })
        .collect())
}

pub fn monthly_ambiguity(
    month: YearMonth,
    days: &[DailyBinProbabilities],
    scheme: &BinScheme,
) -> Result<AmbiguityValue> {
    let terms = bin_contributions(days, scheme)?;
    Ok(AmbiguityValue {
        month,
        mho2: terms.iter().sum(),
        days_used: days.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AmbiguitySeries {
    pub values: Vec<AmbiguityValue>,
    /// Months without enough valid days.
    pub gaps: Vec<(YearMonth, String)>,
}

impl AmbiguitySeries {
    pub fn get(&self, month: YearMonth) -> Option<&AmbiguityValue> {
        self.values
            .binary_search_by_key(&month, |v| v.month)
            .ok()
            .map(|i| &self.values[i])
    }

    /// Ambiguity known before `date`'s month begins: the latest month strictly
    /// before it, carried forward over gap months.
    pub fn prior_month_value(&self, date: Date) -> Option<f64> {
        let current = YearMonth::of(date);
        let idx = self.values.partition_point(|v| v.month < current);
        idx.checked_sub(1).map(|i| self.values[i].mho2)
    }
}

/// One value per calendar month of the panel; days with too few bars are skipped.
pub fn ambiguity_series(panel: &IntradayPanel, scheme: &BinScheme) -> AmbiguitySeries {
    let mut months: BTreeMap<YearMonth, Vec<DailyBinProbabilities>> = BTreeMap::new();
    for day in panel.days() {
        let entry = months.entry(YearMonth::of(day.date)).or_default();
        if let Ok(p) = daily_bin_probabilities(day.date, &day.returns, scheme) {
            entry.push(p);
        }
    }
    let mut out = AmbiguitySeries::default();
    for (month, days) in months {
        match monthly_ambiguity(month, &days, scheme) {
            Ok(v) => out.values.push(v),
            Err(e) => out.gaps.push((month, e.to_string())),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{business_days, IntradayDay};
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};

    fn date(y: i32, m: u32, d: u32) -> Date {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn bin_layout() {
        let s = build_bins();
        let inner = s
            .edges()
            .windows(2)
            .filter(|w| w[0] >= -0.02 - 1e-12 && w[1] <= 0.02 + 1e-12)
            .count();
        assert_eq!(inner, 40);
        let band: Vec<f64> = s
            .edges()
            .windows(2)
            .filter(|w| w[0] >= 0.02 - 1e-12 && w[1] <= 0.03 + 1e-12)
            .map(|w| w[1] - w[0])
            .collect();
        assert_eq!(band.len(), 5);
        assert!(band.iter().all(|w| (w - 0.002).abs() < 1e-12));
        let mut neg: Vec<f64> = s.edges().iter().map(|e| -e).collect();
        neg.reverse();
        assert_eq!(neg, s.edges());
        assert_eq!(s.len(), 66);
        assert_eq!(s.widths()[0], 0.01);
        assert_eq!(s.widths()[33], 0.001);
        assert!(s.widths().iter().all(|w| *w > 0.0 && *w < 1.0));
        assert!(s.edges().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn edge_values_go_right() {
        let s = build_bins();
        let i = s.bin_of(0.0);
        assert_eq!(s.edges()[i - 1], 0.0);
        assert_eq!(s.bin_of(0.06), s.len() - 1);
        assert_eq!(s.bin_of(-0.0601), 0);
        assert_eq!(s.bin_of(-0.06), 1);
        let day: Vec<f64> = s.edges().to_vec();
        let p = daily_bin_probabilities(date(2020, 1, 2), &day, &s).unwrap();
        assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p.probs[0], 0.0);
    }

    #[test]
    fn single_bin_day() {
        let s = build_bins();
        let p = daily_bin_probabilities(date(2020, 1, 2), &[0.0005; 12], &s).unwrap();
        let i = s.bin_of(0.0005);
        assert_eq!(p.probs[i], 1.0);
        assert_eq!(p.probs.iter().filter(|v| **v == 0.0).count(), s.len() - 1);
        assert!(daily_bin_probabilities(date(2020, 1, 2), &[0.0; 9], &s).is_err());
    }

    #[test]
    fn uniform_returns_fill_inner_bins_evenly() {
        let s = build_bins();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = 400_000;
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-0.02..0.02)).collect();
        let p = daily_bin_probabilities(date(2020, 1, 2), &r, &s).unwrap();
        // multinomial sd of each share: sqrt(p(1-p)/n)
        let sd = (1.0f64 / 40.0 * (39.0 / 40.0) / n as f64).sqrt();
        for (i, w) in s.widths().iter().enumerate() {
            if (*w - 0.001).abs() < 1e-12 {
                assert!((p.probs[i] - 1.0 / 40.0).abs() < 5.0 * sd, "bin {i}");
            }
        }
    }

    #[test]
    fn flipping_bin_hand_value() {
        let s = build_bins();
        let a = s.bin_of(0.0005);
        let b = s.bin_of(-0.0005);
        let mut p1 = vec![0.0; s.len()];
        let mut p2 = vec![0.0; s.len()];
        p1[a] = 1.0;
        p2[b] = 1.0;
        let days = vec![
            DailyBinProbabilities {
                date: date(2020, 1, 2),
                probs: p1,
            },
            DailyBinProbabilities {
                date: date(2020, 1, 3),
                probs: p2,
            },
        ];
        let terms = bin_contributions(&days, &s).unwrap();
        let hand = 0.5 * 0.25 / (0.001 * 0.999);
        assert_eq!(terms[a], hand);
        assert_eq!(terms[b], hand);
        let m = monthly_ambiguity(
            YearMonth {
                year: 2020,
                month: 1,
            },
            &days,
            &s,
        )
        .unwrap();
        assert_eq!(m.mho2, 2.0 * hand);
        assert!(monthly_ambiguity(m.month, &days[..1], &s).is_err());
    }

    fn random_day(rng: &mut impl Rng, sd: f64, n: usize) -> Vec<f64> {
        use rand_distr::{Distribution, Normal};
        let d = Normal::new(0.0, sd).unwrap();
        (0..n).map(|_| d.sample(rng)).collect()
    }

    #[test]
    fn identical_days_and_permutations() {
        let s = build_bins();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let day = random_day(&mut rng, 0.003, 78);
        let month: Vec<_> = business_days(date(2021, 3, 1), 21)
            .into_iter()
            .map(|d| daily_bin_probabilities(d, &day, &s).unwrap())
            .collect();
        let ym = YearMonth {
            year: 2021,
            month: 3,
        };
        assert_eq!(monthly_ambiguity(ym, &month, &s).unwrap().mho2, 0.0);

        let varied: Vec<_> = business_days(date(2021, 3, 1), 21)
            .into_iter()
            .map(|d| daily_bin_probabilities(d, &random_day(&mut rng, 0.003, 78), &s).unwrap())
            .collect();
        let a = monthly_ambiguity(ym, &varied, &s).unwrap().mho2;
        let mut shuffled = varied.clone();
        shuffled.reverse();
        shuffled.swap(0, 7);
        let b = monthly_ambiguity(ym, &shuffled, &s).unwrap().mho2;
        assert!(a > 0.0);
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn per_bin_terms_bounded() {
        let s = build_bins();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let days: Vec<_> = business_days(date(2021, 3, 1), 20)
            .into_iter()
            .map(|d| {
                let sd = rng.random_range(0.001..0.02);
                daily_bin_probabilities(d, &random_day(&mut rng, sd, 50), &s).unwrap()
            })
            .collect();
        let terms = bin_contributions(&days, &s).unwrap();
        let n = days.len() as f64;
        for (i, t) in terms.iter().enumerate() {
            let w = s.widths()[i];
            let mean = days.iter().map(|d| d.probs[i]).sum::<f64>() / n;
            assert!(*t >= 0.0);
            assert!(*t <= mean * mean * (1.0 - mean) / (w * (1.0 - w)) + 1e-12);
        }
    }

    #[test]
    fn series_groups_by_calendar_month() {
        let s = build_bins();
        let day: Vec<f64> = (0..40).map(|i| (i as f64 - 20.0) * 1e-4).collect();
        let days: Vec<IntradayDay> = business_days(date(2021, 1, 4), 62)
            .into_iter()
            .map(|d| IntradayDay {
                date: d,
                returns: day.clone(),
            })
            .collect();
        let panel = IntradayPanel::new(days).unwrap();
        let series = ambiguity_series(&panel, &s);
        assert_eq!(series.values.len(), 3);
        assert!(series.values.iter().all(|v| v.mho2 == 0.0));
        assert_eq!(series.values[0].month.to_string(), "2021-01");
        assert_eq!(series.prior_month_value(date(2021, 1, 20)), None);
        assert_eq!(series.prior_month_value(date(2021, 2, 1)), Some(0.0));
    }

    #[test]
    fn dispersion_across_days_not_within() {
        let s = build_bins();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let base = random_day(&mut rng, 0.002, 78);
        let wide: Vec<f64> = base.iter().map(|r| r * 2.0).collect();
        let ym = YearMonth {
            year: 2021,
            month: 5,
        };
        let mk = |day: &Vec<f64>| -> Vec<DailyBinProbabilities> {
            business_days(date(2021, 5, 3), 21)
                .into_iter()
                .map(|d| daily_bin_probabilities(d, day, &s).unwrap())
                .collect()
        };
        // wider intraday dispersion, same every day: still zero
        assert_eq!(monthly_ambiguity(ym, &mk(&base), &s).unwrap().mho2, 0.0);
        assert_eq!(monthly_ambiguity(ym, &mk(&wide), &s).unwrap().mho2, 0.0);
    }

    #[test]
    fn year_month_round_trip() {
        let ym: YearMonth = "2019-12".parse().unwrap();
        assert_eq!(ym.previous().previous().to_string(), "2019-10");
        assert_eq!(
            YearMonth {
                year: 2020,
                month: 1
            }
            .previous(),
            ym
        );
        assert!("2019-13".parse::<YearMonth>().is_err());
    }
}
