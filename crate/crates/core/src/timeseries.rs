//! Price and return series, rolling statistics and window bookkeeping.
//!
//! Windows count observations (trading days), never calendar days.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};

use crate::error::{Error, Result};

pub type Date = NaiveDate;

/// Days with fewer intraday returns than this are left out of ambiguity estimation.
pub const MIN_INTRADAY_RETURNS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReturnKind {
    #[default]
    Log,
    Simple,
}

impl FromStr for ReturnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "log" => Ok(ReturnKind::Log),
            "simple" => Ok(ReturnKind::Simple),
            other => Err(Error::invalid(format!(
                "unknown return kind `{other}` (log|simple)"
            ))),
        }
    }
}

impl fmt::Display for ReturnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReturnKind::Log => f.write_str("log"),
            ReturnKind::Simple => f.write_str("simple"),
        }
    }
}

fn check_increasing(dates: &[Date]) -> Result<()> {
    if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::Data(format!(
            "dates must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Daily closing prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    dates: Vec<Date>,
    closes: Vec<f64>,
}

impl PriceSeries {
    /// Rows may arrive unsorted; they are sorted by date and must then be strictly increasing.
    pub fn new(mut observations: Vec<(Date, f64)>) -> Result<Self> {
        observations.sort_by_key(|(d, _)| *d);
        let (dates, closes): (Vec<_>, Vec<_>) = observations.into_iter().unzip();
        check_increasing(&dates)?;
        if let Some((d, c)) = dates
            .iter()
            .zip(&closes)
            .find(|(_, c)| !(c.is_finite() && **c > 0.0))
        {
            return Err(Error::Data(format!("non-positive price {c} on {d}")));
        }
        Ok(Self { dates, closes })
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }

    pub fn dates(&self) -> &[Date] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }
}

/// A finite-valued series indexed by strictly increasing dates.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedSeries {
    dates: Vec<Date>,
    values: Vec<f64>,
}

/// Daily (or intraday) returns as dimensionless fractions.
pub type ReturnSeries = DatedSeries;

impl DatedSeries {
    pub fn new(dates: Vec<Date>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::Misaligned(format!(
                "{} dates for {} values",
                dates.len(),
                values.len()
            )));
        }
        check_increasing(&dates)?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value on {}", dates[i])));
        }
        Ok(Self { dates, values })
    }

    /// Values on consecutive business days starting at `start`; handy for synthetic data.
    pub fn from_values(start: Date, values: Vec<f64>) -> Result<Self> {
        let dates = business_days(start, values.len());
        Self::new(dates, values)
    }

    pub fn empty() -> Self {
        Self {
            dates: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dates(&self) -> &[Date] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn date(&self, i: usize) -> Date {
        self.dates[i]
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn position(&self, date: Date) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Date, f64)> + '_ {
        self.dates.iter().copied().zip(self.values.iter().copied())
    }

    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        slice_window(self, start, len)
    }
}

/// `count` consecutive Monday–Friday dates from `start` (inclusive if it is a weekday).
pub fn business_days(start: Date, count: usize) -> Vec<Date> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    out
}

/// Intraday returns for one trading day.
#[derive(Debug, Clone, PartialEq)]
pub struct IntradayDay {
    pub date: Date,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntradayPanel {
    days: Vec<IntradayDay>,
}

impl IntradayPanel {
    /// Non-finite bars are dropped; days left empty are removed.
    pub fn new(days: Vec<IntradayDay>) -> Result<Self> {
        let days: Vec<IntradayDay> = days
            .into_iter()
            .map(|d| IntradayDay {
                date: d.date,
                returns: d.returns.into_iter().filter(|r| r.is_finite()).collect(),
            })
            .filter(|d| !d.returns.is_empty())
            .collect();
        let dates: Vec<Date> = days.iter().map(|d| d.date).collect();
        check_increasing(&dates)?;
        Ok(Self { days })
    }

    /// Builds within-day returns from intraday prices; the overnight move is not a bar.
    pub fn from_prices(days: Vec<(Date, Vec<f64>)>, kind: ReturnKind) -> Result<Self> {
        let mut out = Vec::with_capacity(days.len());
        for (date, prices) in days {
            let prices: Vec<f64> = prices.into_iter().filter(|p| p.is_finite()).collect();
            if let Some(p) = prices.iter().find(|p| **p <= 0.0) {
                return Err(Error::Data(format!(
                    "non-positive intraday price {p} on {date}"
                )));
            }
            let returns = prices
                .windows(2)
                .map(|w| match kind {
                    ReturnKind::Log => (w[1] / w[0]).ln(),
                    ReturnKind::Simple => (w[1] - w[0]) / w[0],
                })
                .collect();
            out.push(IntradayDay { date, returns });
        }
        Self::new(out)
    }

    pub fn days(&self) -> &[IntradayDay] {
        &self.days
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// Days strictly before `date`.
    pub fn before(&self, date: Date) -> IntradayPanel {
        IntradayPanel {
            days: self
                .days
                .iter()
                .filter(|d| d.date < date)
                .cloned()
                .collect(),
        }
    }
}

/// Rolling-window layout of the forecasting protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub train_len: usize,
    pub evt_len: usize,
    pub hist_len: usize,
    pub forecast_len: usize,
    pub lag: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            train_len: 600,
            evt_len: 100,
            hist_len: 50,
            forecast_len: 25,
            lag: 21,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        let lens = [
            self.train_len,
            self.evt_len,
            self.hist_len,
            self.forecast_len,
            self.lag,
        ];
        if lens.contains(&0) {
            return Err(Error::invalid("all window lengths must be positive"));
        }
        if self.evt_len + self.hist_len >= self.train_len {
            return Err(Error::invalid(format!(
                "evt_len + hist_len ({}) must be below train_len ({})",
                self.evt_len + self.hist_len,
                self.train_len
            )));
        }
        if self.lag < 2 {
            return Err(Error::invalid(
                "lag doubles as the variance window and must be >= 2",
            ));
        }
        Ok(())
    }

    /// Number of realized-threshold dates inside one training window.
    pub fn regression_span(&self) -> usize {
        self.train_len - self.evt_len - self.hist_len
    }

    /// Index range (inclusive start, exclusive end) of regression dates for a
    /// training window starting at `window_start`.
    pub fn regression_range(&self, window_start: usize) -> std::ops::Range<usize> {
        let first = window_start + self.evt_len;
        first..first + self.regression_span()
    }

    /// Start indices of every training window that has at least one day to forecast.
    pub fn window_starts(&self, series_len: usize) -> Vec<usize> {
        let mut starts = Vec::new();
        let mut t = 0;
        while t + self.train_len < series_len {
            starts.push(t);
            t += self.forecast_len;
        }
        starts
    }
}

pub fn compute_returns(prices: &PriceSeries, kind: ReturnKind) -> Result<ReturnSeries> {
    if prices.len() < 2 {
        return Err(Error::InsufficientData {
            what: "return computation",
            needed: 2,
            got: prices.len(),
        });
    }
    let closes = prices.closes();
    let values = closes
        .windows(2)
        .map(|w| match kind {
            ReturnKind::Log => (w[1] / w[0]).ln(),
            ReturnKind::Simple => (w[1] - w[0]) / w[0],
        })
        .collect();
    DatedSeries::new(prices.dates()[1..].to_vec(), values)
}

/// Unbiased sample variance of each trailing `window` of returns, dated at the
/// window's last observation. Dates without a full window are omitted.
pub fn rolling_variance(returns: &ReturnSeries, window: usize) -> Result<DatedSeries> {
    if window < 2 {
        return Err(Error::invalid("variance window must be at least 2"));
    }
    if window > returns.len() {
        return Ok(DatedSeries::empty());
    }
    let values = rolling_variance_values(returns.values(), window);
    DatedSeries::new(returns.dates()[window - 1..].to_vec(), values)
}

pub(crate) fn rolling_variance_values(x: &[f64], window: usize) -> Vec<f64> {
    x.windows(window)
        .map(|w| {
            // shifted sums about the window's first value
            let shift = w[0];
            let (s1, s2) = w.iter().fold((0.0, 0.0), |(a, b), v| {
                let d = v - shift;
                (a + d, b + d * d)
            });
            let n = window as f64;
            ((s2 - s1 * s1 / n) / (n - 1.0)).max(0.0)
        })
        .collect()
}

/// Type-7 quantile (linear interpolation between closest ranks).
pub fn empirical_quantile(sample: &[f64], q: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::invalid("quantile of an empty sample"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("quantile level {q} outside (0, 1)")));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, q))
}

/// Type-7 quantile of an already sorted, non-empty slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn slice_window(series: &DatedSeries, start: usize, len: usize) -> Result<DatedSeries> {
    let end = start
        .checked_add(len)
        .filter(|&e| e <= series.len())
        .ok_or_else(|| {
            Error::invalid(format!(
                "window [{start}, {start}+{len}) outside series of length {}",
                series.len()
            ))
        })?;
    Ok(DatedSeries {
        dates: series.dates[start..end].to_vec(),
        values: series.values[start..end].to_vec(),
    })
}
