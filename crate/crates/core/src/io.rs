//! CSV input and output.
//!
//! Inputs: daily `date,close`, intraday `date,time,price` or
//! `date,time,return`, plus every file this crate writes. Parse failures carry
//! the 1-based line number. Floats are written in shortest round-trip form,
//! so output is byte-stable for identical values.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;

use crate::ambiguity::{AmbiguitySeries, AmbiguityValue, YearMonth};
use crate::backtest::{DmResult, ValidationRow};
use crate::benchmarks::VarSeries;
use crate::brt::BrtSeries;
use crate::error::{Error, Result};
use crate::forecaster::VarForecast;
use crate::timeseries::{
    Date, DatedSeries, IntradayDay, IntradayPanel, PriceSeries, ReturnKind, ReturnSeries,
};

/// What the third column of an intraday file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntradayValue {
    Price,
    Return,
}

impl IntradayValue {
    fn column(&self) -> &'static str {
        match self {
            IntradayValue::Price => "price",
            IntradayValue::Return => "return",
        }
    }
}

pub fn parse_date(s: &str) -> std::result::Result<Date, String> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("bad date `{s}`: {e}"))
}

fn parse_f64(s: &str, what: &str) -> std::result::Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| format!("bad {what} `{s}`"))
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(r)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers()?.clone();
    let got: Vec<String> = headers
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    if got.len() < expected.len() || got.iter().zip(expected).any(|(g, e)| g != e) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                got.join(",")
            ),
        });
    }
    Ok(())
}

/// Iterates records as (line, record), mapping CSV errors to line-tagged parse errors.
fn records<R: Read>(
    rdr: &mut csv::Reader<R>,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + '_ {
    rdr.records().map(|r| {
        r.map(|rec| (rec.position().map_or(0, |p| p.line()), rec))
            .map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                Error::Parse {
                    line,
                    message: e.to_string(),
                }
            })
    })
}

fn parse_err(line: u64, message: String) -> Error {
    Error::Parse { line, message }
}

pub fn read_daily_prices<R: Read>(r: R) -> Result<PriceSeries> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &["date", "close"])?;
    let mut obs = Vec::new();
    for rec in records(&mut rdr) {
        let (line, rec) = rec?;
        let date = parse_date(&rec[0]).map_err(|m| parse_err(line, m))?;
        let close = parse_f64(&rec[1], "close").map_err(|m| parse_err(line, m))?;
        if !(close.is_finite() && close > 0.0) {
            return Err(parse_err(line, format!("non-positive close {close}")));
        }
        obs.push((date, close));
    }
    PriceSeries::new(obs)
}

/// Bars are ordered by their `time` text within each date (zero-padded times sort correctly).
pub fn read_intraday<R: Read>(
    r: R,
    value: IntradayValue,
    kind: ReturnKind,
) -> Result<IntradayPanel> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &["date", "time", value.column()])?;
    let mut days: BTreeMap<Date, Vec<(String, f64)>> = BTreeMap::new();
    for rec in records(&mut rdr) {
        let (line, rec) = rec?;
        let date = parse_date(&rec[0]).map_err(|m| parse_err(line, m))?;
        let time = rec[1].to_string();
        // missing bars are dropped, never imputed
        if rec[2].trim().is_empty() {
            continue;
        }
        let v = parse_f64(&rec[2], value.column()).map_err(|m| parse_err(line, m))?;
        days.entry(date).or_default().push((time, v));
    }
    let mut grouped: Vec<(Date, Vec<f64>)> = Vec::with_capacity(days.len());
    for (date, mut bars) in days {
        bars.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = bars.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Data(format!(
                "duplicate intraday bar {} on {date}",
                w[0].0
            )));
        }
        grouped.push((date, bars.into_iter().map(|(_, v)| v).collect()));
    }
    match value {
        IntradayValue::Price => IntradayPanel::from_prices(grouped, kind),
        IntradayValue::Return => IntradayPanel::new(
            grouped
                .into_iter()
                .map(|(date, returns)| IntradayDay { date, returns })
                .collect(),
        ),
    }
}

pub fn read_returns<R: Read>(r: R) -> Result<ReturnSeries> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &["date", "return"])?;
    let (mut dates, mut values) = (Vec::new(), Vec::new());
    for rec in records(&mut rdr) {
        let (line, rec) = rec?;
        dates.push(parse_date(&rec[0]).map_err(|m| parse_err(line, m))?);
        values.push(parse_f64(&rec[1], "return").map_err(|m| parse_err(line, m))?);
    }
    DatedSeries::new(dates, values)
}

pub fn read_var_series<R: Read>(r: R) -> Result<VarSeries> {
    let mut rdr = reader(r);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let col = headers
        .iter()
        .position(|h| h == "var_loss")
        .ok_or_else(|| parse_err(1, "missing `var_loss` column".into()))?;
    if headers.first().map(String::as_str) != Some("date") {
        return Err(parse_err(1, "first column must be `date`".into()));
    }
    let mut out = VarSeries::default();
    for rec in records(&mut rdr) {
        let (line, rec) = rec?;
        out.dates
            .push(parse_date(&rec[0]).map_err(|m| parse_err(line, m))?);
        out.var_loss
            .push(parse_f64(&rec[col], "var_loss").map_err(|m| parse_err(line, m))?);
    }
    if out.dates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Data("VaR dates must be strictly increasing".into()));
    }
    Ok(out)
}

/// Gap rows (empty `mho2`) are returned as gaps.
pub fn read_ambiguity<R: Read>(r: R) -> Result<AmbiguitySeries> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &["month", "mho2", "days_used"])?;
    let mut out = AmbiguitySeries::default();
    for rec in records(&mut rdr) {
        let (line, rec) = rec?;
        let month: YearMonth = rec[0]
            .parse()
            .map_err(|e: Error| parse_err(line, e.to_string()))?;
        if rec[1].is_empty() {
            out.gaps.push((month, "no value".into()));
            continue;
        }
        let mho2 = parse_f64(&rec[1], "mho2").map_err(|m| parse_err(line, m))?;
        let days_used = rec[2]
            .parse()
            .map_err(|_| parse_err(line, format!("bad days_used `{}`", &rec[2])))?;
        out.values.push(AmbiguityValue {
            month,
            mho2,
            days_used,
        });
    }
    if out.values.windows(2).any(|w| w[0].month >= w[1].month) {
        return Err(Error::Data(
            "ambiguity months must be strictly increasing".into(),
        ));
    }
    Ok(out)
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

pub fn write_returns<W: Write>(w: W, returns: &ReturnSeries) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(["date", "return"])?;
    for (d, r) in returns.iter() {
        wtr.write_record([d.to_string(), r.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// One row per date. Dates where the search failed keep empty value fields
/// and carry the reason in `note`.
pub fn write_brt<W: Write>(w: W, brt: &BrtSeries) -> Result<()> {
    let mut rows: Vec<(Date, [String; 6])> = brt
        .points
        .iter()
        .map(|p| {
            (
                p.date,
                [
                    p.brt.to_string(),
                    p.objective_gap.to_string(),
                    p.target_loss.to_string(),
                    p.var_loss.to_string(),
                    p.candidates_searched.to_string(),
                    String::new(),
                ],
            )
        })
        .collect();
    rows.extend(brt.gaps.iter().map(|g| {
        let mut r: [String; 6] = Default::default();
        r[5] = g.reason.clone();
        (g.date, r)
    }));
    rows.sort_by_key(|r| r.0);
    let mut wtr = writer(w);
    wtr.write_record([
        "date",
        "brt",
        "objective_gap",
        "target_loss",
        "var_loss",
        "candidates",
        "note",
    ])?;
    for (d, r) in rows {
        let mut rec = vec![d.to_string()];
        rec.extend(r);
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_ambiguity<W: Write>(w: W, amb: &AmbiguitySeries) -> Result<()> {
    let mut rows: Vec<(YearMonth, String, String)> = amb
        .values
        .iter()
        .map(|v| (v.month, v.mho2.to_string(), v.days_used.to_string()))
        .collect();
    rows.extend(
        amb.gaps
            .iter()
            .map(|(m, _)| (*m, String::new(), String::new())),
    );
    rows.sort_by_key(|r| r.0);
    let mut wtr = writer(w);
    wtr.write_record(["month", "mho2", "days_used"])?;
    for (m, v, d) in rows {
        wtr.write_record([m.to_string(), v, d])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_forecasts<W: Write>(w: W, forecasts: &[VarForecast]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record([
        "date",
        "brt_hat",
        "xi",
        "sigma",
        "n_u",
        "var_loss",
        "var_return",
        "flags",
    ])?;
    for f in forecasts {
        wtr.write_record([
            f.date.to_string(),
            f.brt_hat.to_string(),
            f.gpd.params.xi.to_string(),
            f.gpd.params.sigma.to_string(),
            f.gpd.n_u.to_string(),
            f.var_loss.to_string(),
            f.var_return.to_string(),
            f.flags.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_var_series<W: Write>(w: W, var: &VarSeries) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(["date", "var_loss", "var_return"])?;
    for (d, v) in var.iter() {
        wtr.write_record([d.to_string(), v.to_string(), (-v).to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_validation<W: Write>(w: W, rows: &[ValidationRow]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record([
        "model",
        "days",
        "violations",
        "ratio",
        "lr_uc",
        "p_uc",
        "reject_uc",
        "lr_ind",
        "p_ind",
        "lr_cc",
        "p_cc",
        "reject_cc",
    ])?;
    for r in rows {
        let c = &r.christoffersen;
        wtr.write_record([
            r.model.clone(),
            r.days.to_string(),
            r.violations.to_string(),
            r.ratio.to_string(),
            r.kupiec.statistic.to_string(),
            r.kupiec.p_value.to_string(),
            r.kupiec.reject_at_5pct.to_string(),
            c.independence.statistic.to_string(),
            c.independence.p_value.to_string(),
            c.conditional.statistic.to_string(),
            c.conditional.p_value.to_string(),
            c.conditional.reject_at_5pct.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Row model `a`, column model `b`, cell `S2a` of `e_a^2 - e_b^2`.
pub fn write_dm_matrix<W: Write>(w: W, names: &[String], matrix: &[Vec<DmResult>]) -> Result<()> {
    let mut wtr = writer(w);
    let mut header = vec!["model".to_string()];
    header.extend(names.iter().cloned());
    wtr.write_record(&header)?;
    for (name, row) in names.iter().zip(matrix) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|r| r.s2a.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
