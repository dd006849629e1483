use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use uevt_core::ambiguity::{ambiguity_series, build_bins, AmbiguitySeries};
use uevt_core::backtest::{dm_matrix, validate_model, DmResult, ValidationRow};
use uevt_core::benchmarks::{run_benchmark, VarSeries};
use uevt_core::brt::brt_series;
use uevt_core::forecaster::run_pipeline_with_ambiguity;
use uevt_core::io;
use uevt_core::timeseries::{compute_returns, IntradayPanel, ReturnSeries};
use uevt_core::{Error, Result};

use crate::config::{Model, RunConfig};

pub fn run(command: &str, cfg: &RunConfig) -> Result<Value> {
    match command {
        "ingest" => ingest(cfg),
        "brt" => brt(cfg),
        "ambiguity" => ambiguity(cfg),
        "forecast" => forecast(cfg),
        "bench" => bench(cfg),
        "backtest" => backtest(cfg).map(|(summary, _, _, _)| summary),
        "report" => report(cfg),
        other => Err(Error::InvalidInput(format!("unknown command `{other}`"))),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))
}

fn create(cfg: &RunConfig, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(&cfg.out)?;
    Ok(BufWriter::new(File::create(cfg.out.join(name))?))
}

fn var_file(cfg: &RunConfig, model: &str) -> PathBuf {
    cfg.out.join(format!("var_{model}.csv"))
}

fn load_returns(cfg: &RunConfig) -> Result<ReturnSeries> {
    let path = cfg
        .daily
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("no daily price file given (set `daily`)".into()))?;
    let prices = io::read_daily_prices(open(path)?)?;
    compute_returns(&prices, cfg.return_kind)
}

fn load_panel(cfg: &RunConfig, purpose: &str) -> Result<IntradayPanel> {
    let path = cfg.intraday.as_ref().ok_or_else(|| {
        Error::InvalidInput(format!(
            "{purpose} needs intraday data to build the ambiguity measure (set `intraday`)"
        ))
    })?;
    io::read_intraday(open(path)?, cfg.intraday_value, cfg.return_kind)
}

fn load_ambiguity(cfg: &RunConfig, purpose: &str) -> Result<AmbiguitySeries> {
    Ok(ambiguity_series(&load_panel(cfg, purpose)?, &build_bins()))
}

fn ingest(cfg: &RunConfig) -> Result<Value> {
    let returns = load_returns(cfg)?;
    io::write_returns(create(cfg, "returns.csv")?, &returns)?;
    let intraday_days = match &cfg.intraday {
        Some(_) => Some(load_panel(cfg, "ingest")?.len()),
        None => None,
    };
    Ok(json!({
        "status": "ok",
        "command": "ingest",
        "returns": returns.len(),
        "first": returns.dates().first().map(|d| d.to_string()),
        "last": returns.dates().last().map(|d| d.to_string()),
        "intraday_days": intraday_days,
    }))
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn brt(cfg: &RunConfig) -> Result<Value> {
    let returns = load_returns(cfg)?;
    let series = brt_series(&returns, &cfg.spec, cfg.target, cfg.p)?;
    io::write_brt(create(cfg, "brt.csv")?, &series)?;
    let values: Vec<f64> = series.points.iter().map(|p| p.brt).collect();
    let n = values.len();
    let mean = (n > 0).then(|| values.iter().sum::<f64>() / n as f64);
    let min = values.iter().copied().reduce(f64::min);
    let max = values.iter().copied().reduce(f64::max);
    Ok(json!({
        "status": "ok",
        "command": "brt",
        "target": cfg.target.to_string(),
        "rows": n,
        "gaps": series.gaps.len(),
        "mean": mean,
        "median": median(values),
        "min": min,
        "max": max,
    }))
}

fn ambiguity(cfg: &RunConfig) -> Result<Value> {
    let amb = load_ambiguity(cfg, "ambiguity")?;
    io::write_ambiguity(create(cfg, "ambiguity.csv")?, &amb)?;
    Ok(json!({
        "status": "ok",
        "command": "ambiguity",
        "months": amb.values.len(),
        "gaps": amb.gaps.iter().map(|(m, r)| json!({"month": m.to_string(), "reason": r})).collect::<Vec<_>>(),
    }))
}

fn forecast(cfg: &RunConfig) -> Result<Value> {
    let returns = load_returns(cfg)?;
    let amb = load_ambiguity(cfg, "forecast")?;
    let out = run_pipeline_with_ambiguity(&returns, &amb, &cfg.pipeline())?;
    if out.forecasts.is_empty() {
        let reasons: Vec<String> = out
            .skipped
            .iter()
            .map(|s| format!("{}: {}", s.start, s.reason))
            .collect();
        return Err(Error::Data(format!(
            "no forecasts produced; skipped windows: {}",
            reasons.join("; ")
        )));
    }
    io::write_forecasts(create(cfg, "forecast.csv")?, &out.forecasts)?;
    io::write_var_series(
        BufWriter::new(File::create(var_file(cfg, Model::UncertainEvt.name()))?),
        &out.var_series(),
    )?;
    let clamped = out.forecasts.iter().filter(|f| f.flags.clamped).count();
    let relaxed = out.forecasts.iter().filter(|f| f.flags.relaxed).count();
    Ok(json!({
        "status": "ok",
        "command": "forecast",
        "forecasts": out.forecasts.len(),
        "windows": out.windows.len(),
        "clamped": clamped,
        "relaxed": relaxed,
        "brt_gaps": out.brt.gaps.len(),
        "ambiguity_gaps": amb.gaps.iter().map(|(m, _)| m.to_string()).collect::<Vec<_>>(),
        "skipped_windows": out.skipped.iter().map(|s| json!({"start": s.start.to_string(), "reason": s.reason})).collect::<Vec<_>>(),
    }))
}

fn bench(cfg: &RunConfig) -> Result<Value> {
    let models: Vec<_> = cfg
        .models
        .iter()
        .filter_map(|m| match m {
            Model::Benchmark(b) => Some(*b),
            Model::UncertainEvt => None,
        })
        .collect();
    if models.is_empty() {
        return Err(Error::InvalidInput(
            "no benchmark models requested (uncertain_evt is produced by `forecast`)".into(),
        ));
    }
    let returns = load_returns(cfg)?;
    let bcfg = cfg.benchmark();
    let results: Vec<_> = models
        .par_iter()
        .map(|&m| (m, run_benchmark(m, &returns, &bcfg)))
        .collect();
    let mut rows = serde_json::Map::new();
    let mut failures = Vec::new();
    std::fs::create_dir_all(&cfg.out)?;
    for (m, r) in results {
        match r {
            Ok(var) => {
                io::write_var_series(BufWriter::new(File::create(var_file(cfg, m.name()))?), &var)?;
                rows.insert(m.name().into(), json!(var.len()));
            }
            Err(e) => failures.push(format!("{m}: {e}")),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Data(format!(
            "benchmark failures: {}",
            failures.join("; ")
        )));
    }
    Ok(json!({"status": "ok", "command": "bench", "rows": rows}))
}

type Backtest = (Value, Vec<ValidationRow>, Vec<String>, Vec<Vec<DmResult>>);

fn backtest(cfg: &RunConfig) -> Result<Backtest> {
    let missing: Vec<&str> = cfg
        .models
        .iter()
        .map(Model::name)
        .filter(|m| !var_file(cfg, m).exists())
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidInput(format!(
            "missing VaR output in {} for: {} (run `forecast` / `bench` first)",
            cfg.out.display(),
            missing.join(", ")
        )));
    }
    let returns = load_returns(cfg)?;
    let mut series: Vec<(String, VarSeries)> = Vec::with_capacity(cfg.models.len());
    for m in &cfg.models {
        let var = io::read_var_series(open(&var_file(cfg, m.name()))?)?;
        series.push((m.name().to_string(), var));
    }
    let rows = series
        .iter()
        .map(|(name, var)| validate_model(name, &returns, var, cfg.p))
        .collect::<Result<Vec<_>>>()?;
    let matrix = dm_matrix(&series, &returns)?;
    let names: Vec<String> = series.into_iter().map(|(n, _)| n).collect();
    io::write_validation(create(cfg, "validation.csv")?, &rows)?;
    io::write_dm_matrix(create(cfg, "dm_matrix.csv")?, &names, &matrix)?;
    let summary = json!({
        "status": "ok",
        "command": "backtest",
        "models": names,
        "rejected_uc": rows.iter().filter(|r| r.kupiec.reject_at_5pct).map(|r| r.model.clone()).collect::<Vec<_>>(),
        "rejected_cc": rows.iter().filter(|r| r.christoffersen.conditional.reject_at_5pct).map(|r| r.model.clone()).collect::<Vec<_>>(),
    });
    Ok((summary, rows, names, matrix))
}

fn render_report(
    cfg: &RunConfig,
    rows: &[ValidationRow],
    names: &[String],
    matrix: &[Vec<DmResult>],
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "VaR backtest at p = {}", cfg.p);
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<14} {:>6} {:>5} {:>8} {:>9} {:>8} {:>9} {:>8}",
        "model", "days", "viol", "ratio", "LR_uc", "p_uc", "LR_cc", "p_cc"
    );
    for r in rows {
        let cc = &r.christoffersen.conditional;
        let _ = writeln!(
            s,
            "{:<14} {:>6} {:>5} {:>8.4} {:>9.4} {:>7.4}{} {:>9.4} {:>7.4}{}",
            r.model,
            r.days,
            r.violations,
            r.ratio,
            r.kupiec.statistic,
            r.kupiec.p_value,
            if r.kupiec.reject_at_5pct { "*" } else { " " },
            cc.statistic,
            cc.p_value,
            if cc.reject_at_5pct { "*" } else { " " },
        );
    }
    let _ = writeln!(s, "(* rejected at 5%)");
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "Sign-test statistic of e_row^2 - e_col^2 (negative: row model more accurate)"
    );
    let _ = write!(s, "{:<14}", "");
    for n in names {
        let _ = write!(s, " {n:>13}");
    }
    let _ = writeln!(s);
    for (n, row) in names.iter().zip(matrix) {
        let _ = write!(s, "{n:<14}");
        for d in row {
            let _ = write!(
                s,
                " {:>12.3}{}",
                d.s2a,
                if d.reject_at_5pct { "*" } else { " " }
            );
        }
        let _ = writeln!(s);
    }
    s
}

fn report(cfg: &RunConfig) -> Result<Value> {
    let (mut summary, rows, names, matrix) = backtest(cfg)?;
    let text = render_report(cfg, &rows, &names, &matrix);
    std::fs::write(cfg.out.join("report.txt"), &text)?;
    summary["command"] = json!("report");
    summary["report"] = json!(cfg.out.join("report.txt").display().to_string());
    Ok(summary)
}
