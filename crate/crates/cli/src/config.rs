//! Run configuration: a flat `key = value` file, overridden by flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use uevt_core::benchmarks::{BenchmarkConfig, BenchmarkModel, Innovation};
use uevt_core::brt::BrtTarget;
use uevt_core::forecaster::PipelineConfig;
use uevt_core::io::IntradayValue;
use uevt_core::timeseries::{ReturnKind, WindowSpec};
use uevt_core::{Error, Result};

/// Name under which the threshold-forecast model appears next to the benchmarks.
pub const UNCERTAIN_EVT: &str = "uncertain_evt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Model {
    UncertainEvt,
    Benchmark(BenchmarkModel),
}

impl Model {
    pub fn all() -> Vec<Model> {
        let mut v = vec![Model::UncertainEvt];
        v.extend(BenchmarkModel::ALL.into_iter().map(Model::Benchmark));
        v
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::UncertainEvt => UNCERTAIN_EVT,
            Model::Benchmark(m) => m.name(),
        }
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        if key == UNCERTAIN_EVT {
            return Ok(Model::UncertainEvt);
        }
        key.parse::<BenchmarkModel>()
            .map(Model::Benchmark)
            .map_err(|_| {
                let known: Vec<&str> = Model::all().iter().map(Model::name).collect();
                Error::InvalidInput(format!("unknown model `{s}` (known: {})", known.join(",")))
            })
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub daily: Option<PathBuf>,
    pub intraday: Option<PathBuf>,
    pub intraday_value: IntradayValue,
    pub return_kind: ReturnKind,
    pub spec: WindowSpec,
    pub p: f64,
    pub target: BrtTarget,
    pub models: Vec<Model>,
    pub seed: u64,
    pub out: PathBuf,
    pub bench_window: usize,
    pub refit_every: usize,
    pub n_paths: usize,
    pub garch_order: (usize, usize),
    pub innovation: Innovation,
    pub evt_percentile: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let b = BenchmarkConfig::default();
        Self {
            daily: None,
            intraday: None,
            intraday_value: IntradayValue::Price,
            return_kind: ReturnKind::Log,
            spec: WindowSpec::default(),
            p: 0.95,
            target: BrtTarget::default(),
            models: Model::all(),
            seed: b.seed,
            out: PathBuf::from("out"),
            bench_window: b.window,
            refit_every: b.refit_every,
            n_paths: b.n_paths,
            garch_order: b.garch_order,
            innovation: b.innovation,
            evt_percentile: b.evt_percentile,
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, (usize, String)>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i as u64 + 1,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = k.trim().to_ascii_lowercase().replace('-', "_");
        if out
            .insert(key.clone(), (i + 1, v.trim().to_string()))
            .is_some()
        {
            return Err(Error::Parse {
                line: i as u64 + 1,
                message: format!("duplicate key `{key}`"),
            });
        }
    }
    Ok(out)
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::InvalidInput(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_models(v: &str) -> Result<Vec<Model>> {
    let mut models = Vec::new();
    for name in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m: Model = name.parse()?;
        if !models.contains(&m) {
            models.push(m);
        }
    }
    if models.is_empty() {
        return Err(Error::InvalidInput("empty model list".into()));
    }
    Ok(models)
}

fn parse_order(v: &str) -> Result<(usize, usize)> {
    let (a, b) = v.split_once(',').ok_or_else(|| {
        Error::InvalidInput(format!("`garch_order`: expected `p,q`, found `{v}`"))
    })?;
    Ok((num("garch_order", a.trim())?, num("garch_order", b.trim())?))
}

impl RunConfig {
    /// Applies one setting. Relative paths are resolved against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        match key {
            "daily" => self.daily = Some(path(value)),
            "intraday" => self.intraday = Some(path(value)),
            "intraday_kind" => {
                self.intraday_value = match value.to_ascii_lowercase().as_str() {
                    "price" => IntradayValue::Price,
                    "return" => IntradayValue::Return,
                    _ => {
                        return Err(Error::InvalidInput(format!(
                            "`intraday_kind`: expected price|return, found `{value}`"
                        )))
                    }
                }
            }
            "return_kind" => self.return_kind = value.parse()?,
            "train_len" => self.spec.train_len = num(key, value)?,
            "evt_len" => self.spec.evt_len = num(key, value)?,
            "hist_len" => self.spec.hist_len = num(key, value)?,
            "forecast_len" => self.spec.forecast_len = num(key, value)?,
            "lag" => self.spec.lag = num(key, value)?,
            "p" => self.p = num(key, value)?,
            "target" => self.target = value.parse()?,
            "models" => self.models = parse_models(value)?,
            "seed" => self.seed = num(key, value)?,
            "out" => self.out = path(value),
            "bench_window" => self.bench_window = num(key, value)?,
            "refit_every" => self.refit_every = num(key, value)?,
            "n_paths" => self.n_paths = num(key, value)?,
            "garch_order" => self.garch_order = parse_order(value)?,
            "innovation" => self.innovation = value.parse()?,
            "evt_percentile" => self.evt_percentile = num(key, value)?,
            _ => return Err(Error::InvalidInput(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = RunConfig::default();
        for (key, (line, value)) in parse_kv(&text)? {
            cfg.set(&key, &value, base).map_err(|e| Error::Parse {
                line: line as u64,
                message: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::InvalidInput(format!(
                "p = {} outside (0, 1)",
                self.p
            )));
        }
        self.spec.validate()?;
        if self.target.horizon() > self.spec.hist_len {
            return Err(Error::InvalidInput(format!(
                "target horizon {} exceeds hist_len {}",
                self.target.horizon(),
                self.spec.hist_len
            )));
        }
        for p in [&self.daily, &self.intraday].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::InvalidInput(format!(
                    "input file {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            spec: self.spec,
            target: self.target,
            p: self.p,
        }
    }

    pub fn benchmark(&self) -> BenchmarkConfig {
        BenchmarkConfig {
            window: self.bench_window,
            p: self.p,
            refit_every: self.refit_every,
            n_paths: self.n_paths,
            seed: self.seed,
            garch_order: self.garch_order,
            innovation: self.innovation,
            evt_percentile: self.evt_percentile,
        }
    }
}
