//! Value-at-Risk with a state-dependent extreme-value threshold.
//!
//! The break-even risk threshold (BRT) is the tail threshold at which a
//! peaks-over-threshold VaR matches a forward-looking target. Its history is
//! regressed on lagged return variance and on a monthly ambiguity measure
//! built from intraday return histograms; the predicted threshold then drives
//! a GPD refit and the VaR forecast. Benchmark VaR models and the usual
//! coverage and forecast-comparison backtests are included.

pub mod ambiguity;
pub mod backtest;
pub mod benchmarks;
pub mod brt;
pub mod error;
pub mod forecaster;
pub mod gpd;
pub mod io;
pub mod optim;
pub mod seed;
pub mod special;
pub mod timeseries;

pub use ambiguity::{
    ambiguity_series, build_bins, AmbiguitySeries, AmbiguityValue, BinScheme, YearMonth,
};
pub use backtest::{
    christoffersen_test, diebold_mariano, dm_matrix, forecast_errors, kupiec_test, validate_model,
    violations, DmResult, TestResult, ValidationRow, ViolationSeries,
};
pub use benchmarks::{run_benchmark, BenchmarkConfig, BenchmarkModel, Innovation, VarSeries};
pub use brt::{brt_series, realized_brt, BrtPoint, BrtSeries, BrtTarget};
pub use error::{Error, Result};
pub use forecaster::{
    fit_brt_regression, predict_brt, run_pipeline, run_pipeline_with_ambiguity, uncertain_evt_var,
    PipelineConfig, PipelineOutput, RegressionFit, VarForecast,
};
pub use gpd::{evt_var, fit_gpd_mle, fit_tail, GpdParams, TailFit};
pub use seed::SeedTree;
pub use timeseries::{
    compute_returns, rolling_variance, Date, DatedSeries, IntradayDay, IntradayPanel, PriceSeries,
    ReturnKind, ReturnSeries, WindowSpec,
};
