//! CSV ingestion, offline and online backtests, reports and saved state
//! for the Trader-Company predictor in `trader-company-core`.
//!
//! ```no_run
//! use std::path::Path;
//! use trader_company::{emit_report, run_backtest, BacktestConfig, Mode};
//!
//! let config = BacktestConfig::load(Path::new("run.toml"))?;
//! let panel = config.data.load(config.seed, Path::new("."))?;
//! let outcome = run_backtest(&config, &panel, Mode::Offline)?;
//! emit_report(&outcome, &config.output_dir)?;
//! # Ok::<(), trader_company::BacktestError>(())
//! ```

pub mod backtest;
pub mod config;
pub mod csv_io;
pub mod error;
pub mod inspect;
pub mod report;
pub mod state;

pub use backtest::{run_backtest, Mode, RunOutcome, StockRun, StoredScores};
pub use config::{BacktestConfig, DataSource, Preset, Refit, Split, SyntheticSource};
pub use csv_io::{load_price_csv, read_price_csv, CsvSchema, Layout, MissingPolicy};
pub use error::{BacktestError, Result};
pub use inspect::{inspect, InspectReport};
pub use report::{emit_report, RunArtifacts};
pub use state::CompanyState;
