//! Trader-Company population search for one-period-ahead return prediction.
//!
//! A *Trader* is a short weighted sum of formula terms, each an activation
//! applied to a binary operator over two lagged stock returns. A *Company*
//! keeps a population of Traders for one target stock, aggregates their
//! predictions, re-fits the weights of poorly scoring Traders by least
//! squares, and replaces the worst ones with samples from a Gaussian
//! mixture fitted to the survivors' term parameters.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, ingestion and the
//! backtest harness live in the `trader-company` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod company;
pub mod error;
pub mod formula;
pub mod gmm;
pub mod linalg;
pub mod metrics;
pub mod returns;
pub mod rng;
pub mod synth;

pub use company::{Aggregation, Company, CompanyConfig, ScoreKind, UsageCensus};
pub use error::{Error, Result};
pub use formula::{Activation, HyperRanges, Operator, Target, Term, Trader};
pub use gmm::{GaussianMixture, GenerationConfig, TermVector};
pub use metrics::{MetricsReport, PredictionTrack, StockMetrics};
pub use returns::{PanelView, PricePanel, ReturnsPanel};
pub use synth::{generate_synthetic_panel, PlantedAlphaSpec, PlantedPanel, RegimeShift};
