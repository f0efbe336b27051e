//! Run configuration: one TOML document fully determines a backtest.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trader_company_core::formula::parse_trader;
use trader_company_core::synth::{generate_synthetic_panel, PlantedAlphaSpec, RegimeShift};
use trader_company_core::returns::compute_log_returns;
use trader_company_core::{Activation, CompanyConfig, Operator, ReturnsPanel};

use crate::csv_io::{load_price_csv, parse_timestamp, CsvSchema};
use crate::error::{BacktestError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: CsvSchema,
    },
    Synthetic(SyntheticSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSource {
    pub at: usize,
    pub ground_truth: String,
}

/// A planted-alpha panel; formulas use symbols `S0..S{n−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSource {
    pub num_stocks: usize,
    pub num_periods: usize,
    #[serde(default)]
    pub target_stock: usize,
    pub ground_truth: String,
    pub signal_scale: f64,
    pub noise_scale: f64,
    #[serde(default = "default_background")]
    pub background_scale: f64,
    #[serde(default = "default_corr_window")]
    pub corr_window: usize,
    /// Falls back to the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub shift: Option<ShiftSource>,
}

fn default_background() -> f64 {
    0.01
}

fn default_corr_window() -> usize {
    10
}

impl SyntheticSource {
    pub fn symbols(&self) -> Vec<String> {
        (0..self.num_stocks).map(|i| format!("S{i}")).collect()
    }

    pub fn to_spec(&self, run_seed: u64) -> Result<PlantedAlphaSpec> {
        let symbols = self.symbols();
        let shift = match &self.shift {
            Some(s) => Some(RegimeShift {
                at: s.at,
                ground_truth: parse_trader(&s.ground_truth, &symbols)?,
            }),
            None => None,
        };
        Ok(PlantedAlphaSpec {
            num_stocks: self.num_stocks,
            num_periods: self.num_periods,
            target_stock: self.target_stock,
            ground_truth: parse_trader(&self.ground_truth, &symbols)?,
            signal_scale: self.signal_scale,
            noise_scale: self.noise_scale,
            background_scale: self.background_scale,
            corr_window: self.corr_window,
            seed: self.seed.unwrap_or(run_seed),
            shift,
        })
    }
}

impl DataSource {
    /// Loads (or generates) the return panel. Relative CSV paths resolve
    /// against `base`.
    pub fn load(&self, run_seed: u64, base: &Path) -> Result<ReturnsPanel> {
        match self {
            DataSource::Csv { path, schema } => {
                let full = if path.is_relative() { base.join(path) } else { path.clone() };
                let prices = load_price_csv(&full, schema)?;
                Ok(compute_log_returns(&prices)?)
            }
            DataSource::Synthetic(source) => Ok(generate_synthetic_panel(&source.to_spec(run_seed)?)?.panel),
        }
    }
}

/// A number is a fraction, a string a timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Split {
    /// First test column is `⌊fraction · T⌋`.
    Fraction(f64),
    /// First test column is the first one stamped at or after this time.
    Timestamp(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefitName {
    Never,
    Yearly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Refit {
    Periods(usize),
    Named(RefitName),
}

impl Refit {
    pub const NEVER: Refit = Refit::Named(RefitName::Never);
    pub const YEARLY: Refit = Refit::Named(RefitName::Yearly);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    #[default]
    Tc,
    TcLinear,
    TcUnary,
    TcNoEducate,
    TcNoPrune,
    TcUnimodal,
    TcMse,
    Market,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::Tc,
        Preset::TcLinear,
        Preset::TcUnary,
        Preset::TcNoEducate,
        Preset::TcNoPrune,
        Preset::TcUnimodal,
        Preset::TcMse,
        Preset::Market,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Tc => "tc",
            Preset::TcLinear => "tc-linear",
            Preset::TcUnary => "tc-unary",
            Preset::TcNoEducate => "tc-no-educate",
            Preset::TcNoPrune => "tc-no-prune",
            Preset::TcUnimodal => "tc-unimodal",
            Preset::TcMse => "tc-mse",
            Preset::Market => "market",
        }
    }

    /// Restricts `config` for this ablation. `Market` leaves it alone; the
    /// backtest swaps the Company for buy-and-hold instead.
    pub fn apply(self, mut config: CompanyConfig) -> CompanyConfig {
        match self {
            Preset::Tc | Preset::Market => {}
            Preset::TcLinear => config.ranges.activations = vec![Activation::Identity],
            Preset::TcUnary => config.ranges.operators = vec![Operator::ProjectX],
            Preset::TcNoEducate => config.educate = false,
            Preset::TcNoPrune => config.prune = false,
            Preset::TcUnimodal => config.generation.components = 1,
            Preset::TcMse => config.score = trader_company_core::ScoreKind::NegativeMse,
        }
        config
    }
}

impl FromStr for Preset {
    type Err = BacktestError;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| BacktestError::UnknownPreset(s.to_string()))
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestConfig {
    pub data: DataSource,
    #[serde(default = "default_split")]
    pub split: Split,
    /// Correlation window `w`; overrides `company.ranges.corr_window`.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Execution lag `l`; overrides `company.lag`.
    #[serde(default = "default_lag")]
    pub lag: usize,
    /// Online refit period.
    #[serde(default = "default_refit")]
    pub refit: Refit,
    /// Training steps per fit.
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default)]
    pub company: CompanyConfig,
    #[serde(default)]
    pub preset: Preset,
    /// Target symbols; all stocks when absent.
    #[serde(default)]
    pub targets: Option<Vec<String>>,
    /// Inferred from timestamps when absent.
    #[serde(default)]
    pub periods_per_year: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_split() -> Split {
    Split::Fraction(0.5)
}

fn default_window() -> usize {
    10
}

fn default_lag() -> usize {
    1
}

fn default_refit() -> Refit {
    Refit::YEARLY
}

fn default_rounds() -> usize {
    5
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("tc-out")
}

impl BacktestConfig {
    /// Defaults everywhere except the data source.
    pub fn new(data: DataSource) -> Self {
        Self {
            data,
            split: default_split(),
            window: default_window(),
            lag: default_lag(),
            refit: default_refit(),
            rounds: default_rounds(),
            company: CompanyConfig::default(),
            preset: Preset::Tc,
            targets: None,
            periods_per_year: None,
            seed: 0,
            output_dir: default_output_dir(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| BacktestError::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BacktestError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(BacktestError::Config("window must be at least 1".into()));
        }
        if self.rounds == 0 {
            return Err(BacktestError::Config("rounds must be at least 1".into()));
        }
        if let Split::Fraction(f) = self.split {
            if !(f > 0.0 && f < 1.0) {
                return Err(BacktestError::Config(format!("split fraction {f} outside (0, 1)")));
            }
        }
        if let Split::Timestamp(s) = &self.split {
            if parse_timestamp(s).is_none() {
                return Err(BacktestError::Config(format!("cannot parse split timestamp {s:?}")));
            }
        }
        if self.refit == Refit::Periods(0) {
            return Err(BacktestError::Config("refit period must be positive".into()));
        }
        if let Some(t) = self.periods_per_year {
            if !(t > 0.0 && t.is_finite()) {
                return Err(BacktestError::Config("periods_per_year must be positive".into()));
            }
        }
        self.company_config().validate()?;
        Ok(())
    }

    /// Company config after the preset, window and lag are applied.
    pub fn company_config(&self) -> CompanyConfig {
        let mut config = self.preset.apply(self.company.clone());
        config.ranges.corr_window = self.window;
        config.lag = self.lag;
        config
    }

    /// First test column for a panel.
    pub fn split_column(&self, panel: &ReturnsPanel) -> Result<usize> {
        let n = panel.num_periods();
        let b = match &self.split {
            Split::Fraction(f) => (f * n as f64).floor() as usize,
            Split::Timestamp(s) => {
                let ts = parse_timestamp(s).ok_or_else(|| BacktestError::Config(format!("bad split {s:?}")))?;
                panel.timestamps().partition_point(|&t| t < ts)
            }
        };
        if b == 0 || b >= n {
            return Err(BacktestError::Config(format!("split column {b} outside the data (1..{n})")));
        }
        Ok(b)
    }

    /// Hex digest naming this run's files; independent of seed and output
    /// directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.seed = 0;
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..6])
    }

    pub fn run_id(&self) -> String {
        format!("{}-s{}", self.hash(), self.seed)
    }
}
