//! Saved Company documents.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use trader_company_core::Company;

use crate::backtest::StoredScores;
use crate::config::DataSource;
use crate::error::{BacktestError, Result};

pub const STATE_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyState {
    pub format: u32,
    pub data: DataSource,
    /// Run seed, which also seeds synthetic data without its own seed.
    pub seed: u64,
    pub symbols: Vec<String>,
    pub company: Company,
    #[serde(default)]
    pub scores: Option<StoredScores>,
}

impl CompanyState {
    pub fn target_symbol(&self) -> &str {
        &self.symbols[self.company.target()]
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.format != STATE_FORMAT {
            return Err(format!("unsupported format {}", self.format));
        }
        self.company.validate().map_err(|e| e.to_string())?;
        if self.symbols.len() != self.company.num_stocks() {
            return Err(format!(
                "{} symbols for a company over {} stocks",
                self.symbols.len(),
                self.company.num_stocks()
            ));
        }
        if let Some(scores) = &self.scores {
            if scores.values.len() != self.company.traders().len() {
                return Err(format!(
                    "{} stored scores for {} traders",
                    scores.values.len(),
                    self.company.traders().len()
                ));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| BacktestError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| BacktestError::io(path, e))?;
        let corrupt = |msg: String| BacktestError::CorruptState {
            path: path.to_path_buf(),
            msg,
        };
        let state: Self = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        state.validate().map_err(corrupt)?;
        Ok(state)
    }
}
