//! Ranking a saved Company's Traders and tabulating what they use.

use std::fmt::{self, Write};
use std::ops::Range;

use trader_company_core::formula::{format_trader, FormatStyle};
use trader_company_core::{Activation, Operator, ReturnsPanel, UsageCensus};

use crate::error::{BacktestError, Result};
use crate::state::CompanyState;

#[derive(Debug, Clone, PartialEq)]
pub struct RankedTrader {
    pub index: usize,
    pub score: f64,
    pub formula: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InspectReport {
    pub target: String,
    pub window: Range<usize>,
    pub ranked: Vec<RankedTrader>,
    pub symbols: Vec<String>,
    pub census: UsageCensus,
}

/// Top `top_k` Traders by score, descending, ties broken by index. With a
/// `window` the scores are recomputed on `panel`, otherwise the stored
/// training scores are used.
pub fn inspect(
    state: &CompanyState,
    panel: Option<&ReturnsPanel>,
    top_k: usize,
    window: Option<Range<usize>>,
) -> Result<InspectReport> {
    let company = &state.company;
    let (window, scores) = match (window, panel) {
        (Some(w), Some(panel)) => {
            let scores = company.scores(&panel.view(), w.clone())?;
            (w, scores)
        }
        (Some(_), None) => return Err(BacktestError::Config("an evaluation window needs the data".into())),
        (None, _) => match &state.scores {
            Some(s) => (s.times.clone(), s.values.clone()),
            None => return Err(BacktestError::Config("state has no stored scores; pass a window".into())),
        },
    };
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let ranked = order
        .into_iter()
        .take(top_k)
        .map(|index| RankedTrader {
            index,
            score: scores[index],
            formula: format_trader(&company.traders()[index], &state.symbols, FormatStyle::Display),
        })
        .collect();
    Ok(InspectReport {
        target: state.target_symbol().to_string(),
        window,
        ranked,
        symbols: state.symbols.clone(),
        census: company.census(),
    })
}

/// `kind,name,count` rows: stocks, then operators, then activations.
pub fn census_rows(census: &UsageCensus, symbols: &[String]) -> Vec<(&'static str, String, usize)> {
    let mut rows = Vec::new();
    for (s, &c) in symbols.iter().zip(&census.stocks) {
        rows.push(("stock", s.clone(), c));
    }
    for op in Operator::ALL {
        rows.push(("operator", op.name().to_string(), census.operators[op.index()]));
    }
    for act in Activation::ALL {
        rows.push(("activation", act.name().to_string(), census.activations[act.index()]));
    }
    rows
}

impl fmt::Display for InspectReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "target {} scored over feature times {}..{}",
            self.target, self.window.start, self.window.end
        )?;
        for (rank, t) in self.ranked.iter().enumerate() {
            writeln!(f, "#{} trader {} score {:.6}", rank + 1, t.index, t.score)?;
            for line in t.formula.lines() {
                writeln!(f, "    {line}")?;
            }
        }
        let mut table = String::new();
        for (kind, name, count) in census_rows(&self.census, &self.symbols) {
            let _ = writeln!(table, "{kind:<10} {name:<12} {count}");
        }
        write!(f, "census\n{table}")
    }
}
