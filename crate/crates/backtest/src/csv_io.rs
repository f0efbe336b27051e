//! Price CSV ingestion (wide and long layouts) and CSV export of panels.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use trader_company_core::{PricePanel, ReturnsPanel};

use crate::error::{BacktestError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// One timestamp column plus one price column per symbol.
    #[default]
    Wide,
    /// `timestamp,symbol,price` records.
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    DropRow,
    #[default]
    ForwardFill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub layout: Layout,
    pub timestamp_column: String,
    /// Long layout only.
    pub symbol_column: String,
    /// Long layout only.
    pub price_column: String,
    /// Symbols to keep, in panel order. `None` keeps every symbol in order
    /// of first appearance.
    pub symbols: Option<Vec<String>>,
    pub missing: MissingPolicy,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            layout: Layout::Wide,
            timestamp_column: "timestamp".into(),
            symbol_column: "symbol".into(),
            price_column: "price".into(),
            symbols: None,
            missing: MissingPolicy::ForwardFill,
        }
    }
}

/// Seconds since the Unix epoch from an integer, a date, a naive
/// date-time or an RFC 3339 string.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    DateTime::parse_from_rfc3339(s).ok().map(|dt| dt.timestamp())
}

fn format_timestamp(ts: i64, as_date: bool) -> String {
    match DateTime::from_timestamp(ts, 0) {
        Some(dt) if as_date => dt.format("%Y-%m-%d").to_string(),
        _ => ts.to_string(),
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "NaN" | "nan" | "null")
}

fn parse_price(cell: &str, column: &str, line: u64) -> Result<Option<f64>> {
    if is_missing(cell) {
        return Ok(None);
    }
    match cell.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(BacktestError::Data {
            line,
            msg: format!("column {column:?}: cannot parse {cell:?} as a price"),
        }),
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| BacktestError::Data {
            line: 1,
            msg: format!("missing column {name:?}"),
        })
}

struct RawRow {
    line: u64,
    prices: Vec<Option<f64>>,
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn read_timestamp(cell: &str, line: u64) -> Result<i64> {
    parse_timestamp(cell).ok_or_else(|| BacktestError::Data {
        line,
        msg: format!("cannot parse timestamp {cell:?}"),
    })
}

fn read_wide<R: Read>(reader: &mut csv::Reader<R>, schema: &CsvSchema) -> Result<(Vec<String>, BTreeMap<i64, RawRow>)> {
    let headers = reader.headers()?.clone();
    let ts_col = column_index(&headers, &schema.timestamp_column)?;
    let symbols: Vec<String> = match &schema.symbols {
        Some(list) => list.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != ts_col)
            .map(|(_, h)| h.trim().to_string())
            .collect(),
    };
    let columns = symbols
        .iter()
        .map(|s| {
            headers
                .iter()
                .position(|h| h.trim() == s)
                .ok_or_else(|| BacktestError::UnknownSymbol {
                    symbol: s.clone(),
                    line: Some(1),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        let ts = read_timestamp(&record[ts_col], line)?;
        let prices = columns
            .iter()
            .zip(&symbols)
            .map(|(&c, s)| parse_price(&record[c], s, line))
            .collect::<Result<Vec<_>>>()?;
        match rows.entry(ts) {
            Entry::Occupied(_) => {
                return Err(BacktestError::DuplicateTimestamp {
                    timestamp: record[ts_col].to_string(),
                    line,
                })
            }
            Entry::Vacant(e) => {
                e.insert(RawRow { line, prices });
            }
        }
    }
    Ok((symbols, rows))
}

fn read_long<R: Read>(reader: &mut csv::Reader<R>, schema: &CsvSchema) -> Result<(Vec<String>, BTreeMap<i64, RawRow>)> {
    let headers = reader.headers()?.clone();
    let ts_col = column_index(&headers, &schema.timestamp_column)?;
    let sym_col = column_index(&headers, &schema.symbol_column)?;
    let price_col = column_index(&headers, &schema.price_column)?;
    let fixed = schema.symbols.is_some();
    let mut symbols = schema.symbols.clone().unwrap_or_default();
    let mut cells: Vec<(i64, u64, usize, Option<f64>)> = Vec::new();
    let mut seen = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        let ts = read_timestamp(&record[ts_col], line)?;
        let name = record[sym_col].trim();
        let stock = match symbols.iter().position(|s| s == name) {
            Some(i) => i,
            None if fixed => {
                return Err(BacktestError::UnknownSymbol {
                    symbol: name.to_string(),
                    line: Some(line),
                })
            }
            None => {
                symbols.push(name.to_string());
                symbols.len() - 1
            }
        };
        if seen.insert((ts, stock), line).is_some() {
            return Err(BacktestError::DuplicateTimestamp {
                timestamp: record[ts_col].to_string(),
                line,
            });
        }
        cells.push((ts, line, stock, parse_price(&record[price_col], name, line)?));
    }
    let mut rows: BTreeMap<i64, RawRow> = BTreeMap::new();
    for (ts, line, stock, price) in cells {
        let row = rows.entry(ts).or_insert_with(|| RawRow {
            line,
            prices: vec![None; symbols.len()],
        });
        row.line = row.line.min(line);
        row.prices[stock] = price;
    }
    Ok((symbols, rows))
}

/// Aligns prices on the union of timestamps, applying `schema.missing`.
/// Under forward-fill, leading rows that precede a symbol's first price
/// are dropped.
pub fn read_price_csv<R: Read>(input: R, schema: &CsvSchema) -> Result<PricePanel> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let (symbols, rows) = match schema.layout {
        Layout::Wide => read_wide(&mut reader, schema)?,
        Layout::Long => read_long(&mut reader, schema)?,
    };
    if symbols.is_empty() {
        return Err(BacktestError::Data {
            line: 1,
            msg: "no price columns".into(),
        });
    }
    let mut timestamps = Vec::with_capacity(rows.len());
    let mut columns = vec![Vec::with_capacity(rows.len()); symbols.len()];
    let mut last: Vec<Option<f64>> = vec![None; symbols.len()];
    let mut dropped = 0usize;
    for (ts, row) in rows {
        let filled: Vec<Option<f64>> = match schema.missing {
            MissingPolicy::DropRow => row.prices,
            MissingPolicy::ForwardFill => row
                .prices
                .iter()
                .zip(&mut last)
                .map(|(p, prev)| {
                    if p.is_some() {
                        *prev = *p;
                    }
                    *prev
                })
                .collect(),
        };
        if filled.iter().any(Option::is_none) {
            log::debug!("dropping row at line {} with missing prices", row.line);
            dropped += 1;
            continue;
        }
        timestamps.push(ts);
        for (col, p) in columns.iter_mut().zip(filled) {
            col.push(p.expect("checked above"));
        }
    }
    if dropped > 0 {
        log::info!("dropped {dropped} rows with missing prices");
    }
    Ok(PricePanel::new(symbols, timestamps, columns)?)
}

pub fn load_price_csv(path: &Path, schema: &CsvSchema) -> Result<PricePanel> {
    let file = File::open(path).map_err(|e| BacktestError::io(path, e))?;
    read_price_csv(file, schema)
}

/// Wide CSV; timestamps print as dates when they all fall on midnight UTC.
pub fn write_price_csv<W: Write>(prices: &PricePanel, out: W) -> Result<()> {
    let as_date = prices.timestamps().iter().all(|t| t.rem_euclid(86_400) == 0);
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["timestamp".to_string()];
    header.extend(prices.symbols().iter().cloned());
    writer.write_record(&header)?;
    for (t, &ts) in prices.timestamps().iter().enumerate() {
        let mut record = vec![format_timestamp(ts, as_date)];
        record.extend((0..prices.num_stocks()).map(|i| prices.row(i)[t].to_string()));
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|e| BacktestError::io("<csv output>", e))?;
    Ok(())
}

/// Prices starting at `start` whose log returns are `returns`. The first
/// price is stamped one spacing before the first return.
pub fn prices_from_returns(returns: &ReturnsPanel, start: f64) -> Result<PricePanel> {
    let ts = returns.timestamps();
    let spacing = if ts.len() >= 2 { ts[1] - ts[0] } else { 1 };
    let mut timestamps = Vec::with_capacity(ts.len() + 1);
    timestamps.push(ts.first().copied().unwrap_or(0) - spacing);
    timestamps.extend_from_slice(ts);
    let rows = (0..returns.num_stocks())
        .map(|i| {
            let mut row = Vec::with_capacity(ts.len() + 1);
            let mut log_price = start.ln();
            row.push(start);
            for &r in returns.row(i) {
                log_price += r;
                row.push(log_price.exp());
            }
            row
        })
        .collect();
    Ok(PricePanel::new(returns.symbols().to_vec(), timestamps, rows)?)
}
