use std::fs::File;
use std::io::BufWriter;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use trader_company::config::{DataSource, SyntheticSource};
use trader_company::csv_io::{prices_from_returns, write_price_csv};
use trader_company::{emit_report, inspect, run_backtest, BacktestConfig, CompanyState, Mode, Preset};
use trader_company_core::generate_synthetic_panel;

#[derive(Parser)]
#[command(name = "tc", version, about = "Trader-Company backtests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Offline,
    Online,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the first part of the data and evaluate out of sample.
    Backtest {
        #[arg(value_enum)]
        mode: ModeArg,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "TC_OUT_DIR")]
        out: Option<PathBuf>,
    },
    /// Print the best Traders of a saved Company and its usage census.
    Inspect {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Feature times `t1:t2` (half-open) to score over.
        #[arg(long)]
        window: Option<String>,
    },
    /// Write a planted-alpha price panel as wide CSV.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_window(s: &str) -> anyhow::Result<Range<usize>> {
    let (a, b) = s.split_once(':').context("window must look like t1:t2")?;
    let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
    if a >= b {
        bail!("empty window {a}:{b}");
    }
    Ok(a..b)
}

fn absolute_data_path(config: &mut BacktestConfig, base: &Path) {
    if let DataSource::Csv { path, .. } = &mut config.data {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Backtest {
            mode,
            config,
            preset,
            seed,
            out,
        } => {
            let mut cfg = BacktestConfig::load(&config)?;
            let base = std::path::absolute(&config)?
                .parent()
                .map_or_else(|| PathBuf::from("/"), Path::to_path_buf);
            absolute_data_path(&mut cfg, &base);
            if let Some(p) = preset {
                cfg.preset = p.parse::<Preset>()?;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            cfg.validate()?;
            let panel = cfg.data.load(cfg.seed, &base)?;
            let mode = match mode {
                ModeArg::Offline => Mode::Offline,
                ModeArg::Online => Mode::Online,
            };
            let outcome = run_backtest(&cfg, &panel, mode)?;
            let artifacts = emit_report(&outcome, &cfg.output_dir)?;
            let avg = &outcome.report.average;
            println!(
                "{} stocks, ACC {:.2}%, AR {:.2}%, SR {}, CR {}",
                outcome.stocks.len(),
                avg.accuracy,
                avg.annualized_return,
                avg.sharpe.map_or("-".into(), |v| format!("{v:.3}")),
                avg.calmar.map_or("-".into(), |v| format!("{v:.3}")),
            );
            println!("metrics: {}", artifacts.metrics_csv.display());
        }
        Command::Inspect { state, top, window } => {
            let saved = CompanyState::load(&state)?;
            let window = window.as_deref().map(parse_window).transpose()?;
            let panel = match window {
                Some(_) => Some(saved.data.load(saved.seed, Path::new("."))?),
                None => None,
            };
            print!("{}", inspect(&saved, panel.as_ref(), top, window)?);
        }
        Command::Synth { spec, out } => {
            let text = std::fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let source: SyntheticSource = toml::from_str(&text).map_err(|e| anyhow::anyhow!("{}", e.message()))?;
            let generated = generate_synthetic_panel(&source.to_spec(0)?)?;
            let prices = prices_from_returns(&generated.panel, 100.0)?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_price_csv(&prices, BufWriter::new(file))?;
        }
    }
    Ok(())
}

/// The error chain on one line, skipping causes already quoted by their
/// parent.
fn one_line(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg.replace('\n', " ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tc: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}
