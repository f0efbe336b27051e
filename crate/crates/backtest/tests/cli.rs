use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tc"))
        .args(args)
        .current_dir(dir)
        .env_remove("TC_OUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SPEC: &str = r#"
num_stocks = 3
num_periods = 260
ground_truth = "+1*tanh(S1_t - S2_{t-1})"
signal_scale = 0.01
noise_scale = 0.005
seed = 4
"#;

const CONFIG: &str = r#"
window = 10
lag = 1
refit = 60
rounds = 2
targets = ["S0"]
seed = 1
output_dir = "out"

[data]
kind = "csv"
path = "prices.csv"

[company]
population = 10
"#;

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("spec.toml"), SPEC).unwrap();
    fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    let o = tc(&["synth", "--spec", "spec.toml", "--out", "prices.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    dir
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn synth_writes_a_wide_price_table() {
    let dir = workspace();
    let text = fs::read_to_string(dir.path().join("prices.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("timestamp,S0,S1,S2"));
    assert_eq!(lines.next(), Some("1999-12-31,100,100,100"));
    // header, starting row, one row per return
    assert_eq!(text.lines().count(), 1 + 1 + 260);
}

#[test]
fn backtest_then_inspect() {
    let dir = workspace();
    let o = tc(&["backtest", "offline", "--config", "run.toml"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("1 stocks, ACC "), "{}", stdout(&o));
    let out = dir.path().join("out");
    let names = files(&out);
    assert!(names.iter().all(|n| n.contains("-s1-offline.")), "{names:?}");
    let state = names.iter().find(|n| n.ends_with("state.S0.json")).unwrap();
    let state = out.join(state);

    let o = tc(&["inspect", "--state", state.to_str().unwrap(), "--top", "3"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("target S0 scored over feature times"), "{text}");
    assert_eq!(text.matches("\n#").count(), 3);
    assert!(text.contains("census"));

    // rescoring on a window reloads the data, from any working directory
    let elsewhere = tempfile::tempdir().unwrap();
    let o = tc(&["inspect", "--state", state.to_str().unwrap(), "--top", "2", "--window", "30:90"], elsewhere.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("feature times 30..90"));
}

#[test]
fn flags_override_the_config() {
    let dir = workspace();
    let o = tc(
        &["backtest", "online", "--config", "run.toml", "--preset", "tc-linear", "--seed", "7", "--out", "flagged"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let names = files(&dir.path().join("flagged"));
    assert!(names.iter().all(|n| n.contains("-s7-online.")), "{names:?}");
    let log = names.iter().find(|n| n.ends_with("run.log")).unwrap();
    let log = fs::read_to_string(dir.path().join("flagged").join(log)).unwrap();
    assert!(log.lines().next().unwrap().ends_with("preset tc-linear"));
}

#[test]
fn output_directory_from_environment() {
    let dir = workspace();
    let o = Command::new(env!("CARGO_BIN_EXE_tc"))
        .args(["backtest", "offline", "--config", "run.toml"])
        .current_dir(dir.path())
        .env("TC_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!files(&dir.path().join("from-env")).is_empty());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn errors_exit_nonzero_with_one_line() {
    let dir = workspace();
    let cases: &[&[&str]] = &[
        &["backtest", "offline", "--config", "missing.toml"],
        &["backtest", "offline", "--config", "run.toml", "--preset", "tc-fast"],
        &["inspect", "--state", "run.toml"],
        &["inspect", "--state", "nothing.json", "--window", "9:3"],
    ];
    for args in cases {
        let o = tc(args, dir.path());
        assert!(!o.status.success(), "{args:?}");
        let err = stderr(&o);
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("tc: "), "{err}");
        assert!(err.matches("os error").count() <= 1, "{err}");
    }
    let o = tc(&["backtest", "offline", "--config", "run.toml", "--preset", "tc-fast"], dir.path());
    assert!(stderr(&o).contains("tc-fast"));
}
