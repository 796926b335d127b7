use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stockloan"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Non-comment lines: the column header followed by the data rows.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn boundary_csv_layout() {
    let cfg = config("table1.json");
    let o = run(&["boundary", "--config", cfg.to_str().unwrap(), "--steps", "10"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("# stockloan boundary\n"));
    let r = rows(&text);
    assert_eq!(r[0], ["tau", "S_f", "a_tau", "residual"]);
    assert_eq!(r.len(), 12);
    // default precision: six significant digits
    assert_eq!(r[1][1], "1.15410");
}

#[test]
fn output_is_deterministic() {
    let cfg = config("table3.json");
    let args = ["rebate", "--config", cfg.to_str().unwrap(), "--steps", "10"];
    let first = run(&args);
    let second = run(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn flags_override_config() {
    let cfg = config("table2.json");
    let o = run(&[
        "price", "--config", cfg.to_str().unwrap(), "--spots", "100", "--taus", "0.5", "--steps", "10", "--precision", "3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let r = rows(&stdout(&o));
    assert_eq!(r[0], ["S", "tau", "value", "state", "error"]);
    assert_eq!(r.len(), 2);
    assert_eq!(r[1][0], "100");
    assert_eq!(r[1][1], "0.500");
}

#[test]
fn writes_to_out_file() {
    let dir = std::env::temp_dir().join(format!("stockloan-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("fee.csv");
    let cfg = config("table3.json");
    let o = run(&[
        "fee", "--config", cfg.to_str().unwrap(), "--steps", "10", "--principals", "0.6,0.7", "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    // two principals times three margin fractions
    assert_eq!(rows(&text).len(), 7);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn validation_failure_exits_one() {
    let cfg = config("table2.json");
    let o = run(&[
        "validate", "--config", cfg.to_str().unwrap(), "--steps", "10", "--tree-steps", "200", "--spots", "100",
        "--principals", "80", "--tol", "1e-12",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("fail"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["boundary", "--risk-free", "0.1"]).status.code(), Some(2));
    assert_eq!(run(&["price", "--config", "/no/such/file.json"]).status.code(), Some(2));
    assert_eq!(run(&["nonsense"]).status.code(), Some(2));
    let cfg = config("table1.json");
    let bad = run(&["boundary", "--config", cfg.to_str().unwrap(), "--sigma", "-0.4"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(bad.stdout.is_empty());
}

#[test]
fn all_rows_failing_exits_three() {
    // every spot is below the accrued debt
    let cfg = config("table2.json");
    let o = run(&["price", "--config", cfg.to_str().unwrap(), "--steps", "10", "--spots", "10,20", "--taus", "0.5"]);
    assert_eq!(o.status.code(), Some(3));
}
