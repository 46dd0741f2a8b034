use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_decopt");

fn decopt(args: &[&str], out_dir: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .env("DECOPT_OUTPUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, algo: &str, alpha: f64) -> String {
    let text = format!(
        "[algorithm]\nname = \"{algo}\"\nalpha = {alpha:?}\n\n[problem.synthetic]\np = 6\nkappa = 10.0\n\n\
         [network]\nn = 5\ndensity = 0.6\n\n[run]\nmax_iters = 50\nseed = 3\n"
    );
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn bound_prints_the_stepsize() {
    let dir = tempfile::tempdir().unwrap();
    let o = decopt(&["bound", "ndcg", "--L", "1", "--sigma", "0", "--n", "1"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim().parse::<f64>().unwrap(), 0.03125);

    let o = decopt(
        &["bound", "dmbfgs", "--L", "1", "--mu", "1", "--sigma", "0", "--n", "1", "--l", "0.5", "--u", "2"],
        dir.path(),
    );
    let alpha: f64 = stdout(&o).trim().parse().unwrap();
    assert!((alpha - 1.0 / 120.0).abs() < 1e-15);

    let o = decopt(&["bound", "gt", "--L", "1", "--sigma", "0", "--n", "1"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn run_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "gt.toml", "gt", 0.05);
    let o = decopt(&["run", &cfg], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("termination    Budget"));
    let csv = std::fs::read_to_string(dir.path().join("gt.csv")).unwrap();
    assert!(csv.starts_with("iter,comm_volume,optimality_error"));
    assert_eq!(csv.lines().count(), 52);
}

#[test]
fn divergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "dgd.toml", "dgd", 50.0);
    let o = decopt(&["run", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("Divergence"));
}

#[test]
fn config_and_io_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[algorthm]\nname = \"gt\"\n").unwrap();
    let o = decopt(&["validate", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("algorthm"));

    let missing = dir.path().join("missing.toml");
    let o = decopt(&["run", missing.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn validate_reports_the_network() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "v.toml", "ndcg", 0.01);
    let o = decopt(&["validate", &cfg], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("nodes          5"));
    assert!(text.contains("mixing valid   true"));
}

#[test]
fn compare_writes_aligned_traces() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.toml", "gt", 0.05);
    let b = write_config(dir.path(), "b.toml", "dgd", 0.05);
    let o = decopt(&["compare", &a, &b], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("comparison.csv").exists());
    let one = decopt(&["compare", &a], dir.path());
    assert!(!one.status.success());
}
