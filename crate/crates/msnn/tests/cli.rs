use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn msnn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msnn")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
}

#[test]
fn list_cases_prints_six_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = msnn(&["list-cases"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().any(|l| l.starts_with("poisson2d-slit") && l.contains("151x151")));
}

#[test]
fn zero_epochs_reproduce_the_coarse_solution() {
    let dir = tempfile::tempdir().unwrap();
    let out = msnn(&["run", "--case", "approx1d-cont", "--epochs", "0", "--seeds", "4", "--output", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fields = fs::read_to_string(dir.path().join("o/fields.csv")).unwrap();
    assert!(fields.starts_with("x,u_coarse,u_fine,u_total,u_exact,du_coarse,du_fine,du_total,du_exact\n"));
    assert_eq!(column(&fields, "u_total"), column(&fields, "u_coarse"));
    assert_eq!(fields.lines().count(), 2002);
    assert!(dir.path().join("o/seed_4/trace.csv").exists());
    let report = fs::read_to_string(dir.path().join("o/report.txt")).unwrap();
    assert!(report.contains("parameters: 51"));
    assert!(report.contains("wall time:"));
    assert!(report.contains("# resolved config"));
    assert!(report.contains("epochs = 0"));
    assert!(report.contains("seeds = [4]"));
}

#[test]
fn configured_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[case]\nid = \"laplace1d\"\n[net]\nseeds = [0, 1]\n[train]\nepochs = 300\nlog_every = 25\n[output]\nsample = [101]\n";
    fs::write(dir.path().join("exp.toml"), cfg).unwrap();
    for (out, extra) in [("a", None), ("b", Some("--parallel-seeds"))] {
        let mut args = vec!["run", "--config", "exp.toml", "--output", out];
        args.extend(extra);
        let o = msnn(&args, dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["trace.csv", "fields.csv", "net.txt", "seed_0/trace.csv", "seed_1/trace.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let trace = fs::read_to_string(dir.path().join("a/trace.csv")).unwrap();
    assert!(trace.starts_with("epoch,loss,l2_error\n0,"));
    assert!(trace.lines().last().unwrap().starts_with("300,"));
    let fields = fs::read_to_string(dir.path().join("a/fields.csv")).unwrap();
    assert_eq!(fields.lines().count(), 102);
}

#[test]
fn smoothing_flags_override_the_case_default() {
    let dir = tempfile::tempdir().unwrap();
    let o = msnn(&["run", "--case", "laplace1d", "--epochs", "0", "--seeds", "0", "--no-smoothing", "--output", "o"], dir.path());
    assert!(o.status.success());
    let report = fs::read_to_string(dir.path().join("o/report.txt")).unwrap();
    assert!(report.contains("smoothing = false"));
    let fields = fs::read_to_string(dir.path().join("o/fields.csv")).unwrap();
    assert_eq!(column(&fields, "u_total"), column(&fields, "u_coarse"));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[case]\nid = \"approx1d-cont\"\n[loss]\nvariant = \"energy\"\n").unwrap();
    for args in [
        &["run", "--config", "bad.toml"][..],
        &["run", "--case", "nope"],
        &["run", "--case", "approx1d-cont", "--s", "3"],
        &["run"],
        &["run", "--case", "laplace1d", "--bogus"],
        &["reference", "--case", "laplace1d"],
    ] {
        let o = msnn(args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn divergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = msnn(&["run", "--case", "laplace1d", "--epochs", "50", "--seeds", "0", "--learning-rate", "1e308", "--output", "o"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
