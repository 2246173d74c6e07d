use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_randfront"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(out: &Path, args: &[&str]) -> Output {
    bin().env("RANDFRONT_OUT", out).arg("--quiet").args(args).output().expect("spawn")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn verify_closed_forms_on_constant_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("constant.toml");
    let o = run(dir.path(), &["verify", "--config", cfg.to_str().unwrap(), "--criteria", "1"]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("criterion  1 [PASS]"));
}

#[test]
fn window_breach_names_w_r() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["solve-pam", "--set", "pam.w_right=2", "--set", "pam.recenter=false", "--set", "pam.horizon=20"]);
    assert!(!o.status.success());
    assert!(text(&o).contains("W_R"), "{}", text(&o));
}

#[test]
fn solve_is_deterministic_and_write_once() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("matern.toml");
    let args = ["solve-kpp", "--config", cfg.to_str().unwrap(), "--set", "kpp.horizon=5", "--set", "kpp.snapshot_times=[5.0]"];
    assert!(run(a.path(), &args).status.success());
    assert!(run(b.path(), &args).status.success());
    for f in ["fronts.csv", "snapshots.csv", "breakpoints.csv"] {
        let x = std::fs::read(a.path().join("solve-kpp").join(f)).unwrap();
        let y = std::fs::read(b.path().join("solve-kpp").join(f)).unwrap();
        assert!(!x.is_empty() || f == "breakpoints.csv");
        assert_eq!(x, y, "{f} differs");
    }
    let again = run(a.path(), &args);
    assert!(!again.status.success());
    assert!(text(&again).contains("--overwrite"));
    let mut with = args.to_vec();
    with.push("--overwrite");
    assert!(run(a.path(), &with).status.success());
}

#[test]
fn bbmre_output_independent_of_jobs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["bbmre", "--set", "bbmre.reps=2000", "--set", "bbmre.ts=[1.0]"];
    let mut one = args.to_vec();
    one.extend(["--jobs", "1"]);
    let mut four = args.to_vec();
    four.extend(["--jobs", "4"]);
    assert!(run(a.path(), &one).status.success());
    assert!(run(b.path(), &four).status.success());
    for f in ["summary.csv", "replicas.csv"] {
        let x = std::fs::read_to_string(a.path().join("bbmre").join(f)).unwrap();
        let y = std::fs::read_to_string(b.path().join("bbmre").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
    let s = std::fs::read_to_string(a.path().join("bbmre/summary.csv")).unwrap();
    assert_eq!(s.lines().count(), 4);
}

#[test]
fn gen_env_writes_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("matern.toml");
    let o = run(dir.path(), &["gen-env", "--config", cfg.to_str().unwrap(), "--x0", "-1", "--dx", "0.5", "--n", "5"]);
    assert!(o.status.success(), "{}", text(&o));
    let csv = std::fs::read_to_string(dir.path().join("gen-env/potential.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "x,xi");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("-1,"));
}

#[test]
fn config_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[pam]\nbogus = 1\n").unwrap();
    let o = run(dir.path(), &["profile", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("bogus") && text(&o).contains("line"), "{}", text(&o));
    let o = run(dir.path(), &["experiment", "no_such_thing"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("vc_scan"));
}
