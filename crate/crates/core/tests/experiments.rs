use std::path::PathBuf;
use std::sync::atomic::Ordering;

use randfront::config::RunConfig;
use randfront::error::Error;
use randfront::experiments::{env_seed, fan_out, run_experiment, ExperimentReport, Record, RunContext};

fn constant_cfg() -> RunConfig {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/constant.toml");
    RunConfig::load(&p, &[]).unwrap()
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = constant_cfg();
    let back = RunConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(cfg, back);
    let d = RunConfig::default();
    assert_eq!(RunConfig::from_toml_str(&d.to_toml().unwrap()).unwrap(), d);
}

#[test]
fn overrides_and_errors() {
    let cfg = RunConfig::from_toml_with_overrides("", &["pam.dx=0.025".into(), "base_seed=7".into()]).unwrap();
    assert_eq!(cfg.pam.dx, 0.025);
    assert_eq!(cfg.base_seed, 7);
    assert!(RunConfig::from_toml_with_overrides("", &["pam.dx".into()]).is_err());
    assert!(RunConfig::from_toml_with_overrides("", &["pam.nope=1".into()]).is_err());
    let e = RunConfig::from_toml_str("[pam]\ndx = 0.05\nbogus = 1\n").unwrap_err();
    assert!(e.to_string().contains("line 3"), "{e}");
    let e = RunConfig::from_toml_with_overrides("[pam]\nbogus = 1\n", &[]).unwrap_err();
    assert!(e.to_string().contains("line 2"), "{e}");
}

#[test]
fn environment_seeds_are_distinct() {
    let s: std::collections::BTreeSet<u64> = (0..1000).map(|i| env_seed(5, i)).collect();
    assert_eq!(s.len(), 1000);
    assert_ne!(env_seed(5, 0), env_seed(6, 0));
}

#[test]
fn fan_out_keeps_order_and_cancels() {
    let ctx = RunContext::default();
    let items: Vec<u64> = (0..200).collect();
    let out = fan_out(&ctx, "t", &items, |&i| Ok(i * i)).unwrap();
    assert_eq!(out, items.iter().map(|i| i * i).collect::<Vec<_>>());
    ctx.cancel.store(true, Ordering::Relaxed);
    assert!(matches!(fan_out(&ctx, "t", &items, |&i| Ok(i)), Err(Error::Cancelled)));
}

#[test]
fn unknown_experiment_lists_names() {
    let e = run_experiment("nope", &RunConfig::default(), &RunContext::default()).unwrap_err();
    assert!(e.to_string().contains("vc_scan"));
}

#[test]
fn summary_csv_layout() {
    let mut rep = ExperimentReport::new("x", &RunConfig::default(), &[0, 1]);
    let mut a = Record::new(0);
    a.set("b", 2.0).set("a", 1.0);
    let mut b = Record::new(1);
    b.set("a", 3.0);
    rep.records = vec![a, b];
    assert_eq!(rep.summary_csv(), "seed,a,b\n0,1,2\n1,3,\n");
    assert_eq!(rep.manifest.env_seeds, vec![env_seed(0, 0), env_seed(0, 1)]);
}

#[test]
fn homogeneous_report_is_deterministic_and_write_once() {
    let cfg = constant_cfg();
    let ctx = RunContext::default();
    let a = run_experiment("homogeneous_baseline", &cfg, &ctx).unwrap();
    let b = run_experiment("homogeneous_baseline", &cfg, &ctx).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert!(!a.verdicts.is_empty());
    assert_eq!(a.manifest.config_hash, b.manifest.config_hash);

    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("homogeneous_baseline");
    a.write(&dir, false).unwrap();
    for f in ["report.json", "summary.csv", "manifest.json"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let back: ExperimentReport = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(back.verdicts, a.verdicts);
    let e = a.write(&dir, false).unwrap_err();
    assert!(e.to_string().contains("--overwrite"));
    a.write(&dir, true).unwrap();
    let leftovers = std::fs::read_dir(tmp.path()).unwrap().count();
    assert_eq!(leftovers, 1);
}
