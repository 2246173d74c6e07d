//! Statistical experiments and diagnostics. Each runner returns an
//! [`ExperimentReport`]; reports are written as a directory holding
//! report.json, summary.csv and manifest.json.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Sender;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::envgen::{PotentialField, PotentialSpec};
use crate::error::{Error, Result};
use crate::lyapunov::LyapunovProfile;
use crate::rng::derive_seed;

mod breakpoint;
mod clt;
mod gap;
mod homogeneous;
mod perturb;
mod tilt;
mod vcscan;

pub use breakpoint::run_breakpoint_approx;
pub use clt::{run_front_clt, run_logu_clt};
pub use gap::run_log_gap;
pub use homogeneous::run_homogeneous_baseline;
pub use perturb::run_perturbation_diag;
pub use tilt::{run_exact_ld_diag, run_tilt_concentration};
pub use vcscan::run_vc_scan;

pub const SCHEMA_VERSION: u32 = 1;

pub const EXPERIMENTS: &[&str] = &[
    "homogeneous_baseline",
    "log_gap",
    "front_clt",
    "logu_clt",
    "tilt_concentration",
    "perturbation_diag",
    "exact_ld_diag",
    "vc_scan",
    "breakpoint_approx",
];

/// One pass/fail check. `criterion` is the acceptance criterion it feeds, if any.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: Option<u8>,
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(criterion: Option<u8>, check: &str, passed: bool, detail: String) -> Self {
        Verdict {
            criterion,
            check: check.into(),
            passed,
            detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub crate_version: String,
    pub experiment: String,
    pub base_seed: u64,
    /// Seed indices and the environment seeds derived from them.
    pub seeds: Vec<u64>,
    pub env_seeds: Vec<u64>,
    pub config_hash: String,
    pub grid: Value,
}

/// Per-seed values; keys become summary.csv columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub seed: u64,
    pub values: BTreeMap<String, f64>,
}

impl Record {
    pub fn new(seed: u64) -> Self {
        Record {
            seed,
            values: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: &str, v: f64) -> &mut Self {
        self.values.insert(key.into(), v);
        self
    }

    pub fn get(&self, key: &str) -> f64 {
        self.values.get(key).copied().unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub name: String,
    pub config: RunConfig,
    pub records: Vec<Record>,
    pub aggregates: Map<String, Value>,
    pub verdicts: Vec<Verdict>,
    pub manifest: Manifest,
}

impl ExperimentReport {
    pub fn new(name: &str, cfg: &RunConfig, seeds: &[u64]) -> Self {
        let env_seeds = seeds.iter().map(|&i| env_seed(cfg.base_seed, i)).collect();
        let grid = json!({
            "pam": cfg.pam.grid(),
            "kpp": cfg.kpp.grid(),
            "functional": cfg.functional,
            "lyapunov_bvp": cfg.lyapunov.bvp,
        });
        ExperimentReport {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            config: cfg.clone(),
            records: Vec::new(),
            aggregates: Map::new(),
            verdicts: Vec::new(),
            manifest: Manifest {
                schema_version: SCHEMA_VERSION,
                crate_version: env!("CARGO_PKG_VERSION").into(),
                experiment: name.into(),
                base_seed: cfg.base_seed,
                seeds: seeds.to_vec(),
                env_seeds,
                config_hash: cfg.hash().unwrap_or_default(),
                grid,
            },
        }
    }

    pub fn aggregate<T: Serialize>(&mut self, key: &str, v: T) {
        let v = serde_json::to_value(v).unwrap_or(Value::Null);
        self.aggregates.insert(key.into(), v);
    }

    pub fn verdict(&mut self, criterion: Option<u8>, check: &str, passed: bool, detail: String) {
        self.verdicts.push(Verdict::new(criterion, check, passed, detail));
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    /// Verdicts feeding one acceptance criterion.
    pub fn criterion(&self, id: u8) -> Vec<&Verdict> {
        self.verdicts.iter().filter(|v| v.criterion == Some(id)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per seed, columns sorted by name.
    pub fn summary_csv(&self) -> String {
        let keys: BTreeSet<&String> = self.records.iter().flat_map(|r| r.values.keys()).collect();
        let mut s = String::from("seed");
        for k in &keys {
            s.push(',');
            s.push_str(k);
        }
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.seed.to_string());
            for k in &keys {
                s.push(',');
                if let Some(v) = r.values.get(*k) {
                    s.push_str(&v.to_string());
                }
            }
            s.push('\n');
        }
        s
    }

    /// Write report.json, summary.csv and manifest.json into `dir`.
    pub fn write(&self, dir: &Path, overwrite: bool) -> Result<PathBuf> {
        let files = [
            ("report.json", self.to_json()?),
            ("summary.csv", self.summary_csv()),
            ("manifest.json", serde_json::to_string_pretty(&self.manifest)?),
        ];
        write_dir(dir, &files, overwrite)
    }
}

/// Write `files` into `dir` atomically: they go to a sibling temp directory
/// that is renamed into place. An existing `dir` needs `overwrite`.
pub fn write_dir(dir: &Path, files: &[(&str, String)], overwrite: bool) -> Result<PathBuf> {
    if dir.exists() && !overwrite {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::AlreadyExists,
            format!("{} exists; pass --overwrite to replace it", dir.display()),
        )));
    }
    let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent)?;
    let leaf = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = parent.join(format!(".{leaf}.tmp-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    let res = (|| -> Result<()> {
        for (name, body) in files {
            fs::write(tmp.join(name), body)?;
        }
        Ok(())
    })();
    if let Err(e) = res {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::rename(&tmp, dir)?;
    Ok(dir.to_path_buf())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Progress {
    pub experiment: String,
    pub done: usize,
    pub total: usize,
}

/// Progress channel and cancellation flag shared by the fan-outs of a run.
#[derive(Clone, Default)]
pub struct RunContext {
    pub progress: Option<Sender<Progress>>,
    pub cancel: Arc<AtomicBool>,
}

impl RunContext {
    pub fn cancelled(&self) -> bool {
        self.cancel.load(Ordering::Relaxed)
    }

    pub fn check(&self) -> Result<()> {
        if self.cancelled() {
            Err(Error::Cancelled)
        } else {
            Ok(())
        }
    }
}

/// Map `f` over `items` in parallel; results come back in input order.
pub fn fan_out<T, I, F>(ctx: &RunContext, name: &str, items: &[I], f: F) -> Result<Vec<T>>
where
    T: Send,
    I: Sync,
    F: Fn(&I) -> Result<T> + Sync,
{
    let done = std::sync::atomic::AtomicUsize::new(0);
    let total = items.len();
    items
        .par_iter()
        .map(|it| {
            ctx.check()?;
            let r = f(it)?;
            let k = done.fetch_add(1, Ordering::Relaxed) + 1;
            if let Some(tx) = &ctx.progress {
                let _ = tx.send(Progress {
                    experiment: name.into(),
                    done: k,
                    total,
                });
            }
            Ok(r)
        })
        .collect()
}

/// Environment seed for seed index i.
pub fn env_seed(base: u64, i: u64) -> u64 {
    derive_seed(base, "env", i)
}

pub fn env_spec(cfg: &RunConfig, i: u64) -> PotentialSpec {
    cfg.potential.with_seed(env_seed(cfg.base_seed, i))
}

pub fn env_field(cfg: &RunConfig, i: u64) -> Result<PotentialField> {
    PotentialField::new(env_spec(cfg, i))
}

/// The profile of the configured potential; its v₀ is shared by every experiment.
pub fn profile(cfg: &RunConfig) -> Result<LyapunovProfile> {
    let spec = cfg.potential.with_seed(derive_seed(cfg.base_seed, "profile", 0));
    LyapunovProfile::build(&spec, &cfg.lyapunov)
}

pub(crate) fn require_vel(p: &LyapunovProfile) -> Result<()> {
    if p.spec.is_constant() || p.vel() {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "condition v0 > v_c fails (v0 = {}, v_c = {})",
            p.v0, p.vc
        )))
    }
}

/// Run an experiment by name.
pub fn run_experiment(name: &str, cfg: &RunConfig, ctx: &RunContext) -> Result<ExperimentReport> {
    match name {
        "homogeneous_baseline" => run_homogeneous_baseline(cfg, ctx),
        "log_gap" => run_log_gap(cfg, ctx),
        "front_clt" => run_front_clt(cfg, ctx),
        "logu_clt" => run_logu_clt(cfg, ctx),
        "tilt_concentration" => run_tilt_concentration(cfg, ctx),
        "perturbation_diag" => run_perturbation_diag(cfg, ctx),
        "exact_ld_diag" => run_exact_ld_diag(cfg, ctx),
        "vc_scan" => run_vc_scan(cfg, ctx),
        "breakpoint_approx" => run_breakpoint_approx(cfg, ctx),
        _ => Err(Error::Config(format!(
            "unknown experiment '{name}'; expected one of {}",
            EXPERIMENTS.join(", ")
        ))),
    }
}

/// Samples of a front trace at the step times inside [t0, t1].
pub(crate) fn trace_window(times: &[f64], pos: &[f64], t0: f64, t1: f64, every: usize) -> (Vec<f64>, Vec<f64>) {
    let mut ts = Vec::new();
    let mut ms = Vec::new();
    for (i, (&t, &m)) in times.iter().zip(pos).enumerate() {
        if i % every == 0 && t >= t0 - 1e-9 && t <= t1 + 1e-9 {
            ts.push(t);
            ms.push(m);
        }
    }
    (ts, ms)
}
