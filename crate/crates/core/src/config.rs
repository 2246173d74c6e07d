//! Run configuration: one TOML file, unknown keys rejected, scalar overrides
//! through dot paths such as `pam.dx=0.025`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bbmre::{OffspringLaw, TubeGrid, DEFAULT_CAP};
use crate::envgen::PotentialSpec;
use crate::error::{Error, Result};
use crate::front::{GridConfig, IcKind, InitialCondition, SolveOptions};
use crate::hitting::FunctionalConfig;
use crate::kppsolve::Nonlinearity;
use crate::lyapunov::ProfileConfig;

fn default_output() -> String {
    "out".into()
}

fn default_potential() -> PotentialSpec {
    PotentialSpec::constant(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: String,
    #[serde(default = "default_potential")]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub pam: PdeBlock,
    #[serde(default)]
    pub kpp: KppBlock,
    #[serde(default)]
    pub lyapunov: ProfileConfig,
    #[serde(default)]
    pub bbmre: BbmreBlock,
    #[serde(default)]
    pub functional: FunctionalConfig,
    #[serde(default)]
    pub experiment: ExperimentBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            base_seed: 0,
            output_dir: default_output(),
            potential: default_potential(),
            pam: PdeBlock::default(),
            kpp: KppBlock::default(),
            lyapunov: ProfileConfig::default(),
            bbmre: BbmreBlock::default(),
            functional: FunctionalConfig::default(),
            experiment: ExperimentBlock::default(),
        }
    }
}

/// Solver block shared by [pam] and [kpp].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeBlock {
    pub dx: f64,
    pub dt: f64,
    pub w_left: f64,
    pub w_right: f64,
    pub recenter: bool,
    pub startup_substeps: usize,
    pub horizon: f64,
    pub thresholds: Vec<f64>,
    pub ic: InitialCondition,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<f64>,
    pub snapshot_times: Vec<f64>,
    pub probes: Vec<f64>,
}

impl Default for PdeBlock {
    fn default() -> Self {
        let g = GridConfig::default();
        PdeBlock {
            dx: g.dx,
            dt: g.dt,
            w_left: g.w_left,
            w_right: g.w_right,
            recenter: g.recenter,
            startup_substeps: g.startup_substeps,
            horizon: 10.0,
            thresholds: vec![0.5],
            ic: InitialCondition::default(),
            snapshot_every: None,
            snapshot_times: Vec::new(),
            probes: Vec::new(),
        }
    }
}

impl PdeBlock {
    pub fn grid(&self) -> GridConfig {
        GridConfig {
            dx: self.dx,
            dt: self.dt,
            w_left: self.w_left,
            w_right: self.w_right,
            recenter: self.recenter,
            startup_substeps: self.startup_substeps,
        }
    }

    pub fn options(&self) -> SolveOptions {
        SolveOptions {
            horizon: self.horizon,
            thresholds: self.thresholds.clone(),
            snapshot_times: self.snapshot_times.clone(),
            snapshot_every: self.snapshot_every,
            probes: self.probes.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KppBlock {
    pub dx: f64,
    pub dt: f64,
    pub w_left: f64,
    pub w_right: f64,
    pub recenter: bool,
    pub startup_substeps: usize,
    pub horizon: f64,
    pub thresholds: Vec<f64>,
    pub ic: InitialCondition,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<f64>,
    pub snapshot_times: Vec<f64>,
    pub probes: Vec<f64>,
    pub nonlinearity: Nonlinearity,
}

impl Default for KppBlock {
    fn default() -> Self {
        let p = PdeBlock::default();
        KppBlock {
            dx: p.dx,
            dt: p.dt,
            w_left: p.w_left,
            w_right: p.w_right,
            recenter: p.recenter,
            startup_substeps: p.startup_substeps,
            horizon: p.horizon,
            thresholds: p.thresholds,
            ic: p.ic,
            snapshot_every: None,
            snapshot_times: Vec::new(),
            probes: Vec::new(),
            nonlinearity: Nonlinearity::Logistic,
        }
    }
}

impl KppBlock {
    pub fn pde(&self) -> PdeBlock {
        PdeBlock {
            dx: self.dx,
            dt: self.dt,
            w_left: self.w_left,
            w_right: self.w_right,
            recenter: self.recenter,
            startup_substeps: self.startup_substeps,
            horizon: self.horizon,
            thresholds: self.thresholds.clone(),
            ic: self.ic,
            snapshot_every: self.snapshot_every,
            snapshot_times: self.snapshot_times.clone(),
            probes: self.probes.clone(),
        }
    }

    pub fn grid(&self) -> GridConfig {
        self.pde().grid()
    }

    pub fn options(&self) -> SolveOptions {
        self.pde().options()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BbmreBlock {
    pub law: OffspringLaw,
    pub cap: usize,
    pub reps: usize,
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    pub tube: TubeGrid,
}

impl Default for BbmreBlock {
    fn default() -> Self {
        BbmreBlock {
            law: OffspringLaw::binary(),
            cap: DEFAULT_CAP,
            reps: 10_000,
            xs: vec![0.0, 1.0, 2.0],
            ts: vec![1.0, 2.0],
            tube: TubeGrid::default(),
        }
    }
}

/// Experiment parameters; empty lists select the experiment's own defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentBlock {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_seeds: Option<usize>,
    pub seeds: Vec<u64>,
    pub n_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    pub h_grid: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
    /// Velocity; defaults to the profile's v₀.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub velocity: Option<f64>,
    /// PAM level M (or a).
    pub level_pam: f64,
    /// F-KPP level ε.
    pub level_kpp: f64,
    pub scan_a: Vec<f64>,
    pub scan_ei: Vec<f64>,
    pub scan_eps: Vec<f64>,
    pub tolerances: BTreeMap<String, f64>,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        ExperimentBlock {
            name: String::new(),
            n_seeds: None,
            seeds: Vec::new(),
            n_grid: Vec::new(),
            t_grid: Vec::new(),
            x_grid: Vec::new(),
            h_grid: Vec::new(),
            t_min: 20.0,
            t_max: 200.0,
            velocity: None,
            level_pam: 0.5,
            level_kpp: 0.5,
            scan_a: Vec::new(),
            scan_ei: Vec::new(),
            scan_eps: Vec::new(),
            tolerances: BTreeMap::new(),
        }
    }
}

impl ExperimentBlock {
    pub fn tolerance(&self, key: &str, default: f64) -> f64 {
        self.tolerances.get(key).copied().unwrap_or(default)
    }

    /// Explicit seeds, else `n_seeds` (or `default_n`) consecutive indices.
    pub fn seed_indices(&self, default_n: usize) -> Vec<u64> {
        if !self.seeds.is_empty() {
            self.seeds.clone()
        } else {
            (0..self.n_seeds.unwrap_or(default_n) as u64).collect()
        }
    }

    pub fn grid_or(&self, grid: &[f64], default: &[f64]) -> Vec<f64> {
        if grid.is_empty() {
            default.to_vec()
        } else {
            grid.to_vec()
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse, apply `key.path=value` overrides, then validate.
    pub fn from_toml_with_overrides(s: &str, overrides: &[String]) -> Result<Self> {
        // typed pass over the raw text so schema errors carry line and column
        toml::from_str::<RunConfig>(s).map_err(|e| Error::Config(e.to_string()))?;
        let mut table: toml::Table = s.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_toml_with_overrides(&s, overrides)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.potential.validate()?;
        self.pam.grid().validate()?;
        self.pam.ic.validate()?;
        self.kpp.grid().validate()?;
        self.kpp.ic.validate()?;
        if self.kpp.ic.kind == IcKind::ScaledHeaviside {
            return Err(Error::Config("kpp.ic cannot exceed 1; use heaviside or box".into()));
        }
        self.lyapunov.validate()?;
        self.bbmre.law.validate()?;
        if self.bbmre.cap == 0 || self.bbmre.reps == 0 {
            return Err(Error::Config("bbmre.cap and bbmre.reps must be positive".into()));
        }
        for a in self.pam.thresholds.iter().chain(&self.kpp.thresholds) {
            if !(*a > 0.0) {
                return Err(Error::Config(format!("thresholds must be positive, got {a}")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        use sha2::{Digest, Sha256};
        let d = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(d.iter().map(|b| format!("{b:02x}")).collect())
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Set `a.b.c=value` inside a TOML table, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad override path '{path}'")));
    }
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path '{path}' crosses a non-table key '{k}'")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), parse_scalar(raw.trim()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_overrides() {
        let src = r#"
base_seed = 7
[potential]
kind = "matern_bump"
ei = 0.5
es = 2.5
a = 2.0
[pam]
horizon = 20.0
thresholds = [0.5, 0.1]
"#;
        let cfg = RunConfig::from_toml_str(src).unwrap();
        let again = RunConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
        let o = RunConfig::from_toml_with_overrides(src, &["pam.dx=0.025".into(), "experiment.name=vc_scan".into()]).unwrap();
        assert_eq!(o.pam.dx, 0.025);
        assert_eq!(o.experiment.name, "vc_scan");
    }

    #[test]
    fn unknown_keys_rejected_with_position() {
        let err = RunConfig::from_toml_str("[pam]\nbogus = 1\n").unwrap_err().to_string();
        assert!(err.contains("bogus") && err.contains("line"), "{err}");
    }
}
