use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::mpsc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use randfront::acceptance::{Suite, CRITERIA};
use randfront::bbmre::{replica_estimates, replicas_csv};
use randfront::config::RunConfig;
use randfront::envgen::grid_csv;
use randfront::experiments::{self, env_field, env_spec, write_dir, Progress, RunContext};
use randfront::front::{InitialCondition, SolutionTrajectory, SolveOptions};
use randfront::kppsolve::{offspring_to_F, solve_kpp};
use randfront::pamsolve::solve_pam;
use randfront::rng::derive_seed;

#[derive(Parser)]
#[command(name = "randfront", version, about = "Fronts of randomized F-KPP and PAM equations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set pam.dx=0.025 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads for the parallel fan-outs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Replace an existing output directory.
    #[arg(long, global = true)]
    overwrite: bool,
    /// No progress on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample the potential of environment 0 on a grid.
    GenEnv {
        #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
        x0: f64,
        #[arg(long, default_value_t = 0.01)]
        dx: f64,
        #[arg(long, default_value_t = 2001)]
        n: usize,
    },
    /// Build the Lyapunov profile of the configured potential.
    Profile,
    /// Solve the parabolic Anderson model in environment 0.
    SolvePam,
    /// Solve the randomized F-KPP equation in environment 0.
    SolveKpp,
    /// Branching simulation against the PDE solutions.
    Bbmre,
    /// Run a named experiment.
    Experiment { name: String },
    /// Run acceptance criteria and print one verdict line each.
    Verify {
        /// Comma-separated criterion ids; all by default.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p, &cli.set)?,
        None => RunConfig::from_toml_with_overrides("", &cli.set)?,
    };
    if let Ok(out) = std::env::var("RANDFRONT_OUT") {
        cfg.output_dir = out;
    }
    Ok(cfg)
}

fn context(quiet: bool) -> RunContext {
    if quiet {
        return RunContext::default();
    }
    let (tx, rx) = mpsc::channel::<Progress>();
    std::thread::spawn(move || {
        for p in rx {
            eprint!("\r{} {}/{}   ", p.experiment, p.done, p.total);
            if p.done == p.total {
                eprintln!();
            }
        }
    });
    RunContext {
        progress: Some(tx),
        ..RunContext::default()
    }
}

fn out_dir(cfg: &RunConfig, leaf: &str) -> PathBuf {
    Path::new(&cfg.output_dir).join(leaf)
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    let cfg = load(&cli)?;
    let config_toml = cfg.to_toml()?;
    let ow = cli.overwrite;
    match &cli.cmd {
        Cmd::GenEnv { x0, dx, n } => {
            let spec = env_spec(&cfg, 0);
            let field = env_field(&cfg, 0)?;
            let files = [
                ("potential.csv", grid_csv(&field, *x0, *dx, *n)),
                ("spec.json", serde_json::to_string_pretty(&spec)?),
                ("config.toml", config_toml),
            ];
            report(write_dir(&out_dir(&cfg, "gen-env"), &files, ow)?);
        }
        Cmd::Profile => {
            let p = experiments::profile(&cfg)?;
            println!("v0 = {}, v_c = {}, v0 > v_c: {}", p.v0, p.vc, p.vel());
            let files = [("profile.json", p.to_json()?), ("config.toml", config_toml)];
            report(write_dir(&out_dir(&cfg, "profile"), &files, ow)?);
        }
        Cmd::SolvePam => {
            let field = env_field(&cfg, 0)?;
            let traj = solve_pam(&field, &cfg.pam.ic, &cfg.pam.grid(), &cfg.pam.options())?;
            report(write_dir(&out_dir(&cfg, "solve-pam"), &trajectory_files(&traj, config_toml), ow)?);
        }
        Cmd::SolveKpp => {
            let field = env_field(&cfg, 0)?;
            let traj = solve_kpp(&field, &cfg.kpp.nonlinearity, &cfg.kpp.ic, &cfg.kpp.grid(), &cfg.kpp.options())?;
            report(write_dir(&out_dir(&cfg, "solve-kpp"), &trajectory_files(&traj, config_toml), ow)?);
        }
        Cmd::Bbmre => {
            let files = bbmre(&cfg, config_toml)?;
            report(write_dir(&out_dir(&cfg, "bbmre"), &files, ow)?);
        }
        Cmd::Experiment { name } => {
            let mut cfg = cfg;
            cfg.experiment.name = name.clone();
            let ctx = context(cli.quiet);
            let rep = experiments::run_experiment(name, &cfg, &ctx)?;
            for v in &rep.verdicts {
                let tag = v.criterion.map(|c| format!(" [criterion {c}]")).unwrap_or_default();
                println!("{} {}{tag}: {}", if v.passed { "PASS" } else { "FAIL" }, v.check, v.detail);
            }
            report(rep.write(&out_dir(&cfg, name), ow)?);
        }
        Cmd::Verify { criteria } => {
            let ids = if criteria.is_empty() { CRITERIA.to_vec() } else { criteria.clone() };
            let mut suite = Suite::new(cfg.base_seed, context(cli.quiet));
            let mut ok = true;
            for id in ids {
                let o = suite.run(id).with_context(|| format!("criterion {id}"))?;
                println!("{}", o.line());
                ok &= o.acceptable();
            }
            return Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn report(dir: PathBuf) {
    println!("wrote {}", dir.display());
}

fn trajectory_files(traj: &SolutionTrajectory, config_toml: String) -> Vec<(&'static str, String)> {
    let mut bp = String::from("a,x,t\n");
    for f in &traj.fronts {
        for (x, t) in &f.breakpoints {
            bp.push_str(&format!("{},{},{}\n", f.threshold, x, t));
        }
    }
    vec![
        ("fronts.csv", traj.fronts_csv()),
        ("snapshots.csv", traj.snapshots_csv()),
        ("breakpoints.csv", bp),
        ("config.toml", config_toml),
    ]
}

fn bbmre(cfg: &RunConfig, config_toml: String) -> Result<Vec<(&'static str, String)>> {
    let b = &cfg.bbmre;
    if b.ts.is_empty() || b.xs.is_empty() {
        bail!("bbmre.xs and bbmre.ts must be non-empty");
    }
    let field = env_field(cfg, 0)?;
    let horizon = b.ts.iter().cloned().fold(0.0, f64::max);
    let opts = SolveOptions::new(horizon, vec![0.5]).with_snapshots(b.ts.clone());
    let ic = InitialCondition::heaviside();
    let pam = solve_pam(&field, &ic, &cfg.pam.grid(), &opts)?;
    let kpp = solve_kpp(&field, &offspring_to_F(&b.law)?, &ic, &cfg.kpp.grid(), &opts)?;
    let at = |traj: &SolutionTrajectory, t: f64, x: f64| {
        traj.snapshot_at(t).and_then(|s| s.ln_u(x)).map(f64::exp).unwrap_or(f64::NAN)
    };
    let mut summary = String::from(
        "x,t,mean_count,mean_count_se,pam,mean_delta,mean_z,survival,survival_se,kpp,survival_delta,survival_z,cap_hits\n",
    );
    let mut reps = String::new();
    let mut k = 0u64;
    for &t in &b.ts {
        for &x in &b.xs {
            let seed = derive_seed(cfg.base_seed, "bbmre", k);
            k += 1;
            let (rows, w, m) = replica_estimates(&field, &b.law, x, t, b.reps, b.cap, seed)?;
            let (u, v) = (at(&pam, t, x), at(&kpp, t, x));
            let hits = rows.iter().filter(|r| r.cap_hit).count();
            summary.push_str(&format!(
                "{x},{t},{},{},{u},{},{},{},{},{v},{},{},{hits}\n",
                m.value,
                m.se,
                m.value - u,
                m.z_against(u),
                w.value,
                w.se,
                w.value - v,
                w.z_against(v)
            ));
            for line in replicas_csv(&rows).lines().skip(1) {
                reps.push_str(&format!("{x},{t},{line}\n"));
            }
        }
    }
    Ok(vec![
        ("summary.csv", summary),
        ("replicas.csv", format!("x,t,replica,population,count_leq,cap_hit\n{reps}")),
        ("config.toml", config_toml),
    ])
}
