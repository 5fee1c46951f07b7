use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use maintplan::analysis::{export_histogram_csv, policy_histogram, trend_report};
use maintplan::assignment::enumerate_assignments;
use maintplan::config::RunConfig;
use maintplan::degradation::{build_degradation_table, parse_wear_csv};
use maintplan::io::{read_policy, write_policy, write_values, SolveMeta};
use maintplan::maintenance::enumerate_decisions;
use maintplan::mdp::{extract_policy, value_iteration, MdpModel, Policy};
use maintplan::simulator::ClosedLoop;

#[derive(Parser)]
#[command(name = "maintplan", version, about = "Maintenance and machine-assignment planning")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML). Defaults to the bundled case study.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override a config key, e.g. `--set discount=0.9`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Seed for sampled trajectory stepping.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Decimal places for degradation probabilities.
    #[arg(long, global = true)]
    rounding: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the degradation-probability table from a tool-wear CSV.
    BuildProbs {
        /// Wear extract with columns case,time_min,wear_mm,op_condition.
        #[arg(long, default_value = "data/mill_wear_synthetic.csv")]
        wear: PathBuf,
    },
    /// Solve one or both MDPs and write policies, values and manifests.
    Solve {
        #[arg(long, value_enum, default_value_t = Which::Both)]
        which: Which,
    },
    /// Run configured trajectories under the solved policies.
    Simulate {
        /// Trajectory block to run; all blocks when omitted.
        #[arg(long)]
        trajectory: Option<String>,
        /// Directory holding the policy files; defaults to the output directory.
        #[arg(long)]
        policies: Option<PathBuf>,
    },
    /// Decision histograms and the trend report for solved policies.
    Analyze {
        #[arg(long)]
        policies: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    Maintenance,
    Assignment,
    Both,
}

#[derive(Serialize)]
struct Manifest {
    model: &'static str,
    dims: maintplan::config::Dims,
    num_states: usize,
    num_rows: usize,
    num_transitions: usize,
    discount: f64,
    tolerance: f64,
    max_iterations: usize,
    iterations: usize,
    final_residual: f64,
    converged: bool,
    wall_time_seconds: f64,
    config_sha256: String,
}

struct Run {
    config: RunConfig,
    out: PathBuf,
    seed: Option<u64>,
}

impl Run {
    fn new(common: &Common) -> Result<Self> {
        let mut overrides = common.overrides.clone();
        if let Some(k) = common.rounding {
            overrides.push(format!("degradation.rounding={k}"));
        }
        let config = match &common.config {
            Some(path) => RunConfig::load(path, &overrides)?,
            None => RunConfig::from_toml_with_overrides(RunConfig::case_study_text(), &overrides)?,
        };
        let out = common.out.clone().unwrap_or_else(|| config.out_dir.clone());
        Ok(Self {
            config,
            out,
            seed: common.seed,
        })
    }

    fn config_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.config.to_toml()?.as_bytes())))
    }

    fn meta(&self, num_states: usize) -> SolveMeta {
        SolveMeta {
            num_states,
            discount: self.config.discount,
            tolerance: self.config.tolerance,
        }
    }
}

/// Writes every file only after all of them have been produced.
fn write_outputs(dir: &Path, files: Vec<(String, Vec<u8>)>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, bytes) in files {
        let path = dir.join(&name);
        let tmp = dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn build_probs(run: &Run, wear: &Path) -> Result<()> {
    let c = &run.config;
    let file = fs::File::open(wear).with_context(|| format!("opening {}", wear.display()))?;
    let records = parse_wear_csv(file).with_context(|| format!("reading {}", wear.display()))?;
    let build = build_degradation_table(&records, &c.health_map()?, &c.wear_scaling(), c.degradation.rounding)?;
    for issue in &build.issues {
        eprintln!("warning: {issue:?}");
    }
    for case in &build.suspicious_cases {
        eprintln!("warning: case {case} has a negative wear rate");
    }
    build.table.require_complete(c.dims.operating_conditions)?;
    println!("condition  class  cases  rate_mm_per_min  raw_p     p");
    for r in &build.rates {
        println!(
            "{:>9}  {:<5}  {:>5}  {:>15.6}  {:<8.5}  {}{}",
            r.condition,
            r.class,
            r.cases,
            r.mean_rate_mm_per_min,
            r.raw_probability,
            r.probability,
            if r.clamped { " (clamped)" } else { "" }
        );
    }
    let mut csv = Vec::new();
    build.table.write_csv(&mut csv, Some(c.degradation.rounding as usize))?;
    write_outputs(&run.out, vec![("degradation_table.csv".into(), csv)])
}

fn solve_one(run: &Run, name: &'static str, mdp: &MdpModel, files: &mut Vec<(String, Vec<u8>)>) -> Result<()> {
    let c = &run.config;
    let start = Instant::now();
    let (values, report) = value_iteration(mdp, c.tolerance, c.max_iterations)?;
    let policy = extract_policy(mdp, &values)?;
    let wall = start.elapsed().as_secs_f64();
    println!(
        "{name}: {} states, {} iterations, residual {:e}, converged {} ({wall:.2} s)",
        mdp.num_states(),
        report.iterations,
        report.final_residual,
        report.converged
    );
    let meta = run.meta(mdp.num_states());
    let mut buf = Vec::new();
    write_policy(&mut buf, &meta, &policy)?;
    files.push((format!("{name}_policy.csv"), buf));
    let mut buf = Vec::new();
    write_values(&mut buf, &meta, &values)?;
    files.push((format!("{name}_values.csv"), buf));
    let manifest = Manifest {
        model: name,
        dims: c.dims.clone(),
        num_states: mdp.num_states(),
        num_rows: mdp.num_rows(),
        num_transitions: mdp.num_transitions(),
        discount: c.discount,
        tolerance: c.tolerance,
        max_iterations: c.max_iterations,
        iterations: report.iterations,
        final_residual: report.final_residual,
        converged: report.converged,
        wall_time_seconds: wall,
        config_sha256: run.config_hash()?,
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    files.push((format!("{name}_manifest.json"), json));
    Ok(())
}

fn solve(run: &Run, which: Which) -> Result<()> {
    let c = &run.config;
    let table = c.degradation_table()?;
    // Build and validate everything requested before solving anything.
    let mut models = Vec::new();
    if which != Which::Assignment {
        models.push((
            "maintenance",
            c.maintenance_model_with(table.clone())?.build(c.discount)?,
        ));
    }
    if which != Which::Maintenance {
        models.push(("assignment", c.assignment_model_with(&table)?.build(c.discount)?));
    }
    let mut files = Vec::new();
    for (name, mdp) in &models {
        solve_one(run, name, mdp, &mut files)?;
    }
    write_outputs(&run.out, files)
}

fn load_policy(dir: &Path, name: &str, states: usize) -> Result<Policy> {
    let path = dir.join(format!("{name}_policy.csv"));
    let file = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let (meta, policy) = read_policy(file).with_context(|| format!("reading {}", path.display()))?;
    if meta.num_states != states {
        bail!(
            "{} covers {} states but the configured {name} model has {states}",
            path.display(),
            meta.num_states
        );
    }
    Ok(policy)
}

fn simulate(run: &Run, trajectory: Option<&str>, policies: Option<&Path>) -> Result<()> {
    let c = &run.config;
    let specs = match trajectory {
        Some(name) => vec![c.trajectory(name)?],
        None if c.trajectory.is_empty() => bail!("the configuration has no trajectory blocks"),
        None => c.trajectory.iter().collect(),
    };
    let table = c.degradation_table()?;
    let maintenance = c.maintenance_model_with(table.clone())?;
    let assignment = c.assignment_model_with(&table)?;
    let dir = policies.unwrap_or(&run.out);
    let maintenance_policy = load_policy(dir, "maintenance", maintenance.state_count())?;
    let assignment_policy = load_policy(dir, "assignment", assignment.state_count())?;
    let closed_loop = ClosedLoop {
        maintenance: &maintenance,
        maintenance_policy: &maintenance_policy,
        assignment: &assignment,
        assignment_policy: &assignment_policy,
        coupling: c.coupling,
        task_map: &c.assignment.task_map,
    };
    let mut files = Vec::new();
    for spec in specs {
        let log = closed_loop
            .run(&spec.to_config(run.seed))
            .with_context(|| format!("trajectory {}", spec.name))?;
        let mut buf = Vec::new();
        log.write_csv(&mut buf)?;
        files.push((format!("trajectory_{}.csv", spec.name), buf));
    }
    write_outputs(&run.out, files)
}

fn analyze(run: &Run, policies: Option<&Path>) -> Result<()> {
    let c = &run.config;
    let maintenance_decisions = enumerate_decisions(&c.maintenance_config())?;
    let assignment_decisions = enumerate_assignments(c.dims.machines, c.dims.tasks)?;
    let dir = policies.unwrap_or(&run.out);
    let pm = load_policy(
        dir,
        "maintenance",
        maintplan::maintenance::state_count(&c.maintenance_config())?,
    )?;
    let pa = load_policy(
        dir,
        "assignment",
        maintplan::assignment::assignment_state_count(&c.assignment_config())?,
    )?;
    let label = |labels: Vec<String>| move |d: usize| labels.get(d).cloned().unwrap_or_else(|| format!("#{d}"));
    for (name, policy, count) in [
        ("maintenance", &pm, maintenance_decisions.len()),
        ("assignment", &pa, assignment_decisions.len()),
    ] {
        if let Some(&d) = policy.as_slice().iter().find(|&&d| d >= count) {
            bail!("{name} policy uses decision {d}, but only {count} decisions exist");
        }
    }
    let hm = policy_histogram(&pm, label(maintenance_decisions.iter().map(|d| d.label()).collect()));
    let ha = policy_histogram(&pa, label(assignment_decisions.iter().map(|d| d.label()).collect()));
    let report = trend_report(&hm, &ha)?;
    println!("{report}");
    let mut files = Vec::new();
    for (name, h) in [("maintenance", &hm), ("assignment", &ha)] {
        let mut buf = Vec::new();
        export_histogram_csv(h, &mut buf)?;
        files.push((format!("histogram_{name}.csv"), buf));
    }
    files.push(("trend_report.txt".into(), format!("{report}\n").into_bytes()));
    write_outputs(&run.out, files)
}

fn run(cli: Cli) -> Result<()> {
    let run = Run::new(&cli.common)?;
    match &cli.command {
        Command::BuildProbs { wear } => build_probs(&run, wear),
        Command::Solve { which } => solve(&run, *which),
        Command::Simulate { trajectory, policies } => simulate(&run, trajectory.as_deref(), policies.as_deref()),
        Command::Analyze { policies } => analyze(&run, policies.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
