mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use collabq::experiments::{self, SweepSpec};
use collabq::model::TieRouting;
use collabq::policies::policy_by_id;
use collabq::presets;
use collabq::simulator::{self, SimConfig};
use collabq::solver::{diff, solve_optimal};
use collabq::thresholds::{condition1, solve_thresholds, Orientation};
use collabq::{CostRegime, State, SystemParams};

use config::{usage, ParamArgs, UsageError};

#[derive(Parser)]
#[command(name = "collabq", version, about = "Optimal and heuristic control of a collaborative clearing system")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the optimality equations and write value and difference tables.
    Solve {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        imax: Option<u32>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Report actual and heuristic thresholds with Condition 1 verdicts.
    Thresholds {
        #[command(flatten)]
        params: ParamArgs,
        /// Treat h1/mu1 = h2/mu2 as the collaborative-costlier case.
        #[arg(long)]
        ties_highcost: bool,
        /// Also write thresholds.csv into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relative errors of the heuristic and benchmark policies over a grid.
    Sweep {
        /// Numerical-study table to reproduce (5 to 10).
        #[arg(long, conflicts_with = "spec")]
        table: Option<u32>,
        /// JSON sweep specification.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Monte Carlo estimate of the expected clearing cost under a policy.
    Simulate {
        #[command(flatten)]
        params: ParamArgs,
        /// heuristic, optimal, pi1..pi4 or tpi1..tpi4.
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        i0: Option<u32>,
        /// Jobs at Station 1 in the initial state (default C1).
        #[arg(long)]
        k0: Option<u32>,
        /// Jobs at Station 2 in the initial state (default C1 - k0).
        #[arg(long)]
        l0: Option<u32>,
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the JSON estimate here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the structural invariant suite; exits 1 on any counterexample.
    Verify {
        /// Built-in grid; without it the parameters given by flags are checked.
        #[arg(long)]
        grid: Option<Grid>,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        imax: Option<u32>,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// D and H along the queue axis for one threshold index.
    Curve {
        #[command(flatten)]
        params: ParamArgs,
        /// k for the collaborative orientation, l for the independent one.
        #[arg(long)]
        index: Option<u32>,
        #[arg(long)]
        imax: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Grid {
    Table4,
    Examples,
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    Failed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("thread pool configured once");
    }
    match run(cli.command) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(command: Command) -> anyhow::Result<Status> {
    match command {
        Command::Solve { params, imax, out } => {
            let file = params.file()?;
            let p = params.resolve(&file)?;
            cmd_solve(&p, imax.or(file.imax).unwrap_or(20), &out)
        }
        Command::Thresholds { params, ties_highcost, out } => {
            let p = params.resolve(&params.file()?)?;
            let ties = if ties_highcost { TieRouting::CollabCostlier } else { TieRouting::IndepCostlier };
            cmd_thresholds(&p, ties, out.as_deref())
        }
        Command::Sweep { table, spec, out } => {
            let spec = match (table, spec) {
                (Some(n), None) => SweepSpec::study_table(n).map_err(|e| usage(e.to_string()))?,
                (None, Some(path)) => {
                    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text).map_err(|e| usage(format!("parsing {}: {e}", path.display())))?
                }
                _ => return Err(usage("give one of --table or --spec")),
            };
            cmd_sweep(&spec, &out)
        }
        Command::Simulate { params, policy, i0, k0, l0, reps, seed, out } => {
            let file = params.file()?;
            let p = params.resolve(&file)?;
            let policy = policy.or(file.policy.clone()).unwrap_or_else(|| "heuristic".into());
            let i0 = i0.or(file.i0).unwrap_or(20);
            let k0 = k0.or(file.k0).unwrap_or(p.c1);
            let l0 = match l0.or(file.l0) {
                Some(l) => l,
                None => p.c1.checked_sub(k0).ok_or_else(|| usage("--k0 exceeds C1"))?,
            };
            let config = SimConfig {
                seed: seed.or(file.seed).unwrap_or(7),
                replications: reps.or(file.reps).unwrap_or(100_000),
                initial_state: State::new(i0, k0, l0),
            };
            cmd_simulate(&p, &policy, &config, out.as_deref())
        }
        Command::Verify { grid, params, imax, out } => {
            let file = params.file()?;
            let points = match grid {
                Some(Grid::Table4) => presets::table4_grid(),
                Some(Grid::Examples) => presets::EXAMPLES.iter().map(|e| e.params).collect(),
                None => vec![params.resolve(&file)?],
            };
            cmd_verify(&points, imax.or(file.imax).unwrap_or(40), out.as_deref())
        }
        Command::Curve { params, index, imax, out } => {
            let file = params.file()?;
            let p = params.resolve(&file)?;
            let index = index.or(file.index).ok_or_else(|| usage("missing --index"))?;
            cmd_curve(&p, index, imax.or(file.imax).unwrap_or(30), out.as_deref())
        }
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn out_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating directory {}", dir.display()))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> anyhow::Result<()> {
    w.flush().with_context(|| format!("writing {}", path.display()))
}

fn cmd_solve(p: &SystemParams, imax: u32, out: &Path) -> anyhow::Result<Status> {
    out_dir(out)?;
    let table = solve_optimal(p, imax);
    let diffs = diff(&table)?;
    let values_path = out.join("values.csv");
    let mut w = create(&values_path)?;
    table.write_csv(&mut w).with_context(|| format!("writing {}", values_path.display()))?;
    finish(w, &values_path)?;
    let diffs_path = out.join("diffs.csv");
    let mut w = create(&diffs_path)?;
    diffs.write_csv(&mut w).with_context(|| format!("writing {}", diffs_path.display()))?;
    finish(w, &diffs_path)?;
    println!("{}\n{}", values_path.display(), diffs_path.display());
    Ok(Status::Ok)
}

fn cmd_thresholds(p: &SystemParams, ties: TieRouting, out: Option<&Path>) -> anyhow::Result<Status> {
    let regime = p.cost_regime(ties);
    let (actual, heuristic) = solve_thresholds(p, regime)?;
    let label = match actual.orientation {
        Orientation::Collaborative => "k",
        Orientation::Independent => "l",
    };
    let stdout = io::stdout();
    let mut w = stdout.lock();
    for (a, h) in actual.entries.iter().zip(&heuristic.entries) {
        let cond = match regime {
            CostRegime::Lowcost => condition1(p, a.index).to_string(),
            CostRegime::Highcost => "NotApplicable".to_string(),
        };
        writeln!(w, "{label}={},actual={},heuristic={},cond1={cond}", a.index, a.threshold, h.threshold)?;
    }
    if let Some(dir) = out {
        out_dir(dir)?;
        let path = dir.join("thresholds.csv");
        let mut f = create(&path)?;
        actual.write_csv(&mut f, true).with_context(|| format!("writing {}", path.display()))?;
        heuristic.write_csv(&mut f, false).with_context(|| format!("writing {}", path.display()))?;
        finish(f, &path)?;
    }
    Ok(Status::Ok)
}

fn cmd_sweep(spec: &SweepSpec, out: &Path) -> anyhow::Result<Status> {
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let result = experiments::sweep(spec)?;
    out_dir(out)?;
    let raw_path = out.join("sweep_raw.csv");
    let mut w = create(&raw_path)?;
    result.write_raw_csv(&mut w).with_context(|| format!("writing {}", raw_path.display()))?;
    finish(w, &raw_path)?;
    let table_path = out.join("sweep_table.csv");
    let mut w = create(&table_path)?;
    result.write_table_csv(&mut w).with_context(|| format!("writing {}", table_path.display()))?;
    finish(w, &table_path)?;
    result.write_table_csv(io::stdout().lock())?;
    Ok(Status::Ok)
}

fn cmd_simulate(p: &SystemParams, policy: &str, config: &SimConfig, out: Option<&Path>) -> anyhow::Result<Status> {
    if !config.initial_state.is_member(p) {
        return Err(usage(format!("initial state {} is not a valid state", config.initial_state)));
    }
    let table = (policy == "optimal").then(|| Arc::new(solve_optimal(p, config.initial_state.i.max(1))));
    let pol = policy_by_id(p, policy, table).map_err(|e| usage(e.to_string()))?;
    let est = simulator::estimate(p, &pol, config)?;
    if let Some(msg) = &est.warning {
        eprintln!("warning: {msg}");
    }
    let json = serde_json::to_string_pretty(&est)?;
    match out {
        Some(path) => fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => println!("{json}"),
    }
    Ok(Status::Ok)
}

fn cmd_verify(points: &[SystemParams], imax: u32, out: Option<&Path>) -> anyhow::Result<Status> {
    let report = experiments::verify(points, imax)?;
    for r in &report.results {
        let verdict = if r.failures == 0 { "ok" } else { "FAIL" };
        println!("{verdict:4} {:45} {:>10} checked {:>6} failed", r.name, r.checked, r.failures);
        if let Some(c) = &r.first_counterexample {
            println!("     first counterexample: {c}");
        }
    }
    println!("{} points, i_max {}: {}", report.points, report.i_max, if report.passed { "passed" } else { "FAILED" });
    if let Some(path) = out {
        let json = serde_json::to_string_pretty(&report)?;
        fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(if report.passed { Status::Ok } else { Status::Failed })
}

fn cmd_curve(p: &SystemParams, index: u32, imax: u32, out: Option<&Path>) -> anyhow::Result<Status> {
    let regime = p.cost_regime(TieRouting::default());
    let points = experiments::dh_curve(p, index, imax, regime).map_err(|e| usage(e.to_string()))?;
    match out {
        Some(path) => {
            let mut w = create(path)?;
            experiments::write_curve_csv(&points, &mut w).with_context(|| format!("writing {}", path.display()))?;
            finish(w, path)?;
        }
        None => experiments::write_curve_csv(&points, io::stdout().lock())?,
    }
    Ok(Status::Ok)
}
