//! `geomotion` command-line runner.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use geomotion::barriers::BarrierKind;
use geomotion::runner::{
    field_table, load_scenario, run_batch, sample_acceleration_field, write_outputs, GridSpec, MetricMode, Scenario,
    VelocitySet,
};
use geomotion::Error;

#[derive(Parser)]
#[command(name = "geomotion", version, about = "Geodesic motion generation with region-avoiding metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Kinetic,
    CollisionFree,
}

#[derive(Clone, Copy, ValueEnum)]
enum BarrierArg {
    Exp,
    Log,
    Inv,
}

#[derive(Subcommand)]
enum Command {
    /// Solve scenarios and write trajectories and a report.
    Run {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        metric: Option<MetricArg>,
        #[arg(long, value_enum)]
        barrier: Option<BarrierArg>,
    },
    /// Sample geodesic accelerations over a grid of the first two joints.
    Field {
        scenario: PathBuf,
        /// X0:X1:NX,Y0:Y1:NY
        #[arg(long, allow_hyphen_values = true)]
        grid: GridSpec,
        /// JSON file with `joint` and/or `task` velocity lists.
        #[arg(long)]
        velocities: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a scenario.
    Validate { scenario: PathBuf },
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_SOLVER: u8 = 2;

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_VALIDATION)
}

fn prepare(path: &PathBuf, seed: Option<u64>, metric: Option<MetricArg>, barrier: Option<BarrierArg>) -> Result<Scenario, Error> {
    let mut s = load_scenario(path)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(m) = metric {
        s.metric_mode = match m {
            MetricArg::Kinetic => MetricMode::KineticOnly,
            MetricArg::CollisionFree => MetricMode::CollisionFree,
        };
    }
    if let Some(b) = barrier {
        let kind = match b {
            BarrierArg::Exp => BarrierKind::Exponential,
            BarrierArg::Log => BarrierKind::Logarithmic,
            BarrierArg::Inv => BarrierKind::InversePower,
        };
        s = s.with_barrier_override(kind)?;
        s.validate()?;
    }
    Ok(s)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // bad arguments count as validation errors; help and version are not errors
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Validate { scenario } => match load_scenario(&scenario) {
            Ok(s) => {
                println!("{}: ok ({} dof, {} regions, {} keypoints)", s.name, s.chain.dof(), s.regions.len(), s.keypoints.len());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Run {
            scenarios,
            out,
            seed,
            metric,
            barrier,
        } => {
            let mut loaded = Vec::new();
            for path in &scenarios {
                match prepare(path, seed, metric, barrier) {
                    Ok(s) => loaded.push(s),
                    Err(e) => {
                        eprintln!("{}:", path.display());
                        return fail(&e);
                    }
                }
            }
            let (report, outputs) = run_batch(&loaded);
            let wanted: Vec<bool> = loaded.iter().map(|s| s.outputs.trajectory).collect();
            if let Err(e) = write_outputs(&out, &report, &outputs, &wanted) {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_SOLVER);
            }
            for t in &report.trajectories {
                match &t.error {
                    Some(e) => println!("{}: failed: {e}", t.name),
                    None => println!(
                        "{}: length {:.6}, energy {:.6}, violations: limits {}, self {}, obstacles {}",
                        t.name,
                        t.riemannian_length,
                        t.energy,
                        t.violations.out_of_limits,
                        t.violations.self_collision,
                        t.violations.obstacle_collision
                    ),
                }
            }
            if report.summary.failed > 0 {
                ExitCode::from(EXIT_SOLVER)
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::Field {
            scenario,
            grid,
            velocities,
            out,
        } => {
            let s = match load_scenario(&scenario) {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            let vel: VelocitySet = match std::fs::read_to_string(&velocities)
                .map_err(|e| Error::Io(format!("{}: {e}", velocities.display())))
                .and_then(|t| serde_json::from_str(&t).map_err(|e| Error::Schema(format!("{}: {e}", velocities.display()))))
            {
                Ok(v) => v,
                Err(e) => return fail(&e),
            };
            let metric = match s.metric() {
                Ok(m) => m,
                Err(e) => return fail(&e),
            };
            let rows = match sample_acceleration_field(&metric, Some(&s.chain), &grid, &vel) {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            let table = field_table(&rows);
            match out {
                Some(p) => {
                    if let Err(e) = std::fs::write(&p, table) {
                        eprintln!("error: {}: {e}", p.display());
                        return ExitCode::from(EXIT_SOLVER);
                    }
                }
                None => print!("{table}"),
            }
            ExitCode::SUCCESS
        }
    }
}
