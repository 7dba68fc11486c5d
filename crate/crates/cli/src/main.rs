use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;
use quadmit::analysis::{compare_damping, run_batch, run_scenario, RunOutcome, RunReport};
use quadmit::scenario::PRESET_NAMES;
use quadmit::sensing::{calibrate, largest_gap_split, read_pressure_log};
use quadmit::{passivity_audit, plot, AdmittanceParams, IoError, PlotGroup, Scenario, SimTrace};

/// Simulate and analyse variable-admittance co-manipulation with a suction cup.
///
/// Set ADMIT_LOG (error, warn, info, debug, trace) to control log output.
#[derive(Parser)]
#[command(name = "quadmit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace, report and plots.
    Run {
        /// Scenario JSON file, or the name of a bundled preset.
        scenario: String,
        /// Output directory [default: out/SCENARIO_NAME].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario's noise seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every scenario file in a directory.
    Batch {
        dir: PathBuf,
        /// Output directory [default: DIR/results].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare constant-low, constant-high and power-dependent damping.
    CompareDamping {
        /// Directory holding the three scenario files.
        dir: PathBuf,
    },
    /// Check a trace against the passivity inequality.
    Audit {
        trace: PathBuf,
        /// Scenario the trace came from, for its controller parameters.
        #[arg(long)]
        scenario: Option<String>,
        /// Largest acceptable violation, J.
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
    },
    /// Fit sensor calibration coefficients from a pressure log.
    Calibrate {
        pressures: PathBuf,
        /// Weight of the calibration load, N.
        #[arg(long)]
        weight: f64,
        /// Time separating no-load from loaded samples [default: middle of the largest gap].
        #[arg(long)]
        split: Option<f64>,
        /// Write the calibration JSON here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the bundled preset scenarios into a directory.
    Presets { dir: PathBuf },
}

enum Failure {
    Fault,
    Error(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Error(e.to_string())
    }
}

fn load_scenario(arg: &str) -> Result<Scenario, IoError> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(s) = Scenario::preset(arg) {
            return Ok(s);
        }
    }
    Scenario::load(path)
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.into(), source }
}

fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    outcome.trace.write_csv(&dir.join("trace.csv"))?;
    let report = dir.join("report.json");
    let text = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
    std::fs::write(&report, text + "\n").map_err(io(&report))?;
    for group in PlotGroup::ALL {
        plot(&outcome.trace, group, &dir.join(format!("{}.svg", group.name())))?;
    }
    Ok(())
}

fn summary(r: &RunReport) -> String {
    let detached = r.detached_at.map_or("no".to_owned(), |t| format!("at {t:.3} s"));
    format!(
        "{}: E = {:.3} J, min f_m = {:.3} N, min chamber force = {:.3} N, detached {}, zero crossings {}, \
         completion {}, passivity violation {:.2e} J",
        r.name,
        r.total_energy,
        r.min_margin,
        r.min_chamber_force,
        detached,
        r.zero_crossings,
        r.completion_time.map_or("-".to_owned(), |t| format!("{t:.3} s")),
        r.audit.worst,
    )
}

fn run(scenario: &str, out: Option<PathBuf>, seed: Option<u64>) -> Result<(), Failure> {
    let s = load_scenario(scenario)?;
    let outcome = run_scenario(&s, seed)?;
    let dir = out.unwrap_or_else(|| Path::new("out").join(&s.name));
    write_outputs(&outcome, &dir)?;
    println!("{}", summary(&outcome.report));
    println!("wrote {}", dir.display());
    if outcome.report.faulted {
        error!("{}: object detached with the guard enabled", s.name);
        return Err(Failure::Fault);
    }
    Ok(())
}

fn batch(dir: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let out = out.unwrap_or_else(|| dir.join("results"));
    let results = run_batch(dir)?;
    if results.is_empty() {
        return Err(Failure::Error(format!("no scenario files in {}", dir.display())));
    }
    let (mut faults, mut errors) = (0, 0);
    for (path, result) in results {
        match result.and_then(|o| write_outputs(&o, &out.join(&o.scenario.name)).map(|_| o)) {
            Ok(o) => {
                println!("{}", summary(&o.report));
                faults += usize::from(o.report.faulted);
            }
            Err(e) => {
                println!("{}: {e}", path.display());
                errors += 1;
            }
        }
    }
    println!("wrote {}", out.display());
    match (errors, faults) {
        (0, 0) => Ok(()),
        (0, _) => Err(Failure::Fault),
        (n, _) => Err(Failure::Error(format!("{n} scenario(s) could not be run"))),
    }
}

fn compare(dir: &Path) -> Result<(), Failure> {
    let scenarios =
        quadmit::analysis::scenario_files(dir)?.iter().map(|p| Scenario::load(p)).collect::<Result<Vec<_>, _>>()?;
    let c = compare_damping(&scenarios)?;
    for r in [&c.low, &c.high, &c.variable] {
        println!("{}", summary(r));
    }
    println!("E_high / E_variable = {:.3}", c.energy_ratio_high_variable);
    println!("zero crossings: low {} variable {}", c.low.zero_crossings, c.variable.zero_crossings);
    if [&c.low, &c.high, &c.variable].iter().any(|r| r.faulted) {
        return Err(Failure::Fault);
    }
    Ok(())
}

fn audit(trace: &Path, scenario: Option<String>, tolerance: f64) -> Result<(), Failure> {
    let params = match scenario {
        Some(s) => load_scenario(&s)?.controller,
        None => AdmittanceParams::default(),
    };
    let trace = SimTrace::read_csv(trace)?;
    let report =
        passivity_audit(&trace, &params).ok_or_else(|| Failure::Error("trace needs at least two rows".into()))?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if report.worst >= tolerance {
        return Err(Failure::Error(format!(
            "worst violation {:.3e} J exceeds tolerance {tolerance:.3e} J",
            report.worst
        )));
    }
    Ok(())
}

fn calibrate_cmd(pressures: &Path, weight: f64, split: Option<f64>, out: Option<PathBuf>) -> Result<(), Failure> {
    let samples = read_pressure_log(pressures)?;
    let split = match split {
        Some(t) => t,
        None => {
            largest_gap_split(&samples).ok_or_else(|| Failure::Error("pressure log needs at least two rows".into()))?
        }
    };
    let cal = calibrate(&samples, split, weight)?;
    match out {
        Some(path) => {
            cal.save(&path)?;
            println!("wrote {}", path.display());
        }
        None => println!("{}", serde_json::to_string_pretty(&cal).expect("calibration serializes")),
    }
    Ok(())
}

fn presets(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    for name in PRESET_NAMES {
        let path = dir.join(format!("{name}.json"));
        Scenario::preset(name).expect("listed preset").save(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ADMIT_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, out, seed } => run(&scenario, out, seed),
        Command::Batch { dir, out } => batch(&dir, out),
        Command::CompareDamping { dir } => compare(&dir),
        Command::Audit { trace, scenario, tolerance } => audit(&trace, scenario, tolerance),
        Command::Calibrate { pressures, weight, split, out } => calibrate_cmd(&pressures, weight, split, out),
        Command::Presets { dir } => presets(&dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Fault) => ExitCode::from(1),
        Err(Failure::Error(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
