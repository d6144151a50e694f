use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use trackloc::harness::{
    compute_report, replay, run_scenario, run_sweep, HarnessError, MetricsReport, ReplayOptions, RunLog, Scenario,
    SweepSpec, Termination,
};
use trackloc::map::save_map;

#[derive(Parser)]
#[command(name = "trackloc", version, about = "Particle-filter localization and MPPI driving on a schematic track map")]
struct Cli {
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the schematic map of a scenario and write it to <out>/map.smap.
    BuildMap {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the closed loop and write <out>/run.log and <out>/report.txt.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the arc-length error profile as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Re-run the filter offline over a recorded log.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Supplies the map and the filter configuration.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
    /// Compute metrics from a recorded log.
    Report {
        #[arg(long)]
        log: PathBuf,
        /// Optional; enables the arc-length profile and frame accuracy.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
    /// Run a parameter grid and print a comparison table.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
    /// Dump a binary log as text.
    Export {
        #[arg(long)]
        log: PathBuf,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    /// Crash, divergence or component failure during a run.
    RuntimeFailure,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario, HarnessError> {
    let mut sc = Scenario::load(path)?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    Ok(sc)
}

fn emit_report(report: &MetricsReport, out: Option<&Path>, csv: bool, quiet: bool) -> Result<(), HarnessError> {
    if !quiet {
        print!("{report}");
    }
    if let Some(dir) = out {
        write_file(&dir.join("report.txt"), report.to_string().as_bytes())?;
        if csv {
            write_file(&dir.join("error_profile.csv"), report.profile_csv().as_bytes())?;
        }
    } else if csv && !quiet {
        print!("{}", report.profile_csv());
    }
    Ok(())
}

fn status_of(report: &MetricsReport) -> Status {
    if report.crashes > 0 || report.divergences > 0 || report.failures > 0 {
        Status::RuntimeFailure
    } else {
        Status::Ok
    }
}

fn execute(cli: Cli) -> Result<Status, HarnessError> {
    let quiet = cli.quiet;
    match cli.command {
        Command::BuildMap { scenario, out } => {
            let prep = load_scenario(&scenario, None)?.prepare()?;
            ensure_dir(&out)?;
            let path = out.join("map.smap");
            save_map(&prep.map, &path).map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))?;
            if let Some(cl) = &prep.centerline {
                write_file(&out.join("centerline.txt"), cl.to_text().as_bytes())?;
            }
            if !quiet {
                println!(
                    "wrote {} ({}x{} px at {} px/m)",
                    path.display(),
                    prep.map.width(),
                    prep.map.height(),
                    prep.map.resolution()
                );
            }
            Ok(Status::Ok)
        }
        Command::Run { scenario, seed, out, csv } => {
            let prep = load_scenario(&scenario, seed)?.prepare()?;
            let mut log = RunLog::default();
            let outcome = run_scenario(&prep, &mut log)?;
            if let Some(dir) = &out {
                ensure_dir(dir)?;
                log.save(&dir.join("run.log"))?;
            }
            let report = compute_report(&log, prep.centerline.as_ref(), Some(&prep.map), 1.0)?;
            if !quiet {
                println!("terminated: {} after {:.3} s", outcome.termination.label(), outcome.duration);
            }
            emit_report(&report, out.as_deref(), csv, quiet)?;
            if let Termination::Failure(msg) = &outcome.termination {
                eprintln!("run failed: {msg}");
            }
            Ok(status_of(&report))
        }
        Command::Replay { log, scenario, seed, out, csv } => {
            let sc = Scenario::load(&scenario)?;
            let prep = sc.prepare()?;
            let recorded = RunLog::load(&log)?;
            let opts = ReplayOptions { filter: sc.filter.clone(), init: sc.init, seed, bin_width: 1.0 };
            let result = replay(&recorded, prep.map.clone(), prep.centerline.as_ref(), &opts)?;
            if let Some(dir) = &out {
                ensure_dir(dir)?;
                result.log.save(&dir.join("replay.log"))?;
            }
            emit_report(&result.report, out.as_deref(), csv, quiet)?;
            Ok(Status::Ok)
        }
        Command::Report { log, scenario, out, csv } => {
            let recorded = RunLog::load(&log)?;
            let prep = match scenario {
                Some(p) => Some(Scenario::load(&p)?.prepare()?),
                None => None,
            };
            let report = compute_report(
                &recorded,
                prep.as_ref().and_then(|p| p.centerline.as_ref()),
                prep.as_ref().map(|p| p.map.as_ref()),
                1.0,
            )?;
            if let Some(dir) = &out {
                ensure_dir(dir)?;
            }
            emit_report(&report, out.as_deref(), csv, quiet)?;
            Ok(Status::Ok)
        }
        Command::Sweep { scenario, grid, seed, out, csv } => {
            let sc = load_scenario(&scenario, seed)?;
            let text = fs::read_to_string(&grid).map_err(|e| HarnessError::io(&grid, e))?;
            let spec = SweepSpec::from_toml_str(&text)?;
            let table = run_sweep(&sc, &spec)?;
            if !quiet {
                print!("{}", table.to_text());
            }
            if let Some(dir) = &out {
                ensure_dir(dir)?;
                write_file(&dir.join("sweep.txt"), table.to_text().as_bytes())?;
                if csv {
                    write_file(&dir.join("sweep.csv"), table.to_csv().as_bytes())?;
                }
            } else if csv && !quiet {
                print!("{}", table.to_csv());
            }
            Ok(Status::Ok)
        }
        Command::Export { log, out } => {
            let recorded = RunLog::load(&log)?;
            match out {
                Some(path) => {
                    let file = fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
                    let mut w = std::io::BufWriter::new(file);
                    recorded.export_text(&mut w).and_then(|_| w.flush()).map_err(|e| HarnessError::io(&path, e))?;
                }
                None => {
                    let stdout = std::io::stdout();
                    recorded.export_text(stdout.lock()).map_err(|e| HarnessError::io(Path::new("<stdout>"), e))?;
                }
            }
            Ok(Status::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::RuntimeFailure) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
