use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gasnet::check::check_network;
use gasnet::config::LoadedScenario;
use gasnet::report::{emit_reports, emit_stage_reports, summary_text, write_trace_csv};
use gasnet::run::{build, run_scenario, simulate, summarize, Controller, Plant};
use gasnet::Error;
use gasnet_core::conservation::BlockingZero;

/// Linear models, conservation checks and LQG design for gas networks.
#[derive(Parser)]
#[command(name = "gasnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a network file and run its conservation and integrator checks.
    Check {
        file: PathBuf,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Build, reduce and design for a scenario; write the stage reports.
    Pipeline {
        config: PathBuf,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
    },
    /// Closed-loop step response of one controller on one plant model.
    Simulate {
        config: PathBuf,
        #[arg(long, value_enum)]
        controller: ControllerArg,
        #[arg(long, value_enum, default_value_t = PlantArg::Filtered)]
        plant: PlantArg,
        /// Write the trace here as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario end to end (the bundled reference loop by default)
    /// and write every report.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    Lqg,
    Lqgi,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlantArg {
    Filtered,
    Unfiltered,
    Reduced,
}

/// Bad input files map to the usage code; failed checks and stages to 1.
fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Io { .. } | Error::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Check { file, json } => {
            let src = match fs::read_to_string(&file) {
                Ok(s) => s,
                Err(e) => return exit_for(&Error::Io { path: file, source: e }),
            };
            let report = check_network(&src);
            for d in &report.diagnostics {
                eprintln!("{}:{d}", file.display());
            }
            if let Some(e) = &report.error {
                eprintln!("{}: {e}", file.display());
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else if let Some(c) = &report.checks {
                println!("order {}, well-posed (cond {:.3e})", c.order, c.well_posed_cond);
                if c.conservation.applicable {
                    println!(
                        "conservation: {} (qq {:.3e}, qp {:.3e})",
                        c.conservation.conserves_mass, c.conservation.qq_row_residual, c.conservation.qp_norm
                    );
                } else {
                    println!("conservation: not applicable");
                }
                match &c.blocking_zero {
                    BlockingZero::NotApplicable => println!("blocking zero: not applicable"),
                    BlockingZero::Checked { passes, slope, .. } => println!("blocking zero: {passes} (slope {slope:.3})"),
                }
                println!("poles at the origin: {}", c.integrator.zero_pole_count);
            }
            if !json {
                println!("{}", if report.passed { "PASS" } else { "FAIL" });
            }
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Pipeline { config, out } => {
            let result = LoadedScenario::load(&config).and_then(|sc| {
                let art = build(&sc)?;
                let files = emit_stage_reports(&sc.config.scenario.name, &art, &out)?;
                Ok((summary_text(&sc.config.scenario.name, &art, &[]), files))
            });
            match result {
                Ok((summary, files)) => {
                    print!("{summary}");
                    println!("wrote {} files", files.len());
                    ExitCode::SUCCESS
                }
                Err(e) => exit_for(&e),
            }
        }
        Command::Simulate { config, controller, plant, out } => {
            let controller = match controller {
                ControllerArg::Lqg => Controller::Lqg,
                ControllerArg::Lqgi => Controller::LqgIntegral,
            };
            let plant = match plant {
                PlantArg::Filtered => Plant::Filtered,
                PlantArg::Unfiltered => Plant::Unfiltered,
                PlantArg::Reduced => Plant::Reduced,
            };
            let result = LoadedScenario::load(&config).and_then(|sc| {
                let art = build(&sc)?;
                let trace = simulate(&art, &sc.config.simulation_settings(), controller, plant)?;
                if let Some(p) = &out {
                    write_trace_csv(&trace, p)?;
                }
                Ok(summarize(&trace, sc.config.sensors.outputs.len(), controller, plant, &art))
            });
            match result {
                Ok(summary) => {
                    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
                    if summary.balance.is_some() {
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("trace did not settle (drift {:e})", summary.drift);
                        ExitCode::from(1)
                    }
                }
                Err(e) => exit_for(&e),
            }
        }
        Command::Report { out, config } => {
            let scenario = match config {
                Some(p) => LoadedScenario::load(&p),
                None => Ok(LoadedScenario::reference()),
            };
            match scenario.and_then(run_scenario).and_then(|run| Ok((emit_reports(&run, &out)?, run))) {
                Ok((files, run)) => {
                    print!("{}", summary_text(run.name(), &run.artifacts, &run.traces));
                    println!("wrote {} files to {}", files.len(), out.join(run.name()).display());
                    ExitCode::SUCCESS
                }
                Err(e) => exit_for(&e),
            }
        }
    }
}
