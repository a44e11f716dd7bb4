use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qorbit_cli::output::{self, RunOutputParts};
use qorbit_cli::{pipeline, sweep, CliError, Scenario};

#[derive(Parser)]
#[command(name = "qorbit", version, about = "Lyapunov orbit tracking for closed quantum systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify, design P, simulate, replay and write outputs.
    Run {
        config: PathBuf,
        /// Output directory; overrides the scenario's `outputs`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue past failed assumption checks.
        #[arg(long)]
        force: bool,
    },
    /// Print the designed P and its convergence certificate.
    Design {
        config: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Print the assumption report; exits 3 if any check fails.
    Verify { config: PathBuf },
    /// Rerun the scenario over values of one parameter and print a CSV.
    Sweep {
        config: PathBuf,
        /// g<k>, k, k<m> or dt.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        #[arg(long)]
        t_final: Option<f64>,
        #[arg(long)]
        force: bool,
    },
}

fn warn_forced(prepared: &pipeline::Prepared) {
    if prepared.forced {
        eprintln!(
            "WARNING: assumptions failed, convergence is not guaranteed: {}",
            pipeline::describe_failures(&prepared.report)
        );
    }
}

fn default_out(config: &Path, scenario: &Scenario) -> PathBuf {
    scenario.outputs.clone().unwrap_or_else(|| {
        let stem = config.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned());
        PathBuf::from("out").join(stem)
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out, force } => {
            let scenario = Scenario::load(&config)?;
            let result = pipeline::execute(&scenario, force)?;
            warn_forced(&result.prepared);
            let dir = out.unwrap_or_else(|| default_out(&config, &scenario));
            output::write_outputs(&dir, &result)?;
            let s = &result.summary;
            println!(
                "{}: frame {:?}, v(T) = {:.3e}, certificate {}, outputs in {}",
                s.name,
                s.frame,
                s.final_v,
                if s.certificate_passed { "passed" } else { "FAILED" },
                dir.display()
            );
        }
        Command::Design { config, force } => {
            let scenario = Scenario::load(&config)?;
            let prepared = pipeline::prepare(&scenario, force)?;
            warn_forced(&prepared);
            println!("{}", output::certificate_json(&scenario.name, &RunOutputParts::of(&prepared)));
        }
        Command::Verify { config } => {
            let scenario = Scenario::load(&config)?;
            let (_, report) = pipeline::check(&scenario)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize"));
            if !report.all_ok() {
                return Err(CliError::Assumption(pipeline::describe_failures(&report)));
            }
        }
        Command::Sweep {
            config,
            param,
            values,
            t_final,
            force,
        } => {
            let scenario = Scenario::load(&config)?;
            let p = sweep::Param::parse(&param)?;
            let values = sweep::parse_values(&values)?;
            let rows = sweep::run(&scenario, p, &values, t_final, force)?;
            print!("{}", sweep::to_csv(&param, &rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
