use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kolmo_cli::commands::{self, Report};
use kolmo_cli::config::{ExperimentConfig, Format, Overrides};
use kolmo_cli::output::{self, Record};
use kolmo_cli::{verify, CliError, CliResult};
use serde_json::json;

#[derive(Parser)]
#[command(name = "kolmo", version, about = "Short-time expansions for degenerate Kolmogorov diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expansion price U_N with per-order terms and Greeks.
    Price(Overrides),
    /// Convergence study over a maturity grid, against Monte Carlo or by
    /// self-consistency.
    Converge(Overrides),
    /// Monte Carlo reference price.
    Mc(Overrides),
    /// Identity suites: geometry, kernel, algebra, taylor or all.
    Verify {
        suite: String,
        #[arg(long)]
        format: Option<String>,
        #[arg(long, short = 'o')]
        output: Option<PathBuf>,
    },
}

fn finish(command: &str, report: Report, exp_format: Format, explicit: Option<PathBuf>) -> CliResult<()> {
    let content = match exp_format {
        Format::Json => output::to_json(&report.record),
        Format::Csv => output::to_csv(&report.csv_header, &report.csv_rows)?,
    };
    let dest = output::destination(explicit.as_deref(), output::env_output_dir().as_deref(), command, exp_format);
    output::emit(dest.as_deref(), &content)?;
    if let Some(p) = dest {
        eprintln!("wrote {}", p.display());
    }
    report.status
}

fn run_experiment(command: &str, o: &Overrides) -> CliResult<()> {
    let exp = ExperimentConfig::from_overrides(o)?.resolve()?;
    let report = match command {
        "price" => commands::cmd_price(&exp)?,
        "converge" => commands::cmd_converge(&exp)?,
        _ => commands::cmd_mc(&exp)?,
    };
    finish(command, report, exp.format, exp.output.clone())
}

fn run_verify(suite: &str, format: Option<&str>, explicit: Option<PathBuf>) -> CliResult<()> {
    let format = match format {
        None => None,
        Some("json") => Some(Format::Json),
        Some("csv") => Some(Format::Csv),
        Some(other) => return Err(CliError::Config(format!("unknown format `{other}` (json | csv)"))),
    };
    let checks = verify::run(suite)?;
    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| format!("{}/{}", c.suite, c.name)).collect();
    let dest_format = format.unwrap_or(Format::Json);
    let dest = output::destination(explicit.as_deref(), output::env_output_dir().as_deref(), "verify", dest_format);
    if dest.is_some() || format.is_none() {
        for c in &checks {
            println!("{} {}/{}: {}", if c.pass { "PASS" } else { "FAIL" }, c.suite, c.name, c.detail);
        }
    }
    if dest.is_some() || format.is_some() {
        let content = match dest_format {
            Format::Json => {
                let mut rec = Record::new("verify");
                rec.pass = Some(failed.is_empty());
                output::to_json(&rec.with("suite", json!(suite)).with("checks", serde_json::to_value(&checks).expect("serializable")))
            }
            Format::Csv => {
                let rows: Vec<Vec<String>> = checks
                    .iter()
                    .map(|c| vec![c.suite.into(), c.name.into(), c.pass.to_string(), c.residual.map_or(String::new(), output::format_f64), c.detail.clone()])
                    .collect();
                output::to_csv(&["suite", "check", "pass", "residual", "detail"], &rows)?
            }
        };
        output::emit(dest.as_deref(), &content)?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::IdentityFailure(failed.join(", ")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Price(o) => run_experiment("price", o),
        Command::Converge(o) => run_experiment("converge", o),
        Command::Mc(o) => run_experiment("mc", o),
        Command::Verify { suite, format, output } => run_verify(suite, format.as_deref(), output.clone()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
