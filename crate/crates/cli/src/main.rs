mod config;
mod report;
mod scenarios;

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;

use config::{Cli, Format, RunConfig, Scenario};
use scenarios::{Failure, Outcome, PulseRow};

const EXIT_USAGE: u8 = 1;
const EXIT_PHYSICS: u8 = 2;

fn csv_text(rows: &[PulseRow]) -> Result<String, String> {
    let mut w = csv::Writer::from_writer(vec![]);
    for row in rows {
        w.serialize(row).map_err(|e| e.to_string())?;
    }
    String::from_utf8(w.into_inner().map_err(|e| e.to_string())?).map_err(|e| e.to_string())
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| e.to_string()),
    }
}

fn finish(config: &RunConfig, outcome: Outcome) -> Result<bool, String> {
    let Outcome { report, rows } = outcome;
    if config.scenario == Scenario::Selfcheck {
        print!("{}", report.table());
        if let Some(path) = &config.out {
            emit(&report.to_json_string(), Some(path))?;
        }
    } else {
        let text = match (config.format, rows) {
            (Format::Csv, Some(rows)) => csv_text(&rows)?,
            _ => report.to_json_string(),
        };
        emit(&text, config.out.as_deref())?;
    }
    for c in report.failures() {
        eprintln!("invariant failed: {}: {}", c.name, c.detail);
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let config = match RunConfig::resolve(cli.command, cli.flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match scenarios::run(&config) {
        Ok(outcome) => match finish(&config, outcome) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(EXIT_PHYSICS),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_USAGE)
            }
        },
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Physics(e)) => {
            eprintln!("invariant failed: {e}");
            ExitCode::from(EXIT_PHYSICS)
        }
    }
}
