mod args;
mod commands;
mod emit;
mod error;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Parser;
use serde_json::{json, Value};
use wishart_outage::Precision;

use args::{Cli, Command, Common};
use commands::Source;
use error::CliError;

const DIGITS_ENV: &str = "WISHART_OUTAGE_PRECISION_DIGITS";

/// Flag, then environment, then the library default.
fn precision(common: &Common) -> Result<Precision, CliError> {
    let base = Precision::default();
    let digits = match (common.digits, std::env::var(DIGITS_ENV)) {
        (Some(d), _) => d,
        (None, Ok(s)) => {
            s.trim().parse().map_err(|_| CliError::Usage(format!("{DIGITS_ENV}={s} is not a digit count")))?
        }
        (None, Err(_)) => base.digits,
    };
    Precision::new(digits, common.quad_nodes.unwrap_or(base.quad_nodes), common.tol_rel.unwrap_or(base.tol_rel))
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn metadata(cli: &Cli, name: &str, prec: &Precision) -> Value {
    let units = match &cli.command {
        Command::Outage { .. } if cli.common.bits => "rate in bits per channel use",
        Command::Outage { .. } => "rate in nats per channel use",
        _ => "lambda multiplies mutual information in nats",
    };
    let mut meta = json!({
        "tool": "wishart-outage",
        "version": wishart_outage::VERSION,
        "command": name,
        "config": cli,
        "precision": { "digits": prec.digits, "quad_nodes": prec.quad_nodes, "tol_rel": prec.tol_rel },
        "seed": cli.common.seed,
        "units": units,
    });
    if !cli.common.no_timestamp {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        meta["timestamp_unix"] = json!(now);
    }
    meta
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let prec = precision(&cli.common)?;
    let mut all_pass = true;
    let (name, table) = match &cli.command {
        Command::Mgf { params, lambda, route } => {
            let src = Source::from_args(params)?;
            ("mgf", commands::mgf(&src, &commands::lambdas(lambda)?, route, &cli.common, &prec)?)
        }
        Command::Outage { params, rate, method } => {
            let src = Source::from_args(params)?;
            ("outage", commands::outage(&src, &rate.0, *method, &cli.common, &prec)?)
        }
        Command::Trace { params, lambda, t0 } => {
            let src = Source::from_args(params)?;
            ("trace", commands::trace(&src, &commands::lambdas(lambda)?, *t0, &prec)?)
        }
        Command::Verify { params, lambda, suites } => {
            let src = Source::from_args(params)?;
            let v = commands::verify(&src, &commands::lambdas(lambda)?, suites, &prec)?;
            all_pass = v.all_pass;
            ("verify", v.table)
        }
        Command::Moments { params, lambda, kmax } => {
            let src = Source::from_args(params)?;
            ("moments", commands::moments(&src, &commands::lambdas(lambda)?, *kmax, &prec)?)
        }
    };
    let meta = metadata(cli, name, &prec);
    let mut out: Box<dyn Write> = match &cli.common.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    emit::write(&mut out, cli.common.format, &meta, &table)?;
    out.flush()?;
    Ok(all_pass)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: verify: at least one check exceeded its tolerance");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
