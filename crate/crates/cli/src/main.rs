use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pnf_cli::{load_config, run_command, Command, ConfigError};

/// Numerical verification of Poisson normal forms.
#[derive(Debug, Parser)]
#[command(name = "pnf", version)]
struct Args {
    command: Command,
    /// Config file, or `builtin:NAME` for a shipped example.
    config: PathBuf,
    /// Report destination; stdout when neither this nor `output.report` is set.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    quad: Option<usize>,
    /// Tolerance for the command's headline records.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn configure_threads() -> Result<(), ConfigError> {
    let Ok(raw) = std::env::var("PNF_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| ConfigError::Field {
        field: "PNF_THREADS".into(),
        message: format!("expected a positive integer, found `{raw}`"),
    })?;
    #[cfg(feature = "parallel")]
    {
        let cap = std::thread::available_parallelism().map_or(n, |p| p.get().min(n));
        rayon::ThreadPoolBuilder::new().num_threads(cap).build_global().map_err(|e| ConfigError::Field {
            field: "PNF_THREADS".into(),
            message: e.to_string(),
        })?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn run(args: Args) -> Result<bool, ConfigError> {
    configure_threads()?;
    let mut cfg = load_config(&args.config)?;
    args.command.apply_discretization(&mut cfg, args.steps, args.quad);
    if let Some(seed) = args.seed {
        cfg.samples.seed = Some(seed);
    }
    if let Some(tol) = args.tol {
        for name in args.command.primary_records() {
            cfg.tolerances.insert(name.to_string(), tol);
        }
    }
    if args.out.is_some() {
        cfg.output.report = args.out;
    }
    if args.csv.is_some() {
        cfg.output.csv = args.csv;
    }
    cfg.validate()?;

    let report = run_command(args.command, &cfg)?;
    eprint!("{}", report.summary());
    let io_err = |path: &PathBuf, source| ConfigError::Io { path: path.clone(), source };
    match &cfg.output.report {
        Some(path) => std::fs::write(path, report.to_json() + "\n").map_err(|e| io_err(path, e))?,
        None => println!("{}", report.to_json()),
    }
    if let Some(path) = &cfg.output.csv {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = BufWriter::new(file);
        report.write_csv(&mut w).map_err(|e| io_err(path, std::io::Error::other(e)))?;
        w.flush().map_err(|e| io_err(path, e))?;
    }
    eprintln!("{} in {:.2} s", if report.passed { "PASS" } else { "FAIL" }, report.timing.wall_clock_s);
    Ok(report.passed)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
    }
}
