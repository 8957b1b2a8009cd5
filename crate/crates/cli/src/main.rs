use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lsilab::experiments::{self, ExperimentKind, ExperimentSpec};
use lsilab::{io, Error};

/// Run one lsilab experiment and write its CSV report.
#[derive(Debug, Parser)]
#[command(name = "lsilab", version)]
struct Args {
    /// clt-monotone, verify-subadd, regularize, herbst, shearer-fuzz,
    /// optimal-cover or estimate
    #[arg(value_parser = parse_kind)]
    kind: ExperimentKind,
    /// JSON experiment spec; omitted fields take per-kind defaults
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid as `lo,hi,m`
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Inclusive range `a..b`
    #[arg(long)]
    n_range: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
}

fn parse_kind(s: &str) -> Result<ExperimentKind, String> {
    ExperimentKind::parse(s).ok_or_else(|| {
        let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown experiment `{s}`; expected one of {}", names.join(", "))
    })
}

fn build_spec(args: &Args) -> lsilab::Result<ExperimentSpec> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let spec = ExperimentSpec::from_json(&text)?;
            if spec.kind != args.kind {
                return Err(Error::InvalidSpec(format!(
                    "config is for `{}` but `{}` was requested",
                    spec.kind, args.kind
                )));
            }
            spec
        }
        None => ExperimentSpec::new(args.kind),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(out) = &args.out {
        spec.output_dir = out.clone();
    }
    if let Some(grid) = &args.grid {
        let (lo, hi, m) = io::parse_grid(grid)?;
        spec.grid = experiments::GridSpec { lo, hi, m };
    }
    if let Some(range) = &args.n_range {
        spec.n_range = Some(io::parse_n_range(range)?);
    }
    if let Some(delta) = args.delta {
        spec.delta = delta;
    }
    Ok(spec)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let spec = match build_spec(&args) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let report = match experiments::run(&spec) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(experiments::exit_code(&e) as u8);
        }
    };
    match report.write(&spec.output_dir) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    for (k, v) in &report.summary {
        println!("{k} = {v}");
    }
    for v in &report.violations {
        eprintln!("violation: {v}");
    }
    if let Some(e) = &report.failure {
        eprintln!("error: aborted after {} rows: {e}", report.rows.len());
    }
    ExitCode::from(experiments::report_exit_code(&report) as u8)
}
