use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod schema;

use commands::{Outcome, Settings};
use config::{Format, RunConfig};

/// Numerical checks for graded quantizations of projective varieties.
#[derive(Parser)]
#[command(name = "gquant", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file (`//` comments allowed); flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Model preset: cp1, cp2, cpN, segre11, veronese.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Model file `{"n", "ideal", "preset", "dim"}`.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Number of variables for an inline model.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Ideal generator for an inline model (repeatable).
    #[arg(long, global = true)]
    ideal: Vec<String>,
    /// Level range `A..B` or a single level.
    #[arg(long, global = true)]
    m: Option<String>,
    /// Tolerance override `NAME=VALUE` (repeatable).
    #[arg(long = "tol", global = true, value_name = "NAME=VALUE")]
    tol: Vec<String>,
    /// Quadrature sample count for the T-map.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Seed for every sampled quantity.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// CSV output is a per-level table.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Hilbert function and dimension of the model.
    Space,
    /// Shift identities: orbit certificate, q-isometry, Schatten classes.
    Shifts {
        /// orbit, q-isometry, schatten or all.
        #[arg(long)]
        check: Option<String>,
    },
    /// Toeplitz calculus checks and Toeplitz matrices of a symbol.
    Toeplitz {
        /// Scalar symbol in z and conj(z), e.g. `z1*conj(z1)`.
        #[arg(long)]
        symbol: Option<String>,
    },
    /// Graded quotient dimensions, Arveson rank and coinvariance.
    Quotient {
        #[arg(long)]
        bundle: Option<String>,
        #[arg(long)]
        quotient: Option<String>,
    },
    /// Exact balance defects, T-map iteration and limit probes.
    Balance {
        #[arg(long)]
        bundle: Option<String>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Fiber ranks over a grid of sample points.
    CdScan {
        #[arg(long)]
        quotient: Option<String>,
        #[arg(long)]
        bundle: Option<String>,
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Guo and Gieseker comparisons of E with a quotient F.
    Stability {
        #[arg(long)]
        e: Option<String>,
        #[arg(long)]
        f: Option<String>,
    },
    /// Similarity to a spherical isometry and hidden Szegö coefficients.
    Szego {
        #[arg(long)]
        bundle: Option<String>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// The full battery.
    Suite {
        #[arg(long)]
        points: Option<usize>,
    },
    /// Check a report file against the shipped schema.
    Validate { file: PathBuf },
}

fn merge(common: &Common, command: &Command) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => config::load_config(path)?,
        None => RunConfig::default(),
    };
    macro_rules! over {
        ($field:ident, $value:expr) => {
            if let Some(v) = $value {
                cfg.$field = Some(v.clone());
            }
        };
    }
    over!(preset, &common.preset);
    over!(model, &common.model);
    over!(n, &common.n);
    over!(m, &common.m);
    over!(out, &common.out);
    over!(format, &common.format);
    if !common.ideal.is_empty() {
        cfg.ideal = common.ideal.clone();
    }
    if let Some(s) = common.samples {
        cfg.quadrature.samples = Some(s);
    }
    if let Some(s) = common.seed {
        cfg.quadrature.seed = Some(s);
    }
    for t in &common.tol {
        let (k, v) = config::parse_tolerance(t)?;
        cfg.tolerances.insert(k, v);
    }
    match command {
        Command::Shifts { check } => over!(check, check),
        Command::Toeplitz { symbol } => over!(symbol, symbol),
        Command::Quotient { bundle, quotient } => {
            over!(bundle, bundle);
            over!(quotient, quotient);
        }
        Command::Balance { bundle, points } | Command::Szego { bundle, points } => {
            over!(bundle, bundle);
            over!(points, points);
        }
        Command::CdScan { quotient, bundle, grid } => {
            over!(quotient, quotient);
            over!(bundle, bundle);
            over!(grid, grid);
        }
        Command::Stability { e, f } => {
            over!(e, e);
            over!(f, f);
        }
        Command::Suite { points } => over!(points, points),
        Command::Space | Command::Validate { .. } => {}
    }
    Ok(cfg)
}

fn write_outcome(settings: &Settings, outcome: &Outcome) -> Result<()> {
    let text = match (settings.format, &outcome.table) {
        (Format::Csv, Some(table)) => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&table.headers)?;
            for row in &table.rows {
                w.write_record(row)?;
            }
            String::from_utf8(w.into_inner()?)?
        }
        _ => graded_quant::report::to_json_string(&outcome.value),
    };
    match &settings.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn validate(file: &PathBuf) -> Result<ExitCode> {
    let text = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let violations = schema::validate_text(&text);
    if violations.is_empty() {
        println!("{}: valid", file.display());
        return Ok(ExitCode::SUCCESS);
    }
    println!("{}: invalid", file.display());
    for v in &violations {
        println!("  {}: {}", v.path, v.message);
    }
    Ok(ExitCode::from(1))
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Command::Validate { file } = &cli.command {
        return validate(file);
    }
    let cfg = merge(&cli.common, &cli.command)?;
    let (name, default_range): (&str, (usize, usize)) = match &cli.command {
        Command::Space => ("space", (0, 8)),
        Command::Shifts { .. } => ("shifts", (0, 8)),
        Command::Toeplitz { .. } => ("toeplitz", (0, 4)),
        Command::Quotient { .. } => ("quotient", (0, 6)),
        Command::Balance { .. } => ("balance", (1, 6)),
        Command::CdScan { .. } => ("cd-scan", (6, 6)),
        Command::Stability { .. } => ("stability", (2, 10)),
        Command::Szego { .. } => ("szego", (1, 10)),
        Command::Suite { .. } => ("suite", (1, 8)),
        Command::Validate { .. } => unreachable!("handled above"),
    };
    let settings = Settings::resolve(name, cfg, default_range)?;
    let outcome = match &cli.command {
        Command::Space => commands::space(&settings),
        Command::Shifts { .. } => commands::shifts(&settings),
        Command::Toeplitz { .. } => commands::toeplitz(&settings),
        Command::Quotient { .. } => commands::quotient(&settings),
        Command::Balance { .. } => commands::balance(&settings),
        Command::CdScan { .. } => commands::cd_scan(&settings),
        Command::Stability { .. } => commands::stability(&settings),
        Command::Szego { .. } => commands::szego(&settings),
        Command::Suite { .. } => commands::suite(&settings),
        Command::Validate { .. } => unreachable!("handled above"),
    }?;
    write_outcome(&settings, &outcome)?;
    let verdict = if outcome.passed { "PASS" } else { "FAIL" };
    eprintln!("{name}: {verdict}");
    Ok(if outcome.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
