//! Argument parsing and subcommand dispatch for `fkpp`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use fractal_fkpp::fractal_set::CantorPrefractal;
use fractal_fkpp::identities::verify_calculus;

use crate::config::{alpha_label, validate_config, Closure, ExperimentConfig};
use crate::experiment::{run_experiment, RunError, Stage};
use crate::output::{fmt_float, OutputSet};

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClosureArg {
    Strict,
    Paper,
}

#[derive(Debug, Parser)]
#[command(name = "fkpp", version, about = "Fractal-time nonlocal Fisher-KPP: calculus checks, moment dynamics, asymptotic and direct solutions")]
pub struct Args {
    /// JSON experiment configuration (the two-particle example when omitted).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Number of exponents processed concurrently.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub workers: u16,
    /// Moment closure, overriding the configuration.
    #[arg(long, global = true, value_enum)]
    pub closure: Option<ClosureArg>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the staircase function and the indicator of one prefractal.
    Staircase {
        #[arg(long, default_value_t = std::f64::consts::LN_2 / 3f64.ln())]
        alpha: f64,
        #[arg(long)]
        generation: Option<u32>,
        /// Number of equally spaced sample times in [0, 1].
        #[arg(long, default_value_t = 1001)]
        samples: usize,
    },
    /// Check the calculus identities for each exponent.
    VerifyCalculus {
        /// Exponents to check (the configured list when omitted).
        #[arg(long = "alpha")]
        alphas: Vec<f64>,
        #[arg(long)]
        generation: Option<u32>,
    },
    /// Solve the moment system and write the trajectories.
    Flees,
    /// Moments plus assembled asymptotic fields at the snapshot times.
    Simulate,
    /// Direct solver snapshots.
    Reference,
    /// Asymptotic fields, direct solver and their error norms.
    Compare,
    /// The full experiment described by the configuration.
    Run,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let code = match e {
            RunError::Numerical { .. } => EXIT_NUMERICAL,
            RunError::Io { .. } => EXIT_IO,
        };
        Failure::new(code, e.to_string())
    }
}

fn load_config(args: &Args) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let raw = fs::read_to_string(path)
                .map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
            validate_config(&raw).map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::two_particle_example(),
    };
    if let Some(c) = args.closure {
        cfg.closure = match c {
            ClosureArg::Strict => Closure::Strict,
            ClosureArg::Paper => Closure::Paper,
        };
        if cfg.closure == Closure::Paper && cfg.params.particles.len() != 2 {
            return Err(Failure::new(EXIT_CONFIG, "the paper closure needs exactly two particles"));
        }
    }
    if let Some(out) = &args.out {
        cfg.output = out.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn staircase(alpha: f64, generation: u32, samples: usize, out: Option<&Path>) -> Result<(), Failure> {
    if samples < 2 {
        return Err(Failure::new(EXIT_CONFIG, "--samples must be at least 2"));
    }
    let set = CantorPrefractal::new(alpha, generation).map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    let st = set.staircase();
    let mut table = crate::output::Table::new(vec!["t".into(), "S".into(), "chi".into()]);
    for i in 0..samples {
        let t = i as f64 / (samples - 1) as f64;
        let s = st.eval(t).map_err(|e| Failure::new(EXIT_NUMERICAL, e.to_string()))?;
        let chi = set.indicator(t).map_err(|e| Failure::new(EXIT_NUMERICAL, e.to_string()))?;
        table.push(vec![t, s, if chi { 1.0 } else { 0.0 }]);
    }
    emit(out, &format!("staircase_{}.csv", alpha_label(alpha)), &table.to_csv())?;
    eprintln!("S(1) = {} (generation {generation}, {} intervals)", fmt_float(set.total_mass()), set.interval_count());
    Ok(())
}

// Writes into the output directory when one was given, to stdout otherwise.
fn emit(out: Option<&Path>, name: &str, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            let mut set = OutputSet::new(dir);
            set.write(name, bytes)
                .map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", dir.join(name).display())))
        }
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Failure::new(EXIT_IO, format!("stdout: {e}"))),
    }
}

fn verify(cfg: &ExperimentConfig, alphas: &[f64], generation: u32, out: Option<&Path>) -> Result<bool, Failure> {
    let alphas = if alphas.is_empty() { cfg.alphas.clone() } else { alphas.to_vec() };
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(["alpha", "identity", "error", "tolerance", "passed"]).expect("write to memory");
    let mut all = true;
    for alpha in alphas {
        let set = CantorPrefractal::new(alpha, generation).map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
        let rows = verify_calculus(&set)
            .map_err(|e| Failure::new(EXIT_NUMERICAL, format!("alpha = {alpha}: {e}")))?;
        for row in rows {
            let ok = row.passed();
            all &= ok;
            eprintln!(
                "{} alpha={:.6} {:<60} error={:.3e} tol={:.1e}",
                if ok { "PASS" } else { "FAIL" },
                alpha,
                row.identity,
                row.error,
                row.tolerance
            );
            w.write_record([fmt_float(alpha), row.identity.to_string(), fmt_float(row.error), fmt_float(row.tolerance), ok.to_string()])
                .expect("write to memory");
        }
    }
    let bytes = w.into_inner().expect("flush to memory");
    emit(out, "identities.csv", &bytes)?;
    Ok(all)
}

fn dispatch(args: &Args) -> Result<i32, Failure> {
    let cfg = load_config(args)?;
    let out = args.out.as_deref();
    let stage = match &args.command {
        Command::Staircase { alpha, generation, samples } => {
            staircase(*alpha, generation.unwrap_or(cfg.generation), *samples, out)?;
            return Ok(EXIT_SUCCESS);
        }
        Command::VerifyCalculus { alphas, generation } => {
            let ok = verify(&cfg, alphas, generation.unwrap_or(cfg.generation), out)?;
            return Ok(if ok { EXIT_SUCCESS } else { EXIT_CHECK });
        }
        Command::Flees => Stage::Moments,
        Command::Simulate => Stage::Fields,
        Command::Reference => Stage::Reference,
        Command::Compare => Stage::Compare,
        Command::Run => Stage::Full,
    };
    let dir = PathBuf::from(&cfg.output);
    let manifest = run_experiment(&cfg, &dir, stage, args.workers as usize)?;
    eprintln!(
        "{}: wrote {} files to {} (config sha256 {})",
        stage.name(),
        manifest.files.len(),
        dir.display(),
        manifest.config_sha256
    );
    Ok(EXIT_SUCCESS)
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_SUCCESS };
        }
    };
    match dispatch(&args) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
