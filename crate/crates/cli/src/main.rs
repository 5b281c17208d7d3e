//! `ckt-lab`: runs the cktlab experiments from an INI config and writes
//! CSV tables.
//!
//! Exit codes: 0 success, 2 bad input (usage, config, files, validation),
//! 3 numerical failure or a failed check.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Ctx;
use config::Config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Check(String),
    #[error(transparent)]
    Core(#[from] cktlab::Error),
}

impl CliError {
    fn tag(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Check(_) => "check-failed",
            CliError::Core(e) => e.tag(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) => 3,
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ckt-lab", version, about = "Harmonic analysis, torus spectral and holonomy experiments")]
struct Cli {
    /// INI config file; unknown sections or keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides [run] seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for <command>.csv; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides [run] tol.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dimensions p(n, m) and h(n, m).
    Dims {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        mmax: Option<usize>,
    },
    /// Harmonic decomposition of a polynomial.
    Harmdecomp,
    /// Span of symbol kernels over the cosphere.
    CheckDivtype,
    /// Writes u = [A, Γ] for a trace-free skew-Hermitian u.
    CommutatorFactor,
    /// Kernel of X_+ on the torus model.
    TorusCkt,
    /// Eigenvalue scan of Δ_+ along a perturbation.
    TorusEject,
    /// Resolvent identities and λ derivatives on a planted matrix.
    Kato,
    /// Opacity probe from loop holonomies.
    Holonomy,
    /// Quick invariant suite.
    Selftest,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Dims { .. } => "dims",
            Command::Harmdecomp => "harmdecomp",
            Command::CheckDivtype => "check-divtype",
            Command::CommutatorFactor => "commutator-factor",
            Command::TorusCkt => "torus-ckt",
            Command::TorusEject => "torus-eject",
            Command::Kato => "kato",
            Command::Holonomy => "holonomy",
            Command::Selftest => "selftest",
        }
    }

    /// Config sections that feed the hash.
    fn sections(&self) -> &'static [&'static str] {
        match self {
            Command::Dims { .. } => &["dims"],
            Command::Harmdecomp => &["harmdecomp"],
            Command::CheckDivtype => &["check-divtype"],
            Command::CommutatorFactor => &["commutator-factor"],
            Command::TorusCkt => &["torus"],
            Command::TorusEject => &["torus", "eject"],
            Command::Kato => &["kato"],
            Command::Holonomy => &["holonomy"],
            Command::Selftest => &[],
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::defaults(),
    };
    if let Some(s) = cli.seed {
        cfg.set("run", "seed", s.to_string());
    }
    if let Some(t) = cli.tol {
        cfg.set("run", "tol", output::num(t));
    }
    if let Command::Dims { n, mmax } = &cli.command {
        if let Some(n) = n {
            cfg.set("dims", "n", n.to_string());
        }
        if let Some(m) = mmax {
            cfg.set("dims", "mmax", m.to_string());
        }
    }
    let seed = cfg.get("run", "seed")?;
    let tol: Option<f64> = cfg.opt("run", "tol")?;
    if tol.is_some_and(|t| !(t > 0.0)) {
        return Err(CliError::Config("tol must be positive".into()));
    }
    let mut ctx = Ctx { cfg, seed, tol, inputs: Vec::new() };
    let mut ok = true;
    let table = match &cli.command {
        Command::Dims { .. } => commands::dims_table(&ctx)?,
        Command::Harmdecomp => commands::harmdecomp(&mut ctx)?,
        Command::CheckDivtype => commands::check_divtype(&ctx)?,
        Command::CommutatorFactor => commands::commutator(&mut ctx)?,
        Command::TorusCkt => commands::torus_ckt(&mut ctx)?,
        Command::TorusEject => commands::torus_eject(&mut ctx)?,
        Command::Kato => commands::kato(&ctx)?,
        Command::Holonomy => commands::holonomy(&mut ctx)?,
        Command::Selftest => {
            let (t, pass) = commands::selftest(&ctx)?;
            ok = pass;
            t
        }
    };
    let name = cli.command.name();
    let canonical = format!("{name}\n{}", ctx.cfg.canonical(cli.command.sections()));
    let mut parts: Vec<&[u8]> = vec![canonical.as_bytes()];
    parts.extend(ctx.inputs.iter().map(Vec::as_slice));
    let bytes = table.render(name, &output::sha256_hex(&parts))?;
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
            let path = dir.join(format!("{name}.csv"));
            std::fs::write(&path, &bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&bytes).map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("ckt-lab: error[check-failed]: selftest reported failures");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("ckt-lab: error[{}]: {e}", e.tag());
            ExitCode::from(e.exit_code())
        }
    }
}
