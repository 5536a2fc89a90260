mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::commands::Outcome;
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "blockcp", version, about = "Block CP maps, their contractions, and semigroup dilations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: GlobalOpts,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Seed of the run's random number generator.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Input corner dimension.
    #[arg(long, global = true, default_value_t = 2)]
    pub n: usize,
    /// Output corner dimension.
    #[arg(long, global = true, default_value_t = 2)]
    pub d: usize,
    /// Horizon N of discrete semigroups; overrides the instance value.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    #[arg(long = "tol-build", global = true, default_value_t = 1e-9)]
    pub tol_build: f64,
    #[arg(long = "tol-verify", global = true, default_value_t = 1e-6)]
    pub tol_verify: f64,
    /// Instance file.
    #[arg(long = "in", global = true)]
    pub input: Option<PathBuf>,
    /// Write the JSON report to this file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print the full JSON report to stdout.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a random instance.
    Gen(GenArgs),
    /// Verify a block CP map and extract its contraction.
    Extract,
    /// Extract the contractive morphism of a block semigroup.
    Semigroup,
    /// Lift the morphism to the generated product systems.
    Lift,
    /// Check the finite-horizon dilation of a unital block semigroup.
    Dilate,
    /// Analyse a block generator.
    Lindblad,
    /// Run every pipeline on generated instances.
    Selftest,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Blockcp,
    Qds,
    Generator,
}

#[derive(Args, Debug, Clone)]
pub struct GenArgs {
    #[arg(value_enum)]
    pub kind: Kind,
    /// Kraus operators per corner (blockcp, qds) or number of couplings (generator).
    #[arg(long, default_value_t = 2)]
    pub kraus: usize,
    /// Operator norm of the random contraction (blockcp).
    #[arg(long, default_value_t = 0.9)]
    pub norm: f64,
    /// Multiply the off-diagonal corner by this factor; above one the result
    /// is typically not CP (blockcp).
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Use decoupled corners, so that the morphism vanishes (qds).
    #[arg(long)]
    pub diagonal: bool,
    /// Skip the unital balance of the drift (generator).
    #[arg(long = "non-unital")]
    pub non_unital: bool,
}

/// Validated run parameters.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub horizon: Option<usize>,
    pub tol_build: f64,
    pub tol_verify: f64,
    pub input: Option<PathBuf>,
}

impl RunConfig {
    fn from_opts(o: &GlobalOpts) -> Result<Self, CliError> {
        if o.n == 0 || o.d == 0 {
            return Err(CliError::Config("dimensions must be at least 1".into()));
        }
        if o.horizon == Some(0) {
            return Err(CliError::Config("horizon must be at least 1".into()));
        }
        for (name, t) in [("tol-build", o.tol_build), ("tol-verify", o.tol_verify)] {
            if !(t.is_finite() && t > 0.0) {
                return Err(CliError::Config(format!("{name} must be positive")));
            }
        }
        Ok(RunConfig {
            seed: o.seed,
            n: o.n,
            d: o.d,
            horizon: o.horizon,
            tol_build: o.tol_build,
            tol_verify: o.tol_verify,
            input: o.input.clone(),
        })
    }
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = RunConfig::from_opts(&cli.opts)?;
    match &cli.command {
        Command::Gen(args) => commands::gen(&cfg, args),
        Command::Extract => commands::extract(&cfg, &commands::read_instance(&cfg)?),
        Command::Semigroup => commands::semigroup(&cfg, &commands::read_instance(&cfg)?),
        Command::Lift => commands::lift(&cfg, &commands::read_instance(&cfg)?),
        Command::Dilate => commands::dilate(&cfg, &commands::read_instance(&cfg)?),
        Command::Lindblad => commands::lindblad(&cfg, &commands::read_instance(&cfg)?),
        Command::Selftest => commands::selftest(&cfg),
    }
}

fn render(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn summary(v: &Value) -> String {
    let mut out = String::new();
    if let Value::Object(map) = v {
        for (k, x) in map {
            match x {
                Value::Number(_) | Value::Bool(_) | Value::String(_) => out.push_str(&format!("{k}: {x}\n")),
                _ => {}
            }
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            let text = render(&outcome.report);
            if let Some(path) = &cli.opts.out {
                if let Err(e) = std::fs::write(path, &text) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
            if cli.opts.json || (cli.opts.out.is_none() && outcome.raw) {
                print!("{text}");
            } else {
                print!("{}", summary(&outcome.report));
            }
            if outcome.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(error::RESIDUAL_EXIT)
            }
        }
        Err(e) => {
            if cli.opts.json {
                print!("{}", render(&e.to_value()));
            }
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
