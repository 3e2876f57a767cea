mod commands;
mod external;
mod instance;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mintyvi::scalar::ArithMode;
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "mintyvi", version, about = "Ellipsoid solvers for variational inequalities under the Minty condition")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    #[default]
    Rational,
    Float,
}

impl From<ModeArg> for ArithMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Rational => ArithMode::Rational,
            ModeArg::Float => ArithMode::Float,
        }
    }
}

/// Flags shared by every run.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunArgs {
    /// Instance JSON file.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Generator spec `name[:key=value,...]`.
    #[arg(long)]
    pub generator: Option<String>,
    /// Target accuracy as a decimal or `p/q`.
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub precision_bits: Option<u32>,
    #[arg(long, value_enum, default_value_t = ModeArg::Rational)]
    pub mode: ModeArg,
    #[arg(long)]
    pub max_iters_override: Option<usize>,
    /// Output directory; results go to standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cmd {
    /// Extra-gradient ellipsoid: an ε-SVI point or a strict EVI certificate.
    Solve(RunArgs),
    /// Smooth-VI ellipsoid for quasar-convex objectives.
    Quasar(RunArgs),
    #[command(subcommand)]
    Game(GameCmd),
    /// Re-checks a certificate against an instance.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        certificate: PathBuf,
    },
    /// Writes the instance JSON of a generator.
    Gen(RunArgs),
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Reruns the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GameCmd {
    /// Strictest-ACCE program on an explicit game.
    MintyLp(RunArgs),
    /// Nash equilibrium of a harmonic game through the lift.
    Harmonic(RunArgs),
    /// ε-Nash equilibrium or strict CCE of a two-player concave game.
    NashOrScce(RunArgs),
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchCmd {
    /// Ellipsoid without extra-gradient against the alternating oracle.
    Noopt(RunArgs),
    /// Per-step volume ratios on random cut sequences.
    VolumeContraction(RunArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("MINTYVI_LOG")).format_timestamp(None).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code_for(&e))
        }
    }
}
