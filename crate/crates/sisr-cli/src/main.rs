//! `sisr`: simulate, analyze, and learn self-induced stochastic resonance
//! in the stochastic FitzHugh-Nagumo neuron.

mod commands;
mod config;
mod csvio;
mod manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Config;

/// A single-line, machine-parsable error.
#[derive(Debug)]
pub struct CliError(String);

impl CliError {
    pub fn new(msg: impl Into<String>) -> Self {
        let msg: String = msg.into();
        CliError(msg.replace('\n', "; "))
    }

    pub fn from_lib(e: impl std::fmt::Display) -> Self {
        Self::new(e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Parser)]
#[command(name = "sisr", version, about = "Noise-induced coherence in the stochastic FitzHugh-Nagumo neuron: simulation, escape theory, CV sweeps, and a physics-informed neural surrogate")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; all randomness derives from it.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Also write SVG plots.
    #[arg(long, global = true)]
    svg: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the excitable regime (discriminant, stability, fixed points).
    Regime {
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Dump the double-well potential and barrier/escape-time curves.
    Landscape {
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Integrate the stochastic system and write the trajectory.
    Simulate {
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        n_steps: Option<usize>,
    },
    /// CV-versus-noise curves or the (a, eps) minimum-CV map.
    Sweep,
    /// Train the physics-informed one-step surrogate.
    Train {
        #[arg(long)]
        epochs: Option<u64>,
    },
    /// Train and compare the four loss-combination variants.
    Ablate {
        #[arg(long)]
        epochs: Option<u64>,
    },
    /// Free-rollout evaluation of a trained checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: Option<String>,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Surrogate CV curve versus direct simulation.
    PredictCv {
        #[arg(long)]
        checkpoint: Option<String>,
    },
    /// Re-execute a recorded manifest; outputs are byte-identical.
    Rerun { manifest: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::new(format!("threads: {e}")))?;
    }
    if let Command::Rerun { manifest } = &cli.command {
        return commands::rerun(manifest, &cli.out, cli.threads > 0);
    }

    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let name = match &cli.command {
        Command::Regime { a, b, c, eps } => {
            override_opt(&mut config.model.a, *a);
            override_opt(&mut config.model.b, *b);
            override_opt(&mut config.model.c, *c);
            override_opt(&mut config.model.eps, *eps);
            "regime"
        }
        Command::Landscape { a, sigma } => {
            override_opt(&mut config.model.a, *a);
            override_opt(&mut config.model.sigma, *sigma);
            "landscape"
        }
        Command::Simulate { sigma, eps, n_steps } => {
            override_opt(&mut config.model.sigma, *sigma);
            override_opt(&mut config.model.eps, *eps);
            override_opt(&mut config.simulate.n_steps, *n_steps);
            "simulate"
        }
        Command::Sweep => "sweep",
        Command::Train { epochs } => {
            override_opt(&mut config.train.epochs, *epochs);
            "train"
        }
        Command::Ablate { epochs } => {
            override_opt(&mut config.train.epochs, *epochs);
            "ablate"
        }
        Command::Eval { checkpoint, sigma } => {
            override_opt(&mut config.model.sigma, *sigma);
            if let Some(ckpt) = checkpoint {
                config.eval.checkpoint = ckpt.clone();
            }
            "eval"
        }
        Command::PredictCv { checkpoint } => {
            if let Some(ckpt) = checkpoint {
                config.eval.checkpoint = ckpt.clone();
            }
            "predict-cv"
        }
        Command::Rerun { .. } => unreachable!(),
    };
    let ctx = commands::Ctx { config, seed: cli.seed, svg: cli.svg };
    commands::dispatch_command(name, &ctx, &cli.out)
}

fn override_opt<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
