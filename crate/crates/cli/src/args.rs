use crate::config::{Analysis, DestabilizeMode, ExperimentConfig, Nonlinearity, Sweep};
use crate::CliError;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "tsdyn", version, about = "Linear and perturbed-linear dynamics on time scales")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the components of a scale and its grain profile.
    Scale(Flags),
    /// Lyapunov exponents and the central upper exponent over a block sweep.
    Exponents(Flags),
    /// Empirical boundedness, strong stability verdicts and certificates.
    Classify(Flags),
    /// Build a small perturbation that makes a bounded system grow.
    Destabilize(Flags),
    /// Simulate a linear, quadratic or tube-perturbed system.
    Simulate(Flags),
    /// Run the analysis named in the config file.
    Run(Flags),
}

impl Command {
    pub fn parts(self) -> (Option<Analysis>, Flags) {
        match self {
            Command::Scale(f) => (Some(Analysis::Scale), f),
            Command::Exponents(f) => (Some(Analysis::Exponents), f),
            Command::Classify(f) => (Some(Analysis::Classify), f),
            Command::Destabilize(f) => (Some(Analysis::Destabilize), f),
            Command::Simulate(f) => (Some(Analysis::Simulate), f),
            Command::Run(f) => (None, f),
        }
    }
}

/// Flags shared by all subcommands; each overrides the matching config key.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Flags {
    /// TOML experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    /// Numerator of the continuous fraction of the `example46` scale.
    #[arg(long)]
    pub p: Option<u32>,
    #[arg(long)]
    pub q: Option<u32>,
    /// Scale description file.
    #[arg(long)]
    pub scale_file: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Block lengths for the central exponent, `start:end:step`.
    #[arg(long = "T-sweep", value_name = "A:B:STEP")]
    pub t_sweep: Option<Sweep>,
    /// Destabilization mode: `pipeline` or `rotation`.
    #[arg(long)]
    pub mode: Option<DestabilizeMode>,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// `none`, `quadratic` or `tube`.
    #[arg(long)]
    pub nonlinearity: Option<Nonlinearity>,
}

impl Flags {
    /// The config file (if any) with these flags laid over it.
    pub fn resolve(&self, analysis: Option<Analysis>) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.overlay(ExperimentConfig {
            preset: self.preset.clone(),
            p: self.p,
            q: self.q,
            scale_file: self.scale_file.clone(),
            out: self.out.clone(),
            horizon: self.horizon,
            seed: self.seed,
            delta: self.delta,
            eps: self.eps,
            t_sweep: self.t_sweep,
            mode: self.mode,
            x0: self.x0.clone(),
            nonlinearity: self.nonlinearity,
            analysis,
            ..Default::default()
        });
        if self.scale_file.is_some() {
            cfg.scale = None;
        }
        if self.preset.is_some() && self.config.is_some() {
            // A preset on the command line replaces the system of the file.
            if self.scale_file.is_none() {
                cfg.scale = None;
                cfg.scale_file = None;
            }
            cfg.matrix = None;
            cfg.matrix_imag = None;
            cfg.piecewise = None;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
