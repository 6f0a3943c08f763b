use std::path::PathBuf;

use clap::{ArgAction, Parser, Subcommand};

use crate::config::{Config, ConfigError, EscapeConfig, ProfileConfig};
use resolab_core::geometry::DEFAULT_HALF_WIDTH;

#[derive(Debug, Clone, Parser)]
#[command(
    name = "resolab",
    version,
    about = "Resolvent-norm laboratory for surfaces of revolution"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML run configuration.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory for result files.
    #[arg(short, long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Worker threads; 0 picks one per core.
    #[arg(short = 'j', long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Progress on stderr; repeat for more.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    /// Built-in experiment; see `preset-list`.
    #[arg(long, global = true)]
    pub preset: Option<String>,

    /// Run even when the hypothesis audit of the experiment fails.
    #[arg(long, global = true)]
    pub force: bool,

    /// Profile kind, replacing the `[profile]` section.
    #[arg(long, global = true)]
    pub profile: Option<String>,

    /// Half-width `S` of the profile given with `--profile`.
    #[arg(long, global = true)]
    pub half_width: Option<f64>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Integrate the reduced geodesic flow from one phase point.
    Flow,
    /// Closed-orbit census and labels of phase points.
    Classify,
    /// Build and verify an escape function near a hyperbolic orbit.
    Escape {
        /// Angular momentum of the orbit.
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,
    },
    /// Truncated resolvent norm at one h, with per-mode records.
    Resolve {
        #[arg(long)]
        h: Option<f64>,
    },
    /// h-sweep with scaling fit and audits.
    Sweep,
    /// Gluing identities and remainder decay on the double well.
    Glue,
    /// List the built-in experiments.
    PresetList,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Flow => "flow",
            Command::Classify => "classify",
            Command::Escape { .. } => "escape",
            Command::Resolve { .. } => "resolve",
            Command::Sweep => "sweep",
            Command::Glue => "glue",
            Command::PresetList => "preset-list",
        }
    }
}

impl Cli {
    /// The config file with command-line overrides folded in. The result is
    /// what gets hashed into the headers.
    pub fn effective_config(&self) -> Result<Config, ConfigError> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(p) = &self.preset {
            cfg.preset = Some(p.clone());
        }
        if let Some(kind) = &self.profile {
            let keep = cfg
                .profile
                .as_ref()
                .filter(|p| &p.kind == kind)
                .map(|p| p.params.clone())
                .unwrap_or_default();
            let half_width = self
                .half_width
                .or(cfg.profile.as_ref().map(|p| p.half_width))
                .unwrap_or(DEFAULT_HALF_WIDTH);
            cfg.profile = Some(ProfileConfig {
                kind: kind.clone(),
                params: keep,
                half_width,
            });
        } else if let (Some(hw), Some(p)) = (self.half_width, cfg.profile.as_mut()) {
            p.half_width = hw;
        }
        match &self.command {
            Command::Escape { mu: Some(mu) } => {
                cfg.escape.get_or_insert_with(EscapeConfig::default).mu = *mu
            }
            Command::Resolve { h: Some(h) } => {
                cfg.experiment.get_or_insert_with(Default::default).h = Some(*h)
            }
            _ => {}
        }
        Ok(cfg)
    }
}
