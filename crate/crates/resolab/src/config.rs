//! TOML run configuration.
//!
//! Every section is optional at parse time; commands ask for the sections
//! they need and report the first missing key by its dotted path.

use std::fmt;
use std::path::Path;

use resolab_core::geometry::{make_profile, Potential, Profile, ProfileKind, DEFAULT_HALF_WIDTH};
use resolab_core::lab::{preset, ExperimentSpec, LambdaRule, Prediction};
use resolab_core::quantize::{BarrierSpec, CutoffSpec, Factor, Symbol};
use resolab_core::smooth::Window;
use resolab_core::C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Seed used when neither the config nor the command line sets one.
pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Missing(String),
    Invalid { key: String, reason: String },
    Parse(String),
    Io(String),
}

impl ConfigError {
    pub fn invalid(key: &str, reason: impl fmt::Display) -> Self {
        ConfigError::Invalid {
            key: key.into(),
            reason: reason.to_string(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Missing(key) => write!(f, "missing key `{key}`"),
            ConfigError::Invalid { key, reason } => write!(f, "invalid `{key}`: {reason}"),
            ConfigError::Parse(msg) => write!(f, "cannot parse config: {msg}"),
            ConfigError::Io(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub profile: Option<ProfileConfig>,
    pub potential: Option<PotentialConfig>,
    pub flow: Option<FlowConfig>,
    pub classify: Option<ClassifyConfig>,
    pub escape: Option<EscapeConfig>,
    pub experiment: Option<ExperimentConfig>,
    pub glue: Option<GlueConfig>,
}

fn default_half_width() -> f64 {
    DEFAULT_HALF_WIDTH
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub kind: String,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    Zero,
    Bump { amp: f64, center: f64, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub s: f64,
    /// Defaults to the forward shell point at `energy`.
    pub sigma: Option<f64>,
    pub mu: f64,
    pub t_final: f64,
    #[serde(default = "one")]
    pub energy: f64,
    pub dt: Option<f64>,
    pub record_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    #[serde(default = "one")]
    pub energy: f64,
    /// Phase points `[s, σ, μ]` to label.
    #[serde(default)]
    pub points: Vec<[f64; 3]>,
    /// Moves each point onto the energy shell along `σ`, keeping the sign
    /// of `σ`.
    #[serde(default = "yes")]
    pub on_shell: bool,
    pub horizon: Option<f64>,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            energy: 1.0,
            points: Vec::new(),
            on_shell: true,
            horizon: None,
        }
    }
}

fn default_samples() -> usize {
    1000
}

fn default_decomposition_grid() -> usize {
    61
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EscapeConfig {
    #[serde(default = "one")]
    pub mu: f64,
    /// Picks the hyperbolic orbit nearest to this latitude; defaults to the
    /// one nearest to `s = 0`.
    pub s_star: Option<f64>,
    #[serde(default = "one")]
    pub energy: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_decomposition_grid")]
    pub decomposition_grid: usize,
    /// Half-width of the box on which `q = 1` is checked.
    pub gamma: Option<f64>,
    /// Half-widths of `V₁, U₁, U₀, V₀, U`.
    pub boxes: Option<[f64; 5]>,
}

impl Default for EscapeConfig {
    fn default() -> Self {
        EscapeConfig {
            mu: 1.0,
            s_star: None,
            energy: 1.0,
            samples: default_samples(),
            decomposition_grid: default_decomposition_grid(),
            gamma: None,
            boxes: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WindowConfig {
    /// 1 for `|x| ≤ inner`, 0 for `|x| ≥ outer`.
    Radial { inner: f64, outer: f64 },
    /// 1 on `[lo, hi]`, 0 outside `[lo - ramp, hi + ramp]`.
    Interval { lo: f64, hi: f64, ramp: f64 },
}

impl WindowConfig {
    fn factor(self, key: &str) -> Result<Factor, ConfigError> {
        let w = match self {
            WindowConfig::Radial { inner, outer } => {
                if !(inner >= 0.0 && outer > inner) {
                    return Err(ConfigError::invalid(key, "need 0 <= inner < outer"));
                }
                Window::radial(inner, outer)
            }
            WindowConfig::Interval { lo, hi, ramp } => {
                if !(hi >= lo && ramp > 0.0) {
                    return Err(ConfigError::invalid(key, "need lo <= hi and ramp > 0"));
                }
                Window::psi(lo, hi, ramp)
            }
        };
        Ok(Factor::Window(w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffConfig {
    pub space: WindowConfig,
    /// Window in `μ = hm`; none means every mode.
    pub mode: Option<WindowConfig>,
}

impl CutoffConfig {
    fn spec(self, key: &str) -> Result<CutoffSpec, ConfigError> {
        let space = self.space.factor(&format!("{key}.space"))?;
        let mode = match self.mode {
            Some(m) => m.factor(&format!("{key}.mode"))?,
            None => Factor::One,
        };
        Ok(CutoffSpec::new(Symbol::spatial(space), mode))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaConfig {
    Fixed {
        re: f64,
        #[serde(default)]
        im: f64,
    },
    ImagPower {
        coef: f64,
        power: i32,
    },
    NearestQuasimode {
        window: f64,
    },
}

impl LambdaConfig {
    fn rule(self) -> LambdaRule {
        match self {
            LambdaConfig::Fixed { re, im } => LambdaRule::Fixed(C64::new(re, im)),
            LambdaConfig::ImagPower { coef, power } => LambdaRule::ImagPower { coef, power },
            LambdaConfig::NearestQuasimode { window } => LambdaRule::NearestQuasimode { window },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: Option<String>,
    pub prediction: Option<String>,
    pub h_list: Option<Vec<f64>>,
    /// Step used by `resolve`; defaults to the first entry of the h list.
    pub h: Option<f64>,
    pub points_per_h: Option<f64>,
    pub energy: Option<f64>,
    /// Phase-space barrier of the double well.
    pub barrier: Option<bool>,
    pub cutoff_a: Option<CutoffConfig>,
    /// Defaults to `cutoff_a`.
    pub cutoff_b: Option<CutoffConfig>,
    pub lambda: Option<LambdaConfig>,
    pub power_tol: Option<f64>,
    pub max_iter: Option<usize>,
    /// Tolerance of the grid-refinement audit run by `sweep`.
    pub convergence_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlueConfig {
    pub mu: Option<f64>,
    pub probes: Option<usize>,
    /// One mode per h, overriding `mu`.
    pub modes: Option<Vec<i64>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("cannot read {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form, in hex.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn profile(&self) -> Result<Profile, ConfigError> {
        let p = self
            .profile
            .as_ref()
            .ok_or_else(|| ConfigError::Missing("profile".into()))?;
        let kind = ProfileKind::parse(&p.kind)
            .filter(|k| *k != ProfileKind::Custom)
            .ok_or_else(|| {
                ConfigError::invalid("profile.kind", format!("unknown profile kind {:?}", p.kind))
            })?;
        make_profile(kind, &p.params, p.half_width).map_err(|e| ConfigError::invalid("profile", e))
    }

    pub fn potential(&self, profile: &Profile) -> Result<Potential, ConfigError> {
        let v = match self.potential {
            None | Some(PotentialConfig::Zero) => Potential::Zero,
            Some(PotentialConfig::Bump {
                amp,
                center,
                radius,
            }) => Potential::Bump {
                amp,
                center,
                radius,
            },
        };
        v.validate(profile)
            .map_err(|e| ConfigError::invalid("potential", e))?;
        Ok(v)
    }

    /// The experiment of `resolve`, `sweep` and `glue`: a preset with the
    /// allowed overrides, or a custom spec built from `[profile]` and
    /// `[experiment]`.
    pub fn experiment(&self) -> Result<ExperimentSpec, ConfigError> {
        let e = self.experiment.clone().unwrap_or_default();
        let mut spec = match &self.preset {
            Some(name) => {
                let custom = [
                    ("experiment.name", e.name.is_some()),
                    ("experiment.prediction", e.prediction.is_some()),
                    ("experiment.energy", e.energy.is_some()),
                    ("experiment.barrier", e.barrier.is_some()),
                    ("experiment.cutoff_a", e.cutoff_a.is_some()),
                    ("experiment.cutoff_b", e.cutoff_b.is_some()),
                    ("experiment.lambda", e.lambda.is_some()),
                    ("profile", self.profile.is_some()),
                    ("potential", self.potential.is_some()),
                ];
                if let Some((key, _)) = custom.iter().find(|(_, set)| *set) {
                    return Err(ConfigError::invalid(
                        key,
                        "presets fix this key; drop `preset` to run a custom spec",
                    ));
                }
                preset(name).map_err(|err| ConfigError::invalid("preset", err))?
            }
            None => self.custom_experiment(&e)?,
        };
        if let Some(hs) = &e.h_list {
            spec.h_list = hs.clone();
        }
        if let Some(p) = e.points_per_h {
            spec.points_per_h = p;
        }
        if let Some(t) = e.power_tol {
            spec.power.tol = t;
        }
        if let Some(m) = e.max_iter {
            spec.power.max_iter = m;
        }
        spec.power.seed = self.seed();
        spec.validate()
            .map_err(|err| ConfigError::invalid("experiment", err))?;
        Ok(spec)
    }

    fn custom_experiment(&self, e: &ExperimentConfig) -> Result<ExperimentSpec, ConfigError> {
        let profile = self.profile()?;
        let potential = self.potential(&profile)?;
        let a = e
            .cutoff_a
            .ok_or_else(|| ConfigError::Missing("experiment.cutoff_a".into()))?
            .spec("experiment.cutoff_a")?;
        let b = match e.cutoff_b {
            Some(c) => c.spec("experiment.cutoff_b")?,
            None => a.clone(),
        };
        let tag = e
            .prediction
            .as_deref()
            .ok_or_else(|| ConfigError::Missing("experiment.prediction".into()))?;
        let prediction = Prediction::parse(tag).ok_or_else(|| {
            ConfigError::invalid(
                "experiment.prediction",
                format!("unknown prediction {tag:?}"),
            )
        })?;
        let name = e.name.clone().unwrap_or_else(|| "custom".into());
        let mut spec = ExperimentSpec::new(&name, profile, a, b, prediction);
        spec.potential = potential;
        if let Some(en) = e.energy {
            spec.energy = en;
        }
        if let Some(l) = e.lambda {
            spec.lambda = l.rule();
        }
        if e.barrier == Some(true) {
            if spec.profile.kind != ProfileKind::DoubleWell {
                return Err(ConfigError::invalid(
                    "experiment.barrier",
                    "the barrier needs a double_well profile",
                ));
            }
            spec.barrier = Some(BarrierSpec::for_double_well(spec.profile.params[0]));
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
seed = 7
preset = "nontrapping"

[experiment]
h_list = [0.04, 0.02]
points_per_h = 10.0
convergence_tol = 0.02

[flow]
s = 0.5
mu = 0.8
t_final = 20.0

[classify]
points = [[0.0, 0.0, 1.0], [1.0, 0.5, 0.2]]

[escape]
mu = -1.0
boxes = [0.15, 0.25, 0.6, 0.7, 1.0]

[glue]
modes = [25, 50]
"#;

    #[test]
    fn round_trips() {
        let c = Config::parse(FULL).unwrap();
        let again = Config::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        assert_eq!(c.escape.as_ref().unwrap().samples, 1000);
    }

    #[test]
    fn custom_spec_round_trips() {
        let text = r#"
[profile]
kind = "catenoid"
half_width = 6.0

[potential]
kind = "bump"
amp = 0.1
center = 2.0
radius = 0.5

[experiment]
prediction = "log_loss"
cutoff_a = { space = { kind = "radial", inner = 1.0, outer = 1.5 }, mode = { kind = "interval", lo = -0.5, hi = 0.5, ramp = 0.2 } }
lambda = { kind = "fixed", re = 0.0, im = 0.01 }
"#;
        let c = Config::parse(text).unwrap();
        assert_eq!(c, Config::parse(&c.to_toml()).unwrap());
        let spec = c.experiment().unwrap();
        assert_eq!(spec.name, "custom");
        assert_eq!(spec.prediction, Prediction::LogLoss);
        assert!(matches!(spec.potential, Potential::Bump { .. }));
    }

    #[test]
    fn missing_profile_is_named() {
        let c = Config::parse("[experiment]\nprediction = \"log_loss\"\n").unwrap();
        let err = c.experiment().unwrap_err();
        assert_eq!(err, ConfigError::Missing("profile".into()));
        assert!(err.to_string().contains("`profile`"));
    }

    #[test]
    fn missing_nested_field_is_named() {
        let err = Config::parse("[profile]\nparams = []\n").unwrap_err();
        assert!(err.to_string().contains("kind"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::parse("sed = 3\n").is_err());
    }

    #[test]
    fn presets_refuse_custom_keys() {
        let c = Config::parse("preset = \"prop53\"\n[experiment]\nenergy = 2.0\n").unwrap();
        let err = c.experiment().unwrap_err();
        assert!(err.to_string().contains("experiment.energy"), "{err}");
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::parse("seed = 1\n").unwrap();
        let b = Config::parse("seed = 2\n").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
