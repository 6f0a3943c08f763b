//! Truncated resolvent norms `‖A R_h(λ) B‖` over angular modes, h-sweeps
//! for the built-in experiments, and scaling fits.
//!
//! Cutoffs commute with rotations, so the norm is the supremum over modes
//! `m` of the per-mode norms, restricted here to the modes that meet the
//! energy shell over the cutoff supports.

mod fit;
mod modes;
mod power;
mod presets;
mod sweep;

pub use fit::{fit_scaling, ScalingFit};
pub use modes::{
    dense_mode_norm, mode_resolvent_norm, nearest_quasimode, resolvent_norm, sandwich_norm,
    sandwich_window, select_modes, LambdaRule, ModeNorm, ModePolicy, ModeRecord, ModeScan, ModeSet,
    Quasimode, Sandwich,
};
pub use power::{power_norm, DenseMap, LinearMap, NormEstimate, PowerOptions};
pub use presets::{preset, AuditCheck, HypothesisAudit, PRESETS};
pub use sweep::{convergence_audit, run_row, run_sweep, ConvergenceAudit, SweepResult, SweepRow};

use alloc::string::String;
use alloc::vec::Vec;

use crate::geometry::{Potential, Profile};
use crate::quantize::{Absorber, BarrierSpec, CutoffSpec, DEFAULT_BAND_TOL};
use crate::{Error, Result};

/// Desk-scale sweep, `1/h ∈ {25, 36, 50, 71, 100, 143, 200}`.
pub const DEFAULT_H_LIST: [f64; 7] = [
    1.0 / 25.0,
    1.0 / 36.0,
    1.0 / 50.0,
    1.0 / 71.0,
    1.0 / 100.0,
    1.0 / 143.0,
    1.0 / 200.0,
];

/// Expected scaling of the truncated resolvent norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prediction {
    /// `C/h` for cutoffs on a nontrapping geometry.
    NontrappingHInv,
    /// `C log(1/h)/h` for cutoffs over a hyperbolic orbit.
    LogLoss,
    /// `C log²(1/h)/h` for cutoffs over two glued hyperbolic regions.
    Log2Loss,
    /// `C/h` for microlocal cutoffs whose supports avoid the bad part of
    /// the trapped set.
    MicrolocalHInv,
    /// Faster than any power of `1/h` near an elliptic orbit.
    EllipticBlowup,
}

impl Prediction {
    pub fn name(self) -> &'static str {
        match self {
            Prediction::NontrappingHInv => "nontrapping_h_inv",
            Prediction::LogLoss => "log_loss",
            Prediction::Log2Loss => "log2_loss",
            Prediction::MicrolocalHInv => "microlocal_h_inv",
            Prediction::EllipticBlowup => "elliptic_blowup",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "nontrapping_h_inv" => Prediction::NontrappingHInv,
            "log_loss" => Prediction::LogLoss,
            "log2_loss" => Prediction::Log2Loss,
            "microlocal_h_inv" => Prediction::MicrolocalHInv,
            "elliptic_blowup" => Prediction::EllipticBlowup,
            _ => return None,
        })
    }

    /// The law in words, used as the anchor in result headers.
    pub fn law(self) -> &'static str {
        match self {
            Prediction::NontrappingHInv => "nontrapping bound C/h",
            Prediction::LogLoss => "hyperbolic trapping loss C log(1/h)/h",
            Prediction::Log2Loss => "glued hyperbolic bound C log^2(1/h)/h",
            Prediction::MicrolocalHInv => {
                "microlocal nontrapping bound C/h away from the trapped set"
            }
            Prediction::EllipticBlowup => "elliptic trapping, superpolynomial growth",
        }
    }
}

/// One resolvent-norm experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub name: String,
    /// Short description of the statement the experiment probes.
    pub anchor: String,
    pub profile: Profile,
    pub potential: Potential,
    pub energy: f64,
    pub barrier: Option<BarrierSpec>,
    pub cutoff_a: CutoffSpec,
    pub cutoff_b: CutoffSpec,
    pub h_list: Vec<f64>,
    pub lambda: LambdaRule,
    pub policy: ModePolicy,
    pub prediction: Prediction,
    pub absorber: Absorber,
    pub power: PowerOptions,
    pub points_per_h: f64,
    pub band_tol: f64,
    pub audit: HypothesisAudit,
}

impl ExperimentSpec {
    /// A spec with library defaults and an empty audit.
    pub fn new(
        name: &str,
        profile: Profile,
        cutoff_a: CutoffSpec,
        cutoff_b: CutoffSpec,
        prediction: Prediction,
    ) -> Self {
        let absorber = Absorber::standard(profile.half_width);
        ExperimentSpec {
            name: name.into(),
            anchor: prediction.law().into(),
            profile,
            potential: Potential::Zero,
            energy: 1.0,
            barrier: None,
            cutoff_a,
            cutoff_b,
            h_list: DEFAULT_H_LIST.to_vec(),
            lambda: LambdaRule::default(),
            policy: ModePolicy::default(),
            prediction,
            absorber,
            power: PowerOptions::default(),
            points_per_h: 8.0,
            band_tol: DEFAULT_BAND_TOL,
            audit: HypothesisAudit::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.h_list.is_empty() || self.h_list.iter().any(|&h| !(h > 0.0 && h < 1.0)) {
            return Err(Error::InvalidParams(
                "h list must be nonempty with every h in (0, 1)".into(),
            ));
        }
        if self.h_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParams(
                "h list must be strictly decreasing".into(),
            ));
        }
        if !(self.points_per_h >= 8.0) {
            return Err(Error::GridTooCoarse(alloc::format!(
                "need at least 8 points per h, got {}",
                self.points_per_h
            )));
        }
        if !(self.energy > 0.0) {
            return Err(Error::InvalidParams(alloc::format!(
                "energy must be positive, got {}",
                self.energy
            )));
        }
        self.absorber.validate(self.profile.half_width)?;
        self.potential.validate(&self.profile)?;
        self.power.validate()
    }
}

#[cfg(test)]
mod tests;
