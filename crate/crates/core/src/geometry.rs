//! Surfaces of revolution `ℝ_s × S¹_θ` with metric `ds² + a(s)² dθ²`, and
//! radial potentials.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::smooth::{psi, psi_d};
use crate::{Error, Result};

/// Default half-width `S` of the computational interval `[-S, S]`.
pub const DEFAULT_HALF_WIDTH: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProfileKind {
    Catenoid,
    HyperbolicCylinder,
    DoubleWell,
    NontrappingMonotone,
    Custom,
}

impl ProfileKind {
    pub fn name(self) -> &'static str {
        match self {
            ProfileKind::Catenoid => "catenoid",
            ProfileKind::HyperbolicCylinder => "hyperbolic_cylinder",
            ProfileKind::DoubleWell => "double_well",
            ProfileKind::NontrappingMonotone => "nontrapping_monotone",
            ProfileKind::Custom => "custom",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "catenoid" => ProfileKind::Catenoid,
            "hyperbolic_cylinder" => ProfileKind::HyperbolicCylinder,
            "double_well" => ProfileKind::DoubleWell,
            "nontrapping_monotone" => ProfileKind::NontrappingMonotone,
            "custom" => ProfileKind::Custom,
            _ => return None,
        })
    }
}

/// Warp function supplied by the caller: returns `[a, a', a'']` at `s`.
pub type WarpFn = dyn Fn(f64) -> [f64; 3] + Send + Sync;

#[derive(Clone)]
enum Warp {
    Catenoid,
    Cosh {
        beta: f64,
    },
    /// `c0 + k (s² - s0²)²`
    Quartic {
        c0: f64,
        k: f64,
        s0: f64,
    },
    /// `lo + (hi - lo)(1 + tanh(s / ell)) / 2`
    Tanh {
        lo: f64,
        hi: f64,
        ell: f64,
    },
    Custom(Arc<WarpFn>),
}

/// Warp function `a(s)` on `[-S, S]`.
#[derive(Clone)]
pub struct Profile {
    pub kind: ProfileKind,
    pub params: Vec<f64>,
    pub half_width: f64,
    warp: Warp,
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Profile")
            .field("kind", &self.kind)
            .field("params", &self.params)
            .field("half_width", &self.half_width)
            .finish()
    }
}

/// Builds one of the built-in profiles.
///
/// Parameters by kind (empty `params` selects the defaults):
/// - `catenoid`: none, `a = √(1 + s²)`.
/// - `hyperbolic_cylinder`: `[β]`, `a = β cosh s`; default `β = 0.3`.
/// - `double_well`: `[s0, c0, peak]`, `a = c0 + k (s² - s0²)²` with
///   `k = (peak - c0) / s0⁴`; defaults `[2, 1, 2]`.
/// - `nontrapping_monotone`: `[lo, hi, ell]`,
///   `a = lo + (hi - lo)(1 + tanh(s/ell))/2`; defaults `[0.5, 2.5, 2]`.
pub fn make_profile(kind: ProfileKind, params: &[f64], half_width: f64) -> Result<Profile> {
    if !(half_width > 0.0) || !half_width.is_finite() {
        return Err(Error::InvalidParams(format!(
            "half width must be positive, got {half_width}"
        )));
    }
    let bad = |msg: &str| Err(Error::InvalidParams(msg.into()));
    let (warp, params) = match kind {
        ProfileKind::Catenoid => {
            if !params.is_empty() {
                return bad("catenoid takes no parameters");
            }
            (Warp::Catenoid, Vec::new())
        }
        ProfileKind::HyperbolicCylinder => {
            let beta = params.first().copied().unwrap_or(0.3);
            if params.len() > 1 || !(beta > 0.0) {
                return bad("hyperbolic_cylinder takes one positive scale β");
            }
            (Warp::Cosh { beta }, alloc::vec![beta])
        }
        ProfileKind::DoubleWell => {
            let p = if params.is_empty() {
                &[2.0, 1.0, 2.0][..]
            } else {
                params
            };
            if p.len() != 3 {
                return bad("double_well takes [s0, c0, peak]");
            }
            let (s0, c0, peak) = (p[0], p[1], p[2]);
            if !(s0 > 0.0) || !(c0 > 0.0) || !(peak > c0) {
                return bad("double_well needs s0 > 0, c0 > 0 and peak > c0");
            }
            if s0 >= half_width / 2.0 {
                return Err(Error::InvalidParams(format!(
                    "double_well needs s0 < S/2, got s0 = {s0}, S = {half_width}"
                )));
            }
            (
                Warp::Quartic {
                    c0,
                    k: (peak - c0) / s0.powi(4),
                    s0,
                },
                p.to_vec(),
            )
        }
        ProfileKind::NontrappingMonotone => {
            let p = if params.is_empty() {
                &[0.5, 2.5, 2.0][..]
            } else {
                params
            };
            if p.len() != 3 {
                return bad("nontrapping_monotone takes [lo, hi, ell]");
            }
            let (lo, hi, ell) = (p[0], p[1], p[2]);
            if !(lo > 0.0) || !(hi > lo) || !(ell > 0.0) {
                return bad("nontrapping_monotone needs 0 < lo < hi and ell > 0");
            }
            (Warp::Tanh { lo, hi, ell }, p.to_vec())
        }
        ProfileKind::Custom => return bad("custom profiles are built with Profile::custom"),
    };
    Ok(Profile {
        kind,
        params,
        half_width,
        warp,
    })
}

impl Profile {
    /// Custom warp from a closure returning `[a, a', a'']`. Rejected unless
    /// `a > 0` at every sample of a fine grid.
    pub fn custom(half_width: f64, warp: Arc<WarpFn>) -> Result<Profile> {
        if !(half_width > 0.0) {
            return Err(Error::InvalidParams(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        let n = 4001;
        for i in 0..n {
            let s = -half_width + 2.0 * half_width * i as f64 / (n - 1) as f64;
            let a = warp(s)[0];
            if !(a > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "custom warp has a({s}) = {a} <= 0"
                )));
            }
        }
        Ok(Profile {
            kind: ProfileKind::Custom,
            params: Vec::new(),
            half_width,
            warp: Warp::Custom(warp),
        })
    }

    /// The flat cylinder `a ≡ c`.
    pub fn flat(c: f64, half_width: f64) -> Result<Profile> {
        Profile::custom(half_width, Arc::new(move |_| [c, 0.0, 0.0]))
    }

    /// `[a, a', a'']` at `s`.
    pub fn jet(&self, s: f64) -> [f64; 3] {
        match &self.warp {
            Warp::Catenoid => {
                let r = (1.0 + s * s).sqrt();
                [r, s / r, 1.0 / (r * r * r)]
            }
            Warp::Cosh { beta } => [beta * s.cosh(), beta * s.sinh(), beta * s.cosh()],
            Warp::Quartic { c0, k, s0 } => {
                let u = s * s - s0 * s0;
                [
                    c0 + k * u * u,
                    4.0 * k * s * u,
                    4.0 * k * (3.0 * s * s - s0 * s0),
                ]
            }
            Warp::Tanh { lo, hi, ell } => {
                let t = (s / ell).tanh();
                let sech2 = 1.0 - t * t;
                let amp = 0.5 * (hi - lo);
                [
                    lo + amp * (1.0 + t),
                    amp * sech2 / ell,
                    -2.0 * amp * sech2 * t / (ell * ell),
                ]
            }
            Warp::Custom(f) => f(s),
        }
    }

    pub fn a(&self, s: f64) -> f64 {
        self.jet(s)[0]
    }

    pub fn a_d(&self, s: f64) -> f64 {
        self.jet(s)[1]
    }

    pub fn a_dd(&self, s: f64) -> f64 {
        self.jet(s)[2]
    }

    /// Potential produced by conjugating `a^{-1} ∂_s a ∂_s` with `a^{1/2}`:
    /// `q_a = a''/(2a) - a'²/(4a²)`, so that
    /// `a^{1/2} (a^{-1} ∂_s a ∂_s) a^{-1/2} = ∂_s² - q_a`.
    pub fn curvature_potential(&self, s: f64) -> f64 {
        let [a, d, dd] = self.jet(s);
        dd / (2.0 * a) - d * d / (4.0 * a * a)
    }

    /// Well location `s0` of a double well profile.
    pub fn well_location(&self) -> Option<f64> {
        match self.warp {
            Warp::Quartic { s0, .. } => Some(s0),
            _ => None,
        }
    }

    pub fn contains(&self, s: f64) -> bool {
        s.abs() <= self.half_width
    }
}

/// Radial potential `V(s)`, compactly supported inside the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential {
    Zero,
    /// `amp · ψ(1 - ((s - center)/radius)²) · e` normalized to peak `amp`.
    Bump {
        amp: f64,
        center: f64,
        radius: f64,
    },
}

impl Potential {
    pub fn value(&self, s: f64) -> f64 {
        self.jet(s)[0]
    }

    pub fn deriv(&self, s: f64) -> f64 {
        self.jet(s)[1]
    }

    /// `[V, V']`.
    pub fn jet(&self, s: f64) -> [f64; 2] {
        match *self {
            Potential::Zero => [0.0, 0.0],
            Potential::Bump {
                amp,
                center,
                radius,
            } => {
                let x = (s - center) / radius;
                let u = 1.0 - x * x;
                let scale = amp * core::f64::consts::E;
                [scale * psi(u), scale * psi_d(u) * (-2.0 * x / radius)]
            }
        }
    }

    /// Closed interval outside of which `V ≡ 0`, `None` for the zero potential.
    pub fn support(&self) -> Option<(f64, f64)> {
        match *self {
            Potential::Zero => None,
            Potential::Bump { center, radius, .. } => Some((center - radius, center + radius)),
        }
    }

    /// Checks that the support sits strictly inside the profile's domain.
    pub fn validate(&self, profile: &Profile) -> Result<()> {
        if let Some((lo, hi)) = self.support() {
            if lo <= -profile.half_width || hi >= profile.half_width {
                return Err(Error::InvalidParams(format!(
                    "potential support [{lo}, {hi}] leaves the domain"
                )));
            }
        }
        if let Potential::Bump { radius, .. } = *self {
            if !(radius > 0.0) {
                return Err(Error::InvalidParams(
                    "potential radius must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// `V_eff(s; μ) = μ²/a(s)² + V(s)`.
pub fn effective_potential(profile: &Profile, potential: &Potential, mu: f64, s: f64) -> f64 {
    let a = profile.a(s);
    mu * mu / (a * a) + potential.value(s)
}

/// `∂_s V_eff(s; μ)`.
pub fn effective_potential_d(profile: &Profile, potential: &Potential, mu: f64, s: f64) -> f64 {
    let [a, d, _] = profile.jet(s);
    -2.0 * mu * mu * d / (a * a * a) + potential.deriv(s)
}

/// `∂_s² V_eff(s; μ)` by a centered difference of the exact first derivative
/// (the potential only exposes one derivative).
pub fn effective_potential_dd(profile: &Profile, potential: &Potential, mu: f64, s: f64) -> f64 {
    let [a, d, dd] = profile.jet(s);
    let warp = mu * mu * (6.0 * d * d / (a * a * a * a) - 2.0 * dd / (a * a * a));
    let eps = 1e-5;
    let v = (potential.deriv(s + eps) - potential.deriv(s - eps)) / (2.0 * eps);
    warp + v
}

/// Symbol `p = σ² + μ²/a² + V`.
pub fn hamiltonian(profile: &Profile, potential: &Potential, s: f64, sigma: f64, mu: f64) -> f64 {
    sigma * sigma + effective_potential(profile, potential, mu, s)
}
