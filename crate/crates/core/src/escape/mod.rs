//! Escape functions on the reduced phase plane at fixed angular momentum.
//!
//! Near a hyperbolic latitude orbit `Γ` the function
//! `q = χ_q · f(q̃)`, `q̃ = Σ_k χ_k(t_k) φ_k(y_k)`, is built from flow-box
//! tubes around pieces of the unstable manifold `Γ₊`. Each tube carries
//! coordinates `(y, t)`: `y` is the offset along a section through the seed
//! orthogonal to `H_p`, and `t` the flow time from that section, so that
//! `H_p t = 1`, `H_p y = 0` and `H_p q̃ = Σ χ'_k φ_k` exactly.

mod commutator;
mod verify;

pub use commutator::{commutator_decomposition, CommutatorDecomposition, Partition};
pub use verify::{verify_escape_function, Clause, EscapeReport};

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::dynamics::{
    escape_times, ClosedOrbit, EscapeTimeOptions, EscapeTimes, PhasePoint, Rect, ReducedFlow,
    RegionRole, RegionSpec, Sample, Stability,
};
use crate::geometry::{effective_potential_d, effective_potential_dd, Potential, Profile};
use crate::smooth::{ramp, ramp_d};
use crate::{Error, Result};

/// Nested boxes `Γ-box ⋐ V₁ ⋐ U₁ ⋐ U₀ ⋐ V₀ ⋐ U` centred on the orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeRegions {
    /// Neighbourhood of `Γ` on which `q ≡ 1` is checked.
    pub gamma: Rect,
    pub v1: Rect,
    pub u1: Rect,
    pub u0: Rect,
    pub v0: Rect,
    pub u: Rect,
}

impl EscapeRegions {
    /// Square boxes around `(s*, 0)` with half-widths `[V₁, U₁, U₀, V₀, U]`
    /// and a Γ-box of half-width `gamma`.
    pub fn boxes(s_star: f64, gamma: f64, half: [f64; 5]) -> Self {
        let r = |w: f64| Rect::centered(s_star, 0.0, w, w);
        EscapeRegions {
            gamma: r(gamma),
            v1: r(half[0]),
            u1: r(half[1]),
            u0: r(half[2]),
            v0: r(half[3]),
            u: r(half[4]),
        }
    }

    /// Half-widths 0.03, 0.15, 0.25, 0.6, 0.7 and 1.0.
    pub fn standard(s_star: f64) -> Self {
        Self::boxes(s_star, 0.03, [0.15, 0.25, 0.6, 0.7, 1.0])
    }

    fn chain(&self) -> [Rect; 6] {
        [self.gamma, self.v1, self.u1, self.u0, self.v0, self.u]
    }

    /// Each box compactly inside the next, and `Γ` inside the Γ-box.
    pub fn check(&self, orbit: &ClosedOrbit) -> Result<()> {
        let names = ["Γ-box", "V1", "U1", "U0", "V0", "U"];
        let c = self.chain();
        for k in 0..5 {
            let (a, b) = (c[k], c[k + 1]);
            let inside =
                a.s.0 > b.s.0 && a.s.1 < b.s.1 && a.sigma.0 > b.sigma.0 && a.sigma.1 < b.sigma.1;
            if !inside {
                return Err(Error::Precondition(format!(
                    "{} is not compactly inside {}",
                    names[k],
                    names[k + 1]
                )));
            }
        }
        if !(self.gamma.gauge(orbit.s_star, 0.0) < 1.0) {
            return Err(Error::Precondition(format!("Γ = {orbit} is not inside U1")));
        }
        Ok(())
    }

    pub fn region(&self, role: RegionRole) -> RegionSpec {
        let r = match role {
            RegionRole::GammaNbhd => self.gamma,
            RegionRole::V1 => self.v1,
            RegionRole::U1 => self.u1,
            RegionRole::U0 => self.u0,
            RegionRole::V0 => self.v0,
            _ => self.u,
        };
        RegionSpec::rect(role, r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeOptions {
    /// Section radius `r`: `φ` vanishes for `|y| ≥ r`.
    pub seed_radius: f64,
    /// `φ = 1` for `|y| ≤ r'`.
    pub plateau_radius: f64,
    /// Seeds are placed where the `U₁` gauge first reaches this value.
    pub seed_gauge: f64,
    /// `χ_q = 1` where the `U` gauge is at most this value.
    pub chi_q_plateau: f64,
    pub eps_max: f64,
    /// Replaces the floor `1/(2N)` of the tube profiles.
    pub floor_override: Option<f64>,
    pub dt: f64,
    /// Offset along the unstable eigenvector where `Γ₊` tracing starts.
    pub unstable_offset: f64,
    /// Points per side of the stored evaluation grid.
    pub grid: usize,
    pub max_seeds: usize,
}

impl Default for EscapeOptions {
    fn default() -> Self {
        EscapeOptions {
            seed_radius: 0.01,
            plateau_radius: 0.008,
            seed_gauge: 1.2,
            chi_q_plateau: 0.92,
            eps_max: 0.49,
            floor_override: None,
            dt: 1e-3,
            unstable_offset: 1e-7,
            grid: 81,
            max_seeds: 16,
        }
    }
}

/// Flow box around the trajectory of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Tube {
    pub seed: PhasePoint,
    /// Unit vector along `H_p` at the seed.
    pub tangent: (f64, f64),
    /// Unit section direction, orthogonal to `tangent`.
    pub normal: (f64, f64),
    pub r: f64,
    pub r_prime: f64,
    pub times: EscapeTimes,
    pub eps: f64,
    /// `χ_ρ ≥ -floor` on `[T^{V1}, T^{V0}]`.
    pub floor: f64,
    /// Centre trajectory on `[T^{V1} - 1, T^U + 1]` with the local tube
    /// half-width in the plane, padded by the sample spacing.
    pub center: Vec<(Sample, f64)>,
}

impl Tube {
    pub fn t_min(&self) -> f64 {
        self.times.t_v1 - 1.0
    }

    pub fn t_max(&self) -> f64 {
        self.times.t_u + 1.0
    }

    /// `χ_ρ(t) = -floor · S₁(t) - (2 - floor) · S₂(t)` with `S₁` rising on
    /// `[T^{V1} - 1/2, T^{V0} + ε]` and `S₂` on `[T^{V0}, T^{V0} + ε]`.
    pub fn chi(&self, t: f64) -> f64 {
        let end = self.times.t_v0 + self.eps;
        -self.floor * ramp(t, self.times.t_v1 - 0.5, end)
            - (2.0 - self.floor) * ramp(t, self.times.t_v0, end)
    }

    pub fn chi_d(&self, t: f64) -> f64 {
        let end = self.times.t_v0 + self.eps;
        -self.floor * ramp_d(t, self.times.t_v1 - 0.5, end)
            - (2.0 - self.floor) * ramp_d(t, self.times.t_v0, end)
    }

    /// Section bump: 1 for `|y| ≤ r'`, 0 for `|y| ≥ r`.
    pub fn phi(&self, y: f64) -> f64 {
        1.0 - ramp(y.abs(), self.r_prime, self.r)
    }

    /// Tube coordinates `(y, t)` of `(s, σ)`, if the point lies in the tube.
    pub fn locate(&self, fl: &ReducedFlow<'_>, s: f64, sigma: f64, dt: f64) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        for (c, w) in &self.center {
            let d = ((s - c.s).powi(2) + (sigma - c.sigma).powi(2)).sqrt();
            if d <= 2.0 * w + 1e-9 && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((c.t, d));
            }
        }
        let (t0, _) = best?;
        let (ts, tp) = self.tangent;
        let (mut ws, mut wp) = fl.advance(s, sigma, -t0, dt);
        let mut tau = t0;
        for _ in 0..30 {
            let g = (ws - self.seed.s) * ts + (wp - self.seed.sigma) * tp;
            let (fs, fp) = fl.field(ws, wp);
            let slope = fs * ts + fp * tp;
            if slope.abs() < 1e-12 {
                return None;
            }
            let delta = g / slope;
            if delta.abs() > 0.5 {
                return None;
            }
            let (a, b) = fl.advance(ws, wp, -delta, dt);
            ws = a;
            wp = b;
            tau += delta;
            if delta.abs() < 1e-13 {
                break;
            }
        }
        let y = (ws - self.seed.s) * self.normal.0 + (wp - self.seed.sigma) * self.normal.1;
        let along = (ws - self.seed.s) * ts + (wp - self.seed.sigma) * tp;
        (y.abs() < self.r && along.abs() < 1e-9 && tau > self.t_min() && tau < self.t_max())
            .then_some((y, tau))
    }

    /// The point with tube coordinates `(y, t)`.
    pub fn point(&self, fl: &ReducedFlow<'_>, y: f64, t: f64, dt: f64) -> (f64, f64) {
        fl.advance(
            self.seed.s + y * self.normal.0,
            self.seed.sigma + y * self.normal.1,
            t,
            dt,
        )
    }
}

/// `f' = ramp(t; -1.4, -0.6)`, `f = ∫ f'`, so `f(t) = t + 1` for `t ≥ -0.6`
/// and `f = 0` for `t ≤ -1.4`.
pub fn outer_f(t: f64) -> f64 {
    const LO: f64 = -1.4;
    const HI: f64 = -0.6;
    if t <= LO {
        return 0.0;
    }
    if t >= HI {
        return t + 1.0;
    }
    // Composite Simpson on [LO, t].
    let n = 256;
    let h = (t - LO) / n as f64;
    let mut acc = ramp(LO, LO, HI) + ramp(t, LO, HI);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * ramp(LO + h * i as f64, LO, HI);
    }
    acc * h / 3.0
}

pub fn outer_f_d(t: f64) -> f64 {
    ramp(t, -1.4, -0.6)
}

/// Value of the escape function and its derivative along the flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeValue {
    pub q: f64,
    pub hpq: f64,
    pub q_tilde: f64,
    pub hpq_tilde: f64,
    pub chi_q: f64,
    /// `Σ_k φ_k` over the tubes containing the point.
    pub phi_sum: f64,
}

/// Grid of `(s, σ, q, H_p q)` values.
#[derive(Debug, Clone, PartialEq)]
pub struct EscapeGrid {
    pub s: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Row-major in `s`, then `σ`.
    pub q: Vec<f64>,
    pub hpq: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EscapeFunction {
    pub profile: Profile,
    pub potential: Potential,
    pub orbit: ClosedOrbit,
    /// Angular momentum of the reduced plane.
    pub mu: f64,
    pub regions: EscapeRegions,
    pub opts: EscapeOptions,
    pub tubes: Vec<Tube>,
    /// Traced branches of `Γ₊`, from the orbit outward.
    pub branches: Vec<Vec<Sample>>,
    /// Set for elliptic orbits, whose `Γ₊` is the orbit itself.
    pub trivial_flowout: bool,
    /// Constant stand-in for `q`, for audits of the verifier.
    pub synthetic: Option<f64>,
    pub grid: EscapeGrid,
}

impl EscapeFunction {
    pub fn flow(&self) -> ReducedFlow<'_> {
        ReducedFlow::new(&self.profile, &self.potential, self.mu)
    }

    pub fn n_seeds(&self) -> usize {
        self.tubes.len()
    }

    fn chi_q(&self, s: f64, sigma: f64) -> (f64, f64, f64) {
        let u = self.regions.u;
        let (cs, hs) = (0.5 * (u.s.0 + u.s.1), 0.5 * (u.s.1 - u.s.0));
        let (cp, hp) = (0.5 * (u.sigma.0 + u.sigma.1), 0.5 * (u.sigma.1 - u.sigma.0));
        let p = self.opts.chi_q_plateau;
        let (x, y) = ((s - cs) / hs, (sigma - cp) / hp);
        let w = |x: f64| 1.0 - ramp(x.abs(), p, 1.0);
        let wd = |x: f64| -ramp_d(x.abs(), p, 1.0) * x.signum();
        (w(x) * w(y), wd(x) * w(y) / hs, w(x) * wd(y) / hp)
    }

    /// `q`, `H_p q` and the ingredients at `(s, σ)`.
    pub fn eval(&self, s: f64, sigma: f64) -> EscapeValue {
        if let Some(c) = self.synthetic {
            return EscapeValue {
                q: c,
                hpq: 0.0,
                q_tilde: 0.0,
                hpq_tilde: 0.0,
                chi_q: 1.0,
                phi_sum: 0.0,
            };
        }
        let fl = self.flow();
        let (mut qt, mut hqt, mut phis) = (0.0, 0.0, 0.0);
        for tube in &self.tubes {
            if let Some((y, t)) = tube.locate(&fl, s, sigma, self.opts.dt) {
                let phi = tube.phi(y);
                qt += tube.chi(t) * phi;
                hqt += tube.chi_d(t) * phi;
                phis += phi;
            }
        }
        let (cq, dcs, dcp) = self.chi_q(s, sigma);
        let hp_chi_q = dcs * 2.0 * sigma
            - dcp * effective_potential_d(&self.profile, &self.potential, self.mu, s);
        let f = outer_f(qt);
        EscapeValue {
            q: cq * f,
            hpq: cq * outer_f_d(qt) * hqt + f * hp_chi_q,
            q_tilde: qt,
            hpq_tilde: hqt,
            chi_q: cq,
            phi_sum: phis,
        }
    }

    pub fn q(&self, s: f64, sigma: f64) -> f64 {
        self.eval(s, sigma).q
    }

    /// Evaluates `q` and `H_p q` on an `n × n` grid over the `U` box
    /// widened by 10%.
    pub fn evaluate_grid(&self, n: usize) -> EscapeGrid {
        let u = self.regions.u;
        let pad_s = 0.1 * (u.s.1 - u.s.0);
        let pad_p = 0.1 * (u.sigma.1 - u.sigma.0);
        let lin = |a: f64, b: f64| -> Vec<f64> {
            (0..n)
                .map(|i| a + (b - a) * i as f64 / (n - 1).max(1) as f64)
                .collect()
        };
        let s = lin(u.s.0 - pad_s, u.s.1 + pad_s);
        let sigma = lin(u.sigma.0 - pad_p, u.sigma.1 + pad_p);
        let mut q = Vec::with_capacity(n * n);
        let mut hpq = Vec::with_capacity(n * n);
        for &a in &s {
            for &b in &sigma {
                let v = self.eval(a, b);
                q.push(v.q);
                hpq.push(v.hpq);
            }
        }
        EscapeGrid { s, sigma, q, hpq }
    }

    /// `q ≡ c` on the same orbit and regions.
    pub fn constant(
        c: f64,
        profile: &Profile,
        potential: &Potential,
        orbit: ClosedOrbit,
        regions: EscapeRegions,
    ) -> Self {
        EscapeFunction {
            profile: profile.clone(),
            potential: *potential,
            orbit,
            mu: orbit.mu,
            regions,
            opts: EscapeOptions::default(),
            tubes: Vec::new(),
            branches: Vec::new(),
            trivial_flowout: false,
            synthetic: Some(c),
            grid: EscapeGrid {
                s: Vec::new(),
                sigma: Vec::new(),
                q: Vec::new(),
                hpq: Vec::new(),
            },
        }
    }
}

/// Traces both branches of the unstable manifold of a hyperbolic orbit until
/// they leave the `U` box widened by 20%.
fn trace_branches(
    fl: &ReducedFlow<'_>,
    orbit: &ClosedOrbit,
    u: &Rect,
    opts: &EscapeOptions,
) -> Result<Vec<Vec<Sample>>> {
    let vdd = effective_potential_dd(fl.profile, fl.potential, fl.mu, orbit.s_star);
    if !(vdd < 0.0) {
        return Err(Error::Precondition(format!("{orbit} is not hyperbolic")));
    }
    let lam = (-2.0 * vdd).sqrt();
    let norm = (1.0 + lam * lam / 4.0).sqrt();
    let dir = (1.0 / norm, lam / 2.0 / norm);
    let mut out = Vec::new();
    for sign in [1.0, -1.0] {
        let (mut s, mut p) = (
            orbit.s_star + sign * opts.unstable_offset * dir.0,
            sign * opts.unstable_offset * dir.1,
        );
        let mut t = 0.0;
        let mut branch = alloc::vec![Sample { t, s, sigma: p }];
        let limit = 200.0;
        while u.gauge(s, p) < 1.2 {
            let (a, b) = fl.step(s, p, opts.dt);
            s = a;
            p = b;
            t += opts.dt;
            branch.push(Sample { t, s, sigma: p });
            if t > limit {
                return Err(Error::HorizonExceeded(t));
            }
        }
        out.push(branch);
    }
    Ok(out)
}

fn unit(v: (f64, f64)) -> (f64, f64) {
    let n = (v.0 * v.0 + v.1 * v.1).sqrt();
    (v.0 / n, v.1 / n)
}

/// Tube conditions: the part with `t ≤ T^{V1}` lies in `U₁`, the part with
/// `t ≤ T^{V0}` in `U`, the slice `t = T^{V0}` misses `closure(U₀)`, and the
/// part where `χ_ρ ≠ 0` misses the Γ-box.
fn tube_conditions(
    tube: &Tube,
    fl: &ReducedFlow<'_>,
    regions: &EscapeRegions,
    dt: f64,
) -> core::result::Result<(), &'static str> {
    let ys: Vec<f64> = (0..=8).map(|i| tube.r * (-1.0 + 0.25 * i as f64)).collect();
    let times = tube.times;
    for &y in &ys {
        let mut t = tube.t_min();
        let (mut s, mut p) = tube.point(fl, y, t, dt);
        let step = 0.01;
        while t <= times.t_v0 {
            if t <= times.t_v1 && regions.u1.gauge(s, p) >= 1.0 {
                return Err("tube part before T^V1 leaves U1");
            }
            if regions.u.gauge(s, p) >= 1.0 {
                return Err("tube part before T^V0 leaves U");
            }
            if t >= times.t_v1 - 0.5 && regions.gamma.gauge(s, p) <= 1.0 {
                return Err("tube meets the Γ-box where χ_ρ ≠ 0");
            }
            let next = (t + step).min(times.t_v0);
            let (a, b) = fl.advance(s, p, next - t, dt);
            s = a;
            p = b;
            if next == t {
                break;
            }
            t = next;
        }
        let (s, p) = tube.point(fl, y, times.t_v0, dt);
        if regions.u0.gauge(s, p) <= 1.0 {
            return Err("tube slice at T^V0 meets closure(U0)");
        }
    }
    Ok(())
}

/// Largest `ε ≤ eps_max` (on a geometric ladder) such that the tube up to
/// `T^{V0} + ε` stays where `χ_q = 1`.
fn choose_eps(
    tube: &Tube,
    fl: &ReducedFlow<'_>,
    regions: &EscapeRegions,
    opts: &EscapeOptions,
) -> Option<f64> {
    let mut eps = opts.eps_max;
    while eps > 1e-3 {
        let ok = (0..=8).all(|i| {
            let y = tube.r * (-1.0 + 0.25 * i as f64);
            let (mut s, mut p) = tube.point(fl, y, tube.times.t_v0, opts.dt);
            let n = 20;
            (0..=n).all(|k| {
                if k > 0 {
                    let (a, b) = fl.advance(s, p, eps / n as f64, opts.dt);
                    s = a;
                    p = b;
                }
                regions.u.gauge(s, p) < opts.chi_q_plateau
            })
        });
        if ok {
            return Some(eps);
        }
        eps *= 0.8;
    }
    None
}

fn make_tube(
    fl: &ReducedFlow<'_>,
    seed: PhasePoint,
    regions: &EscapeRegions,
    opts: &EscapeOptions,
    energy: f64,
) -> Result<Tube> {
    let times = escape_times(
        fl.profile,
        fl.potential,
        seed,
        &regions.region(RegionRole::V1),
        &regions.region(RegionRole::V0),
        &regions.region(RegionRole::U),
        &EscapeTimeOptions {
            dt: opts.dt,
            energy,
            ..Default::default()
        },
    )?;
    let tangent = unit(fl.field(seed.s, seed.sigma));
    let normal = (-tangent.1, tangent.0);
    let mut r = opts.seed_radius;
    let mut r_prime = opts.plateau_radius;
    for _ in 0..6 {
        let mut tube = Tube {
            seed,
            tangent,
            normal,
            r,
            r_prime,
            times,
            eps: opts.eps_max,
            floor: 0.0,
            center: Vec::new(),
        };
        tube.center = centre_line(&tube, fl, opts.dt);
        match tube_conditions(&tube, fl, regions, opts.dt) {
            Ok(()) => {
                tube.eps = choose_eps(&tube, fl, regions, opts).ok_or_else(|| {
                    Error::ConstructionFailed(format!(
                        "no admissible ε for the seed at ({:.4}, {:.4})",
                        seed.s, seed.sigma
                    ))
                })?;
                return Ok(tube);
            }
            Err(_) => {
                r *= 0.5;
                r_prime *= 0.5;
            }
        }
    }
    Err(Error::ConstructionFailed(format!(
        "tube conditions fail at every radius for the seed at ({:.4}, {:.4})",
        seed.s, seed.sigma
    )))
}

/// Centre samples every `0.01` time units with the half-width of the tube.
fn centre_line(tube: &Tube, fl: &ReducedFlow<'_>, dt: f64) -> Vec<(Sample, f64)> {
    let step = 0.01;
    let n = ((tube.t_max() - tube.t_min()) / step).ceil() as usize;
    let start = |y: f64| tube.point(fl, y, tube.t_min(), dt);
    let mut c = start(0.0);
    let mut e1 = start(tube.r);
    let mut e2 = start(-tube.r);
    let mut out = Vec::with_capacity(n + 1);
    let mut t = tube.t_min();
    for k in 0..=n {
        let w = ((e1.0 - c.0).hypot(e1.1 - c.1)).max((e2.0 - c.0).hypot(e2.1 - c.1));
        out.push((
            Sample {
                t,
                s: c.0,
                sigma: c.1,
            },
            w,
        ));
        if k == n {
            break;
        }
        let next = (tube.t_min() + step * (k + 1) as f64).min(tube.t_max());
        let d = next - t;
        c = fl.advance(c.0, c.1, d, dt);
        e1 = fl.advance(e1.0, e1.1, d, dt);
        e2 = fl.advance(e2.0, e2.1, d, dt);
        t = next;
    }
    // Widen by the spacing to the neighbours so that no point of the tube
    // falls between two search discs.
    let gaps: Vec<f64> = out
        .windows(2)
        .map(|p| (p[1].0.s - p[0].0.s).hypot(p[1].0.sigma - p[0].0.sigma))
        .collect();
    for (k, item) in out.iter_mut().enumerate() {
        let left = if k > 0 { gaps[k - 1] } else { 0.0 };
        let right = gaps.get(k).copied().unwrap_or(0.0);
        item.1 += left.max(right);
    }
    out
}

/// Samples of `Γ₊ ∩ closure(U) \ U₁` along the traced branches.
pub(crate) fn cover_samples<'a>(
    branches: &'a [Vec<Sample>],
    regions: &'a EscapeRegions,
) -> impl Iterator<Item = (usize, Sample)> + 'a {
    branches.iter().enumerate().flat_map(move |(b, br)| {
        br.iter()
            .filter(move |x| {
                regions.u.gauge(x.s, x.sigma) <= 1.0 && regions.u1.gauge(x.s, x.sigma) >= 1.0
            })
            .map(move |x| (b, *x))
    })
}

fn covered(tubes: &[Tube], fl: &ReducedFlow<'_>, x: &Sample, dt: f64) -> bool {
    tubes.iter().any(|t| {
        t.locate(fl, x.s, x.sigma, dt).is_some_and(|(y, tau)| {
            y.abs() < t.r_prime && tau > t.times.t_v1 - 0.5 && tau < t.times.t_u + 0.5
        })
    })
}

/// Builds the escape function for one latitude orbit in its own reduced
/// plane (angular momentum `orbit.mu`).
///
/// Seeds are placed greedily along each branch of `Γ₊`, walking outward
/// from `U₁`, until every sampled point of `Γ₊ ∩ closure(U) \ U₁` lies in
/// some `V'_ρ`.
pub fn build_escape_function(
    profile: &Profile,
    potential: &Potential,
    orbit: &ClosedOrbit,
    regions: EscapeRegions,
    opts: &EscapeOptions,
) -> Result<EscapeFunction> {
    regions.check(orbit)?;
    if !(opts.plateau_radius > 0.0 && opts.plateau_radius < opts.seed_radius) {
        return Err(Error::InvalidParams(
            "need 0 < plateau radius < seed radius".into(),
        ));
    }
    if !(opts.eps_max > 0.0 && opts.eps_max < 0.5) {
        return Err(Error::InvalidParams("ε must lie in (0, 1/2)".into()));
    }
    let fl = ReducedFlow::new(profile, potential, orbit.mu);
    let mut ef = EscapeFunction {
        profile: profile.clone(),
        potential: *potential,
        orbit: *orbit,
        mu: orbit.mu,
        regions,
        opts: *opts,
        tubes: Vec::new(),
        branches: Vec::new(),
        trivial_flowout: false,
        synthetic: None,
        grid: EscapeGrid {
            s: Vec::new(),
            sigma: Vec::new(),
            q: Vec::new(),
            hpq: Vec::new(),
        },
    };
    if orbit.stability == Stability::Elliptic {
        ef.trivial_flowout = true;
        ef.grid = ef.evaluate_grid(opts.grid);
        return Ok(ef);
    }
    let branches = trace_branches(&fl, orbit, &regions.u, opts)?;
    let mut tubes: Vec<Tube> = Vec::new();
    let samples: Vec<(usize, Sample)> = cover_samples(&branches, &regions).collect();
    let mut i = 0;
    while i < samples.len() {
        let (b, x) = samples[i];
        if covered(&tubes, &fl, &x, opts.dt) {
            i += 1;
            continue;
        }
        if tubes.len() >= opts.max_seeds {
            return Err(Error::ConstructionFailed(format!(
                "uncovered Γ₊ point ({:.5}, {:.5}) after {} seeds",
                x.s,
                x.sigma,
                tubes.len()
            )));
        }
        // Move the seed out to the seed gauge along the same branch.
        let seed = branches[b]
            .iter()
            .find(|y| y.t >= x.t && regions.u1.gauge(y.s, y.sigma) >= opts.seed_gauge)
            .copied()
            .unwrap_or(x);
        if regions.u0.gauge(seed.s, seed.sigma) > 1.0 {
            return Err(Error::ConstructionFailed(format!(
                "uncovered Γ₊ point ({:.5}, {:.5}) lies outside closure(U0)",
                x.s, x.sigma
            )));
        }
        let energy = orbit.energy;
        let tube = make_tube(
            &fl,
            PhasePoint::new(seed.s, seed.sigma, orbit.mu),
            &regions,
            opts,
            energy,
        )?;
        tubes.push(tube);
        if !covered(&tubes, &fl, &x, opts.dt) {
            return Err(Error::ConstructionFailed(format!(
                "Γ₊ point ({:.5}, {:.5}) not covered by its own seed",
                x.s, x.sigma
            )));
        }
    }
    let n = tubes.len().max(1);
    let floor = opts.floor_override.unwrap_or(1.0 / (2.0 * n as f64));
    for t in &mut tubes {
        t.floor = floor;
    }
    ef.tubes = tubes;
    ef.branches = branches;
    ef.grid = ef.evaluate_grid(opts.grid);
    Ok(ef)
}

#[cfg(test)]
mod tests;
