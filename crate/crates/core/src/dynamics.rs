//! Reduced bicharacteristic flow of `p = σ² + μ²/a(s)² + V(s)` at fixed
//! Clairaut invariant `μ`: `ṡ = 2σ`, `σ̇ = -∂_s V_eff(s; μ)`.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::{
    effective_potential, effective_potential_d, effective_potential_dd, hamiltonian, Potential,
    Profile,
};
use crate::{Error, Result};

/// Default fixed RK4 step.
pub const DEFAULT_DT: f64 = 2e-3;

/// State `(s, σ)` with its Clairaut invariant `μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub s: f64,
    pub sigma: f64,
    pub mu: f64,
}

impl PhasePoint {
    pub fn new(s: f64, sigma: f64, mu: f64) -> Self {
        PhasePoint { s, sigma, mu }
    }

    pub fn energy(&self, profile: &Profile, potential: &Potential) -> f64 {
        hamiltonian(profile, potential, self.s, self.sigma, self.mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub s: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitReason {
    Horizon,
    LeftDomain,
    EnteredAbsorberRegion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub mu: f64,
    pub energy_drift: f64,
    pub exit_reason: ExitReason,
}

impl Trajectory {
    pub fn last(&self) -> Sample {
        *self
            .samples
            .last()
            .expect("trajectory has at least its start sample")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub dt: f64,
    /// Declared bound on `max |p(t) - p(0)|`.
    pub drift_tol: f64,
    /// Keep every `record_every`-th step (the final state is always kept).
    pub record_every: usize,
    /// Stop once `|s|` exceeds this radius.
    pub absorber_start: Option<f64>,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            dt: DEFAULT_DT,
            drift_tol: 1e-7,
            record_every: 1,
            absorber_start: None,
        }
    }
}

/// Vector field of the reduced flow at fixed `μ`.
#[derive(Clone, Copy)]
pub struct ReducedFlow<'a> {
    pub profile: &'a Profile,
    pub potential: &'a Potential,
    pub mu: f64,
}

impl<'a> ReducedFlow<'a> {
    pub fn new(profile: &'a Profile, potential: &'a Potential, mu: f64) -> Self {
        ReducedFlow {
            profile,
            potential,
            mu,
        }
    }

    #[inline]
    pub fn field(&self, s: f64, sigma: f64) -> (f64, f64) {
        (
            2.0 * sigma,
            -effective_potential_d(self.profile, self.potential, self.mu, s),
        )
    }

    #[inline]
    pub fn energy(&self, s: f64, sigma: f64) -> f64 {
        hamiltonian(self.profile, self.potential, s, sigma, self.mu)
    }

    /// One classical RK4 step of length `dt` (negative for backward time).
    #[inline]
    pub fn step(&self, s: f64, sigma: f64, dt: f64) -> (f64, f64) {
        let (k1s, k1p) = self.field(s, sigma);
        let (k2s, k2p) = self.field(s + 0.5 * dt * k1s, sigma + 0.5 * dt * k1p);
        let (k3s, k3p) = self.field(s + 0.5 * dt * k2s, sigma + 0.5 * dt * k2p);
        let (k4s, k4p) = self.field(s + dt * k3s, sigma + dt * k3p);
        (
            s + dt / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s),
            sigma + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
        )
    }

    /// Flows `(s, σ)` for time `t` with steps no longer than `dt`.
    pub fn advance(&self, mut s: f64, mut sigma: f64, t: f64, dt: f64) -> (f64, f64) {
        if t == 0.0 {
            return (s, sigma);
        }
        let n = (t.abs() / dt).ceil().max(1.0) as usize;
        let h = t / n as f64;
        for _ in 0..n {
            let (a, b) = self.step(s, sigma, h);
            s = a;
            sigma = b;
        }
        (s, sigma)
    }
}

/// Integrates the reduced flow from `start` for time `t_final` (negative
/// values integrate backward).
pub fn flow(
    profile: &Profile,
    potential: &Potential,
    start: PhasePoint,
    t_final: f64,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    if !t_final.is_finite() || !(opts.dt > 0.0) {
        return Err(Error::InvalidParams(format!(
            "need finite T and dt > 0, got T = {t_final}, dt = {}",
            opts.dt
        )));
    }
    if !profile.contains(start.s) {
        return Err(Error::InvalidParams(format!(
            "start s = {} outside the domain",
            start.s
        )));
    }
    let fl = ReducedFlow::new(profile, potential, start.mu);
    let n = (t_final.abs() / opts.dt).ceil() as usize;
    let h = if n == 0 { 0.0 } else { t_final / n as f64 };
    let e0 = fl.energy(start.s, start.sigma);
    let every = opts.record_every.max(1);
    let mut samples = Vec::with_capacity(n / every + 2);
    samples.push(Sample {
        t: 0.0,
        s: start.s,
        sigma: start.sigma,
    });
    let (mut s, mut sigma) = (start.s, start.sigma);
    let mut drift: f64 = 0.0;
    let mut exit = ExitReason::Horizon;
    for i in 1..=n {
        let (a, b) = fl.step(s, sigma, h);
        s = a;
        sigma = b;
        drift = drift.max((fl.energy(s, sigma) - e0).abs());
        let t = h * i as f64;
        let left = s.abs() > profile.half_width;
        let absorbed = opts.absorber_start.is_some_and(|r| s.abs() > r);
        if i % every == 0 || i == n || left || absorbed {
            samples.push(Sample { t, s, sigma });
        }
        if left {
            exit = ExitReason::LeftDomain;
            break;
        }
        if absorbed {
            exit = ExitReason::EnteredAbsorberRegion;
            break;
        }
    }
    if drift > opts.drift_tol {
        return Err(Error::IntegrationFailed {
            drift,
            tol: opts.drift_tol,
        });
    }
    Ok(Trajectory {
        samples,
        mu: start.mu,
        energy_drift: drift,
        exit_reason: exit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stability {
    Hyperbolic,
    Elliptic,
    Degenerate,
}

/// Latitude orbit: a critical point of `V_eff` on the energy shell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedOrbit {
    pub s_star: f64,
    pub mu: f64,
    pub stability: Stability,
    pub energy: f64,
    /// For degenerate continua, the interval of critical points.
    pub continuum: Option<(f64, f64)>,
}

impl ClosedOrbit {
    pub fn same_as(&self, other: &ClosedOrbit) -> bool {
        (self.s_star - other.s_star).abs() < 1e-8 && (self.mu - other.mu).abs() < 1e-8
    }
}

impl fmt::Display for ClosedOrbit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "orbit(s*={:.6}, mu={:+.6}, {:?})",
            self.s_star, self.mu, self.stability
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitSearch {
    pub grid: usize,
    /// Search interval; defaults to `[-0.85 S, 0.85 S]`.
    pub range: Option<(f64, f64)>,
    pub zero_tol: f64,
    pub curvature_tol: f64,
}

impl Default for OrbitSearch {
    fn default() -> Self {
        OrbitSearch {
            grid: 16001,
            range: None,
            zero_tol: 1e-12,
            curvature_tol: 1e-8,
        }
    }
}

/// `∂_s V_eff` at the shell angular momentum `μ² = (E - V) a²`.
fn shell_critical_fn(profile: &Profile, potential: &Potential, energy: f64, s: f64) -> f64 {
    let [a, d, _] = profile.jet(s);
    let [v, vd] = potential.jet(s);
    -2.0 * (energy - v) * d / a + vd
}

/// Finds all latitude orbits on the shell `p = energy`, both signs of `μ`.
pub fn classify_orbits(
    profile: &Profile,
    potential: &Potential,
    energy: f64,
    search: &OrbitSearch,
) -> Vec<ClosedOrbit> {
    let (lo, hi) = search
        .range
        .unwrap_or((-0.85 * profile.half_width, 0.85 * profile.half_width));
    let n = search.grid.max(3);
    let xs: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    let g: Vec<f64> = xs
        .iter()
        .map(|&s| shell_critical_fn(profile, potential, energy, s))
        .collect();
    let zero = |v: f64| v.abs() <= search.zero_tol;
    let mut roots: Vec<(f64, Option<(f64, f64)>)> = Vec::new();
    let mut i = 0;
    while i < n {
        if zero(g[i]) {
            let mut j = i;
            while j + 1 < n && zero(g[j + 1]) {
                j += 1;
            }
            if j >= i + 2 {
                roots.push((0.5 * (xs[i] + xs[j]), Some((xs[i], xs[j]))));
            } else {
                roots.push((xs[i], None));
            }
            i = j + 1;
            continue;
        }
        if i + 1 < n && !zero(g[i + 1]) && g[i].signum() != g[i + 1].signum() {
            let (mut a, mut b) = (xs[i], xs[i + 1]);
            let ga = g[i];
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                let gm = shell_critical_fn(profile, potential, energy, m);
                if gm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if gm.signum() == ga.signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            roots.push((0.5 * (a + b), None));
        }
        i += 1;
    }
    let mut out = Vec::new();
    for (s_star, continuum) in roots {
        let room = energy - potential.value(s_star);
        if !(room > 0.0) {
            continue;
        }
        let mu = room.sqrt() * profile.a(s_star);
        for m in [-mu, mu] {
            let stability = if continuum.is_some() {
                Stability::Degenerate
            } else {
                let c = effective_potential_dd(profile, potential, m, s_star);
                if c < -search.curvature_tol {
                    Stability::Hyperbolic
                } else if c > search.curvature_tol {
                    Stability::Elliptic
                } else {
                    Stability::Degenerate
                }
            };
            out.push(ClosedOrbit {
                s_star,
                mu: m,
                stability,
                energy,
                continuum,
            });
        }
    }
    out.sort_by(|a, b| a.s_star.total_cmp(&b.s_star).then(a.mu.total_cmp(&b.mu)));
    out
}

/// Classification label of a phase point.
#[derive(Debug, Clone, PartialEq)]
pub enum PointLabel {
    EllipticOffShell,
    BackwardNontrapped,
    /// The backward trajectory tends to this orbit (the point lies in `Γ₊`).
    ForwardFlowout(ClosedOrbit),
    Trapped(Option<ClosedOrbit>),
    UndeterminedAtHorizon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointClass {
    pub label: PointLabel,
    /// Why an undetermined label was issued, if it was.
    pub note: Option<&'static str>,
    /// Excerpt of the trajectory that decided the label.
    pub witness: Vec<Sample>,
    /// Orbit approached in forward time, when one was detected.
    pub forward_limit: Option<ClosedOrbit>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    pub energy: f64,
    pub shell_tol: f64,
    pub horizon: f64,
    /// Defaults to `S / 2`.
    pub escape_radius: Option<f64>,
    pub orbit_tol: f64,
    pub separatrix_tol: f64,
    pub dt: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            energy: 1.0,
            shell_tol: 1e-6,
            horizon: 200.0,
            escape_radius: None,
            orbit_tol: 1e-3,
            separatrix_tol: 1e-6,
            dt: DEFAULT_DT,
        }
    }
}

/// Phase-space barrier symbol `w(s, σ)`.
pub type BarrierFn<'a> = &'a (dyn Fn(f64, f64) -> f64 + Sync);

enum Fate {
    Escaped,
    Barrier,
    Converged(ClosedOrbit),
    Returned,
    Horizon,
}

struct Walk {
    fate: Fate,
    witness: Vec<Sample>,
}

fn walk(
    fl: &ReducedFlow<'_>,
    start: (f64, f64),
    direction: f64,
    orbits: &[ClosedOrbit],
    barrier: Option<BarrierFn<'_>>,
    escape_radius: f64,
    opts: &ClassifyOptions,
) -> Walk {
    let dt = direction * opts.dt;
    let (mut s, mut sigma) = start;
    let (vs0, vp0) = fl.field(s, sigma);
    let speed0 = (vs0 * vs0 + vp0 * vp0).sqrt();
    let mut left_start = false;
    let mut witness = Vec::new();
    let steps = (opts.horizon / opts.dt).ceil() as usize;
    let keep = (steps / 400).max(1);
    let mut prev_side = 0.0;
    for i in 0..=steps {
        let t = i as f64 * dt;
        if i % keep == 0 {
            witness.push(Sample { t, s, sigma });
        }
        let done = |fate: Fate, mut witness: Vec<Sample>| {
            witness.push(Sample { t, s, sigma });
            Walk { fate, witness }
        };
        if let Some(w) = barrier {
            if w(s, sigma) > 0.5 {
                return done(Fate::Barrier, witness);
            }
        }
        for o in orbits {
            let d = ((s - o.s_star).powi(2) + sigma * sigma).sqrt();
            if d < opts.orbit_tol {
                return done(Fate::Converged(*o), witness);
            }
        }
        if s.abs() > fl.profile.half_width {
            return done(Fate::Escaped, witness);
        }
        if s.abs() > escape_radius {
            let outward = (direction * sigma) * s.signum() > 0.0;
            let pushed =
                effective_potential_d(fl.profile, fl.potential, fl.mu, s) * s.signum() <= 0.0;
            if outward && pushed {
                return done(Fate::Escaped, witness);
            }
        }
        if speed0 > 0.0 {
            let dist = ((s - start.0).powi(2) + (sigma - start.1).powi(2)).sqrt();
            let side = (s - start.0) * vs0 + (sigma - start.1) * vp0;
            if !left_start && dist > 1e-2 {
                left_start = true;
            } else if left_start
                && dist < 5e-2
                && prev_side != 0.0
                && side.signum() != prev_side.signum()
            {
                return done(Fate::Returned, witness);
            }
            prev_side = side;
        }
        let (a, b) = fl.step(s, sigma, dt);
        s = a;
        sigma = b;
    }
    Walk {
        fate: Fate::Horizon,
        witness,
    }
}

/// Classifies a phase point by integrating backward (and, when needed,
/// forward) in time.
pub fn classify_point(
    profile: &Profile,
    potential: &Potential,
    point: PhasePoint,
    barrier: Option<BarrierFn<'_>>,
    opts: &ClassifyOptions,
) -> Result<PointClass> {
    let energy = point.energy(profile, potential);
    let undetermined = |note, witness| PointClass {
        label: PointLabel::UndeterminedAtHorizon,
        note: Some(note),
        witness,
        forward_limit: None,
    };
    if (energy - opts.energy).abs() > opts.shell_tol {
        return Ok(PointClass {
            label: PointLabel::EllipticOffShell,
            note: None,
            witness: Vec::new(),
            forward_limit: None,
        });
    }
    if !profile.contains(point.s) {
        return Err(Error::InvalidParams(format!(
            "point s = {} outside the domain",
            point.s
        )));
    }
    let all = classify_orbits(profile, potential, opts.energy, &OrbitSearch::default());
    let mut orbits = Vec::new();
    for o in all {
        let dmu = (point.mu - o.mu).abs();
        if dmu <= 1e-12 {
            orbits.push(o);
        } else if dmu < opts.separatrix_tol && o.continuum.is_none() {
            return Ok(undetermined(
                "within separatrix tolerance of a closed orbit",
                Vec::new(),
            ));
        }
    }
    let escape_radius = opts.escape_radius.unwrap_or(0.5 * profile.half_width);
    let fl = ReducedFlow::new(profile, potential, point.mu);
    let start = (point.s, point.sigma);
    let back = walk(&fl, start, -1.0, &orbits, barrier, escape_radius, opts);
    let forward_limit = |with_barrier: bool| {
        let w = walk(
            &fl,
            start,
            1.0,
            &orbits,
            if with_barrier { barrier } else { None },
            escape_radius,
            opts,
        );
        match w.fate {
            Fate::Converged(o) => Some(o),
            _ => None,
        }
    };
    let class = match back.fate {
        Fate::Escaped | Fate::Barrier => PointClass {
            label: PointLabel::BackwardNontrapped,
            note: None,
            witness: back.witness,
            forward_limit: forward_limit(true),
        },
        Fate::Converged(o) => {
            let fwd = walk(&fl, start, 1.0, &orbits, barrier, escape_radius, opts);
            match fwd.fate {
                Fate::Converged(f) => PointClass {
                    label: PointLabel::Trapped(Some(f)),
                    note: None,
                    witness: back.witness,
                    forward_limit: Some(f),
                },
                Fate::Returned => PointClass {
                    label: PointLabel::Trapped(None),
                    note: None,
                    witness: back.witness,
                    forward_limit: None,
                },
                _ => PointClass {
                    label: PointLabel::ForwardFlowout(o),
                    note: None,
                    witness: back.witness,
                    forward_limit: None,
                },
            }
        }
        Fate::Returned => PointClass {
            label: PointLabel::Trapped(None),
            note: Some("periodic"),
            witness: back.witness,
            forward_limit: None,
        },
        Fate::Horizon => undetermined("horizon reached", back.witness),
    };
    Ok(class)
}

/// Axis-aligned rectangle in the `(s, σ)` plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub s: (f64, f64),
    pub sigma: (f64, f64),
}

impl Rect {
    pub fn centered(s: f64, sigma: f64, half_s: f64, half_sigma: f64) -> Self {
        Rect {
            s: (s - half_s, s + half_s),
            sigma: (sigma - half_sigma, sigma + half_sigma),
        }
    }

    /// `max` of the normalized coordinate offsets; `< 1` inside.
    pub fn gauge(&self, s: f64, sigma: f64) -> f64 {
        let cs = 0.5 * (self.s.0 + self.s.1);
        let hs = 0.5 * (self.s.1 - self.s.0);
        let cp = 0.5 * (self.sigma.0 + self.sigma.1);
        let hp = 0.5 * (self.sigma.1 - self.sigma.0);
        ((s - cs).abs() / hs).max((sigma - cp).abs() / hp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionRole {
    GammaNbhd,
    U1,
    U0,
    U,
    V1,
    V0,
    V,
    W,
    UMinus,
    UPlus,
}

#[derive(Clone)]
pub enum RegionShape {
    Boxes(Vec<Rect>),
    /// The open set `{g < 0}`.
    Sublevel(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

/// Named open region of the reduced phase plane.
#[derive(Clone)]
pub struct RegionSpec {
    pub role: RegionRole,
    pub shape: RegionShape,
}

impl fmt::Debug for RegionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.shape {
            RegionShape::Boxes(b) => write!(f, "RegionSpec({:?}, {:?})", self.role, b),
            RegionShape::Sublevel(_) => write!(f, "RegionSpec({:?}, sublevel)", self.role),
        }
    }
}

impl RegionSpec {
    pub fn rect(role: RegionRole, rect: Rect) -> Self {
        RegionSpec {
            role,
            shape: RegionShape::Boxes(alloc::vec![rect]),
        }
    }

    pub fn sublevel(role: RegionRole, g: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>) -> Self {
        RegionSpec {
            role,
            shape: RegionShape::Sublevel(g),
        }
    }

    /// Signed gauge: negative inside, positive outside, zero on the boundary.
    pub fn level(&self, s: f64, sigma: f64) -> f64 {
        match &self.shape {
            RegionShape::Boxes(bs) => bs
                .iter()
                .map(|b| b.gauge(s, sigma) - 1.0)
                .fold(f64::INFINITY, f64::min),
            RegionShape::Sublevel(g) => g(s, sigma),
        }
    }

    pub fn contains(&self, s: f64, sigma: f64) -> bool {
        self.level(s, sigma) < 0.0
    }

    pub fn closure_contains(&self, s: f64, sigma: f64) -> bool {
        self.level(s, sigma) <= 0.0
    }

    /// Bounding box of a box region.
    pub fn bounding_rect(&self) -> Option<Rect> {
        match &self.shape {
            RegionShape::Boxes(bs) if !bs.is_empty() => {
                let mut r = bs[0];
                for b in &bs[1..] {
                    r.s = (r.s.0.min(b.s.0), r.s.1.max(b.s.1));
                    r.sigma = (r.sigma.0.min(b.sigma.0), r.sigma.1.max(b.sigma.1));
                }
                Some(r)
            }
            _ => None,
        }
    }
}

/// Checks `closure(inner) ⋐ outer` on an `n × n` grid over `window`: every
/// grid point of the closure of `inner` must sit at least `margin` inside
/// `outer` along both axes.
pub fn compactly_inside(
    inner: &RegionSpec,
    outer: &RegionSpec,
    window: Rect,
    n: usize,
    margin: f64,
) -> bool {
    for i in 0..n {
        for j in 0..n {
            let s = window.s.0 + (window.s.1 - window.s.0) * i as f64 / (n - 1) as f64;
            let p = window.sigma.0 + (window.sigma.1 - window.sigma.0) * j as f64 / (n - 1) as f64;
            if !inner.closure_contains(s, p) {
                continue;
            }
            for (ds, dp) in [
                (0.0, 0.0),
                (margin, 0.0),
                (-margin, 0.0),
                (0.0, margin),
                (0.0, -margin),
            ] {
                if !outer.contains(s + ds, p + dp) {
                    return false;
                }
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeTimes {
    pub t_v1: f64,
    pub t_v0: f64,
    pub t_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeTimeOptions {
    pub dt: f64,
    pub horizon: f64,
    pub orbit_tol: f64,
    pub energy: f64,
}

impl Default for EscapeTimeOptions {
    fn default() -> Self {
        EscapeTimeOptions {
            dt: 1e-3,
            horizon: 60.0,
            orbit_tol: 1e-6,
            energy: 1.0,
        }
    }
}

/// Locates the crossing of `inside` between two trajectory samples by
/// bisection in time (RK4 sub-steps from the earlier sample).
fn bisect_crossing(
    fl: &ReducedFlow<'_>,
    a: Sample,
    b: Sample,
    inside: &dyn Fn(f64, f64) -> bool,
    dt: f64,
) -> f64 {
    let side_a = inside(a.s, a.sigma);
    let (mut lo, mut hi) = (0.0, b.t - a.t);
    for _ in 0..60 {
        if (hi - lo).abs() < 1e-12 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (s, p) = fl.advance(a.s, a.sigma, mid, dt);
        if inside(s, p) == side_a {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    a.t + 0.5 * (lo + hi)
}

/// Escape times `T^{V1} = inf{t : γ(t) ∉ V1}`, `T^{V0} = inf{t : γ(t) ∉ V0}`
/// and `T^U = sup{t : γ(t) ∈ closure(U)}` along the trajectory of `point`.
pub fn escape_times(
    profile: &Profile,
    potential: &Potential,
    point: PhasePoint,
    v1: &RegionSpec,
    v0: &RegionSpec,
    u: &RegionSpec,
    opts: &EscapeTimeOptions,
) -> Result<EscapeTimes> {
    let fl = ReducedFlow::new(profile, potential, point.mu);
    let orbits: Vec<ClosedOrbit> =
        classify_orbits(profile, potential, opts.energy, &OrbitSearch::default())
            .into_iter()
            .filter(|o| (o.mu - point.mu).abs() <= 1e-9)
            .collect();
    let near_orbit = |s: f64, p: f64| {
        orbits
            .iter()
            .any(|o| ((s - o.s_star).powi(2) + p * p).sqrt() < opts.orbit_tol)
    };
    let steps = (opts.horizon / opts.dt).ceil() as usize;

    let mut back = Vec::new();
    let (mut s, mut p) = (point.s, point.sigma);
    back.push(Sample {
        t: 0.0,
        s,
        sigma: p,
    });
    let mut settled = near_orbit(s, p);
    for i in 1..=steps {
        if settled {
            break;
        }
        let (a, b) = fl.step(s, p, -opts.dt);
        s = a;
        p = b;
        back.push(Sample {
            t: -(i as f64) * opts.dt,
            s,
            sigma: p,
        });
        settled = near_orbit(s, p) || s.abs() > profile.half_width;
    }
    back.reverse();

    let mut fwd = Vec::new();
    let (mut s, mut p) = (point.s, point.sigma);
    let mut left_for_good = false;
    for i in 1..=steps {
        let (a, b) = fl.step(s, p, opts.dt);
        s = a;
        p = b;
        fwd.push(Sample {
            t: i as f64 * opts.dt,
            s,
            sigma: p,
        });
        let outward = p * s.signum() > 0.0
            && effective_potential_d(profile, potential, point.mu, s) * s.signum() <= 0.0;
        if s.abs() > profile.half_width
            || (!u.closure_contains(s, p) && outward && s.abs() > 0.5 * profile.half_width)
        {
            left_for_good = true;
            break;
        }
    }
    let traj: Vec<Sample> = back.into_iter().chain(fwd).collect();
    let first = traj[0];
    if !v1.contains(first.s, first.sigma) || !v0.contains(first.s, first.sigma) {
        return Err(Error::Precondition(
            "backward trajectory does not settle near the trapped set".into(),
        ));
    }
    let last = *traj.last().unwrap();
    if u.closure_contains(last.s, last.sigma)
        || !left_for_good
            && traj
                .iter()
                .rev()
                .take(10)
                .any(|x| u.closure_contains(x.s, x.sigma))
    {
        return Err(Error::HorizonExceeded(last.t));
    }
    let first_exit = |reg: &RegionSpec| -> Option<f64> {
        let inside = |s: f64, p: f64| reg.contains(s, p);
        traj.windows(2)
            .find(|w| !inside(w[1].s, w[1].sigma))
            .map(|w| bisect_crossing(&fl, w[0], w[1], &inside, opts.dt))
    };
    let t_v1 = first_exit(v1).ok_or(Error::HorizonExceeded(last.t))?;
    let t_v0 = first_exit(v0).ok_or(Error::HorizonExceeded(last.t))?;
    let inside_u = |s: f64, p: f64| u.closure_contains(s, p);
    let t_u = traj
        .windows(2)
        .rev()
        .find(|w| inside_u(w[0].s, w[0].sigma))
        .map(|w| bisect_crossing(&fl, w[0], w[1], &inside_u, opts.dt))
        .ok_or(Error::HorizonExceeded(last.t))?;
    Ok(EscapeTimes { t_v1, t_v0, t_u })
}

/// Monotone coordinate `x(s)` used by the convexity condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XMap {
    /// `x = offset + slope · s`.
    Affine { offset: f64, slope: f64 },
}

impl XMap {
    fn eval(&self, s: f64) -> (f64, f64) {
        match *self {
            XMap::Affine { offset, slope } => (offset + slope * s, slope),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvexityMode {
    /// Turning points with `1 < x < 5` have `ẍ < 0`.
    Convexity(XMap),
    /// Turning points with `±s > s0` have `±s̈ > 0`.
    ConvInf { s0: f64 },
    /// Turning points with `0 < ±s < s0` have `±s̈ < 0`.
    ConvCompact { s0: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    pub holds: bool,
    pub samples: usize,
    /// Set when no turning point was sampled.
    pub vacuous: bool,
    /// `(s, μ, s̈)` at violations.
    pub witnesses: Vec<(f64, f64, f64)>,
}

/// Samples shell turning points (`σ = 0`, `μ² = (E - V) a²`) over the
/// union of `region` intervals and checks the sign required by `mode`.
pub fn check_convexity(
    profile: &Profile,
    potential: &Potential,
    region: &[(f64, f64)],
    mode: ConvexityMode,
    energy: f64,
    per_interval: usize,
) -> ConvexityReport {
    let mut witnesses = Vec::new();
    let mut samples = 0;
    for &(lo, hi) in region {
        for i in 0..per_interval {
            let s = lo + (hi - lo) * (i as f64 + 0.5) / per_interval as f64;
            let room = energy - potential.value(s);
            if !(room > 0.0) {
                continue;
            }
            let mu = room.sqrt() * profile.a(s);
            let sdd = -2.0 * effective_potential_d(profile, potential, mu, s);
            let ok = match mode {
                ConvexityMode::Convexity(x) => {
                    let (xv, xd) = x.eval(s);
                    if !(xv > 1.0 && xv < 5.0) {
                        continue;
                    }
                    xd * sdd < 0.0
                }
                ConvexityMode::ConvInf { s0 } => {
                    if s.abs() <= s0 {
                        continue;
                    }
                    s.signum() * sdd > 0.0
                }
                ConvexityMode::ConvCompact { s0 } => {
                    if s == 0.0 || s.abs() >= s0 {
                        continue;
                    }
                    s.signum() * sdd < 0.0
                }
            };
            samples += 1;
            if !ok {
                witnesses.push((s, mu, sdd));
            }
        }
    }
    ConvexityReport {
        holds: witnesses.is_empty(),
        samples,
        vacuous: samples == 0,
        witnesses,
    }
}

/// Shell point `(s, ±√(E - V_eff))` at angular momentum `μ`, if on shell.
pub fn shell_point(
    profile: &Profile,
    potential: &Potential,
    s: f64,
    mu: f64,
    energy: f64,
    forward: bool,
) -> Option<PhasePoint> {
    let room = energy - effective_potential(profile, potential, mu, s);
    if room < 0.0 {
        return None;
    }
    let sigma = if forward { room.sqrt() } else { -room.sqrt() };
    Some(PhasePoint::new(s, sigma, mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_profile, ProfileKind};

    fn catenoid() -> Profile {
        make_profile(ProfileKind::Catenoid, &[], 8.0).unwrap()
    }

    #[test]
    fn free_motion() {
        let p = Profile::flat(1.0, 8.0).unwrap();
        let tr = flow(
            &p,
            &Potential::Zero,
            PhasePoint::new(0.0, 0.5, 0.0),
            2.0,
            &FlowOptions::default(),
        )
        .unwrap();
        let l = tr.last();
        assert!((l.t - 2.0).abs() < 1e-12);
        assert!((l.s - 2.0).abs() < 1e-12);
        assert!(tr.samples.iter().all(|x| x.sigma == 0.5));
    }

    #[test]
    fn neck_is_stationary() {
        let tr = flow(
            &catenoid(),
            &Potential::Zero,
            PhasePoint::new(0.0, 0.0, 1.0),
            7.0,
            &FlowOptions::default(),
        )
        .unwrap();
        assert!(tr.samples.iter().all(|x| x.s == 0.0 && x.sigma == 0.0));
    }

    #[test]
    fn timestamps_increase_and_backward_works() {
        let p = catenoid();
        let tr = flow(
            &p,
            &Potential::Zero,
            PhasePoint::new(0.3, 0.1, 0.7),
            -3.0,
            &FlowOptions::default(),
        )
        .unwrap();
        assert!(tr.samples.windows(2).all(|w| w[1].t < w[0].t));
        let tr = flow(
            &p,
            &Potential::Zero,
            PhasePoint::new(0.3, 0.1, 0.7),
            3.0,
            &FlowOptions {
                record_every: 7,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(tr.samples.windows(2).all(|w| w[1].t > w[0].t));
        assert!((tr.last().t - 3.0).abs() < 1e-12);
    }

    #[test]
    fn leaves_domain() {
        let p = catenoid();
        let tr = flow(
            &p,
            &Potential::Zero,
            PhasePoint::new(7.0, 0.9, 0.1),
            50.0,
            &FlowOptions::default(),
        )
        .unwrap();
        assert_eq!(tr.exit_reason, ExitReason::LeftDomain);
        let tr = flow(
            &p,
            &Potential::Zero,
            PhasePoint::new(5.0, 0.9, 0.1),
            50.0,
            &FlowOptions {
                absorber_start: Some(6.8),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(tr.exit_reason, ExitReason::EnteredAbsorberRegion);
    }

    #[test]
    fn coarse_step_reports_failure() {
        let p = make_profile(ProfileKind::DoubleWell, &[], 8.0).unwrap();
        let r = flow(
            &p,
            &Potential::Zero,
            PhasePoint::new(0.0, 0.5, 1.5),
            40.0,
            &FlowOptions {
                dt: 0.3,
                drift_tol: 1e-8,
                ..Default::default()
            },
        );
        assert!(matches!(r, Err(Error::IntegrationFailed { .. })));
    }

    #[test]
    fn orbit_census() {
        let cat = classify_orbits(&catenoid(), &Potential::Zero, 1.0, &OrbitSearch::default());
        assert_eq!(cat.len(), 2);
        assert!(cat.iter().all(|o| o.s_star == 0.0
            && o.stability == Stability::Hyperbolic
            && (o.mu.abs() - 1.0).abs() < 1e-12));
        let dw = make_profile(ProfileKind::DoubleWell, &[], 8.0).unwrap();
        let orbits = classify_orbits(&dw, &Potential::Zero, 1.0, &OrbitSearch::default());
        assert_eq!(orbits.len(), 6);
        let ell: Vec<_> = orbits
            .iter()
            .filter(|o| o.stability == Stability::Elliptic)
            .collect();
        let hyp: Vec<_> = orbits
            .iter()
            .filter(|o| o.stability == Stability::Hyperbolic)
            .collect();
        assert_eq!(ell.len(), 2);
        assert_eq!(hyp.len(), 4);
        assert!(ell
            .iter()
            .all(|o| o.s_star.abs() < 1e-9 && (o.mu.abs() - dw.a(0.0)).abs() < 1e-9));
        assert!(hyp
            .iter()
            .all(|o| (o.s_star.abs() - 2.0).abs() < 1e-9 && (o.mu.abs() - dw.a(2.0)).abs() < 1e-9));
        let flat = classify_orbits(
            &Profile::flat(1.0, 8.0).unwrap(),
            &Potential::Zero,
            1.0,
            &OrbitSearch::default(),
        );
        assert!(
            !flat.is_empty()
                && flat
                    .iter()
                    .all(|o| o.stability == Stability::Degenerate && o.continuum.is_some())
        );
        let nt = make_profile(ProfileKind::NontrappingMonotone, &[], 8.0).unwrap();
        assert!(classify_orbits(&nt, &Potential::Zero, 1.0, &OrbitSearch::default()).is_empty());
    }

    #[test]
    fn classify_examples() {
        let p = catenoid();
        let opts = ClassifyOptions::default();
        let c = classify_point(
            &p,
            &Potential::Zero,
            PhasePoint::new(0.0, 0.0, 1.0),
            None,
            &opts,
        )
        .unwrap();
        assert!(matches!(c.label, PointLabel::Trapped(Some(_))));
        // Inward-moving point on the stable manifold: backward it escapes,
        // forward it tends to the neck.
        let sig = -(1.0 - 1.0 / p.a(1.0).powi(2)).sqrt();
        let c = classify_point(
            &p,
            &Potential::Zero,
            PhasePoint::new(1.0, sig, 1.0),
            None,
            &opts,
        )
        .unwrap();
        assert_eq!(c.label, PointLabel::BackwardNontrapped);
        assert!(c
            .forward_limit
            .is_some_and(|o| o.mu == 1.0 && o.s_star == 0.0));
        // Outgoing point on the unstable manifold lies in the flowout.
        let c = classify_point(
            &p,
            &Potential::Zero,
            PhasePoint::new(1.0, -sig, 1.0),
            None,
            &opts,
        )
        .unwrap();
        assert!(matches!(c.label, PointLabel::ForwardFlowout(o) if o.mu == 1.0));
        let c = classify_point(
            &p,
            &Potential::Zero,
            PhasePoint::new(1.0, 0.3, 1.0),
            None,
            &opts,
        )
        .unwrap();
        assert_eq!(c.label, PointLabel::EllipticOffShell);
        let c = classify_point(
            &p,
            &Potential::Zero,
            PhasePoint::new(0.5, 0.0, p.a(0.5) * (1.0 - 1e-7)),
            None,
            &opts,
        );
        assert!(c.is_ok());
    }

    #[test]
    fn double_well_barrier_and_well() {
        let p = make_profile(ProfileKind::DoubleWell, &[], 8.0).unwrap();
        let opts = ClassifyOptions::default();
        let w = |s: f64, sigma: f64| {
            if s.abs() < 0.5 && sigma <= 0.0 {
                1.0
            } else {
                0.0
            }
        };
        // Inside the wells, left of 0 and moving right: backward it came
        // through s = 0 with σ < 0 after bouncing off the left hump.
        let mu = 1.5;
        let pt = shell_point(&p, &Potential::Zero, -1.0, mu, 1.0, true).unwrap();
        let c = classify_point(&p, &Potential::Zero, pt, Some(&w), &opts).unwrap();
        assert_eq!(c.label, PointLabel::BackwardNontrapped);
        let c = classify_point(&p, &Potential::Zero, pt, None, &opts).unwrap();
        assert!(matches!(c.label, PointLabel::Trapped(None)));
    }

    #[test]
    fn escape_time_ordering() {
        let p = catenoid();
        let bx = |r: f64, role| RegionSpec::rect(role, Rect::centered(0.0, 0.0, r, r));
        let (v1, v0, u) = (
            bx(0.15, RegionRole::V1),
            bx(0.75, RegionRole::V0),
            bx(1.0, RegionRole::U),
        );
        let s = 0.3;
        let pt = PhasePoint::new(s, s / (1.0 + s * s).sqrt(), 1.0);
        let t = escape_times(
            &p,
            &Potential::Zero,
            pt,
            &v1,
            &v0,
            &u,
            &EscapeTimeOptions::default(),
        )
        .unwrap();
        assert!(t.t_v1 < 0.0 && 0.0 < t.t_v0 && t.t_v0 < t.t_u, "{t:?}");
        // Along the unstable manifold dt = √(1+s²)/(2s) ds.
        let prim = |x: f64| (1.0 + x * x).sqrt() - (1.0 / x).asinh();
        let exact = |target: f64| (prim(target) - prim(s)) / 2.0;
        assert!((t.t_v1 - exact(0.15)).abs() < 1e-6);
        assert!((t.t_v0 - exact(0.75)).abs() < 1e-6);
        assert!((t.t_u - exact(1.0)).abs() < 1e-6);
        let r = escape_times(
            &p,
            &Potential::Zero,
            PhasePoint::new(0.0, 0.0, 1.0),
            &v1,
            &v0,
            &u,
            &EscapeTimeOptions::default(),
        );
        assert!(matches!(r, Err(Error::HorizonExceeded(_))));
    }

    #[test]
    fn convexity_modes() {
        let dw = make_profile(ProfileKind::DoubleWell, &[], 8.0).unwrap();
        let r = check_convexity(
            &dw,
            &Potential::Zero,
            &[(-7.0, -2.0), (2.0, 7.0)],
            ConvexityMode::ConvInf { s0: 2.0 },
            1.0,
            500,
        );
        assert!(r.holds && !r.vacuous);
        let r = check_convexity(
            &dw,
            &Potential::Zero,
            &[(-2.0, 0.0), (0.0, 2.0)],
            ConvexityMode::ConvCompact { s0: 2.0 },
            1.0,
            500,
        );
        assert!(r.holds && !r.vacuous);
        let r = check_convexity(
            &dw,
            &Potential::Zero,
            &[(0.0, 2.0)],
            ConvexityMode::ConvInf { s0: 0.0 },
            1.0,
            50,
        );
        assert!(!r.holds && !r.witnesses.is_empty());
        let cat = catenoid();
        let r = check_convexity(
            &cat,
            &Potential::Zero,
            &[(1.0, 5.0)],
            ConvexityMode::Convexity(XMap::Affine {
                offset: 6.0,
                slope: -1.0,
            }),
            1.0,
            400,
        );
        assert!(r.holds && r.samples > 0);
        let r = check_convexity(
            &cat,
            &Potential::Zero,
            &[(20.0, 30.0)],
            ConvexityMode::Convexity(XMap::Affine {
                offset: 6.0,
                slope: -1.0,
            }),
            1.0,
            10,
        );
        assert!(r.holds && r.vacuous);
    }
}
