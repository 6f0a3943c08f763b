//! Right parametrix for one angular mode glued from two model operators.
//!
//! `P₀ = P - iW₀` absorbs near and beyond the hyperbolic latitudes, `P₁ =
//! P - iW₁` absorbs near the equator. With `R_j = (P_j - λ)^{-1}`,
//!
//! ```text
//! F  = χ̃₀' R₀ χ̃₀ + χ̃₁' R₁ χ̃₁
//! (P - λ) F = Id + A₀ + A₁,   A_j = [P, χ̃_j'] R_j χ̃_j,
//! ```
//!
//! where `χ̃₀' = χ̃₀(|s| - s₀/7)` and `χ̃₁' = χ̃₁(|s| + s₀/7)`. All commutators
//! are formed on the grid as `P ∘ mult - mult ∘ P`, so the identities hold
//! to rounding and only the remainder norms carry information.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::Executor;
use crate::geometry::{Potential, Profile};
use crate::lab::{fit_scaling, power_norm, ExperimentSpec, LinearMap, PowerOptions};
use crate::linalg::{dense_spectral_norm, norm, I, ONE, ZERO};
use crate::quantize::{
    Absorber, BarrierSpec, Factor, Grid1D, LowRankBarrier, ModeOperator, ModeSolver,
    OperatorFamily, Symbol,
};
use crate::smooth::ramp;
use crate::{Error, Result, C64};

/// `W₀`: 0 for `|s| ≤ 5s₀/7`, 1 for `|s| ≥ 6s₀/7`.
pub fn barrier_w0(s: f64, s0: f64) -> f64 {
    ramp(s.abs(), 5.0 * s0 / 7.0, 6.0 * s0 / 7.0)
}

/// `W₁`: 1 for `|s| ≤ s₀/7`, 0 for `|s| ≥ 2s₀/7`.
pub fn barrier_w1(s: f64, s0: f64) -> f64 {
    1.0 - ramp(s.abs(), s0 / 7.0, 2.0 * s0 / 7.0)
}

/// `χ̃₀`: 1 for `|x| ≤ 3s₀/7 + s₀/70`, 0 for `|x| ≥ 4s₀/7 - s₀/70`.
pub fn chi_tilde0(x: f64, s0: f64) -> f64 {
    1.0 - ramp(
        x.abs(),
        3.0 * s0 / 7.0 + s0 / 70.0,
        4.0 * s0 / 7.0 - s0 / 70.0,
    )
}

/// Everything the model operators are assembled from, apart from `h` and `m`.
#[derive(Debug, Clone)]
pub struct GluingSetup {
    pub profile: Profile,
    pub potential: Potential,
    pub energy: f64,
    pub barrier: Option<BarrierSpec>,
    pub absorber: Absorber,
    /// Grid points required on each interval of length `s₀/7`.
    pub min_segment_points: usize,
}

impl GluingSetup {
    pub fn new(profile: Profile, potential: Potential, barrier: Option<BarrierSpec>) -> Self {
        let absorber = Absorber::standard(profile.half_width);
        GluingSetup {
            profile,
            potential,
            energy: 1.0,
            barrier,
            absorber,
            min_segment_points: 50,
        }
    }
}

/// The operator `P - λ`, both models and the cutoffs on one grid.
#[derive(Debug, Clone)]
pub struct GluedModels {
    pub h: f64,
    pub m: i64,
    pub lambda: C64,
    pub s0: f64,
    pub grid: Grid1D,
    pub p: ModeOperator,
    pub p0: ModeOperator,
    pub p1: ModeOperator,
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
    pub chi0: Vec<f64>,
    pub chi1: Vec<f64>,
    /// `χ̃₀(|s| - s₀/7)`.
    pub chi0_shift: Vec<f64>,
    /// `χ̃₁(|s| + s₀/7)`.
    pub chi1_shift: Vec<f64>,
    r0: Arc<ModeSolver>,
    r1: Arc<ModeSolver>,
}

fn mul(c: &[f64], x: &[C64]) -> Vec<C64> {
    c.iter().zip(x).map(|(a, b)| b * *a).collect()
}

fn add(x: &mut [C64], y: &[C64], a: f64) {
    for (p, q) in x.iter_mut().zip(y) {
        *p += q * a;
    }
}

/// Builds `P - λ` on mode `m` together with `P₀`, `P₁` and the cutoffs.
pub fn build_glued_models(
    setup: &GluingSetup,
    h: f64,
    m: i64,
    lambda: C64,
    grid: Grid1D,
) -> Result<GluedModels> {
    let s0 = setup.profile.well_location().ok_or_else(|| {
        Error::InvalidParams(format!(
            "gluing needs a double_well profile, got {}",
            setup.profile.kind.name()
        ))
    })?;
    let per_segment = s0 / 7.0 / grid.spacing();
    if per_segment < setup.min_segment_points as f64 {
        return Err(Error::GridTooCoarse(format!(
            "{per_segment:.1} points per s0/7, need {}",
            setup.min_segment_points
        )));
    }
    if 6.0 * s0 / 7.0 >= setup.absorber.start.min(grid.half_width) {
        return Err(Error::InvalidParams(
            "W0 plateau must start inside the domain".into(),
        ));
    }
    let mut fam = OperatorFamily::with_energy(
        &setup.profile,
        &setup.potential,
        h,
        grid,
        Some(setup.absorber),
        setup.energy,
    )?;
    if let Some(b) = &setup.barrier {
        fam = fam.with_barrier(Arc::new(LowRankBarrier::build(b, h, &grid)?))?;
    }
    let p = fam.mode(m, lambda);
    let nodes = grid.nodes();
    let w0: Vec<f64> = nodes.iter().map(|&s| barrier_w0(s, s0)).collect();
    let w1: Vec<f64> = nodes.iter().map(|&s| barrier_w1(s, s0)).collect();
    let chi0: Vec<f64> = nodes.iter().map(|&s| chi_tilde0(s, s0)).collect();
    let chi1: Vec<f64> = chi0.iter().map(|c| 1.0 - c).collect();
    let chi0_shift: Vec<f64> = nodes
        .iter()
        .map(|&s| chi_tilde0(s.abs() - s0 / 7.0, s0))
        .collect();
    let chi1_shift: Vec<f64> = nodes
        .iter()
        .map(|&s| 1.0 - chi_tilde0(s.abs() + s0 / 7.0, s0))
        .collect();
    let with = |w: &[f64]| {
        let mut q = p.clone();
        for (d, &x) in q.diag.iter_mut().zip(w) {
            *d -= I * x;
        }
        q
    };
    let p0 = with(&w0);
    let p1 = with(&w1);
    let r0 = Arc::new(p0.factor()?);
    let r1 = Arc::new(p1.factor()?);

    // Invertibility on a probe.
    let mut rng = ChaCha8Rng::seed_from_u64(0x91e);
    let probe: Vec<C64> = (0..grid.n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    for (name, r) in [("P0", &r0), ("P1", &r1)] {
        let (_, res) = r.solve_checked(&probe, false);
        if !(res <= 1e-8) {
            return Err(Error::Precondition(format!(
                "{name} - λ is numerically singular (probe residual {res:.2e})"
            )));
        }
    }
    Ok(GluedModels {
        h,
        m,
        lambda,
        s0,
        grid,
        p,
        p0,
        p1,
        w0,
        w1,
        chi0,
        chi1,
        chi0_shift,
        chi1_shift,
        r0,
        r1,
    })
}

/// Factors of the remainders, applied right to left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GluingOp {
    A0,
    A1,
    /// Multiplication by the final cutoff.
    Cutoff,
    /// `F` itself.
    F,
    /// `(P - λ)^{-1}`.
    Direct,
    /// The iterated correction `Id - A₀ - A₁ + A₁A₀ + A₀A₁ - A₀A₁A₀ - A₁A₀A₁`.
    Correction,
}

impl GluedModels {
    pub fn n(&self) -> usize {
        self.grid.n
    }

    /// `[P, c] u = P(c u) - c (P u)`.
    fn commutator(&self, c: &[f64], u: &[C64]) -> Vec<C64> {
        let mut y = self.p.apply(&mul(c, u));
        let pu = self.p.apply(u);
        for ((yi, ci), pi) in y.iter_mut().zip(c).zip(&pu) {
            *yi -= pi * *ci;
        }
        y
    }

    /// `[P, c]^* y = c (P^* y) - P^*(c y)`.
    fn commutator_adjoint(&self, c: &[f64], y: &[C64]) -> Vec<C64> {
        let mut x = mul(c, &self.p.apply_adjoint(y));
        let b = self.p.apply_adjoint(&mul(c, y));
        add(&mut x, &b, -1.0);
        x
    }

    pub fn apply_a0(&self, v: &[C64]) -> Vec<C64> {
        self.commutator(&self.chi0_shift, &self.r0.solve(&mul(&self.chi0, v)))
    }

    pub fn apply_a1(&self, v: &[C64]) -> Vec<C64> {
        self.commutator(&self.chi1_shift, &self.r1.solve(&mul(&self.chi1, v)))
    }

    fn apply_a0_adjoint(&self, y: &[C64]) -> Vec<C64> {
        mul(
            &self.chi0,
            &self
                .r0
                .solve_adjoint(&self.commutator_adjoint(&self.chi0_shift, y)),
        )
    }

    fn apply_a1_adjoint(&self, y: &[C64]) -> Vec<C64> {
        mul(
            &self.chi1,
            &self
                .r1
                .solve_adjoint(&self.commutator_adjoint(&self.chi1_shift, y)),
        )
    }

    /// The parametrix `F v`.
    pub fn apply_f(&self, v: &[C64]) -> Vec<C64> {
        let mut y = mul(&self.chi0_shift, &self.r0.solve(&mul(&self.chi0, v)));
        let b = mul(&self.chi1_shift, &self.r1.solve(&mul(&self.chi1, v)));
        add(&mut y, &b, 1.0);
        y
    }

    fn apply_f_adjoint(&self, y: &[C64]) -> Vec<C64> {
        let mut x = mul(
            &self.chi0,
            &self.r0.solve_adjoint(&mul(&self.chi0_shift, y)),
        );
        let b = mul(
            &self.chi1,
            &self.r1.solve_adjoint(&mul(&self.chi1_shift, y)),
        );
        add(&mut x, &b, 1.0);
        x
    }

    /// `G v` with `G` the iterated correction, and the two quartic
    /// remainders `A₁A₀A₁A₀ v + A₀A₁A₀A₁ v`.
    pub fn apply_correction(&self, v: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let a = self.apply_a0(v);
        let b = self.apply_a1(v);
        let ba = self.apply_a1(&a);
        let ab = self.apply_a0(&b);
        let aba = self.apply_a0(&ba);
        let bab = self.apply_a1(&ab);
        let mut g = v.to_vec();
        for (t, c) in [
            (&a, -1.0),
            (&b, -1.0),
            (&ba, 1.0),
            (&ab, 1.0),
            (&aba, -1.0),
            (&bab, -1.0),
        ] {
            add(&mut g, t, c);
        }
        let mut rem = self.apply_a1(&aba);
        add(&mut rem, &self.apply_a0(&bab), 1.0);
        (g, rem)
    }

    fn apply_correction_adjoint(&self, y: &[C64]) -> Vec<C64> {
        // G^* = Id - A₀^* - A₁^* + A₀^*A₁^* + A₁^*A₀^* - A₀^*A₁^*A₀^* - A₁^*A₀^*A₁^*.
        let a = self.apply_a0_adjoint(y);
        let b = self.apply_a1_adjoint(y);
        let ab = self.apply_a0_adjoint(&b);
        let ba = self.apply_a1_adjoint(&a);
        let aba = self.apply_a0_adjoint(&ba);
        let bab = self.apply_a1_adjoint(&ab);
        let mut g = y.to_vec();
        for (t, c) in [
            (&a, -1.0),
            (&b, -1.0),
            (&ab, 1.0),
            (&ba, 1.0),
            (&aba, -1.0),
            (&bab, -1.0),
        ] {
            add(&mut g, t, c);
        }
        g
    }

    fn op(
        &self,
        op: GluingOp,
        cutoff: &[f64],
        v: &[C64],
        adjoint: bool,
        direct: &ModeSolver,
    ) -> Vec<C64> {
        match (op, adjoint) {
            (GluingOp::A0, false) => self.apply_a0(v),
            (GluingOp::A0, true) => self.apply_a0_adjoint(v),
            (GluingOp::A1, false) => self.apply_a1(v),
            (GluingOp::A1, true) => self.apply_a1_adjoint(v),
            (GluingOp::Cutoff, _) => mul(cutoff, v),
            (GluingOp::F, false) => self.apply_f(v),
            (GluingOp::F, true) => self.apply_f_adjoint(v),
            (GluingOp::Direct, false) => direct.solve(v),
            (GluingOp::Direct, true) => direct.solve_adjoint(v),
            (GluingOp::Correction, false) => self.apply_correction(v).0,
            (GluingOp::Correction, true) => self.apply_correction_adjoint(v),
        }
    }

    /// Relative residuals of `(P - λ)F - Id - A₀ - A₁` and of the iterated
    /// identity on `probes` random vectors.
    pub fn identity_residuals(&self, probes: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut first, mut iterated): (f64, f64) = (0.0, 0.0);
        for _ in 0..probes {
            let v: Vec<C64> = (0..self.n())
                .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let pf = self.p.apply(&self.apply_f(&v));
            let a = self.apply_a0(&v);
            let b = self.apply_a1(&v);
            let mut r = pf.clone();
            add(&mut r, &v, -1.0);
            add(&mut r, &a, -1.0);
            add(&mut r, &b, -1.0);
            let scale = norm(&v).max(norm(&pf)).max(norm(&a)).max(norm(&b));
            first = first.max(norm(&r) / scale);

            let (g, rem) = self.apply_correction(&v);
            let pfg = self.p.apply(&self.apply_f(&g));
            let mut r = pfg.clone();
            add(&mut r, &v, -1.0);
            add(&mut r, &rem, 1.0);
            let scale = norm(&v).max(norm(&pfg)).max(norm(&rem)).max(norm(&g));
            iterated = iterated.max(norm(&r) / scale);
        }
        (first, iterated)
    }

    /// Dense matrices `(P - λ)F - Id - A₀ - A₁`, `A₀` and `A₁` (small `n`).
    pub fn dense(&self) -> Result<(DMatrix<C64>, DMatrix<C64>, DMatrix<C64>)> {
        let n = self.n();
        let p = self.p.to_dense();
        let inv = |m: &ModeOperator| {
            m.to_dense()
                .try_inverse()
                .ok_or(Error::SingularToTolerance {
                    index: 0,
                    pivot: 0.0,
                })
        };
        let r0 = inv(&self.p0)?;
        let r1 = inv(&self.p1)?;
        let diag = |c: &[f64]| {
            DMatrix::from_fn(n, n, |i, j| if i == j { C64::new(c[i], 0.0) } else { ZERO })
        };
        let (c0, c1, c0s, c1s) = (
            diag(&self.chi0),
            diag(&self.chi1),
            diag(&self.chi0_shift),
            diag(&self.chi1_shift),
        );
        let f = &c0s * &r0 * &c0 + &c1s * &r1 * &c1;
        let a0 = (&p * &c0s - &c0s * &p) * &r0 * &c0;
        let a1 = (&p * &c1s - &c1s * &p) * &r1 * &c1;
        let e =
            &p * &f - DMatrix::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO }) - &a0 - &a1;
        Ok((e, a0, a1))
    }
}

struct Product<'a> {
    models: &'a GluedModels,
    ops: Vec<GluingOp>,
    cutoff: &'a [f64],
    direct: &'a ModeSolver,
}

impl LinearMap for Product<'_> {
    fn dim(&self) -> usize {
        self.models.n()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.ops.iter().rev().fold(x.to_vec(), |v, &op| {
            self.models.op(op, self.cutoff, &v, false, self.direct)
        })
    }

    fn apply_adjoint(&self, y: &[C64]) -> Vec<C64> {
        self.ops.iter().fold(y.to_vec(), |v, &op| {
            self.models.op(op, self.cutoff, &v, true, self.direct)
        })
    }
}

/// Sweep of the gluing construction for the dominant mode at each `h`.
#[derive(Debug, Clone)]
pub struct GluingSpec {
    pub setup: GluingSetup,
    pub lambda: C64,
    pub h_list: Vec<f64>,
    pub points_per_h: f64,
    /// Angular momentum of the dominant mode: `m = round(mu / h)`.
    pub mu: f64,
    /// Explicit modes, one per `h`, overriding `mu`.
    pub modes: Option<Vec<i64>>,
    /// Cutoff `χ₀` of the final estimate.
    pub cutoff: Factor,
    pub power: PowerOptions,
    pub probes: usize,
}

impl GluingSpec {
    /// Operator, barrier, cutoff and `h` list of a lab experiment on the
    /// double well, at the hyperbolic momentum `μ = 1`.
    pub fn from_experiment(spec: &ExperimentSpec) -> Result<Self> {
        let cutoff = match &spec.cutoff_a.symbol {
            Symbol::Separable {
                s,
                sigma: Factor::One,
            } => s.clone(),
            _ => {
                return Err(Error::UnsupportedSymbol(
                    "gluing needs a purely spatial cutoff".into(),
                ))
            }
        };
        let lambda = match spec.lambda {
            crate::lab::LambdaRule::Fixed(l) => l,
            _ => return Err(Error::InvalidParams("gluing needs a fixed λ".into())),
        };
        let mut setup =
            GluingSetup::new(spec.profile.clone(), spec.potential, spec.barrier.clone());
        setup.energy = spec.energy;
        setup.absorber = spec.absorber;
        Ok(GluingSpec {
            setup,
            lambda,
            h_list: spec.h_list.clone(),
            points_per_h: spec.points_per_h,
            mu: 1.0,
            modes: None,
            cutoff,
            power: spec.power,
            probes: 2,
        })
    }

    pub fn mode_at(&self, k: usize) -> i64 {
        match &self.modes {
            Some(ms) => ms[k],
            None => (self.mu / self.h_list[k]).round() as i64,
        }
    }
}

/// Dense cross-check, available for `n ≤ 400`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseCheck {
    /// `max |(P - λ)F - Id - A₀ - A₁|` over entries, relative to `max |A₀| + max |A₁| + 1`.
    pub identity: f64,
    pub a0a1: f64,
    /// Relative difference from the power-iteration value of `‖A₀A₁‖`.
    pub a0a1_rel_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GluingRow {
    pub h: f64,
    pub m: i64,
    pub n: usize,
    pub a0: f64,
    pub a1: f64,
    pub a0a1: f64,
    /// `‖A₁A₀A₁A₀ χ₀‖`.
    pub a1a0a1a0_chi: f64,
    pub a0a1a0a1: f64,
    pub a0_sq: f64,
    pub a1_sq: f64,
    /// Relative residual of `(P - λ)F - Id - A₀ - A₁`.
    pub identity: f64,
    /// Relative residual of the iterated identity.
    pub iterated: f64,
    /// `‖χ₀ F G χ₀‖` with `G` the iterated correction.
    pub parametrix: f64,
    /// `‖χ₀ (P - λ)^{-1} χ₀‖`.
    pub direct: f64,
    pub discrepancy: f64,
    pub converged: bool,
    pub dense: Option<DenseCheck>,
    pub error: Option<String>,
}

impl GluingRow {
    fn failed(h: f64, m: i64, n: usize, e: Error) -> Self {
        GluingRow {
            h,
            m,
            n,
            a0: f64::NAN,
            a1: f64::NAN,
            a0a1: f64::NAN,
            a1a0a1a0_chi: f64::NAN,
            a0a1a0a1: f64::NAN,
            a0_sq: f64::NAN,
            a1_sq: f64::NAN,
            identity: f64::NAN,
            iterated: f64::NAN,
            parametrix: f64::NAN,
            direct: f64::NAN,
            discrepancy: f64::NAN,
            converged: false,
            dense: None,
            error: Some(format!("{e}")),
        }
    }
}

/// Power-law fit `‖X‖ ≈ c h^{exponent}` of one remainder over the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub name: &'static str,
    /// Decay exponent: larger is faster.
    pub exponent: f64,
    pub c: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GluingReport {
    pub seed: u64,
    pub rows: Vec<GluingRow>,
    pub fits: Vec<DecayFit>,
    pub fit_errors: Vec<(&'static str, String)>,
}

impl GluingReport {
    pub fn fit(&self, name: &str) -> Option<&DecayFit> {
        self.fits.iter().find(|f| f.name == name)
    }

    /// Largest identity residual over the rows (`NaN` rows count as failures).
    pub fn max_identity_residual(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.identity.max(r.iterated))
            .fold(
                0.0,
                |a: f64, b| if b.is_nan() { f64::INFINITY } else { a.max(b) },
            )
    }

    pub fn max_discrepancy(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.discrepancy)
            .fold(
                0.0,
                |a: f64, b| if b.is_nan() { f64::INFINITY } else { a.max(b) },
            )
    }
}

/// One row of the gluing sweep.
pub fn gluing_row(spec: &GluingSpec, h: f64, m: i64) -> Result<GluingRow> {
    let grid = Grid1D::for_h(spec.setup.profile.half_width, h, spec.points_per_h);
    let g = build_glued_models(&spec.setup, h, m, spec.lambda, grid)?;
    let direct = g.p.factor()?;
    let cutoff: Vec<f64> = grid.nodes().iter().map(|&s| spec.cutoff.eval(s)).collect();
    let mut converged = true;
    let mut norm_of = |ops: &[GluingOp]| {
        let map = Product {
            models: &g,
            ops: ops.to_vec(),
            cutoff: &cutoff,
            direct: &direct,
        };
        let est = power_norm(&map, &spec.power);
        converged &= est.converged;
        est.norm
    };
    use GluingOp::*;
    let a0 = norm_of(&[A0]);
    let a1 = norm_of(&[A1]);
    let a0a1 = norm_of(&[A0, A1]);
    let a1a0a1a0_chi = norm_of(&[A1, A0, A1, A0, Cutoff]);
    let a0a1a0a1 = norm_of(&[A0, A1, A0, A1]);
    let a0_sq = norm_of(&[A0, A0]);
    let a1_sq = norm_of(&[A1, A1]);
    let parametrix = norm_of(&[Cutoff, F, Correction, Cutoff]);
    let direct_norm = norm_of(&[Cutoff, Direct, Cutoff]);
    let (identity, iterated) = g.identity_residuals(spec.probes, spec.power.seed);
    let dense = if g.n() <= 400 {
        let (e, da0, da1) = g.dense()?;
        let big = |m: &DMatrix<C64>| m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let d = dense_spectral_norm(&(&da0 * &da1));
        Some(DenseCheck {
            identity: big(&e) / (big(&da0) + big(&da1) + 1.0),
            a0a1: d,
            a0a1_rel_diff: (d - a0a1).abs() / d.max(f64::MIN_POSITIVE),
        })
    } else {
        None
    };
    Ok(GluingRow {
        h,
        m,
        n: grid.n,
        a0,
        a1,
        a0a1,
        a1a0a1a0_chi,
        a0a1a0a1,
        a0_sq,
        a1_sq,
        identity,
        iterated,
        parametrix,
        direct: direct_norm,
        discrepancy: (parametrix - direct_norm).abs() / direct_norm.max(f64::MIN_POSITIVE),
        converged,
        dense,
        error: None,
    })
}

/// Runs [`gluing_row`] for every `h` and fits the decay of the remainders.
pub fn verify_gluing<E: Executor>(spec: &GluingSpec, exec: &E) -> Result<GluingReport> {
    if spec.h_list.is_empty() {
        return Err(Error::InvalidParams("empty h list".into()));
    }
    if let Some(ms) = &spec.modes {
        if ms.len() != spec.h_list.len() {
            return Err(Error::InvalidParams(format!(
                "{} modes for {} values of h",
                ms.len(),
                spec.h_list.len()
            )));
        }
    }
    let items: Vec<(f64, i64)> = (0..spec.h_list.len())
        .map(|k| (spec.h_list[k], spec.mode_at(k)))
        .collect();
    let rows = exec.map(items, |(h, m)| {
        gluing_row(spec, h, m).unwrap_or_else(|e| {
            let n = Grid1D::for_h(spec.setup.profile.half_width, h, spec.points_per_h).n;
            GluingRow::failed(h, m, n, e)
        })
    });
    let mut fits = Vec::new();
    let mut fit_errors = Vec::new();
    let series: [(&'static str, fn(&GluingRow) -> f64); 4] = [
        ("A0A1", |r| r.a0a1),
        ("A1A0A1A0chi0", |r| r.a1a0a1a0_chi),
        ("A0A1A0A1", |r| r.a0a1a0a1),
        ("parametrix", |r| r.parametrix),
    ];
    for (name, get) in series {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.error.is_none())
            .map(|r| (r.h, get(r)))
            .collect();
        match fit_scaling(&pts) {
            Ok(f) => fits.push(DecayFit {
                name,
                exponent: -f.pure_alpha,
                c: f.pure_c,
                residual: f.pure_residual,
            }),
            Err(e) => fit_errors.push((name, format!("{e}"))),
        }
    }
    Ok(GluingReport {
        seed: spec.power.seed,
        rows,
        fits,
        fit_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Serial;
    use crate::geometry::{make_profile, ProfileKind};
    use alloc::vec;

    /// Small double well whose grid satisfies a relaxed segment count, so
    /// that dense matrices fit in memory.
    fn small(h: f64) -> (GluingSetup, Grid1D) {
        let profile = make_profile(ProfileKind::DoubleWell, &[1.0, 1.0, 2.0], 2.5).unwrap();
        let mut setup = GluingSetup::new(
            profile,
            Potential::Zero,
            Some(BarrierSpec::for_double_well(1.0)),
        );
        setup.min_segment_points = 10;
        let grid = Grid1D::new(2.5, 391).unwrap();
        assert!(grid.spacing() <= h / 8.0);
        (setup, grid)
    }

    fn random(n: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn cutoffs_partition_and_barriers_disjoint() {
        let (setup, grid) = small(0.2);
        let g = build_glued_models(&setup, 0.2, 5, ZERO, grid).unwrap();
        for j in 0..g.n() {
            assert_eq!(g.chi0[j] + g.chi1[j], 1.0);
            assert_eq!(g.w0[j] * g.w1[j], 0.0);
            // The shifted cutoffs are 1 on the support of the unshifted ones
            // and vanish where the models differ from P.
            if g.chi0[j] != 0.0 {
                assert_eq!(g.chi0_shift[j], 1.0);
            }
            if g.chi1[j] != 0.0 {
                assert_eq!(g.chi1_shift[j], 1.0);
            }
            assert_eq!(g.chi0_shift[j] * g.w0[j], 0.0);
            assert_eq!(g.chi1_shift[j] * g.w1[j], 0.0);
        }
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let (mut setup, grid) = small(0.2);
        setup.min_segment_points = 50;
        assert!(matches!(
            build_glued_models(&setup, 0.2, 5, ZERO, grid),
            Err(Error::GridTooCoarse(_))
        ));
        let cat = make_profile(ProfileKind::Catenoid, &[], 2.5).unwrap();
        let other = GluingSetup::new(cat, Potential::Zero, None);
        assert!(build_glued_models(&other, 0.2, 5, ZERO, grid).is_err());
    }

    #[test]
    fn identity_matches_dense_assembly() {
        let (setup, grid) = small(0.2);
        let g = build_glued_models(&setup, 0.2, 5, ZERO, grid).unwrap();
        let (e, a0, a1) = g.dense().unwrap();
        let big = |m: &DMatrix<C64>| m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(
            big(&e) <= 1e-10 * (big(&a0) + big(&a1) + 1.0),
            "{}",
            big(&e)
        );
        assert!(big(&(&a0 * &a0)) <= 1e-12 * big(&a0).max(1.0));
        assert!(big(&(&a1 * &a1)) <= 1e-12 * big(&a1).max(1.0));
        let v = random(g.n(), 7);
        let dv = nalgebra::DVector::from_vec(v.clone());
        let want = &a0 * &dv;
        let got = g.apply_a0(&v);
        let diff: f64 = got
            .iter()
            .zip(want.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-9 * big(&a0).max(1.0), "{diff}");
        let (first, iterated) = g.identity_residuals(3, 1);
        assert!(first <= 1e-10 && iterated <= 1e-10, "{first} {iterated}");
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let (setup, grid) = small(0.2);
        let g = build_glued_models(&setup, 0.2, 5, ZERO, grid).unwrap();
        let z = vec![ZERO; g.n()];
        assert!(g.apply_f(&z).iter().all(|x| *x == ZERO));
        assert!(g.apply_a0(&z).iter().all(|x| *x == ZERO));
    }

    #[test]
    fn remainders_live_on_cutoff_transitions() {
        let (setup, grid) = small(0.2);
        let g = build_glued_models(&setup, 0.2, 5, ZERO, grid).unwrap();
        let nodes = grid.nodes();
        // Data deep inside χ̃₀ = 1: A₀ lives where χ̃₀' varies, A₁ vanishes.
        let v: Vec<C64> = nodes
            .iter()
            .map(|&s| if s.abs() < 0.2 { ONE } else { ZERO })
            .collect();
        let ds = grid.spacing();
        let a0 = g.apply_a0(&v);
        for (j, &s) in nodes.iter().enumerate() {
            let moving = [s - ds, s, s + ds].iter().any(|&x| {
                let c = chi_tilde0(x.abs() - g.s0 / 7.0, g.s0);
                c != 0.0 && c != 1.0
            });
            if !moving {
                assert_eq!(a0[j], ZERO, "s = {s}");
            }
        }
        assert!(g.apply_a1(&v).iter().all(|x| *x == ZERO));
    }

    #[test]
    fn sweep_report_on_small_grid() {
        let (setup, _) = small(0.2);
        let spec = GluingSpec {
            setup,
            lambda: ZERO,
            h_list: vec![0.2],
            points_per_h: 15.6,
            mu: 1.0,
            modes: None,
            cutoff: Factor::One,
            power: PowerOptions::default(),
            probes: 1,
        };
        let r = verify_gluing(&spec, &Serial).unwrap();
        let row = &r.rows[0];
        assert!(row.error.is_none(), "{:?}", row.error);
        assert_eq!(row.a0_sq, 0.0);
        assert_eq!(row.a1_sq, 0.0);
        let d = row.dense.unwrap();
        assert!(d.identity <= 1e-10);
        assert!(d.a0a1_rel_diff <= 1e-6, "{d:?}");
        assert!(r.fits.is_empty());
    }
}
