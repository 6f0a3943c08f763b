use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::power::{power_norm, LinearMap, NormEstimate, PowerOptions};
use crate::exec::Executor;
use crate::geometry::{Potential, Profile};
use crate::linalg::{dense_spectral_norm, norm, ZERO};
use crate::quantize::{CutoffOperator, ModeOperator, ModeSolver, OperatorFamily, QuantizedSymbol};
use crate::{Error, Result, C64};

/// `c · A_w (P - λ)_w^{-1} B_w` on the solver window, where `A_w`, `B_w`
/// are the compressions of Hermitian cutoffs to the window.
pub struct Sandwich<'a> {
    pub a: &'a QuantizedSymbol,
    pub b: &'a QuantizedSymbol,
    pub solver: &'a ModeSolver,
    pub scale: f64,
}

impl LinearMap for Sandwich<'_> {
    fn dim(&self) -> usize {
        self.solver.len()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let w = self.solver.window();
        let mut y = self.b.apply_block(w.clone(), x, 1);
        self.solver.solve_in_place(&mut y);
        let mut z = self.a.apply_block(w, &y, 1);
        z.iter_mut().for_each(|v| *v *= self.scale);
        z
    }

    fn apply_adjoint(&self, y: &[C64]) -> Vec<C64> {
        let w = self.solver.window();
        let mut x = self.a.apply_block(w.clone(), y, 1);
        self.solver.solve_adjoint_in_place(&mut x);
        let mut z = self.b.apply_block(w, &x, 1);
        z.iter_mut().for_each(|v| *v *= self.scale);
        z
    }
}

/// Smallest node window holding the rows of both cutoffs and of the
/// barrier, or `None` when a cutoff is identically zero.
pub fn sandwich_window(
    a: &QuantizedSymbol,
    b: &QuantizedSymbol,
    op: &ModeOperator,
) -> Option<Range<usize>> {
    let (ra, rb) = (a.rows(), b.rows());
    if ra.is_empty() || rb.is_empty() {
        return None;
    }
    let mut lo = ra.start.min(rb.start);
    let mut hi = ra.end.max(rb.end);
    if let Some(w) = &op.barrier {
        lo = lo.min(w.offset);
        hi = hi.max(w.offset + w.rows());
    }
    Some(lo..hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeNorm {
    pub estimate: NormEstimate,
    /// Relative residual of a refined probe solve on the window.
    pub solve_residual: f64,
    pub window: Range<usize>,
}

fn probe_residual(solver: &ModeSolver, b: &QuantizedSymbol, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
    let x: Vec<C64> = (0..solver.len())
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let rhs = b.apply_block(solver.window(), &x, 1);
    if norm(&rhs) == 0.0 {
        return 0.0;
    }
    let y = solver.solve(&rhs);
    let r: Vec<C64> = solver
        .apply(&y)
        .iter()
        .zip(&rhs)
        .map(|(p, q)| p - q)
        .collect();
    norm(&r) / norm(&rhs)
}

/// `‖A R B‖` on one mode with unit mode weights.
pub fn sandwich_norm(
    a: &QuantizedSymbol,
    op: &ModeOperator,
    b: &QuantizedSymbol,
    opts: &PowerOptions,
) -> Result<ModeNorm> {
    let Some(window) = sandwich_window(a, b, op) else {
        return Ok(ModeNorm {
            estimate: NormEstimate::zero(),
            solve_residual: 0.0,
            window: 0..0,
        });
    };
    let solver = op.factor_window(window.clone())?;
    let map = Sandwich {
        a,
        b,
        solver: &solver,
        scale: 1.0,
    };
    let estimate = power_norm(&map, opts);
    let solve_residual = probe_residual(&solver, b, opts.seed);
    Ok(ModeNorm {
        estimate,
        solve_residual,
        window,
    })
}

/// `‖A_m (P_m - λ)^{-1} B_m‖` for mode-diagonal cutoffs by power iteration
/// on the sandwich restricted to the window of [`sandwich_window`].
pub fn mode_resolvent_norm(
    a: &CutoffOperator,
    op: &ModeOperator,
    b: &CutoffOperator,
    opts: &PowerOptions,
) -> Result<ModeNorm> {
    opts.validate()?;
    let w = a.weight(op.m) * b.weight(op.m);
    if w == 0.0 {
        return Ok(ModeNorm {
            estimate: NormEstimate::zero(),
            solve_residual: 0.0,
            window: 0..0,
        });
    }
    let mut out = sandwich_norm(&a.base, op, &b.base, opts)?;
    out.estimate.norm *= w.abs();
    Ok(out)
}

/// Dense reference for [`mode_resolvent_norm`]; meant for `n ≤ 400`.
pub fn dense_mode_norm(a: &CutoffOperator, op: &ModeOperator, b: &CutoffOperator) -> Result<f64> {
    let w = a.weight(op.m) * b.weight(op.m);
    let p = op.to_dense();
    let inv = p.try_inverse().ok_or(Error::SingularToTolerance {
        index: 0,
        pivot: 0.0,
    })?;
    let m: DMatrix<C64> = a.base.to_dense() * inv * b.base.to_dense();
    Ok(w.abs() * dense_spectral_norm(&m))
}

/// How the spectral parameter is chosen for each mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    Fixed(C64),
    /// `λ = i · coef · h^power`.
    ImagPower {
        coef: f64,
        power: i32,
    },
    /// `λ = Re θ` for the eigenvalue `θ` of the mode operator nearest to 0,
    /// if `|Re θ| ≤ window · h`; otherwise `λ = 0`.
    NearestQuasimode {
        window: f64,
    },
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::Fixed(ZERO)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quasimode {
    pub theta: C64,
    pub iterations: usize,
    /// The shifted operator became singular to working precision.
    pub singular: bool,
}

/// Eigenvalue of `P_m - 1` near 0: a few inverse iterations at shift 0, then
/// Rayleigh quotient iteration. The quotient is the bilinear `vᵀTv / vᵀv`
/// when the operator is complex symmetric (no barrier), and `v*Tv / v*v`
/// otherwise.
pub fn nearest_quasimode(
    family: &OperatorFamily,
    m: i64,
    start: &[C64],
    max_iter: usize,
) -> Result<Quasimode> {
    let op0 = family.mode(m, ZERO);
    let symmetric = op0.barrier.is_none();
    let nv = norm(start);
    if nv == 0.0 {
        return Err(Error::InvalidParams(
            "quasimode search needs a nonzero start vector".into(),
        ));
    }
    let mut v: Vec<C64> = start.iter().map(|z| z / nv).collect();
    let quotient = |v: &[C64]| -> C64 {
        let tv = op0.apply(v);
        if symmetric {
            let num: C64 = v.iter().zip(&tv).map(|(a, b)| a * b).sum();
            let den: C64 = v.iter().map(|a| a * a).sum();
            num / den
        } else {
            let num: C64 = v.iter().zip(&tv).map(|(a, b)| a.conj() * b).sum();
            num / v.iter().map(|a| a.norm_sqr()).sum::<f64>()
        }
    };
    let mut theta = ZERO;
    for it in 1..=max_iter {
        let shift = if it <= 3 { ZERO } else { theta };
        let solver = match family.mode(m, shift).factor() {
            Ok(s) => s,
            Err(Error::SingularToTolerance { .. }) => {
                return Ok(Quasimode {
                    theta: shift,
                    iterations: it,
                    singular: true,
                })
            }
            Err(e) => return Err(e),
        };
        let w = solver.solve(&v);
        let nw = norm(&w);
        if !(nw.is_finite() && nw > 0.0) {
            return Ok(Quasimode {
                theta: shift,
                iterations: it,
                singular: true,
            });
        }
        v = w.iter().map(|z| z / nw).collect();
        let next = quotient(&v);
        let done = it > 3 && (next - theta).norm() <= 1e-15 * next.norm().max(1e-3);
        theta = next;
        if done {
            return Ok(Quasimode {
                theta,
                iterations: it,
                singular: false,
            });
        }
    }
    Ok(Quasimode {
        theta,
        iterations: max_iter,
        singular: false,
    })
}

/// Modes with `|hm| ≤ μ_max + margin` plus sentinel modes just beyond.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePolicy {
    pub margin: f64,
    pub sentinels: usize,
    /// Modes removed from the shell set.
    pub exclude: Vec<i64>,
}

impl Default for ModePolicy {
    fn default() -> Self {
        ModePolicy {
            margin: 0.5,
            sentinels: 5,
            exclude: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub included: Vec<i64>,
    pub sentinels: Vec<i64>,
    /// Largest shell angular momentum `a(s)√(E - V(s))` over the cutoff rows.
    pub mu_max: f64,
    pub m_max: i64,
}

/// Shell modes for a pair of cutoffs.
pub fn select_modes(
    profile: &Profile,
    potential: &Potential,
    energy: f64,
    a: &CutoffOperator,
    b: &CutoffOperator,
    nodes: &[f64],
    policy: &ModePolicy,
) -> ModeSet {
    let h = a.h;
    let mut mu_max: f64 = 0.0;
    for r in [a.rows(), b.rows()] {
        for j in r {
            let room = energy - potential.value(nodes[j]);
            if room > 0.0 {
                mu_max = mu_max.max(profile.a(nodes[j]) * room.sqrt());
            }
        }
    }
    let m_max = ((mu_max + policy.margin) / h + 1e-9).floor() as i64;
    let live = |m: i64| a.active(m) && b.active(m);
    let included = (-m_max..=m_max)
        .filter(|&m| live(m) && !policy.exclude.contains(&m))
        .collect();
    let mut sentinels = Vec::new();
    for k in 1..=policy.sentinels as i64 {
        for m in [-(m_max + k), m_max + k] {
            if live(m) {
                sentinels.push(m);
            }
        }
    }
    sentinels.sort_unstable();
    ModeSet {
        included,
        sentinels,
        mu_max,
        m_max,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeRecord {
    pub m: i64,
    pub lambda: C64,
    pub norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub solve_residual: f64,
    pub sentinel: bool,
    /// Set when the mode could not be evaluated (for example a singular
    /// quasimode shift); such modes do not enter the maximum.
    pub skipped: Option<alloc::string::String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeScan {
    pub norm: f64,
    pub m_star: i64,
    pub sentinel_max: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub records: Vec<ModeRecord>,
}

impl ModeScan {
    pub fn skipped(&self) -> usize {
        self.records.iter().filter(|r| r.skipped.is_some()).count()
    }

    /// Sentinels never exceed the shell maximum.
    pub fn sentinels_dominated(&self) -> bool {
        self.sentinel_max <= self.norm
    }
}

fn mode_seed(seed: u64, m: u64) -> u64 {
    seed ^ m.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

struct Unweighted {
    lambda: C64,
    result: core::result::Result<ModeNorm, alloc::string::String>,
}

/// `sup_m ‖A_m (P_m - λ)^{-1} B_m‖` over a mode set.
///
/// The operator depends on `m` only through `m²`, so each `|m|` is solved
/// once and reweighted by `|b_A(hm) b_B(hm)|`. Ties go to the smallest `|m|`,
/// then to the nonnegative mode.
pub fn resolvent_norm<E: Executor>(
    exec: &E,
    family: &OperatorFamily,
    a: &CutoffOperator,
    b: &CutoffOperator,
    modes: &ModeSet,
    rule: &LambdaRule,
    opts: &PowerOptions,
) -> Result<ModeScan> {
    opts.validate()?;
    let mut abs: Vec<u64> = modes
        .included
        .iter()
        .chain(&modes.sentinels)
        .map(|m| m.unsigned_abs())
        .collect();
    abs.sort_unstable();
    abs.dedup();
    let h = family.h;
    let n = family.grid.n;
    let results: Vec<Unweighted> = exec.map(abs.clone(), |k| {
        let m = k as i64;
        let lambda = match *rule {
            LambdaRule::Fixed(l) => l,
            LambdaRule::ImagPower { coef, power } => C64::new(0.0, coef * h.powi(power)),
            LambdaRule::NearestQuasimode { window } => {
                let mut rng = ChaCha8Rng::seed_from_u64(mode_seed(opts.seed, k) ^ 0x0f0f);
                let x: Vec<C64> = (0..n)
                    .map(|_| C64::new(rng.random_range(-1.0..1.0), 0.0))
                    .collect();
                let start = b.base.apply(&x);
                match nearest_quasimode(family, m, &start, 40) {
                    Ok(q) if q.theta.re.abs() <= window * h => C64::new(q.theta.re, 0.0),
                    Ok(_) => ZERO,
                    Err(e) => {
                        return Unweighted {
                            lambda: ZERO,
                            result: Err(format!("{e}")),
                        }
                    }
                }
            }
        };
        let op = family.mode(m, lambda);
        let o = PowerOptions {
            seed: mode_seed(opts.seed, k),
            ..*opts
        };
        let result = sandwich_norm(&a.base, &op, &b.base, &o).map_err(|e| format!("{e}"));
        Unweighted { lambda, result }
    });
    let mut records = Vec::new();
    let all: Vec<(i64, bool)> = modes
        .included
        .iter()
        .map(|&m| (m, false))
        .chain(modes.sentinels.iter().map(|&m| (m, true)))
        .collect();
    for (m, sentinel) in all {
        let idx = abs.binary_search(&m.unsigned_abs()).expect("mode listed");
        let u = &results[idx];
        let w = (a.weight(m) * b.weight(m)).abs();
        let rec = match &u.result {
            Ok(r) => ModeRecord {
                m,
                lambda: u.lambda,
                norm: w * r.estimate.norm,
                iterations: r.estimate.iterations,
                converged: r.estimate.converged,
                solve_residual: r.solve_residual,
                sentinel,
                skipped: None,
            },
            Err(e) => ModeRecord {
                m,
                lambda: u.lambda,
                norm: 0.0,
                iterations: 0,
                converged: true,
                solve_residual: 0.0,
                sentinel,
                skipped: Some(e.clone()),
            },
        };
        records.push(rec);
    }
    records.sort_by_key(|r| r.m);
    let key = |m: i64| (m.unsigned_abs(), m < 0);
    let mut best: Option<&ModeRecord> = None;
    for r in records
        .iter()
        .filter(|r| !r.sentinel && r.skipped.is_none())
    {
        best = match best {
            None => Some(r),
            Some(b) if r.norm > b.norm || (r.norm == b.norm && key(r.m) < key(b.m)) => Some(r),
            keep => keep,
        };
    }
    let used = || records.iter().filter(|r| r.skipped.is_none());
    Ok(ModeScan {
        norm: best.map_or(0.0, |r| r.norm),
        m_star: best.map_or(0, |r| r.m),
        sentinel_max: records
            .iter()
            .filter(|r| r.sentinel && r.skipped.is_none())
            .map(|r| r.norm)
            .fold(0.0, f64::max),
        iterations: used().map(|r| r.iterations).max().unwrap_or(0),
        residual: used().map(|r| r.solve_residual).fold(0.0, f64::max),
        converged: used().all(|r| r.converged),
        records,
    })
}
