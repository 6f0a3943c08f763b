use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cover_samples, covered, outer_f, trace_branches, EscapeFunction};
use crate::dynamics::{Sample, Stability};

#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub name: &'static str,
    pub passed: bool,
    /// Measured quantity.
    pub value: f64,
    /// The bound it is compared with.
    pub bound: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscapeReport {
    pub clauses: Vec<Clause>,
    pub n_seeds: usize,
    pub tube_samples: usize,
    pub annulus_samples: usize,
    /// `min(-H_p q)` over the annulus samples.
    pub c_min: f64,
}

impl EscapeReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }

    pub fn clause(&self, name: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.clauses
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect()
    }
}

fn clause(name: &'static str, passed: bool, value: f64, bound: f64, note: String) -> Clause {
    Clause {
        name,
        passed,
        value,
        bound,
        note,
    }
}

fn lin(a: f64, b: f64, n: usize, i: usize) -> f64 {
    a + (b - a) * i as f64 / (n - 1) as f64
}

/// Checks every property the construction promises, by sampling.
///
/// `n_samples` (at least 1000) points are drawn from the `Γ₊` tubes and up
/// to as many from the annulus `Γ₊^{closure(U₀)} \ U₁`.
pub fn verify_escape_function(ef: &EscapeFunction, n_samples: usize, seed: u64) -> EscapeReport {
    let n = n_samples.max(1000);
    let fl = ef.flow();
    let dt = ef.opts.dt;
    let reg = ef.regions;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clauses = Vec::new();

    let branches: Vec<Vec<Sample>> = if !ef.branches.is_empty() {
        ef.branches.clone()
    } else if ef.orbit.stability == Stability::Hyperbolic {
        trace_branches(&fl, &ef.orbit, &reg.u, &ef.opts).unwrap_or_default()
    } else {
        Vec::new()
    };

    // Γ₊ tube samples: V'_ρ points, or near-branch points without tubes.
    let mut tube_pts: Vec<(f64, f64)> = Vec::with_capacity(n);
    if !ef.tubes.is_empty() {
        for k in 0..n {
            let tube = &ef.tubes[k % ef.tubes.len()];
            let y = rng.random_range(-tube.r_prime..tube.r_prime);
            let t = rng.random_range(tube.times.t_v1 - 0.5..tube.times.t_u + 0.5);
            tube_pts.push(tube.point(&fl, y, t, dt));
        }
    } else {
        let pool: Vec<Sample> = branches
            .iter()
            .flatten()
            .filter(|x| reg.u.gauge(x.s, x.sigma) <= 1.0)
            .copied()
            .collect();
        if !pool.is_empty() {
            for _ in 0..n {
                let x = pool[rng.random_range(0..pool.len())];
                let off = ef.opts.plateau_radius;
                tube_pts.push((
                    x.s + rng.random_range(-off..off),
                    x.sigma + rng.random_range(-off..off),
                ));
            }
        }
    }
    let tube_vals: Vec<_> = tube_pts.iter().map(|&(s, p)| ef.eval(s, p)).collect();

    // Annulus samples on Γ₊ itself.
    let ann_pool: Vec<Sample> = branches
        .iter()
        .flatten()
        .filter(|x| reg.u0.gauge(x.s, x.sigma) <= 1.0 && reg.u1.gauge(x.s, x.sigma) >= 1.0)
        .copied()
        .collect();
    let stride = (ann_pool.len() / n).max(1);
    let ann: Vec<Sample> = ann_pool.iter().step_by(stride).copied().collect();
    let ann_vals: Vec<_> = ann.iter().map(|x| ef.eval(x.s, x.sigma)).collect();

    // q = 1 on the Γ-box.
    let g = reg.gamma;
    let mut dev: f64 = 0.0;
    for i in 0..21 {
        for j in 0..21 {
            let v = ef.q(lin(g.s.0, g.s.1, 21, i), lin(g.sigma.0, g.sigma.1, 21, j));
            dev = dev.max((v - 1.0).abs());
        }
    }
    clauses.push(clause(
        "q = 1 near Γ",
        dev <= 1e-12,
        dev,
        1e-12,
        "sup |q - 1| on a 21 x 21 grid of the Γ-box".into(),
    ));

    // q = 0 outside U.
    let u = reg.u;
    let (cs, hs) = (0.5 * (u.s.0 + u.s.1), 0.5 * (u.s.1 - u.s.0));
    let (cp, hp) = (0.5 * (u.sigma.0 + u.sigma.1), 0.5 * (u.sigma.1 - u.sigma.0));
    let mut out_max: f64 = 0.0;
    for k in 0..400 {
        let ang = core::f64::consts::TAU * k as f64 / 400.0;
        let rad = 1.0001 + 0.3 * ((k * 7) % 11) as f64 / 10.0;
        let (c, sn) = (ang.cos(), ang.sin());
        let scale = rad / c.abs().max(sn.abs());
        out_max = out_max.max(ef.q(cs + hs * c * scale, cp + hp * sn * scale).abs());
    }
    clauses.push(clause(
        "q = 0 outside U",
        out_max == 0.0,
        out_max,
        0.0,
        "sup |q| on 400 points of a ring outside U".into(),
    ));

    // Range on the stored grid and the tube samples.
    let grid_q = if ef.grid.q.is_empty() {
        ef.evaluate_grid(41).q
    } else {
        ef.grid.q.clone()
    };
    let qmin = grid_q
        .iter()
        .chain(tube_vals.iter().map(|v| &v.q))
        .fold(f64::INFINITY, |a, &b| a.min(b));
    let qmax = grid_q
        .iter()
        .chain(tube_vals.iter().map(|v| &v.q))
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    clauses.push(clause(
        "0 <= q <= 1",
        qmin >= 0.0 && qmax <= 1.0 + 1e-12,
        qmax,
        1.0 + 1e-12,
        format!("q ranges over [{qmin:.3e}, {qmax:.6}]"),
    ));

    // H_p q ≤ 0 near Γ₊.
    let hmax = tube_vals
        .iter()
        .map(|v| v.hpq)
        .fold(f64::NEG_INFINITY, f64::max);
    clauses.push(clause(
        "H_p q <= 0 on the Γ₊ tube",
        tube_vals.is_empty() || hmax <= 1e-10,
        hmax,
        1e-10,
        format!("max over {} tube samples", tube_vals.len()),
    ));

    // Strict negativity and the floor on the annulus.
    let c_min = ann_vals
        .iter()
        .map(|v| -v.hpq)
        .fold(f64::INFINITY, f64::min);
    clauses.push(clause(
        "H_p q < 0 on the annulus",
        !ann_vals.is_empty() && c_min > 0.0,
        c_min,
        0.0,
        format!(
            "min -H_p q over {} samples of Γ₊ in closure(U0) minus U1",
            ann_vals.len()
        ),
    ));
    let qt_min = ann_vals
        .iter()
        .map(|v| v.q_tilde)
        .fold(f64::INFINITY, f64::min);
    clauses.push(clause(
        "q̃ >= -1/2 on the annulus",
        ann_vals.is_empty() || qt_min >= -0.5,
        qt_min,
        -0.5,
        format!("N = {} seeds", ef.n_seeds()),
    ));

    // Tube profile conditions.
    let mut prof_ok = true;
    let mut prof_note = String::new();
    let nn = ef.n_seeds().max(1) as f64;
    for (k, tube) in ef.tubes.iter().enumerate() {
        let tm = tube.times;
        let mut prev = f64::INFINITY;
        let mut bad = |what: &str| {
            prof_ok = false;
            if prof_note.is_empty() {
                prof_note = format!("seed {k}: {what}");
            }
        };
        for i in 0..2001 {
            let t = lin(tube.t_min(), tube.t_max(), 2001, i);
            let c = tube.chi(t);
            if c > prev + 1e-15 {
                bad("χ increases");
            }
            prev = c;
            if t <= tm.t_v1 - 0.5 && c != 0.0 {
                bad("χ ≠ 0 before T^V1 - 1/2");
            }
            if (tm.t_v1..=tm.t_v0).contains(&t)
                && (c < -1.0 / (2.0 * nn) - 1e-15 || tube.chi_d(t) >= 0.0)
            {
                bad("floor or strict decrease fails on [T^V1, T^V0]");
            }
            if t >= tm.t_v0 + tube.eps && (c + 2.0).abs() > 1e-15 {
                bad("χ ≠ -2 after T^V0 + ε");
            }
        }
        if !(tube.eps > 0.0 && tube.eps < 0.5) {
            bad("ε outside (0, 1/2)");
        }
    }
    clauses.push(clause("tube profiles", prof_ok, 0.0, 0.0, prof_note));

    // Outer profile f.
    let mut f_ok = true;
    let mut prev = -1.0;
    for i in 0..801 {
        let t = lin(-3.0, 2.0, 801, i);
        let f = outer_f(t);
        if f < prev - 1e-14 || (t >= -0.5 && (f - t - 1.0).abs() > 1e-12) || (t <= -2.0 && f != 0.0)
        {
            f_ok = false;
        }
        prev = f;
    }
    clauses.push(clause(
        "outer profile f",
        f_ok,
        0.0,
        0.0,
        "nondecreasing, t + 1 on [-1/2, 2], 0 below -2".into(),
    ));

    // Cover.
    let cov: Vec<Sample> = cover_samples(&branches, &reg).map(|(_, x)| x).collect();
    let uncovered = if ef.tubes.is_empty() {
        cov.len()
    } else {
        cov.iter()
            .filter(|x| !covered(&ef.tubes, &fl, x, dt))
            .count()
    };
    clauses.push(clause(
        "Γ₊ cover",
        ef.trivial_flowout || ef.synthetic.is_some() || uncovered == 0,
        uncovered as f64,
        0.0,
        format!(
            "{} of {} samples of Γ₊ in closure(U) minus U1 outside every V'",
            uncovered,
            cov.len()
        ),
    ));

    // Monotonicity along the flow over one step, and the flow derivative.
    let step = 0.01;
    let mut worst_rise: f64 = f64::NEG_INFINITY;
    let mut fd_err: f64 = 0.0;
    for (i, (&(s, p), v)) in tube_pts.iter().zip(&tube_vals).enumerate() {
        let (a, b) = fl.advance(s, p, step, dt);
        worst_rise = worst_rise.max(ef.q(a, b) - v.q);
        if i % 5 == 0 {
            let d = 1e-4;
            let (a1, b1) = fl.advance(s, p, d, dt);
            let (a0, b0) = fl.advance(s, p, -d, dt);
            let fd = (ef.q(a1, b1) - ef.q(a0, b0)) / (2.0 * d);
            fd_err = fd_err.max((fd - v.hpq).abs() / v.hpq.abs().max(1.0));
        }
    }
    clauses.push(clause(
        "q nonincreasing along the flow",
        tube_pts.is_empty() || worst_rise <= 1e-8,
        worst_rise,
        1e-8,
        format!("largest rise of q over a step of {step} from a tube sample"),
    ));
    clauses.push(clause(
        "H_p q matches flow differences",
        fd_err <= 1e-3,
        fd_err,
        1e-3,
        "central difference of q along the flow with step 1e-4, relative to max(1, |H_p q|)".into(),
    ));
    let mut worst_slope: f64 = f64::NEG_INFINITY;
    for (x, v) in ann.iter().zip(&ann_vals) {
        let d = 1e-3;
        let (a, b) = fl.advance(x.s, x.sigma, d, dt);
        worst_slope = worst_slope.max((ef.q(a, b) - v.q) / d);
    }
    clauses.push(clause(
        "strict decrease on the annulus",
        !ann.is_empty() && worst_slope <= -0.5 * c_min,
        worst_slope,
        -0.5 * c_min,
        "forward difference of q with step 1e-3".into(),
    ));

    // Square-root gradients at two difference steps.
    let mut audit_pts: Vec<(f64, f64)> = tube_pts.iter().step_by(5).copied().collect();
    for k in 0..200.min(n) {
        if ef.tubes.is_empty() {
            break;
        }
        let tube = &ef.tubes[k % ef.tubes.len()];
        let y = rng.random_range(-tube.r..tube.r);
        let t = tube.times.t_v1 - 0.5 + rng.random_range(0.0..0.1);
        audit_pts.push(tube.point(&fl, y, t, dt));
    }
    let grad = |f: &dyn Fn(f64, f64) -> f64, s: f64, p: f64, d: f64| -> f64 {
        let gs = (f(s + d, p) - f(s - d, p)) / (2.0 * d);
        let gp = (f(s, p + d) - f(s, p - d)) / (2.0 * d);
        gs.hypot(gp)
    };
    let sq = |s: f64, p: f64| ef.q(s, p).max(0.0).sqrt();
    let sh = |s: f64, p: f64| (-ef.eval(s, p).hpq).max(0.0).sqrt();
    let (mut g1q, mut g2q, mut g1h, mut g2h) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for &(s, p) in &audit_pts {
        g1q = g1q.max(grad(&sq, s, p, 1e-4));
        g2q = g2q.max(grad(&sq, s, p, 1e-4 / 16.0));
        g1h = g1h.max(grad(&sh, s, p, 1e-4));
        g2h = g2h.max(grad(&sh, s, p, 1e-4 / 16.0));
    }
    let bounded = |a: f64, b: f64| a.is_finite() && b.is_finite() && b <= 1.5 * a + 1e-6;
    clauses.push(clause(
        "smooth square roots",
        bounded(g1q, g2q) && bounded(g1h, g2h),
        g2q.max(g2h),
        1.5 * g1q.max(g1h) + 1e-6,
        format!("max |∇√q| = {g1q:.3e} -> {g2q:.3e}, max |∇√(-H_p q)| = {g1h:.3e} -> {g2h:.3e} as the step shrinks 16x"),
    ));

    EscapeReport {
        clauses,
        n_seeds: ef.n_seeds(),
        tube_samples: tube_vals.len(),
        annulus_samples: ann_vals.len(),
        c_min,
    }
}
