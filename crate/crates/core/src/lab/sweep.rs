use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{fit_scaling, resolvent_norm, select_modes, ExperimentSpec, ModeScan, ScalingFit};
use crate::exec::Executor;
use crate::quantize::{build_cutoff, Grid1D, LowRankBarrier, OperatorFamily};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub h: f64,
    pub n: usize,
    pub norm: f64,
    pub m_star: i64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub modes: usize,
    pub sentinel_max: f64,
    pub skipped: usize,
    /// Rank and quantization slack of the barrier, when there is one.
    pub barrier: Option<(usize, f64)>,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(h: f64, n: usize, e: Error) -> Self {
        SweepRow {
            h,
            n,
            norm: f64::NAN,
            m_star: 0,
            iterations: 0,
            residual: f64::NAN,
            converged: false,
            modes: 0,
            sentinel_max: f64::NAN,
            skipped: 0,
            barrier: None,
            error: Some(format!("{e}")),
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_none() && self.converged
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub name: String,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
    pub fit: Option<ScalingFit>,
    pub fit_error: Option<String>,
    pub forced: bool,
}

impl SweepResult {
    /// Every row finished with a converged power iteration.
    pub fn converged(&self) -> bool {
        self.rows.iter().all(SweepRow::ok)
    }

    /// Sentinel modes beyond the shell never exceed the shell maximum.
    pub fn sentinels_dominated(&self) -> bool {
        self.rows
            .iter()
            .filter(|r| r.error.is_none())
            .all(|r| r.sentinel_max <= r.norm)
    }
}

/// One sweep row at `h` together with the full mode scan.
pub fn run_row<E: Executor>(
    spec: &ExperimentSpec,
    h: f64,
    points_per_h: f64,
    exec: &E,
) -> Result<(SweepRow, ModeScan)> {
    let grid = Grid1D::for_h(spec.profile.half_width, h, points_per_h);
    let mut family = OperatorFamily::with_energy(
        &spec.profile,
        &spec.potential,
        h,
        grid,
        Some(spec.absorber),
        spec.energy,
    )?;
    let mut barrier = None;
    if let Some(b) = &spec.barrier {
        let w = LowRankBarrier::build(b, h, &grid)?;
        barrier = Some((w.rank(), w.slack));
        family = family.with_barrier(Arc::new(w))?;
    }
    let a = build_cutoff(&spec.cutoff_a, h, &grid, spec.band_tol)?;
    let b = build_cutoff(&spec.cutoff_b, h, &grid, spec.band_tol)?;
    let modes = select_modes(
        &spec.profile,
        &spec.potential,
        spec.energy,
        &a,
        &b,
        &grid.nodes(),
        &spec.policy,
    );
    let scan = resolvent_norm(exec, &family, &a, &b, &modes, &spec.lambda, &spec.power)?;
    let row = SweepRow {
        h,
        n: grid.n,
        norm: scan.norm,
        m_star: scan.m_star,
        iterations: scan.iterations,
        residual: scan.residual,
        converged: scan.converged,
        modes: modes.included.len(),
        sentinel_max: scan.sentinel_max,
        skipped: scan.skipped(),
        barrier,
        error: None,
    };
    Ok((row, scan))
}

/// Runs every `h` of the spec and fits the scaling law.
///
/// Refuses to run when the hypothesis audit fails unless `force` is set.
/// Failures of single rows are recorded in the row and the sweep goes on.
pub fn run_sweep<E: Executor>(spec: &ExperimentSpec, exec: &E, force: bool) -> Result<SweepResult> {
    spec.validate()?;
    if !spec.audit.passed() && !force {
        let names: Vec<&str> = spec
            .audit
            .failures()
            .iter()
            .map(|c| c.name.as_str())
            .collect();
        return Err(Error::HypothesisFailed(format!(
            "{}: {}",
            spec.name,
            names.join("; ")
        )));
    }
    let mut rows = Vec::with_capacity(spec.h_list.len());
    for &h in &spec.h_list {
        let n = Grid1D::for_h(spec.profile.half_width, h, spec.points_per_h).n;
        rows.push(match run_row(spec, h, spec.points_per_h, exec) {
            Ok((row, _)) => row,
            Err(e) => SweepRow::failed(h, n, e),
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| (r.h, r.norm))
        .collect();
    let (fit, fit_error) = match fit_scaling(&pts) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(format!("{e}"))),
    };
    Ok(SweepResult {
        name: spec.name.clone(),
        seed: spec.power.seed,
        rows,
        fit,
        fit_error,
        forced: force && !spec.audit.passed(),
    })
}

/// Effect of halving `Δs` at the coarsest `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceAudit {
    pub h: f64,
    pub norm: f64,
    pub refined: f64,
    pub rel_change: f64,
    pub passed: bool,
}

/// Reruns the coarsest `h` with twice the points per `h`; passes when the
/// norm moves by at most `tol` (relative).
pub fn convergence_audit<E: Executor>(
    spec: &ExperimentSpec,
    exec: &E,
    tol: f64,
) -> Result<ConvergenceAudit> {
    spec.validate()?;
    let h = spec.h_list[0];
    let (coarse, _) = run_row(spec, h, spec.points_per_h, exec)?;
    let (fine, _) = run_row(spec, h, 2.0 * spec.points_per_h, exec)?;
    let rel_change = (fine.norm - coarse.norm).abs() / fine.norm.abs().max(f64::MIN_POSITIVE);
    Ok(ConvergenceAudit {
        h,
        norm: coarse.norm,
        refined: fine.norm,
        rel_change,
        passed: rel_change <= tol,
    })
}
