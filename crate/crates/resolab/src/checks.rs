//! Pass/fail bounds attached to each prediction tag.
//!
//! | prediction          | check                                              |
//! |---------------------|----------------------------------------------------|
//! | `nontrapping_h_inv` | pure exponent (β = 0) in `[0.85, 1.15]`            |
//! | `microlocal_h_inv`  | pure exponent at most 1.15                         |
//! | `log_loss`          | α at most 1.15 and log power β at most 1.5         |
//! | `log2_loss`         | α at most 1.15 and log power β at most 2.5         |
//! | `elliptic_blowup`   | norm at the smallest h above `h⁻³`                 |
//!
//! Gluing sweeps are held to exact identities, `‖A₀A₁‖ = O(h³)` and a 5%
//! gap between the parametrix and the direct resolvent.

use resolab_core::gluing::GluingReport;
use resolab_core::lab::{AuditCheck, ExperimentSpec, Prediction, SweepResult};

pub const ALPHA_MAX: f64 = 1.15;
pub const ALPHA_MIN_NONTRAPPING: f64 = 0.85;
pub const BETA_MAX_LOG: f64 = 1.5;
pub const BETA_MAX_LOG2: f64 = 2.5;
/// Relative tolerance of the grid-refinement audit.
pub const CONVERGENCE_TOL: f64 = 0.02;

fn check(name: &str, passed: bool, detail: String) -> AuditCheck {
    AuditCheck {
        name: name.into(),
        passed,
        detail,
    }
}

/// Checks of the sweep against the law its prediction tag names.
pub fn prediction_checks(spec: &ExperimentSpec, result: &SweepResult) -> Vec<AuditCheck> {
    let mut out = Vec::new();
    if spec.prediction == Prediction::EllipticBlowup {
        let last = result.rows.iter().rev().find(|r| r.error.is_none());
        let (passed, detail) = match last {
            Some(r) => (
                r.norm > r.h.powi(-3),
                format!(
                    "norm {:.4e} vs h^-3 = {:.4e} at h = {:.5}",
                    r.norm,
                    r.h.powi(-3),
                    r.h
                ),
            ),
            None => (false, "no finished row".into()),
        };
        out.push(check("norm exceeds h^-3 at the smallest h", passed, detail));
        return out;
    }
    let Some(fit) = &result.fit else {
        out.push(check(
            "scaling fit",
            false,
            result.fit_error.clone().unwrap_or_default(),
        ));
        return out;
    };
    match spec.prediction {
        Prediction::NontrappingHInv => out.push(check(
            "pure exponent in [0.85, 1.15]",
            (ALPHA_MIN_NONTRAPPING..=ALPHA_MAX).contains(&fit.pure_alpha),
            format!("alpha = {:.4}", fit.pure_alpha),
        )),
        Prediction::MicrolocalHInv => out.push(check(
            "pure exponent <= 1.15",
            fit.pure_alpha <= ALPHA_MAX,
            format!("alpha = {:.4}", fit.pure_alpha),
        )),
        Prediction::LogLoss | Prediction::Log2Loss => {
            let beta_max = if spec.prediction == Prediction::LogLoss {
                BETA_MAX_LOG
            } else {
                BETA_MAX_LOG2
            };
            out.push(check(
                "alpha <= 1.15",
                fit.alpha <= ALPHA_MAX,
                format!("alpha = {:.4}", fit.alpha),
            ));
            out.push(check(
                &format!("beta <= {beta_max}"),
                fit.beta <= beta_max,
                format!("beta = {:.4}", fit.beta),
            ));
        }
        Prediction::EllipticBlowup => unreachable!(),
    }
    out
}

/// The grid-refinement audit is skipped for elliptic blowup, whose norms
/// sit at the conditioning limit of the solver and move with the grid.
pub fn wants_convergence_audit(spec: &ExperimentSpec) -> bool {
    spec.prediction != Prediction::EllipticBlowup
}

/// Largest relative residual allowed in the gluing identities.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Smallest decay exponent of `‖A₀A₁‖` accepted over a gluing sweep.
pub const A0A1_DECAY_MIN: f64 = 3.0;
/// Largest relative gap between the parametrix and the direct norm.
pub const DISCREPANCY_MAX: f64 = 0.05;

/// Checks of a gluing sweep: exact identities, remainder decay and
/// agreement of the parametrix with the direct resolvent.
pub fn gluing_checks(report: &GluingReport) -> Vec<AuditCheck> {
    let mut out = Vec::new();
    let broken: Vec<String> = report
        .rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("h = {}: {e}", r.h)))
        .collect();
    out.push(check(
        "every row finished",
        broken.is_empty(),
        broken.join("; "),
    ));
    out.push(check(
        "power iterations converged",
        report.rows.iter().all(|r| r.converged),
        format!(
            "{} of {} rows",
            report.rows.iter().filter(|r| r.converged).count(),
            report.rows.len()
        ),
    ));
    let id = report.max_identity_residual();
    out.push(check(
        "identities vanish to 1e-10",
        id <= IDENTITY_TOL,
        format!("max relative residual {id:.3e}"),
    ));
    let (passed, detail) = match report.fit("A0A1") {
        Some(f) => (
            f.exponent >= A0A1_DECAY_MIN,
            format!("exponent {:.4}", f.exponent),
        ),
        None => (
            false,
            report
                .fit_errors
                .iter()
                .find(|(n, _)| *n == "A0A1")
                .map(|(_, e)| e.clone())
                .unwrap_or_default(),
        ),
    };
    out.push(check("|A0 A1| decays at least like h^3", passed, detail));
    let d = report.max_discrepancy();
    out.push(check(
        "parametrix within 5% of the direct norm",
        d <= DISCREPANCY_MAX,
        format!("max discrepancy {:.3}%", 100.0 * d),
    ));
    out
}
