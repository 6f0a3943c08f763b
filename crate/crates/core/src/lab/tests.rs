use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::exec::Serial;
use crate::geometry::{make_profile, ProfileKind};
use crate::linalg::ZERO;
use crate::quantize::{
    build_cutoff, CutoffOperator, CutoffSpec, Factor, Grid1D, ModeOperator, OperatorFamily, Symbol,
};
use crate::smooth::Window;
use crate::C64;

fn ident(grid: &Grid1D, h: f64) -> CutoffOperator {
    build_cutoff(&CutoffSpec::spatial(Factor::One), h, grid, 1e-12).unwrap()
}

fn random_op(n: usize, seed: u64, off: f64) -> (ModeOperator, Grid1D) {
    let grid = Grid1D::new(1.0, n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diag: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.random_range(-2.0..2.0), -rng.random_range(0.05..1.0)))
        .collect();
    let op = ModeOperator {
        h: 0.06,
        m: 0,
        lambda: ZERO,
        grid,
        diag,
        off,
        barrier: None,
    };
    (op, grid)
}

#[test]
fn identity_cutoffs_on_diagonal_operator() {
    let (op, grid) = random_op(50, 1, 0.0);
    let id = ident(&grid, 0.06);
    let got = mode_resolvent_norm(
        &id,
        &op,
        &id,
        &PowerOptions {
            tol: 1e-8,
            ..Default::default()
        },
    )
    .unwrap();
    let want = 1.0
        / op.diag
            .iter()
            .map(|d| d.norm())
            .fold(f64::INFINITY, f64::min);
    assert!(got.estimate.converged);
    assert!(
        (got.estimate.norm - want).abs() <= 1e-7 * want,
        "{} vs {want}",
        got.estimate.norm
    );
}

#[test]
fn zero_b_gives_zero_in_one_iteration() {
    let (op, grid) = random_op(40, 2, -0.3);
    let id = ident(&grid, 0.06);
    let spec = CutoffSpec::new(
        Symbol::spatial(Factor::One),
        Factor::Window(Window::psi(5.0, 6.0, 0.1)),
    );
    let zero = build_cutoff(&spec, 0.06, &grid, 1e-12).unwrap();
    let got = mode_resolvent_norm(&id, &op, &zero, &PowerOptions::default()).unwrap();
    assert_eq!(got.estimate.norm, 0.0);
    assert_eq!(got.estimate.iterations, 1);
}

#[test]
fn banded_instance_matches_dense_oracle() {
    let h = 0.06;
    let grid = Grid1D::for_h(1.0, h, 8.0);
    assert!(grid.n <= 400);
    let (mut op, _) = random_op(grid.n, 3, -0.4);
    op.grid = grid;
    let a = CutoffSpec::new(
        Symbol::separable(
            Factor::Window(Window::radial(0.3, 0.6)),
            Factor::Window(Window::psi(-0.5, 0.5, 0.4)),
        ),
        Factor::One,
    );
    let b = CutoffSpec::spatial(Factor::Window(Window::psi(-0.8, 0.1, 0.3)));
    let a = build_cutoff(&a, h, &grid, 1e-12).unwrap();
    let b = build_cutoff(&b, h, &grid, 1e-12).unwrap();
    let got = mode_resolvent_norm(
        &a,
        &op,
        &b,
        &PowerOptions {
            tol: 1e-8,
            max_iter: 5000,
            ..Default::default()
        },
    )
    .unwrap();
    let want = dense_mode_norm(&a, &op, &b).unwrap();
    assert!(got.estimate.converged);
    assert!(
        (got.estimate.norm - want).abs() <= 1e-6 * want,
        "{} vs {want}",
        got.estimate.norm
    );
    assert!(got.solve_residual < 1e-10);
}

fn catenoid_setup(h: f64) -> (OperatorFamily, CutoffOperator, Vec<f64>) {
    let profile = make_profile(ProfileKind::Catenoid, &[], 6.0).unwrap();
    let grid = Grid1D::for_h(6.0, h, 8.0);
    let fam = OperatorFamily::new(
        &profile,
        &crate::geometry::Potential::Zero,
        h,
        grid,
        Some(crate::quantize::Absorber::standard(6.0)),
    )
    .unwrap();
    let chi = build_cutoff(
        &CutoffSpec::spatial(Factor::Window(Window::radial(1.0, 1.5))),
        h,
        &grid,
        1e-10,
    )
    .unwrap();
    (fam, chi, grid.nodes())
}

#[test]
fn single_mode_equals_mode_norm() {
    let h = 0.05;
    let (fam, chi, _) = catenoid_setup(h);
    let set = ModeSet {
        included: vec![17],
        sentinels: vec![],
        mu_max: 0.0,
        m_max: 17,
    };
    let opts = PowerOptions::default();
    let scan = resolvent_norm(
        &Serial,
        &fam,
        &chi,
        &chi,
        &set,
        &LambdaRule::default(),
        &opts,
    )
    .unwrap();
    let direct = sandwich_norm(
        &chi.base,
        &fam.mode(17, ZERO),
        &chi.base,
        &PowerOptions {
            seed: scan_seed(opts.seed, 17),
            ..opts
        },
    )
    .unwrap();
    assert_eq!(scan.m_star, 17);
    assert_eq!(scan.norm, direct.estimate.norm);
}

fn scan_seed(seed: u64, m: u64) -> u64 {
    seed ^ m.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

#[test]
fn catenoid_neck_argmax_near_trapped_momentum() {
    let h = 0.05;
    let (fam, chi, nodes) = catenoid_setup(h);
    let profile = make_profile(ProfileKind::Catenoid, &[], 6.0).unwrap();
    let pot = crate::geometry::Potential::Zero;
    let set = select_modes(
        &profile,
        &pot,
        1.0,
        &chi,
        &chi,
        &nodes,
        &ModePolicy::default(),
    );
    let scan = resolvent_norm(
        &Serial,
        &fam,
        &chi,
        &chi,
        &set,
        &LambdaRule::default(),
        &PowerOptions::default(),
    )
    .unwrap();
    assert!(scan.converged);
    assert!(scan.sentinels_dominated());
    // Exhaustive scan well past the shell.
    let all = ModeSet {
        included: (-80..=80).collect(),
        sentinels: vec![],
        mu_max: 0.0,
        m_max: 80,
    };
    let full = resolvent_norm(
        &Serial,
        &fam,
        &chi,
        &chi,
        &all,
        &LambdaRule::default(),
        &PowerOptions::default(),
    )
    .unwrap();
    assert_eq!(full.m_star, scan.m_star);
    assert_eq!(full.norm, scan.norm);
    assert!(
        (h * scan.m_star.abs() as f64 - 1.0).abs() <= 0.25,
        "m* = {}",
        scan.m_star
    );
    assert!(scan.m_star > 0);

    let policy = ModePolicy {
        exclude: vec![scan.m_star, -scan.m_star],
        ..Default::default()
    };
    let fewer = select_modes(&profile, &pot, 1.0, &chi, &chi, &nodes, &policy);
    let less = resolvent_norm(
        &Serial,
        &fam,
        &chi,
        &chi,
        &fewer,
        &LambdaRule::default(),
        &PowerOptions::default(),
    )
    .unwrap();
    assert!(less.norm < scan.norm);
}

#[test]
fn presets_audit_and_unknown_name() {
    for (name, _) in PRESETS {
        let spec = preset(name).unwrap();
        assert!(spec.audit.passed(), "{name}: {:?}", spec.audit.failures());
        spec.validate().unwrap();
    }
    assert!(matches!(
        preset("nope"),
        Err(crate::Error::UnknownPreset(_))
    ));
}

#[test]
fn failing_audit_refuses_without_force() {
    let mut spec = preset("catenoid_full").unwrap();
    spec.prediction = Prediction::MicrolocalHInv;
    spec.audit.push("synthetic", false, "forced failure".into());
    spec.h_list = vec![0.1];
    assert!(matches!(
        run_sweep(&spec, &Serial, false),
        Err(crate::Error::HypothesisFailed(_))
    ));
    let r = run_sweep(&spec, &Serial, true).unwrap();
    assert!(r.forced);
    assert_eq!(r.rows.len(), 1);
    assert!(r.fit.is_none());
}

#[test]
fn h_list_must_decrease() {
    let mut spec = preset("nontrapping").unwrap();
    spec.h_list = vec![0.02, 0.04];
    assert!(spec.validate().is_err());
}
