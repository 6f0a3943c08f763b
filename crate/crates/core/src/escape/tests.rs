use alloc::vec::Vec;

use super::*;
use crate::dynamics::{classify_orbits, OrbitSearch};
use crate::geometry::{make_profile, ProfileKind};

fn catenoid() -> (Profile, Potential) {
    (
        make_profile(ProfileKind::Catenoid, &[], 8.0).unwrap(),
        Potential::Zero,
    )
}

fn neck(profile: &Profile, pot: &Potential, mu: f64) -> ClosedOrbit {
    classify_orbits(profile, pot, 1.0, &OrbitSearch::default())
        .into_iter()
        .find(|o| (o.mu - mu).abs() < 1e-9)
        .unwrap()
}

fn built(mu: f64) -> EscapeFunction {
    let (p, v) = catenoid();
    let orbit = neck(&p, &v, mu);
    build_escape_function(
        &p,
        &v,
        &orbit,
        EscapeRegions::standard(orbit.s_star),
        &EscapeOptions::default(),
    )
    .unwrap()
}

#[test]
fn outer_profile_matches_closed_form() {
    assert_eq!(outer_f(-1.4), 0.0);
    assert!((outer_f(-0.6) - 0.4).abs() < 1e-12);
    for i in 0..40 {
        let t = -1.4 + 0.02 * i as f64;
        let d = (outer_f(t + 1e-4) - outer_f(t - 1e-4)) / 2e-4;
        assert!((d - outer_f_d(t)).abs() < 1e-6, "t = {t}");
    }
}

#[test]
fn catenoid_neck_escape_function_verifies() {
    let ef = built(1.0);
    assert!(ef.n_seeds() >= 1);
    let report = verify_escape_function(&ef, 1000, 11);
    assert!(report.passed(), "{:#?}", report.clauses);
    assert!(report.c_min > 0.0);
    let dec = commutator_decomposition(&ef, &Partition::standard(&ef), 61).unwrap();
    assert!(dec.residual <= 1e-10, "{}", dec.residual);
    assert!(dec.b.iter().any(|&b| b > 0.0));
}

#[test]
fn negative_momentum_is_independent() {
    let ef = built(-1.0);
    let report = verify_escape_function(&ef, 1000, 12);
    assert!(report.passed(), "{:#?}", report.clauses);
    let plus = built(1.0);
    assert_eq!(plus.n_seeds(), ef.n_seeds());
    assert_eq!(ef.q(ef.orbit.s_star, 0.0), 1.0);
}

#[test]
fn gamma_outside_u1_is_rejected() {
    let (p, v) = catenoid();
    let orbit = neck(&p, &v, 1.0);
    let regions = EscapeRegions::standard(orbit.s_star + 0.5);
    let err =
        build_escape_function(&p, &v, &orbit, regions, &EscapeOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)), "{err}");
}

#[test]
fn constant_one_fails_only_negativity_and_support() {
    let (p, v) = catenoid();
    let orbit = neck(&p, &v, 1.0);
    let ef = EscapeFunction::constant(1.0, &p, &v, orbit, EscapeRegions::standard(orbit.s_star));
    let report = verify_escape_function(&ef, 1000, 3);
    let failed = report.failed();
    assert!(failed.contains(&"H_p q < 0 on the annulus"), "{failed:?}");
    let allowed = [
        "H_p q < 0 on the annulus",
        "strict decrease on the annulus",
        "q = 0 outside U",
    ];
    assert!(failed.iter().all(|f| allowed.contains(f)), "{failed:?}");
}

#[test]
fn deep_tube_floor_breaks_the_floor_clause() {
    let (p, v) = catenoid();
    let orbit = neck(&p, &v, 1.0);
    let opts = EscapeOptions {
        floor_override: Some(1.0),
        ..Default::default()
    };
    let ef = build_escape_function(&p, &v, &orbit, EscapeRegions::standard(orbit.s_star), &opts)
        .unwrap();
    let report = verify_escape_function(&ef, 1000, 4);
    assert!(!report.clause("q̃ >= -1/2 on the annulus").unwrap().passed);
}

#[test]
fn zero_function_has_zero_decomposition() {
    let (p, v) = catenoid();
    let orbit = neck(&p, &v, 1.0);
    let ef = EscapeFunction::constant(0.0, &p, &v, orbit, EscapeRegions::standard(orbit.s_star));
    let dec = commutator_decomposition(&ef, &Partition::standard(&ef), 21).unwrap();
    assert!(dec.b.iter().chain(&dec.e).all(|&x| x == 0.0));
    assert_eq!(dec.residual, 0.0);
}

#[test]
fn u_plus_over_gamma_plus_is_rejected() {
    let ef = built(1.0);
    let u = ef.regions.u;
    let bad = Partition::new(
        move |s, p, _| u.gauge(s, p) - 0.9,
        move |s, p, _| u.gauge(s, p) - 1.05,
    );
    let err = commutator_decomposition(&ef, &bad, 21).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)), "{err}");
}

#[test]
fn rebuild_inside_plateau_and_around_support() {
    let ef = built(1.0);
    let s = ef.orbit.s_star;
    let regions = EscapeRegions::boxes(s, 0.008, [0.03, 0.04, 1.05, 1.15, 1.4]);
    // U1' sits inside {q = 1} and U0' contains supp q.
    let lin: Vec<f64> = (0..=20).map(|i| -0.04 + 0.004 * i as f64).collect();
    for &a in &lin {
        for &b in &lin {
            assert_eq!(ef.q(s + a, b), 1.0);
        }
    }
    for (k, &q) in ef.grid.q.iter().enumerate() {
        let (a, b) = (
            ef.grid.s[k / ef.grid.sigma.len()],
            ef.grid.sigma[k % ef.grid.sigma.len()],
        );
        if q != 0.0 {
            assert!(regions.u0.gauge(a, b) < 1.0);
        }
    }
    let again = build_escape_function(
        &ef.profile,
        &ef.potential,
        &ef.orbit,
        regions,
        &EscapeOptions::default(),
    )
    .unwrap();
    let report = verify_escape_function(&again, 1000, 5);
    assert!(report.passed(), "{:#?}", report.clauses);
}
