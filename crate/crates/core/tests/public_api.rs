use resolab_core::dynamics::{flow, shell_point, FlowOptions, PhasePoint};
use resolab_core::exec::Serial;
use resolab_core::geometry::{make_profile, Potential, ProfileKind};
use resolab_core::lab::{preset, run_row, run_sweep, PRESETS};

#[test]
fn every_preset_builds_and_validates() {
    for (name, _) in PRESETS {
        let spec = preset(name).unwrap();
        spec.validate().unwrap();
        assert!(spec.audit.passed(), "{name}: {:?}", spec.audit.checks);
    }
    assert!(preset("nope").is_err());
}

#[test]
fn flow_returns_to_its_start_under_time_reversal() {
    let profile = make_profile(ProfileKind::Catenoid, &[], 6.0).unwrap();
    let start = shell_point(&profile, &Potential::Zero, 0.3, 0.7, 1.0, true).unwrap();
    let opts = FlowOptions::default();
    let fwd = flow(&profile, &Potential::Zero, start, 2.0, &opts).unwrap();
    let end = fwd.last();
    let back = flow(
        &profile,
        &Potential::Zero,
        PhasePoint::new(end.s, end.sigma, start.mu),
        -2.0,
        &opts,
    )
    .unwrap();
    let home = back.last();
    assert!(
        (home.s - start.s).abs() < 1e-8 && (home.sigma - start.sigma).abs() < 1e-8,
        "{home:?} vs {start:?}"
    );
    assert!(fwd.energy_drift < 1e-10);
}

#[test]
fn nontrapping_row_scales_like_inverse_h() {
    let spec = preset("nontrapping").unwrap();
    let (a, _) = run_row(&spec, 1.0 / 25.0, spec.points_per_h, &Serial).unwrap();
    let (b, _) = run_row(&spec, 1.0 / 50.0, spec.points_per_h, &Serial).unwrap();
    assert!(a.ok() && b.ok());
    let ratio = b.norm / a.norm;
    assert!((1.6..2.4).contains(&ratio), "ratio {ratio}");
}

#[test]
fn sweeps_repeat_bit_for_bit() {
    let mut spec = preset("catenoid_full").unwrap();
    spec.h_list = vec![0.04, 0.035, 0.03, 0.025];
    let a = run_sweep(&spec, &Serial, false).unwrap();
    let b = run_sweep(&spec, &Serial, false).unwrap();
    assert_eq!(a, b);
    assert!(a.converged(), "{:?}", a.rows);
    assert!(a.fit.is_some(), "{:?}", a.fit_error);
}
