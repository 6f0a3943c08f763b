use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{ExperimentSpec, LambdaRule, Prediction};
use crate::dynamics::{
    classify_orbits, classify_point, shell_point, ClassifyOptions, ClosedOrbit, OrbitSearch,
    PointLabel, Stability,
};
use crate::geometry::{make_profile, Potential, Profile, ProfileKind};
use crate::quantize::{BarrierSpec, CutoffSpec, Factor};
use crate::smooth::Window;
use crate::{Error, Result};

/// Built-in experiments with a one-line description each.
pub const PRESETS: [(&str, &str); 7] = [
    (
        "nontrapping",
        "monotone warp, compact spatial cutoffs; nontrapping C/h baseline",
    ),
    (
        "catenoid_full",
        "catenoid, spatial cutoffs over the neck; log(1/h)/h loss",
    ),
    (
        "catenoid_thm1",
        "catenoid, microlocal cutoffs avoiding the bad flowout; C/h",
    ),
    (
        "catenoid_annulus",
        "catenoid, cutoffs on an annulus far from the neck; C/h",
    ),
    (
        "prop53",
        "double well with phase-space barrier, cutoff avoiding the hyperbolic latitudes; C/h",
    ),
    (
        "lemma52_full",
        "double well with barrier, cutoff over both hyperbolic latitudes; log^2(1/h)/h",
    ),
    (
        "elliptic",
        "double well without barrier, cutoff over the elliptic latitude; blowup",
    ),
];

#[derive(Debug, Clone, PartialEq)]
pub struct AuditCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Dynamics-level checks of the support conditions a prediction relies on.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HypothesisAudit {
    pub checks: Vec<AuditCheck>,
}

impl HypothesisAudit {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(AuditCheck {
            name: name.into(),
            passed,
            detail,
        });
    }

    pub fn failures(&self) -> Vec<&AuditCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

fn radial(inner: f64, outer: f64) -> Factor {
    Factor::Window(Window::radial(inner, outer))
}

fn orbits(profile: &Profile, potential: &Potential, energy: f64) -> Vec<ClosedOrbit> {
    classify_orbits(profile, potential, energy, &OrbitSearch::default())
}

fn in_support(f: &Factor, x: f64) -> bool {
    f.eval(x) != 0.0
}

fn spatial_factor(spec: &CutoffSpec) -> Option<&Factor> {
    match &spec.symbol {
        crate::quantize::Symbol::Separable { s, .. } => Some(s),
        _ => None,
    }
}

/// Plateau of a spatial factor, sampled: the factor equals 1 at `s`.
fn on_plateau(f: &Factor, s: f64) -> bool {
    (f.eval(s) - 1.0).abs() < 1e-12
}

fn describe(os: &[ClosedOrbit]) -> String {
    os.iter()
        .map(|o| o.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn nontrapping() -> Result<ExperimentSpec> {
    let profile = make_profile(ProfileKind::NontrappingMonotone, &[], 8.0)?;
    let chi = CutoffSpec::spatial(radial(3.0, 4.0));
    let mut spec = ExperimentSpec::new(
        "nontrapping",
        profile,
        chi.clone(),
        chi,
        Prediction::NontrappingHInv,
    );
    let os = orbits(&spec.profile, &spec.potential, spec.energy);
    spec.audit.push(
        "no closed orbits",
        os.is_empty(),
        format!("found [{}]", describe(&os)),
    );
    Ok(spec)
}

fn catenoid() -> Result<Profile> {
    make_profile(ProfileKind::Catenoid, &[], 6.0)
}

fn neck_audit(spec: &mut ExperimentSpec, covered: bool) {
    let os = orbits(&spec.profile, &spec.potential, spec.energy);
    let necks: Vec<&ClosedOrbit> = os.iter().filter(|o| o.s_star.abs() < 1e-6).collect();
    let hyperbolic = necks.len() == 2 && necks.iter().all(|o| o.stability == Stability::Hyperbolic);
    spec.audit.push(
        "two hyperbolic neck orbits",
        hyperbolic,
        format!("found [{}]", describe(&os)),
    );
    let fa = spatial_factor(&spec.cutoff_a);
    let fb = spatial_factor(&spec.cutoff_b);
    let inside = matches!((fa, fb), (Some(a), Some(b)) if on_plateau(a, 0.0) && on_plateau(b, 0.0));
    if covered {
        spec.audit.push(
            "cutoffs cover the neck",
            inside,
            "both spatial factors equal 1 at s = 0".into(),
        );
    }
}

fn catenoid_full() -> Result<ExperimentSpec> {
    let chi = CutoffSpec::spatial(radial(1.0, 1.5));
    let mut spec = ExperimentSpec::new(
        "catenoid_full",
        catenoid()?,
        chi.clone(),
        chi,
        Prediction::LogLoss,
    );
    neck_audit(&mut spec, true);
    Ok(spec)
}

/// Closed orbits met by the backward flow from the support of `A`, sampled
/// at the orbit's own angular momentum.
fn met_orbits(
    spec: &ExperimentSpec,
    os: &[ClosedOrbit],
    samples: usize,
) -> Result<Vec<ClosedOrbit>> {
    let a_s = spatial_factor(&spec.cutoff_a)
        .ok_or_else(|| Error::UnsupportedSymbol("audit needs a separable A".into()))?;
    let (lo, hi) = a_s
        .support()
        .unwrap_or((-spec.profile.half_width, spec.profile.half_width));
    let opts = ClassifyOptions {
        energy: spec.energy,
        ..Default::default()
    };
    let mut met = Vec::new();
    for o in os {
        let mu_lo = o.mu - 1e-9;
        let mu_hi = o.mu + 1e-9;
        if !(in_support(&spec.cutoff_a.mode, mu_lo)
            || in_support(&spec.cutoff_a.mode, mu_hi)
            || in_support(&spec.cutoff_a.mode, o.mu))
        {
            continue;
        }
        'scan: for i in 0..samples {
            let s = lo + (hi - lo) * (i as f64 + 0.5) / samples as f64;
            if a_s.eval(s) == 0.0 {
                continue;
            }
            for forward in [true, false] {
                let Some(p) = shell_point(
                    &spec.profile,
                    &spec.potential,
                    s,
                    o.mu,
                    spec.energy,
                    forward,
                ) else {
                    continue;
                };
                let class = classify_point(&spec.profile, &spec.potential, p, None, &opts)?;
                if let PointLabel::ForwardFlowout(q) = class.label {
                    if q.same_as(o)
                        || (q.s_star - o.s_star).abs() < 1e-6 && (q.mu - o.mu).abs() < 1e-6
                    {
                        met.push(*o);
                        break 'scan;
                    }
                }
            }
        }
    }
    Ok(met)
}

fn catenoid_thm1() -> Result<ExperimentSpec> {
    let a = CutoffSpec::new(
        crate::quantize::Symbol::spatial(Factor::Window(Window::psi(1.0, 2.0, 0.25))),
        Factor::Window(Window::psi(-1.4, 0.1, 0.2)),
    );
    let b = CutoffSpec::new(
        crate::quantize::Symbol::spatial(radial(1.0, 1.5)),
        Factor::Window(Window::psi(-0.1, 1.4, 0.2)),
    );
    let mut spec = ExperimentSpec::new(
        "catenoid_thm1",
        catenoid()?,
        a,
        b,
        Prediction::MicrolocalHInv,
    );
    neck_audit(&mut spec, false);
    let os = orbits(&spec.profile, &spec.potential, spec.energy);
    let a_s = spatial_factor(&spec.cutoff_a).cloned();
    let off = os.iter().all(|o| {
        !(a_s.as_ref().is_some_and(|f| in_support(f, o.s_star))
            && in_support(&spec.cutoff_a.mode, o.mu))
    });
    spec.audit.push(
        "supp a avoids the trapped set",
        off,
        "no orbit lies in the support of A".into(),
    );
    let met = met_orbits(&spec, &os, 24)?;
    spec.audit.push(
        "backward flowout from supp a meets an orbit",
        !met.is_empty(),
        format!("met [{}]", describe(&met)),
    );
    let clear = met
        .iter()
        .all(|o| (0..=40).all(|k| spec.cutoff_b.mode.eval(o.mu - 0.1 + 0.005 * k as f64) == 0.0));
    spec.audit.push(
        "b vanishes near every met orbit",
        clear,
        "mode factor of B is 0 within 0.1 of each met orbit".into(),
    );
    Ok(spec)
}

fn catenoid_annulus() -> Result<ExperimentSpec> {
    let profile = make_profile(ProfileKind::Catenoid, &[], 10.0)?;
    let chi = CutoffSpec::spatial(Factor::Window(Window {
        even: true,
        ..Window::psi(3.0, 4.0, 0.3)
    }));
    let mut spec = ExperimentSpec::new(
        "catenoid_annulus",
        profile,
        chi.clone(),
        chi,
        Prediction::NontrappingHInv,
    );
    let os = orbits(&spec.profile, &spec.potential, spec.energy);
    let f = spatial_factor(&spec.cutoff_a).cloned();
    let off = os
        .iter()
        .all(|o| !f.as_ref().is_some_and(|f| in_support(f, o.s_star)));
    spec.audit.push(
        "cutoffs avoid every closed orbit",
        off,
        format!("orbits [{}]", describe(&os)),
    );
    Ok(spec)
}

fn double_well() -> Result<Profile> {
    make_profile(ProfileKind::DoubleWell, &[], 6.0)
}

fn barrier_spec(profile: &Profile) -> BarrierSpec {
    BarrierSpec::for_double_well(profile.params[0])
}

fn census(spec: &mut ExperimentSpec) -> Vec<ClosedOrbit> {
    let os = orbits(&spec.profile, &spec.potential, spec.energy);
    let s0 = spec.profile.params[0];
    let hyp = os
        .iter()
        .filter(|o| o.stability == Stability::Hyperbolic && (o.s_star.abs() - s0).abs() < 1e-6)
        .count();
    let ell = os
        .iter()
        .filter(|o| o.stability == Stability::Elliptic && o.s_star.abs() < 1e-6)
        .count();
    spec.audit.push(
        "six latitude orbits",
        os.len() == 6 && hyp == 4 && ell == 2,
        format!("found [{}]", describe(&os)),
    );
    os
}

fn barrier_audit(spec: &mut ExperimentSpec) {
    let b = spec.barrier.expect("barrier preset");
    let r = b.audit(&spec.profile, &spec.potential, spec.energy);
    spec.audit.push(
        "barrier covers the incoming elliptic directions",
        r.covers_incoming,
        format!(
            "min w on {{s = 0, σ ≤ 0}} shell samples = {:.3e}",
            r.min_incoming
        ),
    );
    spec.audit.push(
        "barrier support inside |s| < s0/2",
        r.support_inside,
        format!("support radius {:.3}", r.support_radius),
    );
    spec.audit.push(
        "barrier clear of the heteroclinic corridor",
        r.corridor_clear,
        format!(
            "max w = {:.3e} over {} samples",
            r.max_corridor, r.corridor_samples
        ),
    );
}

fn prop53() -> Result<ExperimentSpec> {
    let profile = double_well()?;
    let chi = CutoffSpec::spatial(radial(1.0, 1.5));
    let mut spec = ExperimentSpec::new(
        "prop53",
        profile,
        chi.clone(),
        chi,
        Prediction::MicrolocalHInv,
    );
    spec.barrier = Some(barrier_spec(&spec.profile));
    let os = census(&mut spec);
    barrier_audit(&mut spec);
    let f = spatial_factor(&spec.cutoff_a)
        .cloned()
        .expect("spatial cutoff");
    let avoid = os
        .iter()
        .filter(|o| o.stability == Stability::Hyperbolic)
        .all(|o| !in_support(&f, o.s_star));
    spec.audit.push(
        "cutoff avoids |s| = s0",
        avoid,
        format!("support {:?}", f.support()),
    );
    Ok(spec)
}

fn lemma52_full() -> Result<ExperimentSpec> {
    let profile = double_well()?;
    let chi = CutoffSpec::spatial(radial(2.8, 3.3));
    let mut spec = ExperimentSpec::new(
        "lemma52_full",
        profile,
        chi.clone(),
        chi,
        Prediction::Log2Loss,
    );
    spec.barrier = Some(barrier_spec(&spec.profile));
    let os = census(&mut spec);
    barrier_audit(&mut spec);
    let f = spatial_factor(&spec.cutoff_a)
        .cloned()
        .expect("spatial cutoff");
    let cover = os
        .iter()
        .filter(|o| o.stability == Stability::Hyperbolic)
        .all(|o| on_plateau(&f, o.s_star));
    spec.audit.push(
        "cutoff covers both hyperbolic latitudes",
        cover,
        format!("support {:?}", f.support()),
    );
    Ok(spec)
}

fn elliptic() -> Result<ExperimentSpec> {
    let profile = double_well()?;
    let chi = CutoffSpec::spatial(radial(0.5, 0.75));
    let mut spec = ExperimentSpec::new(
        "elliptic",
        profile,
        chi.clone(),
        chi,
        Prediction::EllipticBlowup,
    );
    spec.lambda = LambdaRule::NearestQuasimode { window: 1.0 };
    let os = census(&mut spec);
    let f = spatial_factor(&spec.cutoff_a)
        .cloned()
        .expect("spatial cutoff");
    let inside = os
        .iter()
        .any(|o| o.stability == Stability::Elliptic && on_plateau(&f, o.s_star));
    spec.audit.push(
        "elliptic orbit inside the cutoff",
        inside,
        "cutoff equals 1 at s = 0".into(),
    );
    Ok(spec)
}

/// Builds a preset with its hypothesis audit filled in.
pub fn preset(name: &str) -> Result<ExperimentSpec> {
    match name {
        "nontrapping" => nontrapping(),
        "catenoid_full" => catenoid_full(),
        "catenoid_thm1" => catenoid_thm1(),
        "catenoid_annulus" => catenoid_annulus(),
        "prop53" => prop53(),
        "lemma52_full" => lemma52_full(),
        "elliptic" => elliptic(),
        _ => Err(Error::UnknownPreset(name.into())),
    }
}
