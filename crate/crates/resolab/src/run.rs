use std::fmt;
use std::path::PathBuf;

use resolab_core::dynamics::{
    classify_orbits, classify_point, flow, shell_point, ClassifyOptions, ClosedOrbit, ExitReason,
    FlowOptions, OrbitSearch, PhasePoint, PointLabel, Stability,
};
use resolab_core::escape::{
    build_escape_function, commutator_decomposition, verify_escape_function, EscapeOptions,
    EscapeRegions, Partition,
};
use resolab_core::exec::Executor;
use resolab_core::gluing::{verify_gluing, GluingSpec};
use resolab_core::lab::{
    convergence_audit, run_row, run_sweep, AuditCheck, ExperimentSpec, PRESETS,
};
use resolab_core::Error;
use serde_json::{json, Value};

use crate::checks::{gluing_checks, prediction_checks, wants_convergence_audit, CONVERGENCE_TOL};
use crate::cli::{Cli, Command};
use crate::config::{Config, ConfigError};
use crate::exec::Rayon;
use crate::output::{jnum, num, Header, Table, Writer};

/// Gluing runs on this preset unless the config names an experiment.
pub const DEFAULT_GLUE_PRESET: &str = "lemma52_full";

/// Largest commutator-decomposition residual accepted by `escape`.
pub const DECOMPOSITION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    /// Exit code 2.
    Config(String),
    /// Exit code 1.
    Run(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Run(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(format!("cannot write results: {e}"))
    }
}

fn run_err(e: Error) -> Failure {
    Failure::Run(e.to_string())
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub passed: bool,
    pub lines: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

/// Runs the command and maps the result to an exit code: 0 when everything
/// passed, 1 on a failed row or verification, 2 on config errors.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(out) => {
            for l in &out.lines {
                println!("{l}");
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            out.exit_code()
        }
        Err(e) => {
            eprintln!("resolab: {e}");
            match e {
                Failure::Config(_) => 2,
                Failure::Run(_) => 1,
            }
        }
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
    cfg: Config,
    exec: Rayon,
}

impl Ctx<'_> {
    fn log(&self, level: u8, msg: impl FnOnce() -> String) {
        if self.cli.verbose >= level {
            eprintln!("[resolab] {}", msg());
        }
    }

    fn writer(&self, anchor: &str) -> Result<Writer, Failure> {
        let header = Header::new(
            self.cli.command.name(),
            self.cfg.hash(),
            self.cfg.seed(),
            anchor,
        );
        Writer::open(&self.cli.out, header).map_err(|e| {
            Failure::Config(format!(
                "output directory {} is not writable: {e}",
                self.cli.out.display()
            ))
        })
    }

    /// Refuses experiments whose hypothesis audit fails, unless forced.
    fn gate(&self, spec: &ExperimentSpec) -> Result<(), Failure> {
        if spec.audit.passed() || self.cli.force {
            return Ok(());
        }
        let names: Vec<&str> = spec
            .audit
            .failures()
            .iter()
            .map(|c| c.name.as_str())
            .collect();
        Err(Failure::Run(format!(
            "hypothesis audit of {} failed ({}); pass --force to run anyway",
            spec.name,
            names.join("; ")
        )))
    }
}

/// Everything [`run`] does apart from printing.
pub fn execute(cli: &Cli) -> Result<Outcome, Failure> {
    let mut cfg = cli.effective_config()?;
    if matches!(cli.command, Command::PresetList) {
        return Ok(preset_list());
    }
    if matches!(cli.command, Command::Glue)
        && cfg.preset.is_none()
        && cfg.experiment.is_none()
        && cfg.profile.is_none()
    {
        cfg.preset = Some(DEFAULT_GLUE_PRESET.into());
    }
    let exec =
        Rayon::new(cli.threads).map_err(|e| Failure::Config(format!("invalid `threads`: {e}")))?;
    let ctx = Ctx { cli, cfg, exec };
    ctx.log(1, || {
        format!("{} with config {}", cli.command.name(), ctx.cfg.hash())
    });
    match cli.command {
        Command::Flow => flow_cmd(&ctx),
        Command::Classify => classify_cmd(&ctx),
        Command::Escape { .. } => escape_cmd(&ctx),
        Command::Resolve { .. } => resolve_cmd(&ctx),
        Command::Sweep => sweep_cmd(&ctx),
        Command::Glue => glue_cmd(&ctx),
        Command::PresetList => unreachable!(),
    }
}

fn preset_list() -> Outcome {
    let lines = PRESETS
        .iter()
        .map(|(name, about)| format!("{name}\t{about}"))
        .collect();
    Outcome {
        passed: true,
        lines,
        files: Vec::new(),
    }
}

fn stability(s: Stability) -> &'static str {
    match s {
        Stability::Hyperbolic => "hyperbolic",
        Stability::Elliptic => "elliptic",
        Stability::Degenerate => "degenerate",
    }
}

fn orbit_json(o: &ClosedOrbit) -> Value {
    json!({
        "s_star": o.s_star,
        "mu": o.mu,
        "stability": stability(o.stability),
        "energy": o.energy,
        "continuum": o.continuum.map(|(a, b)| json!([a, b])),
    })
}

fn checks_json(cs: &[AuditCheck]) -> Value {
    Value::Array(
        cs.iter()
            .map(|c| json!({"name": c.name, "passed": c.passed, "detail": c.detail}))
            .collect(),
    )
}

fn yes(b: bool) -> String {
    if b { "yes" } else { "no" }.into()
}

fn flow_cmd(ctx: &Ctx) -> Result<Outcome, Failure> {
    let profile = ctx.cfg.profile()?;
    let potential = ctx.cfg.potential(&profile)?;
    let f = ctx
        .cfg
        .flow
        .clone()
        .ok_or_else(|| ConfigError::Missing("flow".into()))?;
    let sigma = match f.sigma {
        Some(s) => s,
        None => {
            shell_point(&profile, &potential, f.s, f.mu, f.energy, true)
                .ok_or_else(|| {
                    ConfigError::invalid(
                        "flow.s",
                        format!("no shell point at energy {} over s = {}", f.energy, f.s),
                    )
                })?
                .sigma
        }
    };
    let mut opts = FlowOptions {
        record_every: f.record_every.unwrap_or(10).max(1),
        ..Default::default()
    };
    if let Some(dt) = f.dt {
        opts.dt = dt;
    }
    let start = PhasePoint::new(f.s, sigma, f.mu);
    let traj = flow(&profile, &potential, start, f.t_final, &opts).map_err(run_err)?;
    let mut table = Table::new(&["t", "s", "sigma", "energy"]);
    for x in &traj.samples {
        let e = PhasePoint::new(x.s, x.sigma, f.mu).energy(&profile, &potential);
        table.push(vec![num(x.t), num(x.s), num(x.sigma), num(e)]);
    }
    let exit = match traj.exit_reason {
        ExitReason::Horizon => "horizon",
        ExitReason::LeftDomain => "left_domain",
        ExitReason::EnteredAbsorberRegion => "entered_absorber",
    };
    table
        .footer
        .push(format!("energy_drift {}", num(traj.energy_drift)));
    table.footer.push(format!("exit {exit}"));
    let mut w = ctx.writer("reduced geodesic flow on the energy shell")?;
    w.table("flow.tsv", &table)?;
    let last = traj.last();
    w.json(
        "flow.json",
        json!({
            "profile": profile.kind.name(),
            "start": {"s": f.s, "sigma": sigma, "mu": f.mu},
            "t_final": f.t_final,
            "dt": opts.dt,
            "samples": traj.samples.len(),
            "energy_drift": jnum(traj.energy_drift),
            "exit": exit,
            "end": {"t": last.t, "s": last.s, "sigma": last.sigma},
        }),
    )?;
    let lines = vec![format!(
        "flow: {} samples, energy drift {:.3e}, exit {exit}",
        traj.samples.len(),
        traj.energy_drift
    )];
    Ok(Outcome {
        passed: true,
        lines,
        files: w.written,
    })
}

fn label(l: &PointLabel) -> (&'static str, Option<&ClosedOrbit>) {
    match l {
        PointLabel::EllipticOffShell => ("off_shell", None),
        PointLabel::BackwardNontrapped => ("backward_nontrapped", None),
        PointLabel::ForwardFlowout(o) => ("flowout", Some(o)),
        PointLabel::Trapped(o) => ("trapped", o.as_ref()),
        PointLabel::UndeterminedAtHorizon => ("undetermined", None),
    }
}

fn classify_cmd(ctx: &Ctx) -> Result<Outcome, Failure> {
    let profile = ctx.cfg.profile()?;
    let potential = ctx.cfg.potential(&profile)?;
    let c = ctx
        .cfg
        .classify
        .clone()
        .unwrap_or_default();
    let orbits = classify_orbits(&profile, &potential, c.energy, &OrbitSearch::default());
    let mut ot = Table::new(&["s_star", "mu", "stability", "energy"]);
    for o in &orbits {
        ot.push(vec![
            num(o.s_star),
            num(o.mu),
            stability(o.stability).into(),
            num(o.energy),
        ]);
    }
    let mut opts = ClassifyOptions {
        energy: c.energy,
        ..Default::default()
    };
    if let Some(t) = c.horizon {
        opts.horizon = t;
    }
    let points: Vec<PhasePoint> = c
        .points
        .iter()
        .map(|p| {
            let raw = PhasePoint::new(p[0], p[1], p[2]);
            if c.on_shell {
                shell_point(&profile, &potential, p[0], p[2], c.energy, p[1] >= 0.0).unwrap_or(raw)
            } else {
                raw
            }
        })
        .collect();
    let classes = ctx.exec.map(points.clone(), |p| {
        classify_point(&profile, &potential, p, None, &opts)
    });
    let mut pt = Table::new(&["s", "sigma", "mu", "label", "orbit_s", "orbit_mu", "note"]);
    let mut pj = Vec::new();
    for (p, class) in points.iter().zip(classes) {
        let class = class.map_err(|e| ConfigError::invalid("classify.points", e))?;
        let (name, orbit) = label(&class.label);
        let note = class.note.unwrap_or("");
        pt.push(vec![
            num(p.s),
            num(p.sigma),
            num(p.mu),
            name.into(),
            orbit.map_or("-".into(), |o| num(o.s_star)),
            orbit.map_or("-".into(), |o| num(o.mu)),
            if note.is_empty() {
                "-".into()
            } else {
                note.into()
            },
        ]);
        pj.push(json!({"point": [p.s, p.sigma, p.mu], "label": name, "orbit": orbit.map(orbit_json), "note": class.note}));
    }
    let mut w = ctx.writer("closed orbits and trapped-set labels of the reduced flow")?;
    w.table("orbits.tsv", &ot)?;
    if !points.is_empty() {
        w.table("points.tsv", &pt)?;
    }
    w.json(
        "classify.json",
        json!({
            "profile": profile.kind.name(),
            "energy": c.energy,
            "orbits": orbits.iter().map(orbit_json).collect::<Vec<_>>(),
            "points": pj,
        }),
    )?;
    let census: Vec<String> = orbits.iter().map(|o| o.to_string()).collect();
    let lines = vec![
        format!("classify: {} closed orbits", orbits.len()),
        census.join("\n"),
    ];
    Ok(Outcome {
        passed: true,
        lines,
        files: w.written,
    })
}

fn escape_cmd(ctx: &Ctx) -> Result<Outcome, Failure> {
    let profile = ctx.cfg.profile()?;
    let potential = ctx.cfg.potential(&profile)?;
    let e = ctx.cfg.escape.clone().unwrap_or_default();
    let target = e.s_star.unwrap_or(0.0);
    let orbit = classify_orbits(&profile, &potential, e.energy, &OrbitSearch::default())
        .into_iter()
        .filter(|o| o.stability == Stability::Hyperbolic && (o.mu - e.mu).abs() < 1e-6)
        .min_by(|a, b| {
            (a.s_star - target)
                .abs()
                .total_cmp(&(b.s_star - target).abs())
        })
        .ok_or_else(|| {
            ConfigError::invalid(
                "escape.mu",
                format!(
                    "no hyperbolic orbit with mu = {} at energy {}",
                    e.mu, e.energy
                ),
            )
        })?;
    let regions = match (e.gamma, e.boxes) {
        (None, None) => EscapeRegions::standard(orbit.s_star),
        (g, b) => EscapeRegions::boxes(
            orbit.s_star,
            g.unwrap_or(0.03),
            b.unwrap_or([0.15, 0.25, 0.6, 0.7, 1.0]),
        ),
    };
    ctx.log(1, || format!("building the escape function around {orbit}"));
    let ef = build_escape_function(
        &profile,
        &potential,
        &orbit,
        regions,
        &EscapeOptions::default(),
    )
    .map_err(run_err)?;
    let report = verify_escape_function(&ef, e.samples, ctx.cfg.seed());
    let dec = commutator_decomposition(&ef, &Partition::standard(&ef), e.decomposition_grid)
        .map_err(run_err)?;

    let mut grid = Table::new(&["s", "sigma", "q", "hpq"]);
    let ns = ef.grid.sigma.len();
    for (k, (&q, &d)) in ef.grid.q.iter().zip(&ef.grid.hpq).enumerate() {
        grid.push(vec![
            num(ef.grid.s[k / ns]),
            num(ef.grid.sigma[k % ns]),
            num(q),
            num(d),
        ]);
    }
    let mut clauses = Table::new(&["clause", "passed", "value", "bound", "note"]);
    for c in &report.clauses {
        clauses.push(vec![
            c.name.into(),
            yes(c.passed),
            num(c.value),
            num(c.bound),
            if c.note.is_empty() {
                "-".into()
            } else {
                c.note.clone()
            },
        ]);
    }
    let dec_ok = dec.residual <= DECOMPOSITION_TOL;
    clauses.push(vec![
        "commutator decomposition".into(),
        yes(dec_ok),
        num(dec.residual),
        num(DECOMPOSITION_TOL),
        "sup |H_p(q^2) + b^2 - e|".into(),
    ]);
    let mut split = Table::new(&["s", "sigma", "hpq2", "b", "e"]);
    let nd = dec.sigma.len();
    for k in 0..dec.b.len() {
        split.push(vec![
            num(dec.s[k / nd]),
            num(dec.sigma[k % nd]),
            num(dec.hpq2[k]),
            num(dec.b[k]),
            num(dec.e[k]),
        ]);
    }

    let mut w = ctx.writer("escape function around a hyperbolic orbit")?;
    w.table("escape_grid.tsv", &grid)?;
    w.table("escape_report.tsv", &clauses)?;
    w.table("escape_decomposition.tsv", &split)?;
    w.json(
        "escape.json",
        json!({
            "profile": profile.kind.name(),
            "orbit": orbit_json(&orbit),
            "seeds": report.n_seeds,
            "tube_samples": report.tube_samples,
            "annulus_samples": report.annulus_samples,
            "c_min": jnum(report.c_min),
            "clauses": report.clauses.iter().map(|c| json!({
                "name": c.name, "passed": c.passed, "value": jnum(c.value), "bound": jnum(c.bound), "note": c.note,
            })).collect::<Vec<_>>(),
            "decomposition_residual": jnum(dec.residual),
            "passed": report.passed() && dec_ok,
        }),
    )?;
    let mut lines: Vec<String> = report
        .clauses
        .iter()
        .map(|c| format!("{} {}", if c.passed { "pass" } else { "FAIL" }, c.name))
        .collect();
    lines.push(format!(
        "{} commutator decomposition (residual {:.3e})",
        if dec_ok { "pass" } else { "FAIL" },
        dec.residual
    ));
    Ok(Outcome {
        passed: report.passed() && dec_ok,
        lines,
        files: w.written,
    })
}

fn audit_rows(table: &mut Table, kind: &str, checks: &[AuditCheck]) {
    for c in checks {
        table.push(vec![
            kind.into(),
            c.name.clone(),
            yes(c.passed),
            if c.detail.is_empty() {
                "-".into()
            } else {
                c.detail.clone()
            },
        ]);
    }
}

fn resolve_cmd(ctx: &Ctx) -> Result<Outcome, Failure> {
    let spec = ctx.cfg.experiment()?;
    let h = ctx
        .cfg
        .experiment
        .as_ref()
        .and_then(|e| e.h)
        .unwrap_or(spec.h_list[0]);
    if !(h > 0.0 && h < 1.0) {
        return Err(ConfigError::invalid("experiment.h", "need 0 < h < 1").into());
    }
    ctx.gate(&spec)?;
    ctx.log(1, || format!("{} at h = {h}", spec.name));
    let (row, scan) = run_row(&spec, h, spec.points_per_h, &ctx.exec).map_err(run_err)?;
    let mut modes = Table::new(&[
        "m",
        "lambda_re",
        "lambda_im",
        "norm",
        "iterations",
        "converged",
        "solve_residual",
        "sentinel",
        "skipped",
    ]);
    for r in &scan.records {
        modes.push(vec![
            r.m.to_string(),
            num(r.lambda.re),
            num(r.lambda.im),
            num(r.norm),
            r.iterations.to_string(),
            yes(r.converged),
            num(r.solve_residual),
            yes(r.sentinel),
            r.skipped.clone().unwrap_or_else(|| "-".into()),
        ]);
    }
    modes
        .footer
        .push(format!("norm {} at m = {}", num(row.norm), row.m_star));
    let mut w = ctx.writer(&spec.anchor)?;
    w.table("resolve_modes.tsv", &modes)?;
    w.json(
        "resolve.json",
        json!({
            "experiment": spec.name,
            "prediction": spec.prediction.name(),
            "h": h,
            "n": row.n,
            "norm": jnum(row.norm),
            "m_star": row.m_star,
            "modes": row.modes,
            "iterations": row.iterations,
            "residual": jnum(row.residual),
            "converged": row.converged,
            "sentinel_max": jnum(row.sentinel_max),
            "skipped": row.skipped,
            "barrier_rank": row.barrier.map(|b| b.0),
            "hypothesis_audit": checks_json(&spec.audit.checks),
        }),
    )?;
    let lines = vec![format!(
        "{} h = {h}: norm {:.6e} at m = {} ({} modes, converged {})",
        spec.name, row.norm, row.m_star, row.modes, row.converged
    )];
    Ok(Outcome {
        passed: row.ok(),
        lines,
        files: w.written,
    })
}

fn sweep_cmd(ctx: &Ctx) -> Result<Outcome, Failure> {
    let spec = ctx.cfg.experiment()?;
    ctx.gate(&spec)?;
    ctx.log(1, || {
        format!(
            "sweeping {} over {} values of h",
            spec.name,
            spec.h_list.len()
        )
    });
    let result = run_sweep(&spec, &ctx.exec, ctx.cli.force).map_err(run_err)?;
    let tol = ctx
        .cfg
        .experiment
        .as_ref()
        .and_then(|e| e.convergence_tol)
        .unwrap_or(CONVERGENCE_TOL);
    let conv = if wants_convergence_audit(&spec) {
        ctx.log(1, || "grid-refinement audit".into());
        Some(convergence_audit(&spec, &ctx.exec, tol).map_err(run_err)?)
    } else {
        None
    };
    let predicted = prediction_checks(&spec, &result);

    let mut rows = Table::new(&[
        "h",
        "n",
        "norm",
        "m_star",
        "modes",
        "iterations",
        "residual",
        "converged",
        "sentinel_max",
        "skipped",
        "error",
    ]);
    for r in &result.rows {
        rows.push(vec![
            num(r.h),
            r.n.to_string(),
            num(r.norm),
            r.m_star.to_string(),
            r.modes.to_string(),
            r.iterations.to_string(),
            num(r.residual),
            yes(r.converged),
            num(r.sentinel_max),
            r.skipped.to_string(),
            r.error.clone().unwrap_or_else(|| "-".into()),
        ]);
    }
    match &result.fit {
        Some(f) => {
            rows.footer.push(format!(
                "fit alpha {} beta {} c {} residual {}",
                num(f.alpha),
                num(f.beta),
                num(f.c),
                num(f.residual)
            ));
            rows.footer.push(format!(
                "fit pure_alpha {} pure_c {} pure_residual {}",
                num(f.pure_alpha),
                num(f.pure_c),
                num(f.pure_residual)
            ));
            rows.footer
                .push(format!("fit pure_preferred {}", yes(f.pure_preferred)));
        }
        None => rows.footer.push(format!(
            "fit failed: {}",
            result.fit_error.clone().unwrap_or_default()
        )),
    }
    let mut audit = Table::new(&["kind", "check", "passed", "detail"]);
    audit_rows(&mut audit, "hypothesis", &spec.audit.checks);
    if let Some(c) = &conv {
        audit.push(vec![
            "convergence".into(),
            format!(
                "halving ds at h = {} moves the norm by at most {tol}",
                num(c.h)
            ),
            yes(c.passed),
            format!(
                "{} -> {} (relative {})",
                num(c.norm),
                num(c.refined),
                num(c.rel_change)
            ),
        ]);
    }
    audit_rows(&mut audit, "prediction", &predicted);
    let plot: Vec<(f64, f64)> = result
        .rows
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| (1.0 / r.h, r.norm))
        .collect();

    let mut w = ctx.writer(&spec.anchor)?;
    w.table("sweep.tsv", &rows)?;
    w.plot("sweep_plot.tsv", "inv_h", "norm", &plot)?;
    w.table("sweep_audit.tsv", &audit)?;
    w.json(
        "sweep.json",
        json!({
            "experiment": spec.name,
            "prediction": spec.prediction.name(),
            "forced": result.forced,
            "points_per_h": spec.points_per_h,
            "rows": result.rows.iter().map(|r| json!({
                "h": r.h, "n": r.n, "norm": jnum(r.norm), "m_star": r.m_star, "modes": r.modes,
                "iterations": r.iterations, "residual": jnum(r.residual), "converged": r.converged,
                "sentinel_max": jnum(r.sentinel_max), "skipped": r.skipped, "error": r.error,
            })).collect::<Vec<_>>(),
            "fit": result.fit.map(|f| json!({
                "alpha": jnum(f.alpha), "beta": jnum(f.beta), "c": jnum(f.c), "residual": jnum(f.residual),
                "pure_alpha": jnum(f.pure_alpha), "pure_c": jnum(f.pure_c), "pure_residual": jnum(f.pure_residual),
                "pure_preferred": f.pure_preferred,
            })),
            "fit_error": result.fit_error,
            "hypothesis_audit": checks_json(&spec.audit.checks),
            "convergence_audit": conv.map(|c| json!({
                "h": c.h, "norm": jnum(c.norm), "refined": jnum(c.refined), "rel_change": jnum(c.rel_change),
                "tolerance": tol, "passed": c.passed,
            })),
            "prediction_checks": checks_json(&predicted),
        }),
    )?;

    let mut lines = Vec::new();
    for r in &result.rows {
        lines.push(format!(
            "h = {:.5}  norm = {:.6e}  m* = {}{}",
            r.h,
            r.norm,
            r.m_star,
            r.error
                .as_ref()
                .map_or(String::new(), |e| format!("  error: {e}"))
        ));
    }
    if let Some(f) = &result.fit {
        lines.push(format!(
            "fit: alpha = {:.4}, beta = {:.4}; pure alpha = {:.4}",
            f.alpha, f.beta, f.pure_alpha
        ));
    }
    if let Some(c) = &conv {
        lines.push(format!(
            "{} convergence audit (relative change {:.3e})",
            if c.passed { "pass" } else { "FAIL" },
            c.rel_change
        ));
    }
    for c in &predicted {
        lines.push(format!(
            "{} {} ({})",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.detail
        ));
    }
    let passed =
        result.converged() && conv.is_none_or(|c| c.passed) && predicted.iter().all(|c| c.passed);
    Ok(Outcome {
        passed,
        lines,
        files: w.written,
    })
}

fn glue_cmd(ctx: &Ctx) -> Result<Outcome, Failure> {
    let spec = ctx.cfg.experiment()?;
    ctx.gate(&spec)?;
    let mut gs =
        GluingSpec::from_experiment(&spec).map_err(|e| ConfigError::invalid("experiment", e))?;
    if let Some(g) = &ctx.cfg.glue {
        if let Some(mu) = g.mu {
            gs.mu = mu;
        }
        if let Some(p) = g.probes {
            gs.probes = p;
        }
        gs.modes = g.modes.clone();
    }
    ctx.log(1, || {
        format!("gluing {} over {} values of h", spec.name, gs.h_list.len())
    });
    let report = verify_gluing(&gs, &ctx.exec).map_err(|e| match e {
        Error::InvalidParams(m) => Failure::Config(format!("invalid `glue`: {m}")),
        e => run_err(e),
    })?;
    let checks = gluing_checks(&report);

    let cols = [
        "h",
        "m",
        "n",
        "a0",
        "a1",
        "a0a1",
        "a1a0a1a0_chi0",
        "a0a1a0a1",
        "a0_sq",
        "a1_sq",
        "identity",
        "iterated",
        "parametrix",
        "direct",
        "discrepancy",
        "converged",
        "dense_identity",
        "dense_a0a1",
        "error",
    ];
    let mut rows = Table::new(&cols);
    for r in &report.rows {
        rows.push(vec![
            num(r.h),
            r.m.to_string(),
            r.n.to_string(),
            num(r.a0),
            num(r.a1),
            num(r.a0a1),
            num(r.a1a0a1a0_chi),
            num(r.a0a1a0a1),
            num(r.a0_sq),
            num(r.a1_sq),
            num(r.identity),
            num(r.iterated),
            num(r.parametrix),
            num(r.direct),
            num(r.discrepancy),
            yes(r.converged),
            r.dense.map_or("-".into(), |d| num(d.identity)),
            r.dense.map_or("-".into(), |d| num(d.a0a1)),
            r.error.clone().unwrap_or_else(|| "-".into()),
        ]);
    }
    for f in &report.fits {
        rows.footer.push(format!(
            "decay {} exponent {} c {} residual {}",
            f.name,
            num(f.exponent),
            num(f.c),
            num(f.residual)
        ));
    }
    for (name, e) in &report.fit_errors {
        rows.footer.push(format!("decay {name} failed: {e}"));
    }
    let mut audit = Table::new(&["kind", "check", "passed", "detail"]);
    audit_rows(&mut audit, "hypothesis", &spec.audit.checks);
    audit_rows(&mut audit, "gluing", &checks);
    let plot: Vec<(f64, f64)> = report
        .rows
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| (1.0 / r.h, r.a0a1))
        .collect();

    let anchor = format!("{}; gluing of the two model resolvents", spec.anchor);
    let mut w = ctx.writer(&anchor)?;
    w.table("glue.tsv", &rows)?;
    w.plot("glue_plot.tsv", "inv_h", "a0a1", &plot)?;
    w.table("glue_audit.tsv", &audit)?;
    w.json(
        "glue.json",
        json!({
            "experiment": spec.name,
            "mu": gs.mu,
            "rows": report.rows.iter().map(|r| json!({
                "h": r.h, "m": r.m, "n": r.n, "a0": jnum(r.a0), "a1": jnum(r.a1), "a0a1": jnum(r.a0a1),
                "a1a0a1a0_chi0": jnum(r.a1a0a1a0_chi), "a0a1a0a1": jnum(r.a0a1a0a1), "a0_sq": jnum(r.a0_sq), "a1_sq": jnum(r.a1_sq),
                "identity": jnum(r.identity), "iterated": jnum(r.iterated), "parametrix": jnum(r.parametrix),
                "direct": jnum(r.direct), "discrepancy": jnum(r.discrepancy), "converged": r.converged,
                "dense": r.dense.map(|d| json!({"identity": jnum(d.identity), "a0a1": jnum(d.a0a1), "a0a1_rel_diff": jnum(d.a0a1_rel_diff)})),
                "error": r.error,
            })).collect::<Vec<_>>(),
            "fits": report.fits.iter().map(|f| json!({
                "name": f.name, "exponent": jnum(f.exponent), "c": jnum(f.c), "residual": jnum(f.residual),
            })).collect::<Vec<_>>(),
            "fit_errors": report.fit_errors.iter().map(|(n, e)| json!({"name": n, "error": e})).collect::<Vec<_>>(),
            "hypothesis_audit": checks_json(&spec.audit.checks),
            "checks": checks_json(&checks),
        }),
    )?;
    let mut lines: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "h = {:.5}  m = {}  |A0A1| = {:.4e}  identity = {:.2e}  discrepancy = {:.3}%",
                r.h,
                r.m,
                r.a0a1,
                r.identity.max(r.iterated),
                100.0 * r.discrepancy
            )
        })
        .collect();
    for c in &checks {
        lines.push(format!(
            "{} {} ({})",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.detail
        ));
    }
    Ok(Outcome {
        passed: checks.iter().all(|c| c.passed),
        lines,
        files: w.written,
    })
}
