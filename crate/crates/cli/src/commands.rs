//! The five subcommands.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use inls_core::criteria::{build_datum, classify, coercivity_monitor, Classification, GaussianMixture};
use inls_core::evolution::{evolve, morawetz_rate_check, EvolveControls, Trajectory};
use inls_core::functionals::Functionals;
use inls_core::ground_state::{
    solve_with, weinstein_quotient, Certificate, GroundState, Model, SolverOptions, POHOZAEV_TOL,
};
use inls_core::io::{field_to_csv_with_dimension, read_snapshot, snapshot_bytes};
use inls_core::problem::{derive_exponents, spec_notes, ValidationTier};
use inls_core::{make_grid, Complex64, RadialField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Resolved, RunConfig};
use crate::store::{is_complete, run_dir, run_id, Staging};

/// An identity suite failed; maps to exit code 1.
#[derive(Debug)]
pub struct SuiteFailed(pub Vec<String>);

impl fmt::Display for SuiteFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "identity suites failed: {}", self.0.join(", "))
    }
}

impl std::error::Error for SuiteFailed {}

/// 0 success, 1 failed identity suite, 2 configuration or I/O, 3 numerics.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use inls_core::Error as E;
    if err.downcast_ref::<SuiteFailed>().is_some() {
        return 1;
    }
    match err.downcast_ref::<E>() {
        Some(
            E::NonConvergence { .. }
            | E::Degenerate(_)
            | E::FactorizationFailure(_)
            | E::InsufficientSamples { .. }
            | E::NoBlowupVerdict
            | E::DegenerateFit(_)
            | E::RescaleFailure(_),
        ) => 3,
        _ => 2,
    }
}

fn timing(start: Instant) -> Value {
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    json!({ "finished_unix": now, "wall_seconds": start.elapsed().as_secs_f64() })
}

fn gs_canonical(cfg: &RunConfig) -> Value {
    json!({ "spec": cfg.spec, "grid": cfg.grid })
}

/// Serializes concurrent requests for the same ground state within a process.
fn gs_lock(id: &str) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<String, Arc<Mutex<()>>>>> = OnceLock::new();
    let map = LOCKS.get_or_init(Default::default);
    map.lock().unwrap().entry(id.to_string()).or_default().clone()
}

pub struct Solved {
    pub model: Model,
    pub gs: GroundState,
    pub dir: PathBuf,
    pub reused: bool,
}

/// Loads the ground state for the config's (spec, grid) from its run
/// directory, solving and committing it first if needed.
pub fn ground_state(cfg: &RunConfig, res: &Resolved, out: &Path) -> Result<Solved> {
    let canonical = gs_canonical(cfg);
    let id = run_id("gs", &canonical);
    let dir = run_dir(out, "gs", &id);
    let lock = gs_lock(&id);
    let _guard = lock.lock().unwrap();
    let grid = Arc::new(make_grid(res.m, res.r_max, res.spec.n)?);
    let model = Model::new(&res.spec, grid.clone())?;
    if is_complete(&dir) {
        let field = read_snapshot(&dir.join("ground_state.bin"))?;
        let text = std::fs::read_to_string(dir.join("certificate.json"))?;
        let certificate: Certificate = serde_json::from_str(&text).context("certificate.json")?;
        let gs = GroundState { field: RadialField { grid, values: field.values }, certificate };
        return Ok(Solved { model, gs, dir, reused: true });
    }
    let start = Instant::now();
    let gs = solve_with(&model, None, &SolverOptions::default())?;
    let stage = Staging::new(dir)?;
    stage.write("ground_state.bin", snapshot_bytes(&gs.field))?;
    stage.write("ground_state.csv", field_to_csv_with_dimension(&gs.field))?;
    stage.write_json("certificate.json", &gs.certificate)?;
    stage.write_json("timing.json", &timing(start))?;
    let manifest = json!({
        "command": "ground-state",
        "id": id,
        "config": canonical,
        "status": gs.certificate.status,
        "notes": spec_notes(&res.spec),
    });
    let dir = stage.commit(&manifest)?;
    Ok(Solved { model, gs, dir, reused: false })
}

pub fn cmd_ground_state(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let res = cfg.resolve()?;
    let solved = ground_state(cfg, &res, out)?;
    let c = &solved.gs.certificate;
    println!(
        "{}: residual {:.2e}, Pohozaev defects {:.2e} / {:.2e}, status {:?}{}",
        solved.dir.display(),
        c.residual,
        c.pohozaev_defect_1,
        c.pohozaev_defect_2,
        c.status,
        if solved.reused { " (reused)" } else { "" }
    );
    Ok(solved.dir)
}

fn datum(res: &Resolved, solved: &Solved) -> Result<RadialField> {
    Ok(build_datum(&res.datum, Some(&solved.gs), &solved.model.functionals)?)
}

pub fn cmd_classify(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let res = cfg.resolve()?;
    let id = run_id("classify", &cfg.canonical());
    let dir = run_dir(out, "classify", &id);
    if is_complete(&dir) {
        println!("{}: already complete", dir.display());
        return Ok(dir);
    }
    let start = Instant::now();
    let solved = ground_state(cfg, &res, out)?;
    let u0 = datum(&res, &solved)?;
    let cls = classify(&solved.model.functionals, &u0, &solved.gs)?;
    let stage = Staging::new(dir)?;
    stage.write_json("classification.json", &cls)?;
    stage.write_json("timing.json", &timing(start))?;
    let manifest = json!({
        "command": "classify",
        "id": id,
        "config": cfg.canonical(),
        "ground_state": solved.dir.file_name().map(|s| s.to_string_lossy().to_string()),
    });
    let dir = stage.commit(&manifest)?;
    println!(
        "{}: I {:.4e}, S - m {:.4e}, MG {:.4}, ME {:.4}, prediction {:?}",
        dir.display(),
        cls.virial,
        cls.action_vs_m,
        cls.mg,
        cls.me,
        cls.predicted
    );
    Ok(dir)
}

/// One row of a sweep summary, also stored with each evolution run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub verdict: String,
    pub t_final: f64,
    pub t_star_estimate: Option<f64>,
    pub kinetic_ratio: f64,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub steps: usize,
    pub predicted: String,
}

fn summarize(traj: &Trajectory, cls: &Classification) -> RunSummary {
    let t_star_estimate = match traj.verdict {
        inls_core::evolution::Verdict::BlowupDetected { t_star_estimate, .. } => t_star_estimate,
        _ => None,
    };
    RunSummary {
        verdict: traj.verdict.label().to_string(),
        t_final: traj.final_time(),
        t_star_estimate,
        kinetic_ratio: traj.kinetic_ratio(),
        mass_drift: traj.mass_drift(),
        energy_drift: traj.energy_drift(),
        steps: traj.series.len() - 1,
        predicted: format!("{:?}", cls.predicted),
    }
}

pub struct EvolveOutcome {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub reused: bool,
}

pub fn run_evolve(cfg: &RunConfig, out: &Path) -> Result<EvolveOutcome> {
    let res = cfg.resolve()?;
    let id = run_id("evolve", &cfg.canonical());
    let dir = run_dir(out, "evolve", &id);
    if is_complete(&dir) {
        let text = std::fs::read_to_string(dir.join("summary.json"))?;
        let summary: RunSummary = serde_json::from_str(&text).context("summary.json")?;
        return Ok(EvolveOutcome { dir, summary, reused: true });
    }
    let start = Instant::now();
    let solved = ground_state(cfg, &res, out)?;
    let u0 = datum(&res, &solved)?;
    let fun = &solved.model.functionals;
    let cls = classify(fun, &u0, &solved.gs)?;
    let traj = evolve(&solved.model, &u0, &res.controls)?;
    let summary = summarize(&traj, &cls);
    let morawetz = morawetz_rate_check(&traj, &res.spec, 1.0).ok();
    let coercivity = coercivity_monitor(fun, &traj, &solved.gs).ok();

    let stage = Staging::new(dir)?;
    stage.write("series.csv", traj.csv())?;
    let mut snaps = Vec::new();
    for (k, (t, u)) in traj.snapshots.iter().enumerate() {
        let name = format!("snapshots/snap_{k:05}.bin");
        stage.write(&name, snapshot_bytes(u))?;
        snaps.push(json!({ "t": t, "file": name }));
    }
    stage.write_json(
        "verdict.json",
        &json!({
            "verdict": traj.verdict,
            "classification": cls,
            "odi": traj.odi,
            "morawetz": morawetz.map(|m| json!({
                "radius": m.radius,
                "kappa": m.kappa,
                "tail_constant": m.tail_constant,
                "violations": m.violations,
                "violation_fraction": m.violation_fraction,
                "final_third_slope": m.final_third_slope,
            })),
            "coercivity": coercivity,
            "snapshots": snaps,
        }),
    )?;
    stage.write_json("summary.json", &summary)?;
    stage.write_json("timing.json", &timing(start))?;
    let manifest = json!({
        "command": "evolve",
        "id": id,
        "config": cfg.canonical(),
        "ground_state": solved.dir.file_name().map(|s| s.to_string_lossy().to_string()),
        "controls": res.controls,
    });
    let dir = stage.commit(&manifest)?;
    Ok(EvolveOutcome { dir, summary, reused: false })
}

pub fn cmd_evolve(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let o = run_evolve(cfg, out)?;
    let s = &o.summary;
    println!(
        "{}: {} at t = {:.6}, kinetic ratio {:.3e}, mass drift {:.1e}, energy drift {:.1e}",
        o.dir.display(),
        s.verdict,
        s.t_final,
        s.kinetic_ratio,
        s.mass_drift,
        s.energy_drift
    );
    Ok(o.dir)
}

#[derive(Debug, Clone, Serialize)]
struct Suite {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn random_field(rng: &mut ChaCha8Rng, fun: &Functionals) -> RadialField {
    let grid = fun.grid().clone();
    let mix = GaussianMixture::random(rng, grid.n, 4);
    let nu = fun.spec.hardy_nu();
    let chirp = if rng.random_bool(0.5) { rng.random_range(-1.0..1.0) } else { 0.0 };
    RadialField::from_fn(grid, |r| Complex64::from_polar(r.powf(nu) * mix.eval(r), chirp * r * r))
}

fn suite_pohozaev(gs: &GroundState) -> Suite {
    let c = &gs.certificate;
    Suite {
        name: "pohozaev",
        passed: c.pohozaev_defect_1 <= POHOZAEV_TOL && c.pohozaev_defect_2 <= POHOZAEV_TOL,
        detail: format!(
            "defects {:.2e} / {:.2e} (tol {:.0e}), residual {:.2e}",
            c.pohozaev_defect_1, c.pohozaev_defect_2, POHOZAEV_TOL, c.residual
        ),
    }
}

fn suite_gn(fun: &Functionals, gs: &GroundState, seed: u64) -> Suite {
    let sharp = gs.certificate.sharp_constant;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut violations = 0;
    for _ in 0..200 {
        let u = random_field(&mut rng, fun);
        let w = weinstein_quotient(fun, &u.values) / sharp;
        worst = worst.max(w);
        if w > 1.0 + 1e-6 {
            violations += 1;
        }
    }
    let at_phi = weinstein_quotient(fun, &gs.field.values) / sharp;
    Suite {
        name: "gagliardo_nirenberg",
        passed: violations == 0 && (at_phi - 1.0).abs() <= 1e-6,
        detail: format!("200 fields: max W/C {worst:.6}, violations {violations}; W(φ)/C - 1 = {:.1e}", at_phi - 1.0),
    }
}

fn suite_scaling(res: &Resolved, seed: u64) -> Result<Suite> {
    // Rescaled mixtures are sampled analytically; a fine grid keeps the
    // discretization error well below the tolerances, and the widths keep the
    // ρ = 1/2 copies negligible at r_max (the zero extension there would
    // otherwise dominate the s = 2 kinetic term).
    let grid = Arc::new(make_grid(res.m.max(2048), res.r_max.max(24.0), res.spec.n)?);
    let fun = Functionals::new(&res.spec, grid.clone())?;
    let s = res.spec.s as i32;
    let sb = res.spec.s as f64 * derive_exponents(&res.spec).b;
    let nu = res.spec.hardy_nu();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut em, mut ek, mut ep) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..3 {
        let mix = GaussianMixture::random_with_widths(&mut rng, res.spec.n, 3, 0.6..1.2);
        let u = RadialField::from_real_fn(grid.clone(), |r| r.powf(nu) * mix.eval(r));
        let (m0, k0, p0) = (fun.mass(&u.values), fun.kinetic(&u.values), fun.potential(&u.values));
        for rho in [0.5f64, 2.0] {
            let scaled = mix.rescaled(rho);
            let amp = rho.powf(nu);
            let v = RadialField::from_real_fn(grid.clone(), |r| amp * r.powf(nu) * scaled.eval(r));
            em = em.max((fun.mass(&v.values) / m0 - 1.0).abs());
            ek = ek.max((fun.kinetic(&v.values) / (k0 * rho.powi(2 * s)) - 1.0).abs());
            ep = ep.max((fun.potential(&v.values) / (p0 * rho.powf(sb)) - 1.0).abs());
        }
    }
    Ok(Suite {
        name: "scaling",
        passed: em <= 1e-8 && ek <= 1e-4 && ep <= 1e-3,
        detail: format!("max deviations: mass {em:.1e}, kinetic {ek:.1e}, potential {ep:.1e}"),
    })
}

fn suite_hardy(fun: &Functionals, seed: u64) -> Suite {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let mut min_ratio = f64::INFINITY;
    for _ in 0..200 {
        let u = random_field(&mut rng, fun);
        let q = fun.op.quadratic_form(&u.values);
        min_ratio = min_ratio.min(q / fun.mass(&u.values));
    }
    Suite {
        name: "hardy_positivity",
        passed: min_ratio >= 0.0,
        detail: format!("min <K u, u> / |u|^2 over 200 fields: {min_ratio:.4e}"),
    }
}

fn suite_conservation(solved: &Solved, res: &Resolved) -> Result<Suite> {
    if res.spec.tier() == ValidationTier::EvolutionRestricted {
        return Ok(Suite { name: "conservation", passed: true, detail: "skipped: lambda < 0".into() });
    }
    let controls = EvolveControls { t_end: 50.0 * res.controls.dt0, ..res.controls };
    let traj = evolve(&solved.model, &solved.gs.field.scaled(0.5), &controls)?;
    let (dm, de) = (traj.mass_drift(), traj.energy_drift());
    Ok(Suite {
        name: "conservation",
        passed: dm <= 1e-8 && de <= 1e-6,
        detail: format!("0.5 φ over {} steps: mass drift {dm:.1e}, energy drift {de:.1e}", traj.series.len() - 1),
    })
}

pub fn cmd_check_identities(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let res = cfg.resolve()?;
    let id = run_id("check", &cfg.canonical());
    let dir = run_dir(out, "check", &id);
    let start = Instant::now();
    let solved = ground_state(cfg, &res, out)?;
    let fun = &solved.model.functionals;
    let suites = vec![
        suite_pohozaev(&solved.gs),
        suite_gn(fun, &solved.gs, res.seed),
        suite_scaling(&res, res.seed)?,
        suite_hardy(fun, res.seed),
        suite_conservation(&solved, &res)?,
    ];
    let stage = Staging::new(dir)?;
    stage.write_json("identities.json", &suites)?;
    stage.write_json("timing.json", &timing(start))?;
    let failed: Vec<String> = suites.iter().filter(|s| !s.passed).map(|s| s.name.to_string()).collect();
    let manifest = json!({ "command": "check-identities", "id": id, "config": cfg.canonical(), "passed": failed.is_empty() });
    let dir = stage.commit(&manifest)?;
    for s in &suites {
        println!("{:<22} {}  {}", s.name, if s.passed { "PASS" } else { "FAIL" }, s.detail);
    }
    println!("{}", dir.display());
    if !failed.is_empty() {
        bail!(SuiteFailed(failed));
    }
    Ok(dir)
}
