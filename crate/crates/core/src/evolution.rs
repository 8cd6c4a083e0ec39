//! Time integration of `i∂_t u = K u - F(x, u)` (focusing sign).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::criteria::{odi_fit, OdiReport};
use crate::error::{Error, Result};
use crate::functionals::{make_weight, rms_radius, Diagnostics, MorawetzWeight};
use crate::ground_state::Model;
use crate::problem::{derive_exponents, ProblemSpec, ValidationTier};
use crate::radial_grid::{BandMatrix, RadialField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveControls {
    pub t_end: f64,
    pub dt0: f64,
    pub dt_min: f64,
    pub cfl_c: f64,
    pub snapshot_stride: usize,
    pub grad_blowup_factor: f64,
    pub conservation_tol: f64,
    /// Morawetz radius; `None` means 20 times the RMS radius of the datum.
    pub radius: Option<f64>,
    /// Hard cap on the number of steps.
    pub max_steps: usize,
    pub integrator: Integrator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Conservative Crank–Nicolson.
    #[default]
    Auto,
    Strang,
    CrankNicolson,
}

impl Integrator {
    pub fn resolve(self) -> Integrator {
        match self {
            Integrator::Auto => Integrator::CrankNicolson,
            other => other,
        }
    }
}

impl Default for EvolveControls {
    fn default() -> Self {
        EvolveControls {
            t_end: 1.0,
            dt0: 1e-3,
            dt_min: 1e-10,
            cfl_c: 0.1,
            snapshot_stride: 100,
            grad_blowup_factor: 1e4,
            conservation_tol: 1e-4,
            radius: None,
            max_steps: 2_000_000,
            integrator: Integrator::Auto,
        }
    }
}

impl EvolveControls {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.t_end, self.dt0, self.dt_min, self.cfl_c, self.grad_blowup_factor, self.conservation_tol];
        if pos.iter().any(|x| !(*x > 0.0 && x.is_finite())) || self.snapshot_stride == 0 || self.max_steps == 0 {
            return Err(Error::InvalidSpec("evolution controls must be positive".into()));
        }
        if self.dt_min >= self.dt0 {
            return Err(Error::InvalidSpec("dt_min must be below dt0".into()));
        }
        if let Some(r) = self.radius {
            make_weight(r)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    ReachedHorizon,
    BlowupDetected { t_detect: f64, t_star_estimate: Option<f64> },
    ResolutionFailure { t: f64 },
}

impl Verdict {
    pub fn is_blowup(&self) -> bool {
        matches!(self, Verdict::BlowupDetected { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::ReachedHorizon => "ReachedHorizon",
            Verdict::BlowupDetected { .. } => "BlowupDetected",
            Verdict::ResolutionFailure { .. } => "ResolutionFailure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub spec: ProblemSpec,
    pub series: Vec<Diagnostics>,
    pub snapshots: Vec<(f64, RadialField)>,
    pub verdict: Verdict,
    /// `f(t) = ∫_0^t kinetic`, one entry per series row.
    pub f_series: Vec<f64>,
    pub weight: MorawetzWeight,
    /// ODI fit, on blow-up runs where it succeeds.
    pub odi: Option<OdiReport>,
    /// Set when `dt` reached `dt_min`.
    pub dt_collapse: Option<f64>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.series.iter().map(|d| d.time).collect()
    }

    pub fn final_time(&self) -> f64 {
        self.series.last().map_or(0.0, |d| d.time)
    }

    pub fn kinetic_ratio(&self) -> f64 {
        let k0 = self.series[0].kinetic;
        self.series.iter().map(|d| d.kinetic).fold(0.0, f64::max) / k0
    }

    /// max/min of the kinetic term over the run.
    pub fn kinetic_spread(&self) -> f64 {
        let (lo, hi) = self
            .series
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d.kinetic), hi.max(d.kinetic)));
        hi / lo
    }

    pub fn mass_drift(&self) -> f64 {
        let m0 = self.series[0].mass;
        self.series.iter().map(|d| (d.mass - m0).abs() / m0).fold(0.0, f64::max)
    }

    pub fn energy_drift(&self) -> f64 {
        let scale = energy_scale(&self.series[0]);
        let e0 = self.series[0].energy;
        self.series.iter().map(|d| (d.energy - e0).abs() / scale).fold(0.0, f64::max)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(Diagnostics::CSV_HEADER);
        out.push('\n');
        for d in &self.series {
            out.push_str(&d.csv_row());
            out.push('\n');
        }
        out
    }
}

/// Kinetic-to-mass ratio, as a fraction of the top eigenvalue of `K`, beyond
/// which the solution lives at the grid scale and the run is abandoned.
pub const GRID_SATURATION: f64 = 0.1;

fn energy_scale(d: &Diagnostics) -> f64 {
    if d.energy.abs() > 1e-3 * d.kinetic {
        d.energy.abs()
    } else {
        d.kinetic
    }
}

/// Exact nonlinear flow `u ← u e^{i t V(|u|)}`; `V` depends on `|u|` only, so
/// it is constant along this substep.
fn nonlinear_flow(model: &Model, u: &mut [Complex64], t: f64) -> f64 {
    let (v, _) = model.functionals.nonlinear_potential(u);
    let mut vmax = 0.0f64;
    for (z, vj) in u.iter_mut().zip(&v) {
        *z *= Complex64::from_polar(1.0, t * vj);
        vmax = vmax.max(vj.abs());
    }
    vmax
}

/// The nonlinear substep `Φ_NL(dt)` alone: a pointwise phase rotation.
pub fn nonlinear_substep(model: &Model, state: &RadialField, dt: f64) -> RadialField {
    let mut u = state.values.clone();
    nonlinear_flow(model, &mut u, dt);
    RadialField { grid: state.grid.clone(), values: u }
}

/// One Strang step `e^{-iK dt/2} ∘ Φ_NL(dt) ∘ e^{-iK dt/2}`.
pub fn step(model: &Model, state: &RadialField, dt: f64) -> RadialField {
    let fac = &model.factorization;
    let mut u = fac.propagate(&state.values, 0.5 * dt);
    nonlinear_flow(model, &mut u, dt);
    let u = fac.propagate(&u, 0.5 * dt);
    RadialField { grid: state.grid.clone(), values: u }
}

/// `V` with `Σ w V (|u1|² - |u0|²) = (P[u1] - P[u0]) / p` (resp. `Q/q`), and
/// `V = V(u)` when `u1 = u0`.
fn difference_potential(model: &Model, u0: &[Complex64], u1: &[Complex64]) -> Vec<f64> {
    let fun = &model.functionals;
    let g = fun.grid();
    let pw = fun.spec.power();
    let tau = fun.spec.tau;
    let rho0: Vec<f64> = u0.iter().map(|z| z.norm_sqr()).collect();
    let rho1: Vec<f64> = u1.iter().map(|z| z.norm_sqr()).collect();
    // Difference quotient of ρ ↦ ρ^e, with the derivative at the midpoint for
    // nearly equal arguments.
    let quotient = |a: f64, b: f64, e: f64| {
        let d = b - a;
        if d.abs() <= 1e-9 * a.max(b) || a.max(b) == 0.0 {
            let m = 0.5 * (a + b);
            if m == 0.0 {
                0.0
            } else {
                e * m.powf(e - 1.0)
            }
        } else {
            (b.powf(e) - a.powf(e)) / d
        }
    };
    match fun.kernel() {
        Some(k) => {
            let f: Vec<f64> = g
                .nodes
                .iter()
                .zip(rho0.iter().zip(&rho1))
                .map(|(r, (a, b))| r.powf(-tau) * (a.powf(0.5 * pw) + b.powf(0.5 * pw)))
                .collect();
            let sf = k.apply_s(&f);
            (0..g.m)
                .map(|j| {
                    g.nodes[j].powf(-tau) * quotient(rho0[j], rho1[j], 0.5 * pw) * sf[j] / (pw * g.weights[j])
                })
                .collect()
        }
        None => (0..g.m)
            .map(|j| g.nodes[j].powf(-2.0 * tau) * quotient(rho0[j], rho1[j], pw) / pw)
            .collect(),
    }
}

/// Conservative Crank–Nicolson step
/// `i(u1 - u0)/dt = K ū - V(u0, u1) ū`, `ū = (u0 + u1)/2`, solved by fixed-point
/// iteration with banded solves for `I + i dt K / 2`. Mass and energy are
/// conserved up to the iteration tolerance.
pub fn cn_step(model: &Model, state: &RadialField, dt: f64) -> (RadialField, usize) {
    let band = model.functionals.op.band();
    cn_step_banded(model, &band, state, dt)
}

fn cn_step_banded(model: &Model, band: &BandMatrix, state: &RadialField, dt: f64) -> (RadialField, usize) {
    let u0 = &state.values;
    let half = 0.5 * dt;
    let lu = band.shifted_lu(half);
    let ku0 = band.apply(u0);
    let explicit: Vec<Complex64> = u0.iter().zip(&ku0).map(|(a, k)| a - Complex64::new(0.0, half) * k).collect();
    let cayley = lu.solve(&explicit);
    let mut u1 = cayley.clone();
    let mut iterations = 0;
    let norm0 = state.grid.norm_sq(u0).sqrt();
    for it in 0..100 {
        iterations = it + 1;
        let v = difference_potential(model, u0, &u1);
        let forcing: Vec<Complex64> = u0
            .iter()
            .zip(&u1)
            .zip(&v)
            .map(|((a, b), vj)| Complex64::new(0.0, dt * vj) * (a + b) * 0.5)
            .collect();
        let corr = lu.solve(&forcing);
        let next: Vec<Complex64> = cayley.iter().zip(&corr).map(|(a, b)| a + b).collect();
        let diff: Vec<Complex64> = next.iter().zip(&u1).map(|(a, b)| a - b).collect();
        let change = state.grid.norm_sq(&diff).sqrt();
        u1 = next;
        if change <= 1e-14 * norm0 || !change.is_finite() {
            break;
        }
    }
    (RadialField { grid: state.grid.clone(), values: u1 }, iterations)
}

/// Linear step only (nonlinearity switched off).
pub fn linear_step(model: &Model, state: &RadialField, dt: f64) -> RadialField {
    RadialField { grid: state.grid.clone(), values: model.factorization.propagate(&state.values, dt) }
}

pub fn max_nonlinear_potential(model: &Model, u: &[Complex64]) -> f64 {
    let (v, _) = model.functionals.nonlinear_potential(u);
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

pub fn evolve(model: &Model, u0: &RadialField, controls: &EvolveControls) -> Result<Trajectory> {
    controls.validate()?;
    let spec = *model.spec();
    if spec.tier() == ValidationTier::EvolutionRestricted {
        return Err(Error::EvolutionRestricted(format!("λ = {} < 0", spec.lambda)));
    }
    if !u0.is_finite() {
        return Err(Error::InvalidSpec("datum has non-finite values".into()));
    }
    let fun = &model.functionals;
    let radius = controls.radius.unwrap_or_else(|| 20.0 * rms_radius(u0));
    let weight = make_weight(radius)?;

    let mut u = u0.clone();
    let mut t = 0.0;
    let mut series = vec![fun.diagnostics(&u, Some(&weight), 0.0, 0.0)];
    let mut f_series = vec![0.0];
    let mut snapshots = vec![(0.0, u.clone())];
    let k0 = series[0].kinetic;
    let m0 = series[0].mass;
    let e0 = series[0].energy;
    let e_scale = energy_scale(&series[0]);
    let mut verdict = Verdict::ReachedHorizon;
    let mut dt_collapse = None;
    let mut steps = 0usize;
    let integrator = controls.integrator.resolve();
    let band = model.functionals.op.band();
    let saturation = GRID_SATURATION * model.factorization.max_eigenvalue();

    while t < controls.t_end * (1.0 - 1e-14) {
        let vmax = max_nonlinear_potential(model, &u.values);
        let raw = controls.cfl_c / (1.0 + vmax);
        let mut dt = raw.clamp(controls.dt_min, controls.dt0);
        let collapsed = raw <= controls.dt_min;
        dt = dt.min(controls.t_end - t);
        u = match integrator {
            Integrator::CrankNicolson => cn_step_banded(model, &band, &u, dt).0,
            _ => step(model, &u, dt),
        };
        t += dt;
        steps += 1;
        let d = fun.diagnostics(&u, Some(&weight), t, dt);
        let prev = series.last().unwrap();
        let f = f_series.last().unwrap() + 0.5 * dt * (prev.kinetic + d.kinetic);
        let finite = u.is_finite() && d.kinetic.is_finite() && d.energy.is_finite();
        series.push(d);
        f_series.push(f);
        if steps % controls.snapshot_stride == 0 {
            snapshots.push((t, u.clone()));
        }
        if !finite || d.kinetic >= controls.grad_blowup_factor * k0 || collapsed {
            if collapsed {
                dt_collapse = Some(t);
            }
            verdict = Verdict::BlowupDetected { t_detect: t, t_star_estimate: None };
            break;
        }
        let drift_m = (d.mass - m0).abs() / m0;
        let drift_e = (d.energy - e0).abs() / e_scale;
        if drift_m > controls.conservation_tol || drift_e > controls.conservation_tol {
            verdict = Verdict::ResolutionFailure { t };
            break;
        }
        if steps >= controls.max_steps || d.kinetic > saturation * d.mass {
            verdict = Verdict::ResolutionFailure { t };
            break;
        }
    }
    if snapshots.last().map(|s| s.0) != Some(t) {
        snapshots.push((t, u.clone()));
    }
    let mut traj = Trajectory { spec, series, snapshots, verdict, f_series, weight, odi: None, dt_collapse };
    if let Verdict::BlowupDetected { t_detect, .. } = traj.verdict {
        if let Ok(rep) = odi_fit(&traj, &spec) {
            traj.verdict = Verdict::BlowupDetected { t_detect, t_star_estimate: Some(rep.t_star_bound) };
            traj.odi = Some(rep);
        }
    }
    Ok(traj)
}

/// Morawetz rate check: `dM_R/dt <= κ_s I[u] + C_tail(R)` along a trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MorawetzReport {
    pub radius: f64,
    pub kappa: f64,
    pub tail_constant: f64,
    pub radius_exponent: f64,
    pub norm_exponent: f64,
    /// `(t, κ I + C_tail - dM/dt)` at interior samples.
    pub margins: Vec<(f64, f64)>,
    pub violations: usize,
    pub violation_fraction: f64,
    /// Slope of a least-squares line through `M_R` on the final third.
    pub final_third_slope: f64,
}

/// `(a, b)` with tail `R^{-a} kinetic^{b/2} + R^{-2}`.
pub fn tail_exponents(spec: &ProblemSpec) -> (f64, f64) {
    let b = derive_exponents(spec).b;
    let tau = spec.tau;
    match (spec.s, spec.is_choquard()) {
        (1, true) => (tau, b - tau),
        (_, true) => (tau, b - 0.5 * tau),
        (1, false) => (2.0 * tau, b - 2.0 * tau),
        (_, false) => (2.0 * tau, b - tau),
    }
}

pub fn tail_bound(spec: &ProblemSpec, radius: f64, kinetic: f64, c: f64) -> f64 {
    let (a, b) = tail_exponents(spec);
    c * (radius.powf(-a) * kinetic.powf(0.5 * b) + radius.powf(-2.0))
}

pub fn morawetz_rate_check(traj: &Trajectory, spec: &ProblemSpec, tail_constant: f64) -> Result<MorawetzReport> {
    let s = &traj.series;
    if s.len() < 100 {
        return Err(Error::InsufficientSamples { needed: 100, have: s.len() });
    }
    let kappa = if spec.s == 1 { 8.0 } else { 16.0 };
    let radius = traj.weight.radius;
    let mut margins = Vec::with_capacity(s.len());
    let mut violations = 0;
    for k in 1..s.len() - 1 {
        let (a, b) = (&s[k - 1], &s[k + 1]);
        let dt = b.time - a.time;
        if dt <= 0.0 {
            continue;
        }
        let rate = (b.morawetz - a.morawetz) / dt;
        let d = &s[k];
        let margin = kappa * d.virial + tail_bound(spec, radius, d.kinetic, tail_constant) - rate;
        if margin < 0.0 {
            violations += 1;
        }
        margins.push((d.time, margin));
    }
    let n = margins.len().max(1);
    let third = &s[2 * s.len() / 3..];
    let ts: Vec<f64> = third.iter().map(|d| d.time).collect();
    let ms: Vec<f64> = third.iter().map(|d| d.morawetz).collect();
    let (a, b) = tail_exponents(spec);
    Ok(MorawetzReport {
        radius,
        kappa,
        tail_constant,
        radius_exponent: a,
        norm_exponent: b,
        margins,
        violations,
        violation_fraction: violations as f64 / n as f64,
        final_third_slope: linear_slope(&ts, &ms),
    })
}

/// Least-squares slope of `y` against `x`.
pub fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}
