//! Ground states of `K φ + φ = F(x, φ)`, their Pohozaev certificate, and the
//! sharp Gagliardo–Nirenberg constant.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::Functionals;
use crate::problem::ProblemSpec;
use crate::radial_grid::{factorize_operator, Grid, OperatorFactorization, RadialField};

/// Functionals plus the spectral factorization of `K_h` for one spec and grid.
#[derive(Debug, Clone)]
pub struct Model {
    pub functionals: Functionals,
    pub factorization: Arc<OperatorFactorization>,
}

impl Model {
    pub fn new(spec: &ProblemSpec, grid: Arc<Grid>) -> Result<Self> {
        let functionals = Functionals::new(spec, grid)?;
        let factorization = Arc::new(factorize_operator(&functionals.op)?);
        Ok(Model { functionals, factorization })
    }

    pub fn from_parts(functionals: Functionals, factorization: Arc<OperatorFactorization>) -> Self {
        Model { functionals, factorization }
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.functionals.spec
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.functionals.grid()
    }

    /// `‖K_h v + v - F(v)‖_w / ‖v‖_w`.
    pub fn residual(&self, v: &[f64]) -> f64 {
        let g = self.grid();
        let kv = self.functionals.op.apply_real(v);
        let nl = self.functionals.nonlinearity_real(v);
        let r: Vec<f64> = kv.iter().zip(v).zip(&nl).map(|((a, b), c)| a + b - c).collect();
        (g.dot(&r, &r) / g.dot(v, v)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop once the residual falls below this value.
    pub tol: f64,
    pub max_iter: usize,
    /// A residual above this value at exit is reported as non-convergence.
    pub accept: f64,
    /// Iterations without a halving of the best residual before declaring a stall.
    pub stall_window: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-10, max_iter: 10_000, accept: 1e-6, stall_window: 300 }
    }
}

pub const RESIDUAL_TOL: f64 = 1e-8;
pub const POHOZAEV_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateStatus {
    /// Residual and both Pohozaev defects within tolerance; positive and nonincreasing.
    Verified,
    /// Tolerances met but the profile is not positive and nonincreasing.
    ExcitedOrUnverified,
    /// Residual or a Pohozaev defect above tolerance.
    OutOfTolerance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub spec: ProblemSpec,
    pub m: usize,
    pub r_max: f64,
    pub residual: f64,
    pub pohozaev_defect_1: f64,
    pub pohozaev_defect_2: f64,
    pub mass: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub energy: f64,
    pub virial: f64,
    pub action: f64,
    pub sharp_constant: f64,
    pub iterations: usize,
    pub relaxed: bool,
    pub positive: bool,
    pub nonincreasing: bool,
    pub status: CertificateStatus,
    pub residual_tol: f64,
    pub pohozaev_tol: f64,
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub field: RadialField,
    pub certificate: Certificate,
}

impl GroundState {
    pub fn spec(&self) -> &ProblemSpec {
        &self.certificate.spec
    }

    pub fn mass(&self) -> f64 {
        self.certificate.mass
    }

    pub fn kinetic(&self) -> f64 {
        self.certificate.kinetic
    }

    pub fn energy(&self) -> f64 {
        self.certificate.energy
    }
}

pub fn solve_ground_state(spec: &ProblemSpec, grid: Arc<Grid>, init: Option<&RadialField>) -> Result<GroundState> {
    let model = Model::new(spec, grid)?;
    solve_with(&model, init, &SolverOptions::default())
}

/// Petviashvili iteration `v ← γ^θ (K_h + 1)^{-1} F(v)`,
/// `γ = ⟨(K_h+1)v, v⟩ / ⟨F(v), v⟩`, `θ = σ/(σ-1)`.
pub fn solve_with(model: &Model, init: Option<&RadialField>, opts: &SolverOptions) -> Result<GroundState> {
    let grid = model.grid().clone();
    let fun = &model.functionals;
    let fac = &model.factorization;
    let sigma = model.spec().sigma();
    let theta = sigma / (sigma - 1.0);

    let mut v: Vec<f64> = match init {
        Some(f) => f.re(),
        None => grid.nodes.iter().map(|r| (-0.5 * r * r).exp()).collect(),
    };
    let mut relax = 1.0;
    let mut best = f64::INFINITY;
    let mut best_v = v.clone();
    let mut best_at = 0;
    let mut rises = 0;
    let mut prev = f64::INFINITY;
    let mut iterations = 0;

    for it in 0..opts.max_iter {
        iterations = it + 1;
        let nl = fun.nonlinearity_real(&v);
        let num = fun.op.quadratic_form_real(&v) + grid.dot(&v, &v);
        let den = grid.dot(&nl, &v);
        if !(den > 0.0) || !num.is_finite() {
            return Err(Error::Degenerate(format!("iterate lost its nonlinear part at step {it}")));
        }
        let gamma = (num / den).powf(theta);
        let next: Vec<f64> = fac.resolve_real(&nl, 1.0).into_iter().map(|x| gamma * x).collect();
        v = if relax == 1.0 {
            next
        } else {
            next.iter().zip(&v).map(|(a, b)| relax * a + (1.0 - relax) * b).collect()
        };
        let norm = grid.dot(&v, &v).sqrt();
        if !(norm > 1e-12 && norm < 1e12) {
            return Err(Error::Degenerate(format!("iterate norm {norm:e} at step {it}")));
        }
        let res = model.residual(&v);
        if res < best {
            if res < 0.5 * best {
                best_at = it;
            }
            best = res;
            best_v.clone_from(&v);
        }
        if res <= opts.tol {
            break;
        }
        rises = if res > prev { rises + 1 } else { 0 };
        prev = res;
        if rises >= 5 && relax == 1.0 {
            relax = 0.7;
            rises = 0;
        }
        if it - best_at > opts.stall_window {
            break;
        }
    }
    if !(best <= opts.accept) {
        return Err(Error::NonConvergence { iterations, residual: best });
    }
    Ok(certify(model, &best_v, best, iterations, relax != 1.0))
}

fn certify(model: &Model, v: &[f64], residual: f64, iterations: usize, relaxed: bool) -> GroundState {
    let fun = &model.functionals;
    let grid = model.grid();
    let spec = *model.spec();
    let field = RadialField::from_real(grid.clone(), v);
    let d = fun.diagnostics(&field, None, 0.0, 0.0);
    let e = fun.exponents;
    let pw = spec.power();
    let defect_1 = (d.potential - 2.0 * pw / e.a * d.mass).abs() / d.potential;
    let defect_2 = (d.potential - 2.0 * pw / e.b * d.kinetic).abs() / d.potential;
    let sharp = sharp_constant_from(&spec, d.mass);

    let positive = v.iter().all(|&x| x > 0.0);
    // For λ > 0 the profile vanishes like r^ν at the origin; monotonicity is
    // checked on φ / r^ν.
    let nu = spec.hardy_nu();
    let profile: Vec<f64> = v.iter().zip(&grid.nodes).map(|(x, r)| x * r.powf(-nu)).collect();
    let pmax = profile.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let nonincreasing = profile.windows(2).all(|p| p[1] <= p[0] + 1e-12 * pmax);
    let within = residual <= RESIDUAL_TOL && defect_1 <= POHOZAEV_TOL && defect_2 <= POHOZAEV_TOL;
    let status = match (within, positive && nonincreasing) {
        (false, _) => CertificateStatus::OutOfTolerance,
        (true, true) => CertificateStatus::Verified,
        (true, false) => CertificateStatus::ExcitedOrUnverified,
    };
    let certificate = Certificate {
        spec,
        m: grid.m,
        r_max: grid.r_max,
        residual,
        pohozaev_defect_1: defect_1,
        pohozaev_defect_2: defect_2,
        mass: d.mass,
        kinetic: d.kinetic,
        potential: d.potential,
        energy: d.energy,
        virial: d.virial,
        action: d.action,
        sharp_constant: sharp,
        iterations,
        relaxed,
        positive,
        nonincreasing,
        status,
        residual_tol: RESIDUAL_TOL,
        pohozaev_tol: POHOZAEV_TOL,
    };
    GroundState { field, certificate }
}

/// `C = (2p/A)(A/B)^{B/2} M[φ]^{-(p-1)}` (with `q, A', B'` in the local case).
pub fn sharp_constant_from(spec: &ProblemSpec, mass: f64) -> f64 {
    let e = crate::problem::derive_exponents(spec);
    let pw = spec.power();
    2.0 * pw / e.a * (e.a / e.b).powf(0.5 * e.b) * mass.powf(-(pw - 1.0))
}

pub fn sharp_constant(gs: &GroundState) -> f64 {
    sharp_constant_from(gs.spec(), gs.mass())
}

/// `m̂ = S[φ]`, the stand-in for the infimum `m`.
pub fn threshold_m(gs: &GroundState) -> f64 {
    gs.certificate.action
}

/// `P[u] / (‖u‖^A · kinetic^{B/2})`.
pub fn weinstein_quotient(fun: &Functionals, u: &[Complex64]) -> f64 {
    let e = fun.exponents;
    let m = fun.mass(u);
    let k = fun.kinetic(u);
    fun.potential(u) / (m.powf(0.5 * e.a) * k.powf(0.5 * e.b))
}

fn quotient_real(fun: &Functionals, u: &[f64]) -> (f64, f64, f64, f64) {
    let g = fun.grid();
    let m = g.dot(u, u);
    let k = fun.op.quadratic_form_real(u);
    let nl = fun.nonlinearity_real(u);
    let p = g.dot(&nl, u);
    let e = fun.exponents;
    (p / (m.powf(0.5 * e.a) * k.powf(0.5 * e.b)), m, k, p)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AscentReport {
    pub initial: f64,
    pub best: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Maximizes the Weinstein quotient from a real starting field by gradient
/// ascent on its logarithm, preconditioned by `(K_h + 1)^{-1}`, with a
/// backtracking line search. Stops when the quotient reaches `target` (if
/// given) or stops improving.
pub fn weinstein_ascent(model: &Model, init: &[f64], max_iter: usize, target: Option<f64>) -> AscentReport {
    let fun = &model.functionals;
    let g = model.grid();
    let e = fun.exponents;
    let pw = model.spec().power();
    let mut u = init.to_vec();
    // Amplitude normalization keeps the iterate away from under/overflow.
    let normalize = |u: &mut Vec<f64>| {
        let n = g.dot(u, u).sqrt();
        u.iter_mut().for_each(|x| *x /= n);
    };
    normalize(&mut u);
    let (mut w, _, _, _) = quotient_real(fun, &u);
    let initial = w;
    let mut history = vec![w];
    let mut step = 1.0;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        if target.is_some_and(|t| w >= t) {
            break;
        }
        let (_, m, k, p) = quotient_real(fun, &u);
        let ku = fun.op.apply_real(&u);
        let nl = fun.nonlinearity_real(&u);
        // w-gradient of log W.
        let grad: Vec<f64> = (0..u.len())
            .map(|j| 2.0 * pw * nl[j] / p - e.a * u[j] / m - e.b * ku[j] / k)
            .collect();
        let dir = model.factorization.resolve_real(&grad, 1.0);
        let slope = g.dot(&grad, &dir);
        if !(slope > 0.0) {
            break;
        }
        let mut accepted = false;
        let mut t = step;
        for _ in 0..40 {
            let mut trial: Vec<f64> = u.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            normalize(&mut trial);
            let (wt, ..) = quotient_real(fun, &trial);
            if wt.is_finite() && wt.ln() >= w.ln() + 1e-4 * t * slope {
                u = trial;
                w = wt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        step = (2.0 * t).min(1e3);
        history.push(w);
    }
    let best = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    AscentReport { initial, best, iterations, history }
}
