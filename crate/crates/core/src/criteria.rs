//! Blow-up criteria on initial data, along-flow monitors, and the ODI
//! blow-up-time estimator.

use std::ops::Range;
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{Trajectory, Verdict};
use crate::functionals::Functionals;
use crate::ground_state::{threshold_m, GroundState};
use crate::problem::{derive_exponents, ProblemSpec};
use crate::radial_grid::{Grid, RadialField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    BlowUp,
    NoPrediction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Classification {
    pub virial: f64,
    pub virial_sign: i8,
    pub action: f64,
    pub m_hat: f64,
    pub action_vs_m: f64,
    pub in_a_minus: bool,
    pub mg: f64,
    pub me: f64,
    /// `I < 0` and `S < m̂`: the datum sits in the potential well below the ground state.
    pub condition_well: bool,
    /// `MG > 1` and `ME < 1`.
    pub condition_scale: bool,
    pub predicted: Prediction,
    pub note: String,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// `MG` and `ME` of `u` relative to the ground state.
pub fn scale_invariants(fun: &Functionals, gs: &GroundState, mass: f64, kinetic: f64, energy: f64) -> (f64, f64) {
    let ac = fun.exponents.alpha_c;
    let mg = (mass / gs.mass()).powf(0.5 * ac) * (kinetic / gs.kinetic()).sqrt();
    let me = (mass / gs.mass()).powf(ac) * (energy / gs.energy());
    (mg, me)
}

pub fn classify(fun: &Functionals, u0: &RadialField, gs: &GroundState) -> Result<Classification> {
    if fun.spec != *gs.spec() {
        return Err(Error::SpecMismatch(format!("datum spec {} vs ground state {}", fun.spec, gs.spec())));
    }
    let d = fun.diagnostics(u0, None, 0.0, 0.0);
    let m_hat = threshold_m(gs);
    let (mg, me) = scale_invariants(fun, gs, d.mass, d.kinetic, d.energy);
    let in_a_minus = d.virial < 0.0 && d.action < m_hat;
    let condition_well = in_a_minus;
    let condition_scale = mg > 1.0 && me < 1.0;
    let predicted = if condition_well || condition_scale { Prediction::BlowUp } else { Prediction::NoPrediction };
    Ok(Classification {
        virial: d.virial,
        virial_sign: sign(d.virial),
        action: d.action,
        m_hat,
        action_vs_m: d.action - m_hat,
        in_a_minus,
        mg,
        me,
        condition_well,
        condition_scale,
        predicted,
        note: "potential-well verdicts are conditional on m = S[φ]".into(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub samples: usize,
    /// Largest `ε` with `I + ε kinetic <= 0` at every sample (0 if none).
    pub epsilon_star: f64,
    pub boundary_case: bool,
    pub a_minus_violations: usize,
    pub well_violations: usize,
    pub mg_violations: usize,
    /// Lower bound on the kinetic term forced by `I < 0` and the GN inequality.
    pub kinetic_lower: f64,
    pub kinetic_lower_violations: usize,
    pub certificate: bool,
}

/// `kinetic > (2p / (B C M^{A/2}))^{2/(B-2)}` whenever `I < 0`.
pub fn kinetic_lower_bound(spec: &ProblemSpec, sharp_constant: f64, mass: f64) -> f64 {
    let e = derive_exponents(spec);
    let pw = spec.power();
    (2.0 * pw / (e.b * sharp_constant * mass.powf(0.5 * e.a))).powf(2.0 / (e.b - 2.0))
}

pub fn coercivity_monitor(fun: &Functionals, traj: &Trajectory, gs: &GroundState) -> Result<CoercivityReport> {
    let s = &traj.series;
    if s.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, have: s.len() });
    }
    let m_hat = threshold_m(gs);
    let b = fun.exponents.b;
    let feasible = |eps: f64| s.iter().all(|d| d.virial + eps * d.kinetic <= 0.0);
    let boundary_case = s.iter().all(|d| d.virial.abs() <= 1e-6 * d.kinetic);
    let mut epsilon_star = 0.0;
    if !boundary_case && feasible(0.0) {
        let (mut lo, mut hi) = (0.0, 1.0);
        if feasible(1.0) {
            lo = 1.0;
        } else {
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if feasible(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        epsilon_star = lo;
    }
    let well = s[0].virial < 0.0 && s[0].action < m_hat;
    let scale = {
        let (mg, me) = scale_invariants(fun, gs, s[0].mass, s[0].kinetic, s[0].energy);
        mg > 1.0 && me < 1.0
    };
    let mut a_minus_violations = 0;
    let mut well_violations = 0;
    let mut mg_violations = 0;
    let mut kinetic_lower_violations = 0;
    let kinetic_lower = kinetic_lower_bound(&fun.spec, gs.certificate.sharp_constant, s[0].mass);
    for d in s {
        if well && !(d.virial < 0.0 && d.action < m_hat) {
            a_minus_violations += 1;
        }
        if well && d.virial > -(b / 4.0) * (m_hat - d.action) + 1e-6 * m_hat {
            well_violations += 1;
        }
        if scale {
            let (mg, _) = scale_invariants(fun, gs, d.mass, d.kinetic, d.energy);
            if mg <= 1.0 {
                mg_violations += 1;
            }
        }
        if d.virial < 0.0 && d.kinetic < (1.0 - 1e-3) * kinetic_lower {
            kinetic_lower_violations += 1;
        }
    }
    let certificate = epsilon_star > 0.0 && a_minus_violations == 0 && mg_violations == 0;
    Ok(CoercivityReport {
        samples: s.len(),
        epsilon_star,
        boundary_case,
        a_minus_violations,
        well_violations,
        mg_violations,
        kinetic_lower,
        kinetic_lower_violations,
        certificate,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OdiReport {
    pub kappa: f64,
    pub window: (f64, f64),
    pub c_lower: f64,
    pub t_star_bound: f64,
    pub monotone_fraction: f64,
    /// The `s = 2` local exponent is inferred by analogy, not stated.
    pub exponent_inferred: bool,
}

pub fn odi_kappa(spec: &ProblemSpec) -> f64 {
    if spec.s == 1 {
        2.0
    } else {
        4.0
    }
}

/// Fits `f' >= c f^κ` on the final third of the samples and returns the
/// blow-up time of `f' = c f^κ` started from the last sample.
///
/// `fprime` holds exact derivative samples (for trajectories, the kinetic
/// term, which is the integrand of `f`).
pub fn odi_fit_series(t: &[f64], f: &[f64], fprime: &[f64], kappa: f64) -> Result<OdiReport> {
    let n = t.len();
    if n < 3 || f.len() != n || fprime.len() != n {
        return Err(Error::InsufficientSamples { needed: 3, have: n });
    }
    let start = 2 * n / 3;
    let mut c_lower = f64::INFINITY;
    for k in start..n {
        if f[k] > 0.0 {
            c_lower = c_lower.min(fprime[k] / f[k].powf(kappa));
        }
    }
    if !(c_lower > 0.0 && c_lower.is_finite()) {
        return Err(Error::DegenerateFit(if c_lower.is_finite() { c_lower } else { 0.0 }));
    }
    let good = (start..n)
        .filter(|&k| f[k] > 0.0 && fprime[k] > 0.0 && fprime[k] / f[k].powf(kappa) >= c_lower)
        .count();
    let last = n - 1;
    let t_star_bound = t[last] + f[last].powf(1.0 - kappa) / ((kappa - 1.0) * c_lower);
    Ok(OdiReport {
        kappa,
        window: (t[start], t[last]),
        c_lower,
        t_star_bound,
        monotone_fraction: good as f64 / (n - start) as f64,
        exponent_inferred: false,
    })
}

pub fn odi_fit(traj: &Trajectory, spec: &ProblemSpec) -> Result<OdiReport> {
    if !matches!(traj.verdict, Verdict::BlowupDetected { .. }) {
        return Err(Error::NoBlowupVerdict);
    }
    let t = traj.times();
    let k: Vec<f64> = traj.series.iter().map(|d| d.kinetic).collect();
    let mut rep = odi_fit_series(&t, &traj.f_series, &k, odi_kappa(spec))?;
    rep.exponent_inferred = spec.s == 2 && !spec.is_choquard();
    Ok(rep)
}

/// Radial Gaussian mixture `Σ a_k r^{2 e_k} exp(-r²/(2σ_k²))`, evaluated
/// analytically (so spatial rescaling needs no interpolation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub n: u32,
    /// `(a_k, σ_k, e_k)` with `e_k ∈ {0, 1}`.
    pub terms: Vec<(f64, f64, u32)>,
}

impl GaussianMixture {
    pub fn random(rng: &mut impl Rng, n: u32, max_terms: usize) -> Self {
        Self::random_with_widths(rng, n, max_terms, 0.4..2.0)
    }

    /// Like [`random`](Self::random) with `σ_k` drawn from `widths`. Narrow
    /// ranges keep rescaled copies clear of the outer boundary.
    pub fn random_with_widths(rng: &mut impl Rng, n: u32, max_terms: usize, widths: Range<f64>) -> Self {
        let k = rng.random_range(1..=max_terms);
        let terms = (0..k)
            .map(|i| {
                let a = if i == 0 { rng.random_range(0.5..1.5) } else { rng.random_range(-0.6..0.6) };
                let sigma = rng.random_range(widths.clone());
                let e = if i > 0 && rng.random_bool(0.4) { 1 } else { 0 };
                (a, sigma, e)
            })
            .collect();
        GaussianMixture { n, terms }
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, s, e)| a * r.powi(2 * e as i32) * (-0.5 * r * r / (s * s)).exp())
            .sum()
    }

    /// `u_ρ(r) = ρ^{N/2} u(ρ r)`, which preserves the mass.
    pub fn rescaled(&self, rho: f64) -> Self {
        let amp = rho.powf(0.5 * self.n as f64);
        let terms = self
            .terms
            .iter()
            .map(|&(a, s, e)| (a * amp * rho.powi(2 * e as i32), s / rho, e))
            .collect();
        GaussianMixture { n: self.n, terms }
    }

    pub fn sample(&self, grid: Arc<Grid>) -> RadialField {
        RadialField::from_real_fn(grid, |r| self.eval(r))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatumKind {
    ScaledGroundState { c: f64 },
    NehariRescaled { seed: u64 },
    Custom { path: PathBuf },
}

/// Amplitude `a` with `I[a u] = 0`, i.e. `a^{2p-2} = 2p kinetic / (B P)`.
pub fn nehari_amplitude(fun: &Functionals, u: &RadialField) -> Result<f64> {
    let k = fun.kinetic(&u.values);
    let p = fun.potential(&u.values);
    if !(p > 0.0) {
        return Err(Error::RescaleFailure("field has zero potential term".into()));
    }
    let pw = fun.spec.power();
    Ok((2.0 * pw * k / (fun.exponents.b * p)).powf(1.0 / (2.0 * pw - 2.0)))
}

pub fn build_datum(kind: &DatumKind, gs: Option<&GroundState>, fun: &Functionals) -> Result<RadialField> {
    let grid = fun.grid().clone();
    match kind {
        DatumKind::ScaledGroundState { c } => {
            let gs = gs.ok_or_else(|| Error::InvalidSpec("scaled ground state needs a ground state".into()))?;
            Ok(gs.field.scaled(*c))
        }
        DatumKind::NehariRescaled { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let u = GaussianMixture::random(&mut rng, grid.n, 4).sample(grid);
            let a = nehari_amplitude(fun, &u)?;
            Ok(u.scaled(a))
        }
        DatumKind::Custom { path } => {
            let u = crate::io::read_field(path)?;
            if u.grid.m != grid.m || u.grid.n != grid.n || (u.grid.r_max - grid.r_max).abs() > 1e-12 * grid.r_max {
                return Err(Error::FileFormat(format!(
                    "snapshot grid (M={}, r_max={}, N={}) does not match the run grid",
                    u.grid.m, u.grid.r_max, u.grid.n
                )));
            }
            Ok(RadialField { grid, values: u.values })
        }
    }
}
