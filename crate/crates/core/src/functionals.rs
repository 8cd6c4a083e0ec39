//! Scalar functionals, the nonlinear potential, and the Morawetz action.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{derive_exponents, DerivedExponents, Nonlinearity, ProblemSpec};
use crate::radial_grid::{riesz_kernel_weighted, Grid, KOperator, KScheme, RadialField, RieszKernel, Stencil};

/// One row of a diagnostics time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub time: f64,
    pub mass: f64,
    pub kinetic: f64,
    /// `P[u]` (Choquard) or `Q[u]` (local).
    pub potential: f64,
    pub energy: f64,
    /// `I[u]` or `J[u]`.
    pub virial: f64,
    pub action: f64,
    pub sup_norm: f64,
    pub morawetz: f64,
    pub dt: f64,
}

impl Diagnostics {
    pub const CSV_HEADER: &'static str =
        "t,mass,kinetic,potential,energy,virial,action,sup_norm,morawetz,dt";

    pub fn csv_row(&self) -> String {
        format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.time,
            self.mass,
            self.kinetic,
            self.potential,
            self.energy,
            self.virial,
            self.action,
            self.sup_norm,
            self.morawetz,
            self.dt
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let v: Vec<f64> = line
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::FileFormat(format!("bad diagnostics row: {e}")))?;
        if v.len() != 10 {
            return Err(Error::FileFormat(format!("expected 10 columns, got {}", v.len())));
        }
        Ok(Diagnostics {
            time: v[0],
            mass: v[1],
            kinetic: v[2],
            potential: v[3],
            energy: v[4],
            virial: v[5],
            action: v[6],
            sup_norm: v[7],
            morawetz: v[8],
            dt: v[9],
        })
    }
}

/// Truncated Morawetz weight `ξ_R(r) = R² ξ(r/R)`.
///
/// `ξ(ρ) = ρ²` on `ρ <= 1`. On `1 < ρ < ρ*` the ratio `ξ'(ρ)/ρ` falls from 2
/// to 0 along a quintic smoothstep, and `ξ` is constant beyond `ρ*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorawetzWeight {
    pub radius: f64,
    pub rho_star: f64,
}

pub const DEFAULT_RHO_STAR: f64 = 10.0;

pub fn make_weight(radius: f64) -> Result<MorawetzWeight> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidRadius(radius));
    }
    Ok(MorawetzWeight { radius, rho_star: DEFAULT_RHO_STAR })
}

fn smoothstep(x: f64) -> (f64, f64) {
    let x = x.clamp(0.0, 1.0);
    let s = x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
    let ds = 30.0 * x * x * (1.0 - x) * (1.0 - x);
    (s, ds)
}

impl MorawetzWeight {
    fn width(&self) -> f64 {
        self.rho_star - 1.0
    }

    /// Unscaled `ξ'(ρ)`.
    fn profile_prime(&self, rho: f64) -> f64 {
        if rho <= 1.0 {
            return 2.0 * rho;
        }
        if rho >= self.rho_star {
            return 0.0;
        }
        let (s, _) = smoothstep((rho - 1.0) / self.width());
        2.0 * rho * (1.0 - s)
    }

    fn profile_second(&self, rho: f64) -> f64 {
        if rho <= 1.0 {
            return 2.0;
        }
        if rho >= self.rho_star {
            return 0.0;
        }
        let d = self.width();
        let (s, ds) = smoothstep((rho - 1.0) / d);
        2.0 * (1.0 - s) - 2.0 * rho * ds / d
    }

    /// Unscaled `ξ(ρ)`: `1 + ∫_1^ρ ξ'` in closed form on the blend region.
    fn profile(&self, rho: f64) -> f64 {
        if rho <= 1.0 {
            return rho * rho;
        }
        let d = self.width();
        let x = ((rho - 1.0) / d).min(1.0);
        // ξ'(1 + d x) d = 2 d (1 + d x)(1 - 10x³ + 15x⁴ - 6x⁵), integrated in x.
        let c = [1.0, d, 0.0, -10.0, 15.0 - 10.0 * d, -6.0 + 15.0 * d, -6.0 * d];
        let mut acc = 0.0;
        for (k, ck) in c.iter().enumerate() {
            acc += ck * x.powi(k as i32 + 1) / (k as f64 + 1.0);
        }
        1.0 + 2.0 * d * acc
    }

    pub fn xi(&self, r: f64) -> f64 {
        self.radius * self.radius * self.profile(r / self.radius)
    }

    pub fn xi_prime(&self, r: f64) -> f64 {
        self.radius * self.profile_prime(r / self.radius)
    }

    pub fn xi_second(&self, r: f64) -> f64 {
        self.profile_second(r / self.radius)
    }
}

/// `2 Im Σ w_j ū_j ξ_R'(r_j) (∂_r u)_j` with centered differences (even ghost at
/// the origin, odd ghost at `r_max`).
pub fn morawetz_action(u: &RadialField, weight: &MorawetzWeight) -> f64 {
    let g = &u.grid;
    let v = &u.values;
    let m = v.len();
    let inv = 0.5 / g.h;
    let mut acc = 0.0;
    for j in 0..m {
        let left = if j == 0 { v[0] } else { v[j - 1] };
        let right = if j + 1 == m { -v[m - 1] } else { v[j + 1] };
        let du = (right - left) * inv;
        acc += g.weights[j] * weight.xi_prime(g.nodes[j]) * (v[j].conj() * du).im;
    }
    2.0 * acc
}

/// Everything needed to evaluate functionals of one spec on one grid.
#[derive(Debug, Clone)]
pub struct Functionals {
    pub spec: ProblemSpec,
    pub exponents: DerivedExponents,
    pub op: KOperator,
    kernel: Option<Arc<RieszKernel>>,
    /// `r^{-τ}` (Choquard) or `r^{-2τ}` (local).
    weight_pow: Vec<f64>,
}

impl Functionals {
    pub fn new(spec: &ProblemSpec, grid: Arc<Grid>) -> Result<Self> {
        Self::with_operator(spec, KOperator::new(spec, grid))
    }

    pub fn with_scheme(spec: &ProblemSpec, grid: Arc<Grid>, scheme: KScheme, stencil: Stencil) -> Result<Self> {
        Self::with_operator(spec, KOperator::with_options(spec, grid, scheme, stencil))
    }

    pub fn with_operator(spec: &ProblemSpec, op: KOperator) -> Result<Self> {
        let grid = op.grid().clone();
        let (kernel, e) = match spec.nonlinearity {
            Nonlinearity::Choquard { alpha, p } => {
                let beta = -spec.tau + p * spec.hardy_nu();
                (Some(Arc::new(riesz_kernel_weighted(&grid, alpha, beta)?)), spec.tau)
            }
            Nonlinearity::Local { .. } => (None, 2.0 * spec.tau),
        };
        let weight_pow = grid.nodes.iter().map(|r| r.powf(-e)).collect();
        Ok(Functionals { spec: *spec, exponents: derive_exponents(spec), op, kernel, weight_pow })
    }

    /// Reuses an existing kernel (it depends only on grid, α and β).
    pub fn with_kernel(spec: &ProblemSpec, op: KOperator, kernel: Option<Arc<RieszKernel>>) -> Self {
        let e = if spec.is_choquard() { spec.tau } else { 2.0 * spec.tau };
        let weight_pow = op.grid().nodes.iter().map(|r| r.powf(-e)).collect();
        Functionals { spec: *spec, exponents: derive_exponents(spec), op, kernel, weight_pow }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.op.grid()
    }

    pub fn kernel(&self) -> Option<&Arc<RieszKernel>> {
        self.kernel.as_ref()
    }

    pub fn mass(&self, u: &[Complex64]) -> f64 {
        self.grid().norm_sq(u)
    }

    pub fn kinetic(&self, u: &[Complex64]) -> f64 {
        self.op.quadratic_form(u)
    }

    /// `r^{-τ}|u|^p`, the Choquard density.
    pub fn density(&self, u: &[Complex64]) -> Vec<f64> {
        let p = self.spec.power();
        u.iter().zip(&self.weight_pow).map(|(z, w)| w * z.norm().powf(p)).collect()
    }

    /// `P[u]` or `Q[u]`.
    pub fn potential(&self, u: &[Complex64]) -> f64 {
        match &self.kernel {
            Some(k) => {
                let f = self.density(u);
                k.pair(&f, &f)
            }
            None => {
                let q2 = 2.0 * self.spec.power();
                let g = self.grid();
                u.iter()
                    .zip(&self.weight_pow)
                    .zip(&g.weights)
                    .map(|((z, c), w)| w * c * z.norm().powf(q2))
                    .sum()
            }
        }
    }

    /// `V(u) >= 0` with `F(x, u) = V u`; also returns `P[u]` or `Q[u]`.
    pub fn nonlinear_potential(&self, u: &[Complex64]) -> (Vec<f64>, f64) {
        let pw = self.spec.power();
        match &self.kernel {
            Some(k) => {
                let f = self.density(u);
                let sf = k.apply_s(&f);
                let pot = f.iter().zip(&sf).map(|(a, b)| a * b).sum();
                let g = self.grid();
                let v = u
                    .iter()
                    .zip(&self.weight_pow)
                    .zip(sf.iter().zip(&g.weights))
                    .map(|((z, c), (s, w))| c * z.norm().powf(pw - 2.0) * s / w)
                    .collect();
                (v, pot)
            }
            None => {
                let g = self.grid();
                let mut pot = 0.0;
                let v = u
                    .iter()
                    .zip(&self.weight_pow)
                    .zip(&g.weights)
                    .map(|((z, c), w)| {
                        let a = z.norm_sqr().powf(pw - 1.0);
                        pot += w * c * a * z.norm_sqr();
                        c * a
                    })
                    .collect();
                (v, pot)
            }
        }
    }

    /// Real nonlinearity `F(x, v)` for real `v`.
    pub fn nonlinearity_real(&self, v: &[f64]) -> Vec<f64> {
        let u: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let (pot, _) = self.nonlinear_potential(&u);
        pot.iter().zip(v).map(|(a, b)| a * b).collect()
    }

    pub fn energy_from(&self, kinetic: f64, potential: f64) -> f64 {
        kinetic - potential / self.spec.power()
    }

    pub fn virial_from(&self, kinetic: f64, potential: f64) -> f64 {
        kinetic - self.exponents.b / (2.0 * self.spec.power()) * potential
    }

    pub fn energy(&self, u: &[Complex64]) -> f64 {
        self.energy_from(self.kinetic(u), self.potential(u))
    }

    pub fn virial(&self, u: &[Complex64]) -> f64 {
        self.virial_from(self.kinetic(u), self.potential(u))
    }

    pub fn action(&self, u: &[Complex64]) -> f64 {
        self.energy(u) + self.mass(u)
    }

    pub fn diagnostics(&self, u: &RadialField, weight: Option<&MorawetzWeight>, time: f64, dt: f64) -> Diagnostics {
        let v = &u.values;
        let mass = self.mass(v);
        let kinetic = self.kinetic(v);
        let potential = self.potential(v);
        let energy = self.energy_from(kinetic, potential);
        let virial = self.virial_from(kinetic, potential);
        let action = energy + mass;
        debug_assert!((action - energy - mass).abs() <= 1e-12 * action.abs().max(mass));
        Diagnostics {
            time,
            mass,
            kinetic,
            potential,
            energy,
            virial,
            action,
            sup_norm: u.sup_norm(),
            morawetz: weight.map_or(0.0, |w| morawetz_action(u, w)),
            dt,
        }
    }
}

pub fn mass(u: &RadialField) -> f64 {
    u.grid.norm_sq(&u.values)
}

pub fn kinetic(spec: &ProblemSpec, u: &RadialField) -> f64 {
    KOperator::new(spec, u.grid.clone()).quadratic_form(&u.values)
}

pub fn potential_choquard(spec: &ProblemSpec, u: &RadialField) -> Result<f64> {
    if !spec.is_choquard() {
        return Err(Error::InvalidSpec("potential_choquard needs a Choquard spec".into()));
    }
    Ok(Functionals::new(spec, u.grid.clone())?.potential(&u.values))
}

pub fn potential_local(spec: &ProblemSpec, u: &RadialField) -> Result<f64> {
    if spec.is_choquard() {
        return Err(Error::InvalidSpec("potential_local needs a local spec".into()));
    }
    Ok(Functionals::new(spec, u.grid.clone())?.potential(&u.values))
}

pub fn diagnostics(spec: &ProblemSpec, u: &RadialField, radius: f64) -> Result<Diagnostics> {
    let f = Functionals::new(spec, u.grid.clone())?;
    let w = make_weight(radius)?;
    Ok(f.diagnostics(u, Some(&w), 0.0, 0.0))
}

/// Root-mean-square radius `(Σ w r²|u|² / Σ w |u|²)^{1/2}`.
pub fn rms_radius(u: &RadialField) -> f64 {
    let g = &u.grid;
    let num: f64 = g.weights.iter().zip(&g.nodes).zip(&u.values).map(|((w, r), z)| w * r * r * z.norm_sqr()).sum();
    (num / mass(u)).sqrt()
}
