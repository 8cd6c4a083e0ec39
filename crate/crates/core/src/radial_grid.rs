//! Cell-centered radial grid, the operators `Δ`, `K_{s,λ}`, the Riesz potential
//! and the eigenbasis used for exact linear propagation.

use crate::error::{Error, Result};
use crate::problem::ProblemSpec;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Surface area of the unit sphere in `R^N`.
pub fn sphere_area(n: u32) -> f64 {
    let h = n as f64 / 2.0;
    2.0 * PI.powf(h) / libm::tgamma(h)
}

/// Normalization `c_{N,α}` of the Riesz potential `J_α = c_{N,α} |x|^{α-N}`.
pub fn riesz_constant(n: u32, alpha: f64) -> f64 {
    let nf = n as f64;
    libm::tgamma((nf - alpha) / 2.0)
        / (libm::tgamma(alpha / 2.0) * PI.powf(nf / 2.0) * 2f64.powf(alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub m: usize,
    pub r_max: f64,
    pub n: u32,
    pub h: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Builds the grid `r_j = (j + 1/2) h` with weights `ω_N r_j^{N-1} h`.
///
/// Four cells is the minimum the fourth-order stencils and the cubic
/// interpolation of the Riesz quadrature can work with.
pub fn make_grid(m: usize, r_max: f64, n: u32) -> Result<Grid> {
    if m < 4 {
        return Err(Error::InvalidResolution(format!("M = {m} < 4")));
    }
    if !(r_max.is_finite() && r_max > 0.0) {
        return Err(Error::InvalidResolution(format!("r_max = {r_max} must be positive")));
    }
    if n == 0 {
        return Err(Error::InvalidResolution("N must be at least 1".into()));
    }
    let h = r_max / m as f64;
    let omega = sphere_area(n);
    let nodes: Vec<f64> = (0..m).map(|j| (j as f64 + 0.5) * h).collect();
    let weights = nodes.iter().map(|&r| omega * r.powi(n as i32 - 1) * h).collect();
    Ok(Grid { m, r_max, n, h, nodes, weights })
}

impl Grid {
    /// `Σ w_j g(r_j)`.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&r, &w)| w * g(r)).sum()
    }

    /// `Σ w_j f_j g_j` for real samples.
    pub fn dot(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights.iter().zip(f).zip(g).map(|((w, a), b)| w * a * b).sum()
    }

    /// `Re Σ w_j f_j conj(g_j)`.
    pub fn dot_c(&self, f: &[Complex64], g: &[Complex64]) -> f64 {
        self.weights
            .iter()
            .zip(f)
            .zip(g)
            .map(|((w, a), b)| w * (a.re * b.re + a.im * b.im))
            .sum()
    }

    pub fn norm_sq(&self, f: &[Complex64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, a)| w * a.norm_sqr()).sum()
    }
}

/// Complex radial profile sampled at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    pub grid: Arc<Grid>,
    pub values: Vec<Complex64>,
}

impl RadialField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let m = grid.m;
        RadialField { grid, values: vec![Complex64::new(0.0, 0.0); m] }
    }

    pub fn from_real(grid: Arc<Grid>, values: &[f64]) -> Self {
        assert_eq!(values.len(), grid.m);
        RadialField { grid, values: values.iter().map(|&v| Complex64::new(v, 0.0)).collect() }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid.nodes.iter().map(|&r| f(r)).collect();
        RadialField { grid, values }
    }

    pub fn from_real_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |r| Complex64::new(f(r), 0.0))
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.im).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        RadialField { grid: self.grid.clone(), values: self.values.iter().map(|z| z * c).collect() }
    }

    pub fn conj(&self) -> Self {
        RadialField { grid: self.grid.clone(), values: self.values.iter().map(|z| z.conj()).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn map_parts(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let re = f(&self.re());
        let im = f(&self.im());
        let values = re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect();
        RadialField { grid: self.grid.clone(), values }
    }
}

/// Order of the staggered first-derivative stencil underlying every operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    /// Two-point flux. Face weights are chosen so that `Δ_h r² = 2d` holds in
    /// every cell; for `d = 3` this is the centered 3-point radial Laplacian.
    Second,
    /// Four-point flux `[27(u_{k+1}-u_k) - (u_{k+2}-u_{k-1})]/(24h)`.
    #[default]
    Fourth,
}

/// How the inverse-square term enters `K_{1,λ}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KScheme {
    /// `K u = -r^ν Δ^{(N+2ν)} (r^{-ν} u)`: same operator, but regular at the
    /// origin for data behaving like `r^ν`.
    #[default]
    HardyFactored,
    /// `K u = -Δ u + λ u / r²` pointwise.
    Direct,
}

/// Radial Laplacian in conservative flux form `Δ_h = -W^{-1} Dᵀ W_f D`.
///
/// `D` maps cell values to flux points `(k+1) h`. Ghost cells are even across
/// the origin and odd across `r_max` (zero Dirichlet value at `r_max`). The
/// operator is symmetric for `Σ W_j f_j g_j`, with `W_j = r_j^{d-1}`.
#[derive(Debug, Clone)]
pub struct FluxLaplacian {
    m: usize,
    h: f64,
    stencil: Stencil,
    flux_w: Vec<f64>,
    cell_w: Vec<f64>,
}

impl FluxLaplacian {
    /// `dim` may be fractional (the Hardy-factored operator uses `N + 2ν`).
    pub fn new(grid: &Grid, dim: f64, stencil: Stencil) -> Self {
        let h = grid.h;
        let cell_w: Vec<f64> = grid.nodes.iter().map(|&r| r.powf(dim - 1.0)).collect();
        let flux_w = match stencil {
            Stencil::Fourth => (0..grid.m).map(|k| ((k + 1) as f64 * h).powf(dim - 1.0)).collect(),
            Stencil::Second => {
                let mut acc = 0.0;
                cell_w
                    .iter()
                    .enumerate()
                    .map(|(k, w)| {
                        acc += w;
                        dim * h * acc / ((k + 1) as f64 * h)
                    })
                    .collect()
            }
        };
        FluxLaplacian { m: grid.m, h, stencil, flux_w, cell_w }
    }

    fn taps(&self) -> &'static [(isize, f64)] {
        match self.stencil {
            Stencil::Second => &[(0, -1.0), (1, 1.0)],
            Stencil::Fourth => {
                &[(-1, 1.0 / 24.0), (0, -27.0 / 24.0), (1, 27.0 / 24.0), (2, -1.0 / 24.0)]
            }
        }
    }

    /// Folds a possibly out-of-range index back into the grid with its sign.
    #[inline]
    fn fold(&self, j: isize) -> (usize, f64) {
        let m = self.m as isize;
        if j < 0 {
            ((-j - 1) as usize, 1.0)
        } else if j >= m {
            ((2 * m - 1 - j) as usize, -1.0)
        } else {
            (j as usize, 1.0)
        }
    }

    /// Staggered derivative at the flux points `(k+1) h`.
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let taps = self.taps();
        let inv_h = 1.0 / self.h;
        (0..self.m)
            .map(|k| {
                let mut acc = 0.0;
                for &(off, c) in taps {
                    let (j, sg) = self.fold(k as isize + off);
                    acc += c * sg * u[j];
                }
                acc * inv_h
            })
            .collect()
    }

    fn gradient_transpose(&self, g: &[f64]) -> Vec<f64> {
        let taps = self.taps();
        let inv_h = 1.0 / self.h;
        let mut out = vec![0.0; self.m];
        for k in 0..self.m {
            for &(off, c) in taps {
                let (j, sg) = self.fold(k as isize + off);
                out[j] += c * sg * g[k] * inv_h;
            }
        }
        out
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut flux = self.gradient(u);
        for (f, w) in flux.iter_mut().zip(&self.flux_w) {
            *f *= w;
        }
        let mut out = self.gradient_transpose(&flux);
        for (o, w) in out.iter_mut().zip(&self.cell_w) {
            *o = -*o / w;
        }
        out
    }

    /// `Σ_k W_f,k |(D u)_k|²`, so that `-Σ W_j (Δ_h u)_j u_j` equals this value.
    pub fn dirichlet_form(&self, u: &[f64]) -> f64 {
        self.gradient(u).iter().zip(&self.flux_w).map(|(d, w)| w * d * d).sum()
    }

    pub fn flux_weights(&self) -> &[f64] {
        &self.flux_w
    }
}

/// `Δ_h` of the ambient dimension with the default stencil.
pub fn apply_laplacian(f: &RadialField) -> RadialField {
    apply_laplacian_with(f, Stencil::default())
}

pub fn apply_laplacian_with(f: &RadialField, stencil: Stencil) -> RadialField {
    let lap = FluxLaplacian::new(&f.grid, f.grid.n as f64, stencil);
    f.map_parts(|u| lap.apply(u))
}

/// Discretized `K_{s,λ}` on a fixed grid.
#[derive(Debug, Clone)]
pub struct KOperator {
    pub s: u32,
    pub lambda: f64,
    pub nu: f64,
    pub scheme: KScheme,
    grid: Arc<Grid>,
    lap: FluxLaplacian,
    r_nu: Vec<f64>,
    inv_r2: Vec<f64>,
}

impl KOperator {
    pub fn new(spec: &ProblemSpec, grid: Arc<Grid>) -> Self {
        Self::with_options(spec, grid, KScheme::default(), Stencil::default())
    }

    pub fn with_options(
        spec: &ProblemSpec,
        grid: Arc<Grid>,
        scheme: KScheme,
        stencil: Stencil,
    ) -> Self {
        let lambda = spec.effective_lambda();
        let nu = if spec.s == 1 && scheme == KScheme::HardyFactored { spec.hardy_nu() } else { 0.0 };
        let lap = FluxLaplacian::new(&grid, grid.n as f64 + 2.0 * nu, stencil);
        let r_nu = grid.nodes.iter().map(|&r| r.powf(nu)).collect();
        let inv_r2 = grid.nodes.iter().map(|&r| 1.0 / (r * r)).collect();
        KOperator { s: spec.s, lambda, nu, scheme, grid, lap, r_nu, inv_r2 }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn direct_potential(&self) -> bool {
        self.s == 1 && self.scheme == KScheme::Direct && self.lambda != 0.0
    }

    pub fn apply_real(&self, u: &[f64]) -> Vec<f64> {
        if self.s == 2 {
            let lu = self.lap.apply(u);
            return self.lap.apply(&lu);
        }
        if self.nu != 0.0 {
            let v: Vec<f64> = u.iter().zip(&self.r_nu).map(|(a, b)| a / b).collect();
            return self.lap.apply(&v).iter().zip(&self.r_nu).map(|(a, b)| -a * b).collect();
        }
        let mut out: Vec<f64> = self.lap.apply(u).into_iter().map(|x| -x).collect();
        if self.direct_potential() {
            for ((o, x), ir2) in out.iter_mut().zip(u).zip(&self.inv_r2) {
                *o += self.lambda * x * ir2;
            }
        }
        out
    }

    pub fn apply(&self, f: &RadialField) -> RadialField {
        f.map_parts(|u| self.apply_real(u))
    }

    /// `⟨K_h u, u⟩_w` evaluated as a sum of squares (nonnegative for `λ >= 0`).
    pub fn quadratic_form(&self, u: &[Complex64]) -> f64 {
        let re: Vec<f64> = u.iter().map(|z| z.re).collect();
        let im: Vec<f64> = u.iter().map(|z| z.im).collect();
        self.quadratic_form_real(&re) + self.quadratic_form_real(&im)
    }

    pub fn quadratic_form_real(&self, u: &[f64]) -> f64 {
        let g = &self.grid;
        let scale = sphere_area(g.n) * g.h;
        if self.s == 2 {
            let lu = self.lap.apply(u);
            return g.dot(&lu, &lu);
        }
        if self.nu != 0.0 {
            let v: Vec<f64> = u.iter().zip(&self.r_nu).map(|(a, b)| a / b).collect();
            return scale * self.lap.dirichlet_form(&v);
        }
        let mut q = scale * self.lap.dirichlet_form(u);
        if self.direct_potential() {
            q += self.lambda * g.integrate_samples(u, &self.inv_r2);
        }
        q
    }

    /// Dense `D^{1/2} K_h D^{-1/2}` with `D = diag(w)`, explicitly symmetrized.
    pub fn symmetric_matrix(&self) -> DMatrix<f64> {
        let m = self.grid.m;
        let sw: Vec<f64> = self.grid.weights.iter().map(|w| w.sqrt()).collect();
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut e = vec![0.0; m];
        for j in 0..m {
            e[j] = 1.0;
            let col = self.apply_real(&e);
            for i in 0..m {
                if col[i] != 0.0 {
                    a[(i, j)] = sw[i] * col[i] / sw[j];
                }
            }
            e[j] = 0.0;
        }
        let at = a.transpose();
        (a + at) * 0.5
    }

    /// Operator whose square is `K_h` when `s = 2` (the plain `-Δ_h`).
    fn root_operator(&self) -> KOperator {
        let spec = ProblemSpec::local(1, self.grid.n, 0.0, 0.5, 1.5);
        KOperator::with_options(&spec, self.grid.clone(), KScheme::Direct, self.lap.stencil)
    }
}

impl KOperator {
    /// Half-width of the band of `K_h`.
    pub fn bandwidth(&self) -> usize {
        let one = match self.lap.stencil {
            Stencil::Second => 1,
            Stencil::Fourth => 3,
        };
        if self.s == 2 {
            2 * one
        } else {
            one
        }
    }

    /// `K_h` as a band matrix, probed with comb vectors.
    pub fn band(&self) -> BandMatrix {
        let m = self.grid.m;
        let bw = self.bandwidth();
        let period = 2 * bw + 1;
        let mut data = vec![0.0; m * period];
        for r in 0..period {
            let e: Vec<f64> = (0..m).map(|j| if j % period == r { 1.0 } else { 0.0 }).collect();
            let col = self.apply_real(&e);
            for (i, v) in col.iter().enumerate() {
                // The unique column `j ≡ r` within reach of row `i`.
                let lo = i.saturating_sub(bw);
                let j = lo + (r + period - lo % period) % period;
                if j < m && j <= i + bw {
                    data[i * period + j + bw - i] = *v;
                }
            }
        }
        BandMatrix { m, bw, data }
    }
}

/// Row-major band storage: entry `(i, j)` lives at `i (2b+1) + j + b - i`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    pub m: usize,
    pub bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.data[i * (2 * self.bw + 1) + j + self.bw - i]
        }
    }

    pub fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        let (m, bw) = (self.m, self.bw);
        (0..m)
            .map(|i| {
                let lo = i.saturating_sub(bw);
                let hi = (i + bw).min(m - 1);
                (lo..=hi).map(|j| u[j] * self.data[i * (2 * bw + 1) + j + bw - i]).sum()
            })
            .collect()
    }

    /// LU factors of `I + i c K_h`. No pivoting is needed: a diagonal
    /// similarity makes the matrix complex symmetric with identity Hermitian part.
    pub fn shifted_lu(&self, c: f64) -> BandLu {
        let (m, bw) = (self.m, self.bw);
        let width = 2 * bw + 1;
        let idx = |i: usize, j: usize| i * width + j + bw - i;
        let mut a: Vec<Complex64> = self.data.iter().map(|&x| Complex64::new(0.0, c * x)).collect();
        for i in 0..m {
            a[idx(i, i)] += 1.0;
        }
        for k in 0..m {
            let pivot = a[idx(k, k)];
            let hi = (k + bw).min(m - 1);
            for i in k + 1..=hi {
                let l = a[idx(i, k)] / pivot;
                a[idx(i, k)] = l;
                for j in k + 1..=hi {
                    let t = a[idx(k, j)];
                    a[idx(i, j)] -= l * t;
                }
            }
        }
        BandLu { m, bw, lu: a }
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    m: usize,
    bw: usize,
    lu: Vec<Complex64>,
}

impl BandLu {
    pub fn solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        let (m, bw) = (self.m, self.bw);
        let width = 2 * bw + 1;
        let idx = |i: usize, j: usize| i * width + j + bw - i;
        let mut x = rhs.to_vec();
        for i in 0..m {
            let lo = i.saturating_sub(bw);
            let mut acc = x[i];
            for j in lo..i {
                acc -= self.lu[idx(i, j)] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..m).rev() {
            let hi = (i + bw).min(m - 1);
            let mut acc = x[i];
            for j in i + 1..=hi {
                acc -= self.lu[idx(i, j)] * x[j];
            }
            x[i] = acc / self.lu[idx(i, i)];
        }
        x
    }
}

impl Grid {
    /// `Σ w_j u_j² c_j` for a real profile `u` and per-node factor `c`.
    pub fn integrate_samples(&self, u: &[f64], c: &[f64]) -> f64 {
        self.weights.iter().zip(u).zip(c).map(|((w, x), k)| w * x * x * k).sum()
    }
}

/// `K_{s,λ}` with the default discretization.
pub fn apply_k(spec: &ProblemSpec, f: &RadialField) -> RadialField {
    KOperator::new(spec, f.grid.clone()).apply(f)
}

/// Spectral decomposition of `K_h` in the weighted inner product.
///
/// `eigenvectors` is orthonormal in the Euclidean sense for the symmetrized
/// matrix; the `w`-orthonormal eigenvectors of `K_h` are `D^{-1/2}` times its columns.
#[derive(Debug, Clone)]
pub struct OperatorFactorization {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    sqrt_w: Vec<f64>,
}

/// Eigendecomposition of `K_h`. For `s = 2` the plain `-Δ_h` is decomposed and
/// its eigenvalues squared, which keeps the small eigenvalues accurate.
pub fn factorize_k(spec: &ProblemSpec, grid: Arc<Grid>) -> Result<OperatorFactorization> {
    factorize_operator(&KOperator::new(spec, grid))
}

pub fn factorize_operator(op: &KOperator) -> Result<OperatorFactorization> {
    let base = if op.s == 2 { op.root_operator() } else { op.clone() };
    let a = base.symmetric_matrix();
    let m = a.nrows();
    let eig = SymmetricEigen::try_new(a, 1e-15, 100 * m)
        .ok_or_else(|| Error::FactorizationFailure(format!("eigensolver did not converge (M = {m})")))?;
    let mut order: Vec<usize> = (0..m).collect();
    let vals: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| if op.s == 2 { l * l } else { l })
        .collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::FactorizationFailure("non-finite eigenvalue".into()));
    }
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    let eigenvalues = order.iter().map(|&i| vals[i]).collect();
    let mut eigenvectors = DMatrix::<f64>::zeros(m, m);
    for (c, &i) in order.iter().enumerate() {
        eigenvectors.set_column(c, &eig.eigenvectors.column(i));
    }
    let sqrt_w = op.grid().weights.iter().map(|w| w.sqrt()).collect();
    Ok(OperatorFactorization { eigenvalues, eigenvectors, sqrt_w })
}

impl OperatorFactorization {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |a, &b| a.max(b.abs()))
    }

    /// Coefficients of `u` in the eigenbasis (real and imaginary parts as two columns).
    fn to_spectral(&self, u: &[Complex64]) -> DMatrix<f64> {
        let m = self.len();
        let x = DMatrix::from_fn(m, 2, |i, c| {
            let z = u[i] * self.sqrt_w[i];
            if c == 0 {
                z.re
            } else {
                z.im
            }
        });
        self.eigenvectors.tr_mul(&x)
    }

    fn from_spectral(&self, c: &DMatrix<f64>) -> Vec<Complex64> {
        let y = &self.eigenvectors * c;
        (0..self.len())
            .map(|i| Complex64::new(y[(i, 0)], y[(i, 1)]) / self.sqrt_w[i])
            .collect()
    }

    /// `g(K_h) u` for a complex spectral multiplier `g`.
    pub fn apply_function(&self, u: &[Complex64], g: impl Fn(f64) -> Complex64) -> Vec<Complex64> {
        let mut c = self.to_spectral(u);
        for (k, &l) in self.eigenvalues.iter().enumerate() {
            let z = Complex64::new(c[(k, 0)], c[(k, 1)]) * g(l);
            c[(k, 0)] = z.re;
            c[(k, 1)] = z.im;
        }
        self.from_spectral(&c)
    }

    /// `g(K_h) u` for a real multiplier and real `u`.
    pub fn apply_real_function(&self, u: &[f64], g: impl Fn(f64) -> f64) -> Vec<f64> {
        let m = self.len();
        let x = nalgebra::DVector::from_fn(m, |i, _| u[i] * self.sqrt_w[i]);
        let mut c = self.eigenvectors.tr_mul(&x);
        for (k, &l) in self.eigenvalues.iter().enumerate() {
            c[k] *= g(l);
        }
        let y = &self.eigenvectors * c;
        (0..m).map(|i| y[i] / self.sqrt_w[i]).collect()
    }

    /// Exact linear propagator `exp(-i t K_h)`.
    pub fn propagate(&self, u: &[Complex64], t: f64) -> Vec<Complex64> {
        self.apply_function(u, |l| Complex64::from_polar(1.0, -t * l))
    }

    /// `(K_h + shift)^{-1}` on real data.
    pub fn resolve_real(&self, u: &[f64], shift: f64) -> Vec<f64> {
        self.apply_real_function(u, |l| 1.0 / (l + shift))
    }

    /// Frobenius norm of `A - VΛVᵀ` relative to the spectral radius of `A`,
    /// with `A` the symmetrized `K_h`; bounds the weighted operator-norm defect.
    pub fn reconstruction_defect(&self, op: &KOperator) -> f64 {
        let a = op.symmetric_matrix();
        let m = self.len();
        let mut scaled = self.eigenvectors.clone();
        for c in 0..m {
            let l = self.eigenvalues[c];
            scaled.column_mut(c).scale_mut(l);
        }
        let rec = scaled * self.eigenvectors.transpose();
        (a - rec).norm() / self.max_eigenvalue()
    }
}

/// Spherical mean of `|x - y|^{α-N}` over `|y| = rho`, for `|x| = r`.
///
/// Uses the hypergeometric series in `t = min/max` when `t² <= 1/2`; otherwise
/// the distance-variable integral, exactly for odd `N` and by double-exponential
/// quadrature for even `N`.
pub fn angular_average(n: u32, alpha: f64, r: f64, rho: f64) -> f64 {
    let (big, small) = if r >= rho { (r, rho) } else { (rho, r) };
    let t = small / big;
    let mu = n as f64 - alpha;
    if t * t <= 0.5 {
        return big.powf(-mu) * hyp2f1(mu / 2.0, 1.0 - alpha / 2.0, n as f64 / 2.0, t * t);
    }
    let sum = r + rho;
    let diff = (r - rho).abs();
    let pref = sphere_ratio(n) / (r * rho);
    if n % 2 == 1 {
        pref * odd_distance_integral(n, alpha, sum, diff, r * rho)
    } else {
        let e = (n as f64 - 3.0) / 2.0;
        let four = 4.0 * r * r * rho * rho;
        let f = |d: f64| {
            let g = ((d * d - diff * diff) * (sum * sum - d * d) / four).max(0.0);
            d.powf(alpha - n as f64 + 1.0) * g.powf(e)
        };
        pref * tanh_sinh(f, diff, sum, 1e-14)
    }
}

/// `ω_{N-1} / ω_N`.
fn sphere_ratio(n: u32) -> f64 {
    let nf = n as f64;
    libm::tgamma(nf / 2.0) / (PI.sqrt() * libm::tgamma((nf - 1.0) / 2.0))
}

/// Gauss hypergeometric series, `|z| < 1`.
fn hyp2f1(a: f64, b: f64, c: f64, z: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..2000 {
        let kf = k as f64;
        term *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * z;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// `∫_δ^S d^{α-N+1} [(d²-δ²)(S²-d²)/(4 r² ρ²)]^{(N-3)/2} dd` for odd `N`.
fn odd_distance_integral(n: u32, alpha: f64, sum: f64, diff: f64, rr: f64) -> f64 {
    let m = ((n - 3) / 2) as usize;
    let (d2, s2) = (diff * diff, sum * sum);
    // Coefficients in x = d² of (x - δ²)^m (S² - x)^m.
    let mut left = vec![0.0; m + 1];
    let mut right = vec![0.0; m + 1];
    for i in 0..=m {
        let bin = binomial(m, i);
        left[i] = bin * (-d2).powi((m - i) as i32);
        right[i] = bin * s2.powi((m - i) as i32) * if i % 2 == 0 { 1.0 } else { -1.0 };
    }
    let mut total = 0.0;
    for i in 0..=m {
        for k in 0..=m {
            let c = left[i] * right[k];
            let e = alpha - n as f64 + 1.0 + 2.0 * (i + k) as f64;
            let piece = if (e + 1.0).abs() < 1e-12 {
                (sum / diff).ln()
            } else {
                (sum.powf(e + 1.0) - diff.powf(e + 1.0)) / (e + 1.0)
            };
            total += c * piece;
        }
    }
    total / (4.0 * rr * rr).powi(m as i32)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Double-exponential quadrature on `[a, b]`, tolerant of endpoint singularities.
pub(crate) fn tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let half = 0.5 * (b - a);
    let eval = |t: f64| -> f64 {
        let u = 0.5 * PI * t.sinh();
        let w = 0.5 * PI * t.cosh() / (u.cosh() * u.cosh());
        // Distance to the nearer endpoint, computed without cancellation.
        let gap = 2.0 * half / ((2.0 * u.abs()).exp() + 1.0);
        let x = if t >= 0.0 { b - gap } else { a + gap };
        if gap <= 0.0 || x <= a || x >= b {
            return 0.0;
        }
        let v = f(x);
        if v.is_finite() {
            w * v
        } else {
            0.0
        }
    };
    let tmax = 3.5;
    let mut h = 0.5;
    let mut sum = eval(0.0);
    let mut k = 1;
    while (k as f64) * h <= tmax {
        sum += eval(k as f64 * h) + eval(-(k as f64) * h);
        k += 1;
    }
    let mut est = sum * h * half;
    for _ in 0..8 {
        h *= 0.5;
        let mut add = 0.0;
        let mut k = 1;
        while (k as f64) * h <= tmax {
            add += eval(k as f64 * h) + eval(-(k as f64) * h);
            k += 2;
        }
        sum += add;
        let next = sum * h * half;
        let done = (next - est).abs() <= tol * next.abs();
        est = next;
        if done {
            break;
        }
    }
    est
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            let dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                let dp = {
                    let (mut p0, mut p1) = (1.0, 0.0);
                    for j in 0..n {
                        let p2 = p1;
                        p1 = p0;
                        p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
                    }
                    n as f64 * (z * p0 - p1) / (z * z - 1.0)
                };
                x[i] = -z;
                w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
                break;
            }
        }
    }
    (x, w)
}

/// Discrete Riesz potential `g ↦ J_α ∗ g` for radial `g`.
///
/// Stored as the symmetric matrix `S` with `fᵀ S g ≈ ∫∫ f(x) J_α(x-y) g(y)`, so
/// `G = diag(w)^{-1} S` and `G_ij w_i = G_ji w_j` hold exactly. `S` is built by
/// product integration: the radial density `g(r) r^{N-1}` is interpolated by a
/// power of `r` times a cubic on the node lattice, extended by parity across the
/// origin and by zeros past `r_max`, then integrated against the kernel with
/// Gauss–Legendre points per cell. The singular same-cell block is split along
/// the diagonal.
#[derive(Debug, Clone)]
pub struct RieszKernel {
    pub alpha: f64,
    pub beta: f64,
    n: u32,
    m: usize,
    s: Vec<f64>,
    weights: Vec<f64>,
}

/// Riesz kernel for smooth samples (`β = 0`).
pub fn riesz_kernel(grid: &Grid, alpha: f64) -> Result<RieszKernel> {
    riesz_kernel_weighted(grid, alpha, 0.0)
}

/// Riesz kernel for samples behaving like `r^β × smooth` near the origin.
pub fn riesz_kernel_weighted(grid: &Grid, alpha: f64, beta: f64) -> Result<RieszKernel> {
    let n = grid.n;
    if !(alpha > 0.0 && alpha < n as f64) {
        return Err(Error::AlphaOutOfRange { alpha, n });
    }
    let m = grid.m;
    let h = grid.h;
    let omega = sphere_area(n);
    let cst = riesz_constant(n, alpha);
    let nq = 4;
    let (gx, gw) = gauss_legendre(nq);
    // Interpolants of the zero-extended density reach two cells past r_max.
    let cells = m + 2;

    struct Pt {
        x: f64,
        wq: f64,
        cell: usize,
        st: Interp,
    }
    let mut pts = Vec::with_capacity(cells * nq);
    for c in 0..cells {
        for k in 0..nq {
            let x = (c as f64 + 0.5 * (gx[k] + 1.0)) * h;
            let wq = omega * gw[k] * 0.5 * h;
            pts.push(Pt { x, wq, cell: c, st: interp_row(grid, x, c, beta) });
        }
    }
    let np = pts.len();

    // T = A Φ over pairs in different cells, using the symmetry of A.
    let t = (0..np)
        .into_par_iter()
        .fold(
            || vec![0.0; np * m],
            |mut t, q| {
                let pq = &pts[q];
                for qq in q + 1..np {
                    let pp = &pts[qq];
                    if pp.cell == pq.cell {
                        continue;
                    }
                    let a = cst * angular_average(n, alpha, pq.x, pp.x) * pq.wq * pp.wq;
                    let row = &mut t[q * m..(q + 1) * m];
                    for l in 0..pp.st.len {
                        row[pp.st.idx[l]] += a * pp.st.coef[l];
                    }
                    let row = &mut t[qq * m..(qq + 1) * m];
                    for l in 0..pq.st.len {
                        row[pq.st.idx[l]] += a * pq.st.coef[l];
                    }
                }
                t
            },
        )
        .reduce(
            || vec![0.0; np * m],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );

    let mut s = vec![0.0; m * m];
    for (q, p) in pts.iter().enumerate() {
        let row = &t[q * m..(q + 1) * m];
        for l in 0..p.st.len {
            let c = p.st.coef[l];
            let target = &mut s[p.st.idx[l] * m..(p.st.idx[l] + 1) * m];
            for (d, v) in target.iter_mut().zip(row) {
                *d += c * v;
            }
        }
    }
    drop(t);

    // Same-cell blocks: integrate over ρ < x and add the transpose. The two
    // points may sit on different interpolation stencils.
    let nt = 10;
    let (tx, tw) = gauss_legendre(nt);
    for c in 0..cells {
        let a0 = c as f64 * h;
        for k in 0..nt {
            let x = a0 + 0.5 * (tx[k] + 1.0) * h;
            let xw = tw[k] * 0.5 * h;
            let sx = interp_row(grid, x, c, beta);
            for l in 0..nt {
                let rho = a0 + (x - a0) * 0.5 * (tx[l] + 1.0);
                let rw = tw[l] * 0.5 * (x - a0);
                let sr = interp_row(grid, rho, c, beta);
                let ww = xw * rw * omega * omega * cst * angular_average(n, alpha, x, rho);
                for i in 0..sx.len {
                    for j in 0..sr.len {
                        let v = sx.coef[i] * ww * sr.coef[j];
                        s[sx.idx[i] * m + sr.idx[j]] += v;
                        s[sr.idx[j] * m + sx.idx[i]] += v;
                    }
                }
            }
        }
    }
    for i in 0..m {
        for j in i + 1..m {
            let v = 0.5 * (s[i * m + j] + s[j * m + i]);
            s[i * m + j] = v;
            s[j * m + i] = v;
        }
    }
    Ok(RieszKernel { alpha, beta, n, m, s, weights: grid.weights.clone() })
}

/// Interpolation weights on the real nodes; ghosts are folded in.
struct Interp {
    len: usize,
    idx: [usize; 4],
    coef: [f64; 4],
}

/// Weights at `x` (inside cell `cell`) with `F(x) x^{N-1} ≈ Σ coef_l F_{idx_l}`.
///
/// Writes `F(x) x^{N-1} = x^e H(x)` with `H` smooth on the line and of parity
/// `(-1)^k`: for `β = 0`, `k = N-1` and `e = 0`, so every node gets a translate
/// of one test function; otherwise `k = 0` and `e = β + N - 1`. `H` is the
/// cubic through four lattice points `y_k = (k + ½)h`, with ghost values from
/// the parity for `k < 0` and zero for `k ≥ M`.
fn interp_row(grid: &Grid, x: f64, cell: usize, beta: f64) -> Interp {
    let m = grid.m as isize;
    let h = grid.h;
    let first = if x < (cell as f64 + 0.5) * h { cell as isize - 2 } else { cell as isize - 1 };
    let k_pow: i32 = if beta == 0.0 { grid.n as i32 - 1 } else { 0 };
    let ex = beta + grid.n as f64 - 1.0 - k_pow as f64;
    let xb = if ex == 0.0 { 1.0 } else { x.powf(ex) };
    let odd = k_pow % 2 == 1;
    let mut st = Interp { len: 0, idx: [0; 4], coef: [0.0; 4] };
    for k in first..first + 4 {
        let (j, sign) = if k < 0 {
            ((-k - 1) as usize, if odd { -1.0 } else { 1.0 })
        } else if k < m {
            (k as usize, 1.0)
        } else {
            continue;
        };
        let yk = (k as f64 + 0.5) * h;
        let mut lag = 1.0;
        for kk in first..first + 4 {
            if kk != k {
                lag *= (x - (kk as f64 + 0.5) * h) / (yk - (kk as f64 + 0.5) * h);
            }
        }
        let rj = grid.nodes[j];
        let scale = rj.powf(k_pow as f64 - beta);
        let c = sign * xb * lag * scale;
        if let Some(l) = st.idx[..st.len].iter().position(|&i| i == j) {
            st.coef[l] += c;
        } else {
            st.idx[st.len] = j;
            st.coef[st.len] = c;
            st.len += 1;
        }
    }
    st
}

impl RieszKernel {
    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn dimension(&self) -> u32 {
        self.n
    }

    /// `(S g)_i`.
    pub fn apply_s(&self, g: &[f64]) -> Vec<f64> {
        let m = self.m;
        (0..m)
            .map(|i| self.s[i * m..(i + 1) * m].iter().zip(g).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `(J_α ∗ g)(r_i)`.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        self.apply_s(g).iter().zip(&self.weights).map(|(v, w)| v / w).collect()
    }

    /// `∫ f (J_α ∗ g)` for radial samples.
    pub fn pair(&self, f: &[f64], g: &[f64]) -> f64 {
        self.apply_s(g).iter().zip(f).map(|(a, b)| a * b).sum()
    }

    /// `G[i, j]` with `(J_α ∗ g)(r_i) ≈ Σ_j G[i, j] g_j`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.s[i * self.m + j] / self.weights[i]
    }

    pub fn symmetric_entry(&self, i: usize, j: usize) -> f64 {
        self.s[i * self.m + j]
    }
}
