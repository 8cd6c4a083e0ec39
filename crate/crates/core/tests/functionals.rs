use std::f64::consts::PI;
use std::sync::Arc;

use inls_core::functionals::{make_weight, morawetz_action, rms_radius, Diagnostics, Functionals};
use inls_core::{make_grid, Complex64, Error, Grid, ProblemSpec, RadialField};
use proptest::prelude::*;

fn grid(m: usize, r_max: f64, n: u32) -> Arc<Grid> {
    Arc::new(make_grid(m, r_max, n).unwrap())
}

fn gaussian(g: &Arc<Grid>) -> RadialField {
    RadialField::from_real_fn(g.clone(), |r| (-0.5 * r * r).exp())
}

#[test]
fn mass_and_kinetic_of_gaussian() {
    let g = grid(1024, 15.0, 3);
    let spec = ProblemSpec::choquard(1, 3, 0.0, 0.5, 2.0, 2.1);
    let fun = Functionals::new(&spec, g.clone()).unwrap();
    let u = gaussian(&g);
    let mass = fun.mass(&u.values);
    assert!((mass / PI.powf(1.5) - 1.0).abs() < 1e-10, "{mass}");
    let kin = fun.kinetic(&u.values);
    assert!((kin / (1.5 * PI.powf(1.5)) - 1.0).abs() < 1e-8, "{kin}");
}

#[test]
fn choquard_potential_of_gaussian() {
    // τ = 0, p = 2, α = 2, N = 3: P = ∫∫ e^{-|x|²} e^{-|y|²} / (4π|x-y|).
    let exact = 1.968_701_243_215_302_5;
    let g = grid(1024, 12.0, 3);
    let spec = ProblemSpec::choquard(1, 3, 0.0, 0.0, 2.0, 2.0);
    let fun = Functionals::new(&spec, g.clone()).unwrap();
    let p = fun.potential(&gaussian(&g).values);
    assert!((p / exact - 1.0).abs() < 1e-8, "{p}");
}

#[test]
fn weighted_choquard_potential() {
    // τ = 1/2: P = 8π ∫ r^{1/2} e^{-r²} ∫_0^r ρ^{3/2} e^{-ρ²} dρ dr.
    let exact = 2.305_759_282_185_929_4;
    let g = grid(1024, 10.0, 3);
    let spec = ProblemSpec::choquard(1, 3, 0.0, 0.5, 2.0, 2.0);
    let fun = Functionals::new(&spec, g.clone()).unwrap();
    let p = fun.potential(&gaussian(&g).values);
    assert!((p / exact - 1.0).abs() < 1e-7, "{p}");
}

#[test]
fn local_potential_of_gaussian() {
    let g = grid(512, 12.0, 3);
    let spec = ProblemSpec::local(1, 3, 0.0, 0.0, 2.0);
    let fun = Functionals::new(&spec, g.clone()).unwrap();
    let q = fun.potential(&gaussian(&g).values);
    assert!((q / (PI / 2.0).powf(1.5) - 1.0).abs() < 1e-10, "{q}");
}

#[test]
fn functional_relations() {
    let g = grid(256, 12.0, 3);
    let spec = ProblemSpec::choquard(1, 3, 1.0, 0.5, 2.0, 2.1);
    let fun = Functionals::new(&spec, g.clone()).unwrap();
    let u = RadialField::from_fn(g.clone(), |r| Complex64::new(1.3 * (-r * r).exp(), 0.4 * r * (-r).exp()));
    let d = fun.diagnostics(&u, None, 0.25, 1e-3);
    let p = spec.power();
    let b = fun.exponents.b;
    assert!((d.energy - (d.kinetic - d.potential / p)).abs() < 1e-12 * d.kinetic);
    assert!((d.virial - (d.kinetic - b / (2.0 * p) * d.potential)).abs() < 1e-12 * d.kinetic);
    assert!((d.action - (d.energy + d.mass)).abs() < 1e-12 * d.action.abs().max(d.mass));
    assert_eq!(d.time, 0.25);
    assert_eq!(d.morawetz, 0.0);
}

#[test]
fn morawetz_vanishes_for_real_fields() {
    let g = grid(256, 10.0, 3);
    let w = make_weight(3.0).unwrap();
    let u = RadialField::from_real_fn(g, |r| (1.0 + r) * (-r * r).exp());
    assert!(morawetz_action(&u, &w).abs() < 1e-15);
}

#[test]
fn morawetz_of_chirped_gaussian() {
    // u = e^{ikr²/2} e^{-r²/2} with ξ' = 2r on its support: M = 4k ∫ r² e^{-r²} = 6kπ^{3/2}.
    let k = 0.7;
    let g = grid(2048, 12.0, 3);
    let u = RadialField::from_fn(g.clone(), |r| Complex64::from_polar((-0.5 * r * r).exp(), 0.5 * k * r * r));
    let w = make_weight(100.0).unwrap();
    let got = morawetz_action(&u, &w);
    let exact = 6.0 * k * PI.powf(1.5);
    assert!((got / exact - 1.0).abs() < 1e-4, "{got} vs {exact}");
}

#[test]
fn morawetz_cauchy_schwarz() {
    let g = grid(512, 10.0, 3);
    let spec = ProblemSpec::choquard(1, 3, 0.0, 0.5, 2.0, 2.1);
    let fun = Functionals::new(&spec, g.clone()).unwrap();
    let u = RadialField::from_fn(g.clone(), |r| Complex64::from_polar((-0.3 * r * r).exp(), 2.0 * r));
    let w = make_weight(2.0).unwrap();
    let bound = 2.0 * 2.0 * w.rho_star * w.radius * (fun.mass(&u.values) * fun.kinetic(&u.values)).sqrt();
    assert!(morawetz_action(&u, &w).abs() <= bound);
}

#[test]
fn weight_profile() {
    let w = make_weight(2.0).unwrap();
    for k in 0..=100 {
        let r = 2.0 * k as f64 / 100.0;
        assert!((w.xi(r) - r * r).abs() < 1e-12);
        assert!((w.xi_prime(r) - 2.0 * r).abs() < 1e-12);
        assert!((w.xi_second(r) - 2.0).abs() < 1e-12);
    }
    let far = w.xi(w.rho_star * w.radius);
    assert_eq!(w.xi(30.0), far);
    assert_eq!(w.xi_prime(30.0), 0.0);
    for k in 1..=10_000 {
        let r = 25.0 * k as f64 / 10_000.0;
        let ratio = w.xi_prime(r) / r;
        assert!(ratio <= 2.0 + 1e-12, "r = {r}");
        assert!(w.xi_second(r) <= ratio + 1e-12, "r = {r}");
        assert!(w.xi_second(r).abs() <= 2.0 + 1e-12);
        assert!(w.xi_prime(r).abs() <= 2.0 * w.rho_star * w.radius);
    }
}

#[test]
fn weight_derivatives_consistent() {
    let w = make_weight(1.5).unwrap();
    let h = 1e-5;
    for k in 1..200 {
        let r = 16.0 * k as f64 / 200.0;
        let d1 = (w.xi(r + h) - w.xi(r - h)) / (2.0 * h);
        let d2 = (w.xi_prime(r + h) - w.xi_prime(r - h)) / (2.0 * h);
        assert!((d1 - w.xi_prime(r)).abs() < 1e-6 * (1.0 + d1.abs()), "r = {r}");
        assert!((d2 - w.xi_second(r)).abs() < 1e-5, "r = {r}");
    }
}

#[test]
fn weight_rejects_bad_radius() {
    assert!(matches!(make_weight(0.0), Err(Error::InvalidRadius(_))));
    assert!(matches!(make_weight(f64::NAN), Err(Error::InvalidRadius(_))));
}

#[test]
fn rms_radius_of_gaussian() {
    // |u|² = e^{-r²} in N = 3: <r²> = 3/2.
    let g = grid(1024, 12.0, 3);
    assert!((rms_radius(&gaussian(&g)) - 1.5f64.sqrt()).abs() < 1e-8);
}

#[test]
fn diagnostics_csv_round_trip() {
    let d = Diagnostics {
        time: 0.125,
        mass: 1.0 / 3.0,
        kinetic: 2.5e7,
        potential: 1e-300,
        energy: -4.0,
        virial: -0.0,
        action: 7.0,
        sup_norm: 3.0,
        morawetz: -1.5e-3,
        dt: 1e-10,
    };
    assert_eq!(Diagnostics::from_csv_row(&d.csv_row()).unwrap(), d);
    assert!(Diagnostics::from_csv_row("1,2,3").is_err());
    assert_eq!(Diagnostics::CSV_HEADER.split(',').count(), 10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn potential_homogeneity(c in 0.05f64..4.0, choquard in any::<bool>()) {
        let g = grid(96, 8.0, 5);
        let spec = if choquard {
            ProblemSpec::choquard(2, 5, 0.0, 0.5, 3.0, 2.25)
        } else {
            ProblemSpec::local(2, 5, 0.0, 0.5, 1.7)
        };
        let fun = Functionals::new(&spec, g.clone()).unwrap();
        let u = RadialField::from_fn(g.clone(), |r| Complex64::new((-r * r / 3.0).exp(), 0.3 * (-r).exp()));
        let p0 = fun.potential(&u.values);
        let p1 = fun.potential(&u.scaled(c).values);
        let expected = c.powf(2.0 * spec.power()) * p0;
        prop_assert!((p1 / expected - 1.0).abs() < 1e-12);
        let k1 = fun.kinetic(&u.scaled(c).values);
        prop_assert!((k1 / (c * c * fun.kinetic(&u.values)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phase_invariance(theta in -3.0f64..3.0) {
        let g = grid(96, 8.0, 3);
        let spec = ProblemSpec::choquard(1, 3, 1.0, 0.5, 2.0, 2.1);
        let fun = Functionals::new(&spec, g.clone()).unwrap();
        let u = RadialField::from_fn(g.clone(), |r| Complex64::new((-r * r).exp(), 0.2 * r * (-r).exp()));
        let rot = Complex64::from_polar(1.0, theta);
        let v = RadialField { grid: g.clone(), values: u.values.iter().map(|z| z * rot).collect() };
        let (a, b) = (fun.diagnostics(&u, None, 0.0, 0.0), fun.diagnostics(&v, None, 0.0, 0.0));
        prop_assert!((a.mass - b.mass).abs() <= 1e-12 * a.mass);
        prop_assert!((a.kinetic - b.kinetic).abs() <= 1e-12 * a.kinetic);
        prop_assert!((a.potential - b.potential).abs() <= 1e-12 * a.potential);
    }
}
