//! Parameters of the two Cauchy problems, their validation and derived exponents.

use crate::error::{Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Nonlinear term: generalized Hartree (Choquard) or local power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    Choquard { alpha: f64, p: f64 },
    Local { q: f64 },
}

/// Full parameter tuple `(s, N, lambda, tau, nonlinearity)`.
///
/// `lambda` is kept for `s = 2` but never used there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub s: u32,
    pub n: u32,
    pub lambda: f64,
    pub tau: f64,
    pub nonlinearity: Nonlinearity,
}

/// Which runs a validated spec admits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationTier {
    /// Inside the admissible class with `lambda >= 0`.
    Full,
    /// `-(N-2)^2/4 < lambda < 0`: functionals only, evolution refused.
    EvolutionRestricted,
}

impl ProblemSpec {
    pub fn choquard(s: u32, n: u32, lambda: f64, tau: f64, alpha: f64, p: f64) -> Self {
        ProblemSpec { s, n, lambda, tau, nonlinearity: Nonlinearity::Choquard { alpha, p } }
    }

    pub fn local(s: u32, n: u32, lambda: f64, tau: f64, q: f64) -> Self {
        ProblemSpec { s, n, lambda, tau, nonlinearity: Nonlinearity::Local { q } }
    }

    pub fn is_choquard(&self) -> bool {
        matches!(self.nonlinearity, Nonlinearity::Choquard { .. })
    }

    /// `p` for Choquard, `q` for local.
    pub fn power(&self) -> f64 {
        match self.nonlinearity {
            Nonlinearity::Choquard { p, .. } => p,
            Nonlinearity::Local { q } => q,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self.nonlinearity {
            Nonlinearity::Choquard { alpha, .. } => Some(alpha),
            Nonlinearity::Local { .. } => None,
        }
    }

    /// Coupling actually entering the operator (zero for `s = 2`).
    pub fn effective_lambda(&self) -> f64 {
        if self.s == 1 {
            self.lambda
        } else {
            0.0
        }
    }

    /// Homogeneity degree of the nonlinearity: `2p - 1` or `2q - 1`.
    pub fn sigma(&self) -> f64 {
        2.0 * self.power() - 1.0
    }

    /// Leading power `r^nu` of regular solutions of `-Δu + λu/r² = 0` at the origin.
    pub fn hardy_nu(&self) -> f64 {
        let lam = self.effective_lambda();
        if lam == 0.0 {
            return 0.0;
        }
        let m = self.n as f64 - 2.0;
        0.5 * (-m + (m * m + 4.0 * lam).sqrt())
    }

    pub fn tier(&self) -> ValidationTier {
        if self.s == 1 && self.lambda < 0.0 {
            ValidationTier::EvolutionRestricted
        } else {
            ValidationTier::Full
        }
    }

    /// Inverse of `B(p)` (or `B'(q)`): the power giving scaling exponent `b`.
    pub fn power_from_b(&self, b: f64) -> f64 {
        let (n, s) = (self.n as f64, self.s as f64);
        match self.nonlinearity {
            Nonlinearity::Choquard { alpha, .. } => (s * b + n + alpha - 2.0 * self.tau) / n,
            Nonlinearity::Local { .. } => (s * b + n - 2.0 * self.tau) / n,
        }
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.nonlinearity {
            Nonlinearity::Choquard { alpha, p } => write!(
                f,
                "choquard s={} N={} lambda={} tau={} alpha={} p={}",
                self.s, self.n, self.lambda, self.tau, alpha, p
            ),
            Nonlinearity::Local { q } => write!(
                f,
                "local s={} N={} lambda={} tau={} q={}",
                self.s, self.n, self.lambda, self.tau, q
            ),
        }
    }
}

/// Scaling exponents and critical powers.
///
/// For the local problem `b`, `a` hold `B'`, `A'` and `crit_low`, `crit_high`
/// hold `q_c`, `q^c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedExponents {
    pub b: f64,
    pub a: f64,
    pub crit_low: f64,
    pub crit_high: f64,
    pub s_c: f64,
    pub alpha_c: f64,
}

pub fn derive_exponents(spec: &ProblemSpec) -> DerivedExponents {
    let (n, s, tau) = (spec.n as f64, spec.s as f64, spec.tau);
    match spec.nonlinearity {
        Nonlinearity::Choquard { alpha, p } => {
            let b = (n * p - n - alpha + 2.0 * tau) / s;
            let num = 2.0 * s - 2.0 * tau + alpha;
            let s_c = n / 2.0 - num / (2.0 * (p - 1.0));
            DerivedExponents {
                b,
                a: 2.0 * p - b,
                crit_low: 1.0 + num / n,
                crit_high: 1.0 + num / (n - 2.0 * s),
                s_c,
                alpha_c: s / s_c - 1.0,
            }
        }
        Nonlinearity::Local { q } => {
            let b = (n * q - n + 2.0 * tau) / s;
            let num = 2.0 * s - 2.0 * tau;
            let s_c = n / 2.0 - (s - tau) / (q - 1.0);
            DerivedExponents {
                b,
                a: 2.0 * q - b,
                crit_low: 1.0 + num / n,
                crit_high: 1.0 + num / (n - 2.0 * s),
                s_c,
                alpha_c: s / s_c - 1.0,
            }
        }
    }
}

/// Parses a plain decimal literal (`-12.5`, `3`, `1.25e-3`) into an exact rational.
pub fn parse_decimal(text: &str) -> Option<BigRational> {
    let t = text.trim();
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(i) => (&t[..i], t[i + 1..].parse::<i32>().ok()?),
        None => (t, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((a, b)) => (a, b),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all = format!("{int_part}{frac_part}");
    let mut num: BigInt = all.parse().ok()?;
    if neg {
        num = -num;
    }
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let r = if scale >= 0 {
        BigRational::from_integer(num * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(num, num_traits::pow(ten, (-scale) as usize))
    };
    Some(r)
}

/// Exact value of the shortest decimal that round-trips to `x`.
///
/// Inputs written as decimals (`"2.1"`) therefore compare exactly against
/// rational endpoints, with no binary rounding artefacts.
pub fn exact(x: f64) -> BigRational {
    parse_decimal(&format!("{x}")).expect("finite f64 formats as a decimal")
}

fn q(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn range(inequality: &str) -> Error {
    Error::RangeViolation { inequality: inequality.to_string() }
}

/// Checks every hypothesis on the parameters; returns the spec unchanged on success.
///
/// Negative `lambda` above the Hardy bound is accepted; see [`ProblemSpec::tier`].
pub fn validate_spec(raw: ProblemSpec) -> Result<ProblemSpec> {
    if raw.s != 1 && raw.s != 2 {
        return Err(Error::InvalidSpec(format!("s = {} is not in {{1, 2}}", raw.s)));
    }
    for (name, v) in [("lambda", raw.lambda), ("tau", raw.tau), ("power", raw.power())] {
        if !v.is_finite() {
            return Err(Error::InvalidSpec(format!("{name} is not finite")));
        }
    }
    if let Some(a) = raw.alpha() {
        if !a.is_finite() {
            return Err(Error::InvalidSpec("alpha is not finite".into()));
        }
    }
    if raw.n <= 2 * raw.s {
        return Err(Error::DimensionTooSmall { n: raw.n, two_s: 2 * raw.s });
    }
    let n = q(raw.n as i64);
    let s = q(raw.s as i64);
    let lam = exact(raw.lambda);
    let tau = exact(raw.tau);
    let hardy = -(n.clone() - q(2)) * (n.clone() - q(2)) / q(4);
    if lam <= hardy {
        return Err(Error::HardyViolation {
            lambda: raw.lambda,
            bound: -((raw.n as f64 - 2.0).powi(2)) / 4.0,
        });
    }
    let two = q(2);
    let one = BigRational::one();
    match raw.nonlinearity {
        Nonlinearity::Choquard { alpha, p } => {
            let al = exact(alpha);
            let p = exact(p);
            let cnd = [
                ("tau", tau.clone()),
                ("alpha", al.clone()),
                ("N - alpha", n.clone() - al.clone()),
                ("N - tau", n.clone() - tau.clone()),
                ("2 - 2 tau + alpha", two.clone() - two.clone() * tau.clone() + al.clone()),
            ];
            for (name, v) in cnd {
                if !v.is_positive() {
                    return Err(Error::CndViolation { quantity: name.to_string() });
                }
            }
            if tau >= s.clone() * (al.clone() + n.clone()) / n.clone() {
                return Err(range("tau < s (alpha + N) / N"));
            }
            let num = two.clone() * s.clone() - two.clone() * tau.clone() + al.clone();
            let p_low = one.clone() + num.clone() / n.clone();
            let p_high = one.clone() + num / (n.clone() - two.clone() * s.clone());
            if p <= two {
                return Err(range("p > 2"));
            }
            if p <= p_low {
                return Err(range("p > p_c = 1 + (2s - 2tau + alpha)/N"));
            }
            if p >= p_high {
                return Err(range("p < p^c = 1 + (2s - 2tau + alpha)/(N - 2s)"));
            }
            let p_top = one + (two * s + al - tau) / n;
            if p > p_top {
                return Err(range("p <= 1 + (2s + alpha - tau)/N"));
            }
        }
        Nonlinearity::Local { q: qq } => {
            let qv = exact(qq);
            if !tau.is_positive() {
                return Err(range("0 < tau"));
            }
            if tau >= two {
                return Err(range("tau < 2"));
            }
            if raw.s == 1 && tau >= one {
                return Err(range("tau < 1 (s = 1)"));
            }
            let num = two.clone() * s.clone() - two.clone() * tau.clone();
            let q_low = one.clone() + num.clone() / n.clone();
            let q_high = one.clone() + num / (n.clone() - two.clone() * s.clone());
            if qv <= q_low {
                return Err(range("q > q_c = 1 + (2s - 2tau)/N"));
            }
            if qv >= q_high {
                return Err(range("q < q^c = 1 + (2s - 2tau)/(N - 2s)"));
            }
            let top = one.clone()
                + (two.clone() * s.clone() + two.clone() * tau.clone() * (s.clone() - one.clone()))
                    / n.clone();
            if qv > top {
                return Err(range("q <= 1 + (2s + 2tau(s - 1))/N"));
            }
            if raw.s == 2 && qv <= one.clone() + (one.clone() - two.clone() * tau.clone()) / n.clone()
            {
                return Err(range("q > 1 + (1 - 2tau)/N (s = 2)"));
            }
            // Tail estimates for s = 2 are carried out under the narrower B' <= 2 + tau.
            let bp = (n.clone() * qv - n + two.clone() * tau.clone()) / s;
            let cap = if raw.s == 1 { two * tau.clone() } else { tau.clone() };
            if bp > q(2) + cap {
                let msg = if raw.s == 1 { "B' <= 2 + 2tau (s = 1)" } else { "B' <= 2 + tau (s = 2)" };
                return Err(range(msg));
            }
        }
    }
    Ok(raw)
}

/// Notes echoed into manifests: tier, ignored inputs and known bound discrepancies.
pub fn spec_notes(spec: &ProblemSpec) -> Vec<String> {
    let mut notes = vec![format!("tier: {:?}", spec.tier())];
    if spec.s == 2 && spec.lambda != 0.0 {
        notes.push(format!("lambda = {} ignored for s = 2", spec.lambda));
    }
    match (spec.s, spec.is_choquard()) {
        (_, true) => notes.push("Choquard range enforced as 2 < B <= 2 + tau/s".into()),
        (1, false) => notes.push("local s = 1 bound enforced as 2 < B' <= 2 + 2tau".into()),
        _ => notes.push(
            "local s = 2 bound enforced as 2 < B' <= 2 + tau; the q-range alone allows B' <= 2 + 2tau".into(),
        ),
    }
    notes.push("radial data only".into());
    notes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hardy_violation_example() {
        let e = validate_spec(ProblemSpec::local(1, 3, -0.3, 0.5, 1.5)).unwrap_err();
        assert!(matches!(e, Error::HardyViolation { .. }));
    }

    #[test]
    fn choquard_example_valid() {
        let spec = validate_spec(ProblemSpec::choquard(1, 3, 0.0, 0.5, 2.0, 2.1)).unwrap();
        let d = derive_exponents(&spec);
        assert!((d.crit_low - 2.0).abs() < 1e-15);
        assert!((d.crit_high - 4.0).abs() < 1e-15);
        assert!((d.b - 2.3).abs() < 1e-12);
        assert!((d.a - 1.9).abs() < 1e-12);
        assert!((d.s_c - 0.136364).abs() < 1e-6);
        assert!((d.alpha_c - 6.33333).abs() < 1e-5);
    }

    #[test]
    fn local_s2_example_valid() {
        let spec = validate_spec(ProblemSpec::local(2, 5, 0.0, 0.5, 1.7)).unwrap();
        let d = derive_exponents(&spec);
        assert!((d.crit_low - 1.6).abs() < 1e-15);
        assert!((d.crit_high - 4.0).abs() < 1e-15);
        assert!((d.b - 2.25).abs() < 1e-12);
        assert!((d.a - 1.15).abs() < 1e-12);
        assert!((d.s_c - (2.5 - 1.5 / 0.7)).abs() < 1e-12);
    }

    #[test]
    fn mass_critical_boundary() {
        let spec = ProblemSpec::choquard(1, 3, 0.0, 0.5, 2.0, 2.0);
        assert_eq!(derive_exponents(&spec).s_c, 0.0);
        assert!(matches!(validate_spec(spec), Err(Error::RangeViolation { .. })));
    }

    #[test]
    fn exact_endpoints_are_inclusive() {
        // p = 1 + (2 + 2 - 0.5)/3 = 13/6 is not a finite decimal; use N = 5, s = 1:
        // upper bound 1 + (2 + 3 - 0.5)/5 = 1.9 exactly.
        assert!(validate_spec(ProblemSpec::choquard(1, 5, 0.0, 0.5, 3.0, 1.9)).is_err());
        // q <= 1 + 4/5 = 1.8 is attained for s = 2, N = 5 (via B' <= 2 + tau).
        validate_spec(ProblemSpec::local(2, 5, 0.0, 0.5, 1.8)).unwrap();
        assert!(validate_spec(ProblemSpec::local(2, 5, 0.0, 0.5, 1.8000001)).is_err());
    }

    #[test]
    fn dimension_and_cnd() {
        assert!(matches!(
            validate_spec(ProblemSpec::local(2, 4, 0.0, 0.5, 1.7)),
            Err(Error::DimensionTooSmall { .. })
        ));
        assert!(matches!(
            validate_spec(ProblemSpec::choquard(1, 3, 0.0, 0.5, 3.0, 2.1)),
            Err(Error::CndViolation { .. })
        ));
    }

    #[test]
    fn tiers() {
        let spec = validate_spec(ProblemSpec::choquard(1, 3, -0.1, 0.5, 2.0, 2.1)).unwrap();
        assert_eq!(spec.tier(), ValidationTier::EvolutionRestricted);
        let spec = validate_spec(ProblemSpec::choquard(1, 3, 1.0, 0.5, 2.0, 2.1)).unwrap();
        assert_eq!(spec.tier(), ValidationTier::Full);
    }

    #[test]
    fn decimal_parsing() {
        assert_eq!(parse_decimal("2.10").unwrap(), BigRational::new(21.into(), 10.into()));
        assert_eq!(parse_decimal("-1.5e-2").unwrap(), BigRational::new((-3).into(), 200.into()));
        assert_eq!(parse_decimal("7").unwrap(), q(7));
        assert!(parse_decimal("abc").is_none());
        assert!(parse_decimal("").is_none());
        assert_eq!(exact(0.1), BigRational::new(1.into(), 10.into()));
    }

    #[test]
    fn hardy_nu_solves_indicial_equation() {
        let spec = ProblemSpec::choquard(1, 3, 1.0, 0.5, 2.0, 2.1);
        let nu = spec.hardy_nu();
        assert!((nu * (nu + 1.0) - 1.0).abs() < 1e-14);
        assert_eq!(ProblemSpec::local(2, 5, 3.0, 0.5, 1.7).hardy_nu(), 0.0);
    }
}
