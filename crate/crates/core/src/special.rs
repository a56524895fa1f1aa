//! Log-gamma, digamma and log-beta on the positive real axis.
//!
//! `ln_gamma` uses the Stirling series after shifting the argument up to
//! `x >= 10` with the recurrence `ln Γ(x) = ln Γ(x + 1) - ln x`. `digamma`
//! uses the asymptotic expansion after shifting to `x >= 6`. Both are
//! written against [`Real`] so they instantiate for `f32` and `f64`.
//!
//! The checked functions reject non-positive and non-finite arguments; the
//! `*_unchecked` variants skip validation and are used by callers whose types
//! already guarantee a positive argument.

use crate::error::{Error, Result};
use crate::scalar::Real;

const LN_GAMMA_SHIFT: f64 = 10.0;
const DIGAMMA_SHIFT: f64 = 6.0;

// B_{2k} / (2k (2k - 1)), k = 1..7
const STIRLING: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
];

// B_{2k} / (2k), k = 1..7
const DIGAMMA_ASYMPTOTIC: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
];

fn check_positive<T: Real>(op: &'static str, x: T) -> Result<()> {
    if x.is_finite() && x > T::zero() {
        Ok(())
    } else {
        Err(Error::domain(op, format!("argument must be finite and > 0, got {x}")))
    }
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma<T: Real>(x: T) -> Result<T> {
    check_positive("ln_gamma", x)?;
    Ok(ln_gamma_unchecked(x))
}

/// `ln Γ(x)` without argument validation; the result is unspecified for `x <= 0`.
pub fn ln_gamma_unchecked<T: Real>(x: T) -> T {
    let shift = T::lit(LN_GAMMA_SHIFT);
    let mut z = x;
    let mut prod = T::one();
    let mut log_acc = T::zero();
    while z < shift {
        prod *= z;
        // keep the running product well inside the exponent range
        if prod < T::lit(1e-200) || prod > T::lit(1e200) {
            log_acc += prod.ln();
            prod = T::one();
        }
        z += T::one();
    }
    log_acc += prod.ln();
    stirling(z) - log_acc
}

fn stirling<T: Real>(z: T) -> T {
    let half = T::lit(0.5);
    let half_ln_two_pi = T::lit(0.918_938_533_204_672_8);
    let inv = z.recip();
    let inv2 = inv * inv;
    let mut series = T::zero();
    for &c in STIRLING.iter().rev() {
        series = series * inv2 + T::lit(c);
    }
    (z - half) * z.ln() - z + half_ln_two_pi + series * inv
}

/// Digamma `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
pub fn digamma<T: Real>(x: T) -> Result<T> {
    check_positive("digamma", x)?;
    Ok(digamma_unchecked(x))
}

/// `ψ(x)` without argument validation.
pub fn digamma_unchecked<T: Real>(x: T) -> T {
    let shift = T::lit(DIGAMMA_SHIFT);
    let mut z = x;
    let mut acc = T::zero();
    while z < shift {
        acc -= z.recip();
        z += T::one();
    }
    let inv2 = (z * z).recip();
    let mut series = T::zero();
    for &c in DIGAMMA_ASYMPTOTIC.iter().rev() {
        series = series * inv2 + T::lit(c);
    }
    acc + z.ln() - T::lit(0.5) / z - series * inv2
}

/// `ln B(a, b) = ln Γ(a) + ln Γ(b) - ln Γ(a + b)`.
pub fn ln_beta<T: Real>(a: T, b: T) -> Result<T> {
    check_positive("ln_beta", a)?;
    check_positive("ln_beta", b)?;
    Ok(ln_beta_unchecked(a, b))
}

pub fn ln_beta_unchecked<T: Real>(a: T, b: T) -> T {
    // summing the smaller pair first keeps the result symmetric in (a, b)
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    ln_gamma_unchecked(lo) + ln_gamma_unchecked(hi) - ln_gamma_unchecked(lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

    #[test]
    fn ln_gamma_known_values() {
        assert_abs_diff_eq!(ln_gamma(1.0_f64).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ln_gamma(2.0_f64).unwrap(), 0.0, epsilon = 1e-14);
        let ln_sqrt_pi = 0.5 * std::f64::consts::PI.ln();
        assert_abs_diff_eq!(ln_gamma(0.5_f64).unwrap(), ln_sqrt_pi, epsilon = 1e-13);
        assert_abs_diff_eq!(ln_gamma(0.5_f64).unwrap(), 0.572_364_942_9, epsilon = 1e-10);
    }

    #[test]
    fn ln_gamma_matches_log_factorial() {
        let mut log_fact = 0.0_f64;
        for n in 1..=170u32 {
            // Γ(n + 1) = n!
            log_fact += f64::from(n).ln();
            let got = ln_gamma(f64::from(n) + 1.0).unwrap();
            assert!(
                (got - log_fact).abs() <= 1e-12 * log_fact.max(1.0),
                "n = {n}: {got} vs {log_fact}"
            );
        }
    }

    #[test]
    fn ln_gamma_half_integers() {
        // Γ(n + 1/2) = (2n)! / (4^n n!) √π
        let ln_sqrt_pi = 0.5 * std::f64::consts::PI.ln();
        for n in 0..60u32 {
            let mut acc = ln_sqrt_pi;
            for k in 1..=n {
                acc += (f64::from(k) - 0.5).ln();
            }
            let got = ln_gamma(f64::from(n) + 0.5).unwrap();
            assert!((got - acc).abs() <= 1e-12 * acc.abs().max(1.0), "n = {n}");
        }
    }

    #[test]
    fn ln_gamma_small_argument() {
        // Γ(x) = Γ(x + 1) / x and Γ(1 + x) ≈ 1 - γx for tiny x
        let x = 1e-3_f64;
        let expect = -x.ln() + ln_gamma(1.0 + x).unwrap();
        assert_abs_diff_eq!(ln_gamma(x).unwrap(), expect, epsilon = 1e-12);
        assert_abs_diff_eq!(ln_gamma(1e-8_f64).unwrap(), -(1e-8_f64).ln() - EULER_MASCHERONI * 1e-8, epsilon = 1e-12);
    }

    #[test]
    fn ln_gamma_large_argument_relative() {
        // Stirling leading terms dominate far out; compare with statrs as an outside reference
        for &x in &[50.5_f64, 1e3, 12345.678, 1e5, 1e6] {
            let reference = statrs::function::gamma::ln_gamma(x);
            let got = ln_gamma(x).unwrap();
            assert!((got - reference).abs() <= 1e-13 * reference.abs(), "x = {x}");
        }
    }

    #[test]
    fn ln_gamma_agrees_with_statrs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let x: f64 = 10f64.powf(rng.gen_range(-3.0..2.0));
            let reference = statrs::function::gamma::ln_gamma(x);
            let got = ln_gamma(x).unwrap();
            assert!(
                (got - reference).abs() <= 1e-12 * reference.abs().max(1.0),
                "x = {x}: {got} vs {reference}"
            );
        }
    }

    #[test]
    fn domain_errors() {
        assert!(ln_gamma(0.0_f64).is_err());
        assert!(ln_gamma(-1.5_f64).is_err());
        assert!(ln_gamma(f64::NAN).is_err());
        assert!(ln_gamma(f64::INFINITY).is_err());
        assert!(digamma(0.0_f64).is_err());
        assert!(digamma(-2.0_f64).is_err());
        assert!(ln_beta(1.0_f64, 0.0).is_err());
        assert!(ln_beta(-1.0_f64, 1.0).is_err());
    }

    #[test]
    fn digamma_known_values() {
        let d1 = digamma(1.0_f64).unwrap();
        assert_abs_diff_eq!(d1, -EULER_MASCHERONI, epsilon = 1e-12);
        assert_abs_diff_eq!(digamma(2.0_f64).unwrap() - d1, 1.0, epsilon = 1e-12);
        let d2 = digamma(2.0_f64).unwrap();
        assert_abs_diff_eq!(digamma(4.0_f64).unwrap() - d2, 0.833_333_333_3, epsilon = 1e-10);
        // ψ(1/2) = -γ - 2 ln 2
        assert_abs_diff_eq!(
            digamma(0.5_f64).unwrap(),
            -EULER_MASCHERONI - 2.0 * std::f64::consts::LN_2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn digamma_agrees_with_statrs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..2000 {
            let x: f64 = 10f64.powf(rng.gen_range(-3.0..6.0));
            let reference = statrs::function::gamma::digamma(x);
            let got = digamma(x).unwrap();
            assert!((got - reference).abs() <= 1e-10, "x = {x}: {got} vs {reference}");
        }
    }

    #[test]
    fn digamma_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let x: f64 = rng.gen_range(0.01..100.0);
            let lhs = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
            assert!((lhs - 1.0 / x).abs() <= 1e-10, "x = {x}");
        }
    }

    #[test]
    fn digamma_strictly_increasing() {
        let mut prev = digamma_unchecked(1e-3_f64);
        let mut x = 1e-3_f64;
        while x < 1e4 {
            x *= 1.01;
            let cur = digamma_unchecked(x);
            assert!(cur > prev, "not increasing at {x}");
            prev = cur;
        }
    }

    #[test]
    fn ln_gamma_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let h = 1e-3_f64;
        for _ in 0..1000 {
            let x: f64 = rng.gen_range(0.01..100.0);
            let lo = ln_gamma(x - h.min(x / 2.0)).unwrap();
            let hi = ln_gamma(x + h.min(x / 2.0)).unwrap();
            assert!(lo + hi >= 2.0 * ln_gamma(x).unwrap() - 1e-12, "x = {x}");
        }
    }

    #[test]
    fn ln_beta_values_and_symmetry() {
        assert_abs_diff_eq!(ln_beta(1.0_f64, 1.0).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ln_beta(2.0_f64, 2.0).unwrap(), (1.0_f64 / 6.0).ln(), epsilon = 1e-13);
        assert_abs_diff_eq!(ln_beta(2.0_f64, 2.0).unwrap(), -1.791_759_469_2, epsilon = 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..1000 {
            let a: f64 = rng.gen_range(0.01..50.0);
            let b: f64 = rng.gen_range(0.01..50.0);
            let ab = ln_beta(a, b).unwrap();
            let ba = ln_beta(b, a).unwrap();
            assert!((ab - ba).abs() <= 1e-14, "({a}, {b})");
        }
    }

    #[test]
    fn single_precision_instantiation() {
        assert!((ln_gamma(0.5_f32).unwrap() - 0.572_364_9).abs() < 1e-5);
        assert!((digamma(1.0_f32).unwrap() + 0.577_215_7).abs() < 1e-5);
    }
}
