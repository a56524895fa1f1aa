//! Independent numerical references used by the test suites and by the
//! `verify` command: double-exponential quadrature, central differences and
//! brute-force enumeration of the signed-rank null distribution.
//!
//! Nothing in here calls into the closed forms it is used to check, with the
//! exception of density evaluation, which goes through `statrs` rather than
//! this crate's special functions.

use statrs::function::beta::ln_beta as ref_ln_beta;

/// Tanh-sinh quadrature of `f` over `[0, len]`.
///
/// `f` receives the distance from the left endpoint and the distance from
/// the right endpoint, both computed without cancellation, so integrable
/// endpoint singularities can be evaluated accurately. Levels are refined
/// until two successive estimates agree to `tol` (relative to the estimate).
pub fn tanh_sinh<F>(len: f64, tol: f64, mut f: F) -> f64
where
    F: FnMut(f64, f64) -> f64,
{
    let half = 0.5 * len;
    let t_max = 6.5;
    let mut h = 0.5_f64;
    let mut sum = eval_node(0.0, half, &mut f);
    // level 0 covers integer multiples of h
    let mut k = 1;
    loop {
        let t = k as f64 * h;
        if t > t_max {
            break;
        }
        sum += eval_node(t, half, &mut f) + eval_node(-t, half, &mut f);
        k += 1;
    }
    let mut estimate = sum * h;
    for _ in 0..12 {
        h *= 0.5;
        // add the odd nodes of the refined grid
        let mut k = 1;
        loop {
            let t = k as f64 * h;
            if t > t_max {
                break;
            }
            sum += eval_node(t, half, &mut f) + eval_node(-t, half, &mut f);
            k += 2;
        }
        let next = sum * h;
        let converged = (next - estimate).abs() <= tol * next.abs().max(1e-300);
        estimate = next;
        if converged && h < 0.1 {
            break;
        }
    }
    estimate
}

fn eval_node<F: FnMut(f64, f64) -> f64>(t: f64, half: f64, f: &mut F) -> f64 {
    let s = std::f64::consts::FRAC_PI_2 * t.sinh();
    let cosh_s = s.cosh();
    if !cosh_s.is_finite() {
        return 0.0;
    }
    let w = half * std::f64::consts::FRAC_PI_2 * t.cosh() / (cosh_s * cosh_s);
    // distance to the near endpoint: half * (1 - tanh|s|) = len / (e^{2|s|} + 1)
    let near = 2.0 * half / ((2.0 * s.abs()).exp() + 1.0);
    let far = 2.0 * half - near;
    let (left, right) = if s < 0.0 { (near, far) } else { (far, near) };
    if left <= 0.0 || right <= 0.0 || w == 0.0 {
        return 0.0;
    }
    let v = f(left, right);
    if v.is_finite() {
        w * v
    } else {
        0.0
    }
}

/// `ln Γ(x)` as the logarithm of numerically integrated `∫₀^∞ t^{x-1} e^{-t} dt`.
///
/// The lower piece uses `t = u^{1/x}` and the upper piece `t = 1/s`, so both
/// integrands are bounded.
pub fn ln_gamma_by_quadrature(x: f64) -> f64 {
    let lower = tanh_sinh(1.0, 1e-14, |u, _| (-(u.powf(1.0 / x))).exp()) / x;
    let upper = tanh_sinh(1.0, 1e-14, |s, _| {
        let ln = (-x - 1.0) * s.ln() - 1.0 / s;
        ln.exp()
    });
    (lower + upper).ln()
}

/// Beta density in shape form, through `statrs`' log-beta.
pub fn beta_ln_pdf(y: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * y.ln() + (b - 1.0) * (-y).ln_1p() - ref_ln_beta(a, b)
}

/// Integrates `g(y) p(y)` for the Beta(a, b) density `p` over `[0, 1]`.
///
/// The interval is split at one half. On the left piece the substitution
/// `y = u^{1/a}` absorbs the `y^{a-1}` factor, and on the right piece
/// `1 - y = v^{1/b}` absorbs `(1-y)^{b-1}`, so the transformed integrands stay
/// bounded even for shape parameters far below one. `g` receives `(ln y,
/// ln(1-y))`.
pub fn beta_expectation<G>(a: f64, b: f64, tol: f64, g: G) -> f64
where
    G: Fn(f64, f64) -> f64,
{
    let lb = ref_ln_beta(a, b);
    let split = 0.5_f64;
    // left: y in (0, 1/2], u = y^a in (0, 2^{-a}]
    let left_len = split.powf(a);
    let left = tanh_sinh(left_len, tol, |u, _| {
        let ln_y = u.ln() / a;
        let y = ln_y.exp();
        let ln_1my = (-y).ln_1p();
        let jac = (-(a.ln()) - lb + (b - 1.0) * ln_1my).exp();
        g(ln_y, ln_1my) * jac
    });
    let right_len = split.powf(b);
    let right = tanh_sinh(right_len, tol, |v, _| {
        let ln_1my = v.ln() / b;
        let one_minus_y = ln_1my.exp();
        let ln_y = (-one_minus_y).ln_1p();
        let jac = (-(b.ln()) - lb + (a - 1.0) * ln_y).exp();
        g(ln_y, ln_1my) * jac
    });
    left + right
}

/// `-∫ p ln p` for Beta(a, b) by quadrature.
pub fn beta_entropy_by_quadrature(a: f64, b: f64) -> f64 {
    let lb = ref_ln_beta(a, b);
    beta_expectation(a, b, 1e-12, |ln_y, ln_1my| {
        -((a - 1.0) * ln_y + (b - 1.0) * ln_1my - lb)
    })
}

/// `∫ p` for Beta(a, b) by quadrature; should be one.
pub fn beta_mass_by_quadrature(a: f64, b: f64) -> f64 {
    beta_expectation(a, b, 1e-12, |_, _| 1.0)
}

/// Central difference `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Central-difference gradient of `f` at `x`, one coordinate at a time.
pub fn numerical_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Two-sided exact signed-rank p-value by walking all `2^n` sign patterns.
///
/// Zero differences are dropped and tied magnitudes get average ranks, the
/// same conventions as the production test. Limited to `n <= 20`.
pub fn signed_rank_p_brute_force(a: &[f64], b: &[f64]) -> f64 {
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    assert!(n <= 20, "brute force limited to 20 non-zero pairs");
    if n == 0 {
        return 1.0;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().total_cmp(&diffs[j].abs()));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let observed: f64 = (0..n).filter(|&k| diffs[k] > 0.0).map(|k| ranks[k]).sum();
    let center = n as f64 * (n as f64 + 1.0) / 4.0;
    let dev = (observed - center).abs();
    let mut extreme = 0u64;
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| ranks[k]).sum();
        if (w - center).abs() >= dev - 1e-9 {
            extreme += 1;
        }
    }
    extreme as f64 / (1u64 << n) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_of_polynomial_and_singular_integrand() {
        let cubic = tanh_sinh(2.0, 1e-14, |x, _| x * x * x);
        assert!((cubic - 4.0).abs() < 1e-12);
        // ∫₀¹ ln x dx = -1
        let log = tanh_sinh(1.0, 1e-14, |x, _| x.ln());
        assert!((log + 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_quadrature_reference() {
        assert!(ln_gamma_by_quadrature(1.0).abs() < 1e-12);
        assert!((ln_gamma_by_quadrature(5.0) - 24f64.ln()).abs() < 1e-11);
        let ln_sqrt_pi = 0.5 * std::f64::consts::PI.ln();
        assert!((ln_gamma_by_quadrature(0.5) - ln_sqrt_pi).abs() < 1e-11);
    }

    #[test]
    fn beta_quadrature_reference() {
        // Beta(2, 2): entropy = ln(1/6) + 5/3 - 1... computed as -∫ 6y(1-y) ln(6y(1-y))
        let direct = tanh_sinh(1.0, 1e-14, |y, r| {
            let p = 6.0 * y * r;
            -p * p.ln()
        });
        assert!((beta_entropy_by_quadrature(2.0, 2.0) - direct).abs() < 1e-10);
        assert!((beta_mass_by_quadrature(0.01, 3.0) - 1.0).abs() < 1e-9);
        assert!(beta_entropy_by_quadrature(1.0, 1.0).abs() < 1e-10);
    }

    #[test]
    fn brute_force_signed_rank() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [0.0; 5];
        assert!((signed_rank_p_brute_force(&a, &b) - 0.0625).abs() < 1e-15);
        assert_eq!(signed_rank_p_brute_force(&a, &a), 1.0);
    }
}
