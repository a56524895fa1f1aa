//! Deep beta regression math in the mean-precision parameterisation.
//!
//! A prediction `(μ, ν)` corresponds to the shape pair `α = μν`,
//! `β = (1 - μ)ν`. Everything is evaluated in the log domain; densities are
//! exponentiated only on request.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special::{digamma_unchecked, ln_beta_unchecked, ln_gamma_unchecked};

/// Targets are clamped into `[eps, 1 - eps]` before any log-likelihood term.
pub const DEFAULT_EPS_CLAMP: f64 = 1e-6;

/// Lower bound returned by [`beta_entropy`] in place of `-∞`.
pub const ENTROPY_FLOOR: f64 = -1e12;

/// Mean and precision of a predicted beta density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrediction<T> {
    mu: T,
    nu: T,
}

impl<T: Real> BetaPrediction<T> {
    /// Validates `0 < mu < 1` and `nu > 0`, both finite.
    pub fn new(mu: T, nu: T) -> Result<Self> {
        if !(mu > T::zero() && mu < T::one()) {
            return Err(Error::domain("BetaPrediction", format!("mu must lie in (0, 1), got {mu}")));
        }
        if !(nu > T::zero() && nu.is_finite()) {
            return Err(Error::domain("BetaPrediction", format!("nu must be finite and > 0, got {nu}")));
        }
        Ok(Self { mu, nu })
    }

    /// From shape parameters `α, β > 0`.
    pub fn from_shape(alpha: T, beta: T) -> Result<Self> {
        let nu = alpha + beta;
        Self::new(alpha / nu, nu)
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn alpha(&self) -> T {
        self.mu * self.nu
    }

    pub fn beta(&self) -> T {
        (T::one() - self.mu) * self.nu
    }
}

/// Relative weights of the loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights<T> {
    /// Weight on the NLL term of the supervised loss.
    pub lambda: T,
    /// Weight on the twin-consistency term.
    pub tau: T,
    pub eps_clamp: T,
}

impl<T: Real> LossWeights<T> {
    pub fn new(lambda: T, tau: T, eps_clamp: T) -> Result<Self> {
        if !(lambda >= T::zero() && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
        }
        if !(tau >= T::zero() && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau must be >= 0, got {tau}")));
        }
        if !(eps_clamp > T::zero() && eps_clamp < T::lit(0.5)) {
            return Err(Error::InvalidArgument(format!("eps_clamp must lie in (0, 0.5), got {eps_clamp}")));
        }
        Ok(Self { lambda, tau, eps_clamp })
    }
}

impl<T: Real> Default for LossWeights<T> {
    fn default() -> Self {
        Self {
            lambda: T::one(),
            tau: T::lit(2.0),
            eps_clamp: T::lit(DEFAULT_EPS_CLAMP),
        }
    }
}

#[inline]
pub fn clamp_target<T: Real>(y: T, eps: T) -> T {
    y.max(eps).min(T::one() - eps)
}

/// `ln p(y | μ, ν)` on the clamped target.
pub fn beta_ln_pdf_with<T: Real>(y: T, p: &BetaPrediction<T>, eps: T) -> T {
    -beta_nll_with(p, y, eps)
}

/// Beta density at `y` with the default target clamp.
pub fn beta_pdf<T: Real>(y: T, p: &BetaPrediction<T>) -> T {
    beta_ln_pdf_with(y, p, T::lit(DEFAULT_EPS_CLAMP)).exp()
}

/// Per-sample negative log-likelihood with the default target clamp.
pub fn beta_nll<T: Real>(p: &BetaPrediction<T>, y: T) -> T {
    beta_nll_with(p, y, T::lit(DEFAULT_EPS_CLAMP))
}

pub fn beta_nll_with<T: Real>(p: &BetaPrediction<T>, y: T, eps: T) -> T {
    let y = clamp_target(y, eps);
    let (a, b) = (p.alpha(), p.beta());
    ln_gamma_unchecked(a) + ln_gamma_unchecked(b) - ln_gamma_unchecked(p.nu)
        - (a - T::one()) * y.ln()
        - (b - T::one()) * (-y).ln_1p()
}

/// Gradient of [`beta_nll_with`] with respect to `(μ, ν)`.
pub fn grad_nll_with<T: Real>(p: &BetaPrediction<T>, y: T, eps: T) -> (T, T) {
    let y = clamp_target(y, eps);
    let (mu, nu) = (p.mu, p.nu);
    let psi_a = digamma_unchecked(p.alpha());
    let psi_b = digamma_unchecked(p.beta());
    let ln_y = y.ln();
    let ln_1my = (-y).ln_1p();
    let d_mu = nu * (psi_a - psi_b) - nu * ln_y + nu * ln_1my;
    let d_nu = mu * psi_a + (T::one() - mu) * psi_b - digamma_unchecked(nu) - mu * ln_y - (T::one() - mu) * ln_1my;
    (d_mu, d_nu)
}

pub fn grad_nll<T: Real>(p: &BetaPrediction<T>, y: T) -> (T, T) {
    grad_nll_with(p, y, T::lit(DEFAULT_EPS_CLAMP))
}

/// Differential entropy of the predicted density, written in `(μ, ν)`.
///
/// Never positive; saturates at [`ENTROPY_FLOOR`] instead of reaching `-∞` or NaN.
pub fn beta_entropy<T: Real>(p: &BetaPrediction<T>) -> T {
    let (a, b, nu) = (p.alpha(), p.beta(), p.nu);
    let two = T::lit(2.0);
    let h = ln_gamma_unchecked(a) + ln_gamma_unchecked(b) - ln_gamma_unchecked(nu)
        + (nu - two) * digamma_unchecked(nu)
        - (a - T::one()) * digamma_unchecked(a)
        - (b - T::one()) * digamma_unchecked(b);
    saturate_entropy(h)
}

/// Differential entropy in shape form,
/// `ln B(α, β) - (α - 1)[ψ(α) - ψ(α + β)] - (β - 1)[ψ(β) - ψ(α + β)]`.
pub fn beta_entropy_shape<T: Real>(alpha: T, beta: T) -> T {
    let psi_sum = digamma_unchecked(alpha + beta);
    let h = ln_beta_unchecked(alpha, beta)
        - (alpha - T::one()) * (digamma_unchecked(alpha) - psi_sum)
        - (beta - T::one()) * (digamma_unchecked(beta) - psi_sum);
    saturate_entropy(h)
}

fn saturate_entropy<T: Real>(h: T) -> T {
    let floor = T::lit(ENTROPY_FLOOR);
    if h.is_nan() || h < floor {
        floor
    } else {
        h
    }
}

fn check_lengths(op: &'static str, a: usize, b: usize) -> Result<()> {
    if a == 0 {
        return Err(Error::InvalidArgument(format!("{op}: empty input")));
    }
    if a != b {
        return Err(Error::Shape {
            op,
            expected: a,
            got: b,
        });
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse<T: Real>(preds: &[T], targets: &[T]) -> Result<T> {
    check_lengths("rmse", preds.len(), targets.len())?;
    Ok(rmse_unchecked(preds, targets))
}

fn rmse_unchecked<T: Real>(preds: &[T], targets: &[T]) -> T {
    let sq: T = preds.iter().zip(targets).map(|(&p, &t)| (p - t) * (p - t)).sum();
    (sq / T::from_usize_lossy(preds.len())).sqrt()
}

/// RMSE together with its gradient with respect to each prediction.
///
/// At zero error the gradient is taken as zero.
pub fn rmse_with_grad<T: Real>(preds: &[T], targets: &[T]) -> Result<(T, Vec<T>)> {
    check_lengths("rmse", preds.len(), targets.len())?;
    let value = rmse_unchecked(preds, targets);
    let scale = if value > T::zero() {
        (T::from_usize_lossy(preds.len()) * value).recip()
    } else {
        T::zero()
    };
    let grad = preds.iter().zip(targets).map(|(&p, &t)| (p - t) * scale).collect();
    Ok((value, grad))
}

/// Mean per-sample beta NLL over a batch.
pub fn mean_beta_nll<T: Real>(preds: &[BetaPrediction<T>], targets: &[T], eps: T) -> Result<T> {
    check_lengths("mean_beta_nll", preds.len(), targets.len())?;
    let total: T = preds.iter().zip(targets).map(|(p, &y)| beta_nll_with(p, y, eps)).sum();
    Ok(total / T::from_usize_lossy(preds.len()))
}

/// `RMSE(μ, y) + λ · mean NLL`. RMSE uses the raw targets; NLL the clamped ones.
pub fn combined_supervised_loss<T: Real>(
    preds: &[BetaPrediction<T>],
    targets: &[T],
    w: &LossWeights<T>,
) -> Result<T> {
    let mus: Vec<T> = preds.iter().map(|p| p.mu).collect();
    let err = rmse(&mus, targets)?;
    if w.lambda == T::zero() {
        return Ok(err);
    }
    Ok(err + w.lambda * mean_beta_nll(preds, targets, w.eps_clamp)?)
}

/// Value and per-sample `(∂/∂μ, ∂/∂ν)` of [`combined_supervised_loss`].
pub fn combined_supervised_loss_with_grad<T: Real>(
    preds: &[BetaPrediction<T>],
    targets: &[T],
    w: &LossWeights<T>,
) -> Result<(T, Vec<(T, T)>)> {
    let mus: Vec<T> = preds.iter().map(|p| p.mu).collect();
    let (err, d_rmse) = rmse_with_grad(&mus, targets)?;
    let mut grads: Vec<(T, T)> = d_rmse.into_iter().map(|g| (g, T::zero())).collect();
    if w.lambda == T::zero() {
        return Ok((err, grads));
    }
    let m = T::from_usize_lossy(preds.len());
    let scale = w.lambda / m;
    let mut nll = T::zero();
    for ((p, &y), g) in preds.iter().zip(targets).zip(grads.iter_mut()) {
        nll += beta_nll_with(p, y, w.eps_clamp);
        let (d_mu, d_nu) = grad_nll_with(p, y, w.eps_clamp);
        g.0 += scale * d_mu;
        g.1 += scale * d_nu;
    }
    Ok((err + w.lambda * nll / m, grads))
}
