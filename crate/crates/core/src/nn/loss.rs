//! Per-head training losses with gradients in head-parameter space.
//!
//! Gradients come back as one vector per sample, ordered like the head lists
//! its parameters: `[μ, ν]` for the beta head, `[γ, υ, α, β]` for the
//! evidential head and `[ŷ]` for the scalar head. [`super::head::raw_gradient`]
//! carries them the rest of the way to the raw outputs.

use serde::{Deserialize, Serialize};

use crate::beta::{combined_supervised_loss_with_grad, rmse_with_grad, BetaPrediction, LossWeights};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special::{digamma_unchecked, ln_gamma_unchecked};

use super::head::{DerPrediction, HeadKind, HeadOutput};

/// Evidence regulariser weight of the evidential loss.
pub const DER_REG_COEF: f64 = 0.01;

/// Settings shared by every supervised loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig<T> {
    pub weights: LossWeights<T>,
    pub der_reg: T,
}

impl<T: Real> Default for LossConfig<T> {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            der_reg: T::lit(DER_REG_COEF),
        }
    }
}

/// Value and per-sample head-parameter gradients of a batch loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T> {
    pub value: T,
    pub grads: Vec<Vec<T>>,
}

/// Normal-inverse-gamma negative log-likelihood of `y`.
pub fn nig_nll<T: Real>(p: &DerPrediction<T>, y: T) -> T {
    let half = T::lit(0.5);
    let omega = T::lit(2.0) * p.beta * (T::one() + p.upsilon);
    let r = y - p.gamma;
    half * (T::PI() / p.upsilon).ln() - p.alpha * omega.ln()
        + (p.alpha + half) * (p.upsilon * r * r + omega).ln()
        + ln_gamma_unchecked(p.alpha)
        - ln_gamma_unchecked(p.alpha + half)
}

/// Gradient of [`nig_nll`] with respect to `(γ, υ, α, β)`.
pub fn nig_nll_grad<T: Real>(p: &DerPrediction<T>, y: T) -> [T; 4] {
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let one_plus_u = T::one() + p.upsilon;
    let omega = two * p.beta * one_plus_u;
    let r = y - p.gamma;
    let q = p.upsilon * r * r + omega;
    let a_half = p.alpha + half;
    let d_gamma = -a_half * two * p.upsilon * r / q;
    let d_upsilon = -half / p.upsilon - p.alpha * two * p.beta / omega + a_half * (r * r + two * p.beta) / q;
    let d_alpha = q.ln() - omega.ln() + digamma_unchecked(p.alpha) - digamma_unchecked(p.alpha + half);
    let d_beta = -p.alpha / p.beta + a_half * two * one_plus_u / q;
    [d_gamma, d_upsilon, d_alpha, d_beta]
}

/// Evidence regulariser `|y - γ| (2υ + α)`.
pub fn der_regulariser<T: Real>(p: &DerPrediction<T>, y: T) -> T {
    (y - p.gamma).abs() * (T::lit(2.0) * p.upsilon + p.alpha)
}

fn der_regulariser_grad<T: Real>(p: &DerPrediction<T>, y: T) -> [T; 4] {
    let r = y - p.gamma;
    let abs_r = r.abs();
    let sign = if r > T::zero() {
        T::one()
    } else if r < T::zero() {
        -T::one()
    } else {
        T::zero()
    };
    [-sign * (T::lit(2.0) * p.upsilon + p.alpha), T::lit(2.0) * abs_r, abs_r, T::zero()]
}

/// Mean of `nig_nll + coef * regulariser` over the batch.
pub fn der_loss<T: Real>(preds: &[DerPrediction<T>], targets: &[T], coef: T) -> Result<LossGrad<T>> {
    check(preds.len(), targets.len())?;
    let scale = T::from_usize_lossy(preds.len()).recip();
    let mut value = T::zero();
    let mut grads = Vec::with_capacity(preds.len());
    for (p, &y) in preds.iter().zip(targets) {
        value += nig_nll(p, y) + coef * der_regulariser(p, y);
        let g = nig_nll_grad(p, y);
        let r = der_regulariser_grad(p, y);
        grads.push((0..4).map(|i| scale * (g[i] + coef * r[i])).collect());
    }
    Ok(LossGrad {
        value: value * scale,
        grads,
    })
}

fn check(a: usize, b: usize) -> Result<()> {
    if a == 0 {
        return Err(Error::InvalidArgument("loss over an empty batch".into()));
    }
    if a != b {
        return Err(Error::Shape {
            op: "loss",
            expected: a,
            got: b,
        });
    }
    Ok(())
}

fn head_mismatch(want: HeadKind, got: HeadKind) -> Error {
    Error::HeadMismatch {
        estimator: "supervised loss",
        required: want.name(),
        actual: got.name(),
    }
}

/// The supervised loss appropriate for the head: RMSE + λ·NLL for the beta
/// head, the evidential loss for the DER head and plain RMSE for the scalar head.
pub fn supervised_loss<T: Real>(outputs: &[HeadOutput<T>], targets: &[T], cfg: &LossConfig<T>) -> Result<LossGrad<T>> {
    check(outputs.len(), targets.len())?;
    match outputs[0].kind() {
        HeadKind::Dbr => {
            let preds = outputs
                .iter()
                .map(|o| match o {
                    HeadOutput::Beta(p) => Ok(*p),
                    other => Err(head_mismatch(HeadKind::Dbr, other.kind())),
                })
                .collect::<Result<Vec<BetaPrediction<T>>>>()?;
            let (value, g) = combined_supervised_loss_with_grad(&preds, targets, &cfg.weights)?;
            Ok(LossGrad {
                value,
                grads: g.into_iter().map(|(a, b)| vec![a, b]).collect(),
            })
        }
        HeadKind::Der => {
            let preds = outputs
                .iter()
                .map(|o| match o {
                    HeadOutput::Der(p) => Ok(*p),
                    other => Err(head_mismatch(HeadKind::Der, other.kind())),
                })
                .collect::<Result<Vec<_>>>()?;
            der_loss(&preds, targets, cfg.der_reg)
        }
        HeadKind::ScalarDropout => {
            let preds = outputs
                .iter()
                .map(|o| match o {
                    HeadOutput::Scalar(y) => Ok(*y),
                    other => Err(head_mismatch(HeadKind::ScalarDropout, other.kind())),
                })
                .collect::<Result<Vec<_>>>()?;
            let (value, g) = rmse_with_grad(&preds, targets)?;
            Ok(LossGrad {
                value,
                grads: g.into_iter().map(|d| vec![d]).collect(),
            })
        }
    }
}

/// RMSE between two prediction vectors with gradients for both sides.
pub fn consistency_loss<T: Real>(a: &[T], b: &[T]) -> Result<(T, Vec<T>, Vec<T>)> {
    let (value, ga) = rmse_with_grad(a, b)?;
    let gb = ga.iter().map(|&g| -g).collect();
    Ok((value, ga, gb))
}
