//! Output heads: squashing of raw network outputs into valid distribution
//! parameters, and the matching Jacobian-vector products for backprop.

use serde::{Deserialize, Serialize};

use crate::beta::BetaPrediction;
use crate::error::{Error, Result};
use crate::scalar::{logistic, softplus, Real};

/// Clip applied to squashed means so they stay strictly inside (0, 1).
pub const MU_EPS: f64 = 1e-6;
/// Added to the softplus precision of the beta head.
pub const NU_FLOOR: f64 = 1e-4;
/// Added to every softplus output of the evidential head.
pub const EVIDENCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Beta mean and precision.
    Dbr,
    /// Normal-inverse-gamma evidential parameters.
    Der,
    /// Single squashed scalar, trained with dropout.
    ScalarDropout,
}

impl HeadKind {
    pub fn output_dim(self) -> usize {
        match self {
            HeadKind::Dbr => 2,
            HeadKind::Der => 4,
            HeadKind::ScalarDropout => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Dbr => "dbr",
            HeadKind::Der => "der",
            HeadKind::ScalarDropout => "scalar_dropout",
        }
    }
}

/// Normal-inverse-gamma parameters `(γ, υ, α, β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerPrediction<T> {
    pub gamma: T,
    pub upsilon: T,
    pub alpha: T,
    pub beta: T,
}

impl<T: Real> DerPrediction<T> {
    pub fn new(gamma: T, upsilon: T, alpha: T, beta: T) -> Result<Self> {
        if !(gamma.is_finite() && upsilon > T::zero() && alpha > T::one() && beta > T::zero()) {
            return Err(Error::domain(
                "DerPrediction",
                format!("need finite gamma, upsilon > 0, alpha > 1, beta > 0; got ({gamma}, {upsilon}, {alpha}, {beta})"),
            ));
        }
        Ok(Self {
            gamma,
            upsilon,
            alpha,
            beta,
        })
    }

    /// Aleatoric `β / (α - 1)`.
    pub fn aleatoric(&self) -> T {
        self.beta / (self.alpha - T::one())
    }

    /// Epistemic `β / (υ (α - 1))`.
    pub fn epistemic(&self) -> T {
        self.beta / (self.upsilon * (self.alpha - T::one()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HeadOutput<T> {
    Beta(BetaPrediction<T>),
    Der(DerPrediction<T>),
    Scalar(T),
}

impl<T: Real> HeadOutput<T> {
    /// The scalar regression estimate: `μ`, `γ` or `ŷ`.
    pub fn point(&self) -> T {
        match self {
            HeadOutput::Beta(p) => p.mu(),
            HeadOutput::Der(p) => p.gamma,
            HeadOutput::Scalar(y) => *y,
        }
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            HeadOutput::Beta(_) => HeadKind::Dbr,
            HeadOutput::Der(_) => HeadKind::Der,
            HeadOutput::Scalar(_) => HeadKind::ScalarDropout,
        }
    }
}

fn squash_unit<T: Real>(x: T) -> (T, T) {
    let eps = T::lit(MU_EPS);
    let s = logistic(x);
    if s < eps {
        (eps, T::zero())
    } else if s > T::one() - eps {
        (T::one() - eps, T::zero())
    } else {
        (s, s * (T::one() - s))
    }
}

/// Maps raw outputs to head parameters.
pub fn activate<T: Real>(kind: HeadKind, raw: &[T]) -> HeadOutput<T> {
    debug_assert_eq!(raw.len(), kind.output_dim());
    match kind {
        HeadKind::Dbr => {
            let (mu, _) = squash_unit(raw[0]);
            let nu = softplus(raw[1]) + T::lit(NU_FLOOR);
            HeadOutput::Beta(BetaPrediction::new(mu, nu).expect("squashed head is valid"))
        }
        HeadKind::Der => {
            let floor = T::lit(EVIDENCE_FLOOR);
            HeadOutput::Der(DerPrediction {
                gamma: raw[0],
                upsilon: softplus(raw[1]) + floor,
                alpha: T::one() + softplus(raw[2]) + floor,
                beta: softplus(raw[3]) + floor,
            })
        }
        HeadKind::ScalarDropout => HeadOutput::Scalar(squash_unit(raw[0]).0),
    }
}

/// Pulls a gradient with respect to head parameters (in the order the head
/// lists them) back to the raw outputs.
pub fn raw_gradient<T: Real>(kind: HeadKind, raw: &[T], d_params: &[T]) -> Vec<T> {
    match kind {
        HeadKind::Dbr => {
            let (_, d_mu) = squash_unit(raw[0]);
            vec![d_params[0] * d_mu, d_params[1] * logistic(raw[1])]
        }
        HeadKind::Der => vec![
            d_params[0],
            d_params[1] * logistic(raw[1]),
            d_params[2] * logistic(raw[2]),
            d_params[3] * logistic(raw[3]),
        ],
        HeadKind::ScalarDropout => vec![d_params[0] * squash_unit(raw[0]).1],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dbr_zero_raw() {
        let out = activate(HeadKind::Dbr, &[0.0_f64, 0.0]);
        let HeadOutput::Beta(p) = out else { panic!() };
        assert_eq!(p.mu(), 0.5);
        assert!((p.nu() - (std::f64::consts::LN_2 + NU_FLOOR)).abs() < 1e-15);
    }

    #[test]
    fn ranges_hold_for_extreme_raw_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(-800.0..800.0)).collect();
            let HeadOutput::Der(d) = activate(HeadKind::Der, &raw) else { panic!() };
            assert!(d.alpha > 1.0 && d.upsilon > 0.0 && d.beta > 0.0);
            let HeadOutput::Beta(b) = activate(HeadKind::Dbr, &raw[..2]) else { panic!() };
            assert!(b.mu() > 0.0 && b.mu() < 1.0 && b.nu() > 0.0);
            let y = activate(HeadKind::ScalarDropout, &raw[..1]).point();
            assert!(y > 0.0 && y < 1.0);
        }
    }

    #[test]
    fn der_uncertainty_components() {
        let d = DerPrediction::new(0.3, 1.0, 2.0, 1.0).unwrap();
        assert_eq!(d.aleatoric() + d.epistemic(), 2.0);
        let d = DerPrediction::new(0.3, 2.0, 3.0, 4.0).unwrap();
        assert_eq!(d.aleatoric() + d.epistemic(), 3.0);
        assert!(DerPrediction::new(0.0, 1.0, 1.0, 1.0).is_err());
    }
}
