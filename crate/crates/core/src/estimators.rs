//! Per-sample uncertainty scores with forward-pass accounting.
//!
//! Higher scores mean more uncertain. The beta estimator returns differential
//! entropy (≤ 0), MC dropout the variance over stochastic passes, DER the sum
//! of aleatoric and epistemic variances, and RAN a constant.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beta::beta_entropy;
use crate::error::{Error, Result};
use crate::nn::{DerPrediction, HeadKind, HeadOutput, Mlp, Mode};
use crate::scalar::Real;

pub const DEFAULT_MC_PASSES: usize = 10;
pub const MAX_MC_PASSES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Dbr,
    Mcd,
    Der,
    Ran,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Dbr => "dbr",
            Self::Mcd => "mcd",
            Self::Der => "der",
            Self::Ran => "ran",
        }
    }

    /// Head the estimator needs, or `None` when any head will do.
    pub fn required_head(self) -> Option<HeadKind> {
        match self {
            Self::Dbr => Some(HeadKind::Dbr),
            Self::Mcd => Some(HeadKind::ScalarDropout),
            Self::Der => Some(HeadKind::Der),
            Self::Ran => None,
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dbr" => Ok(Self::Dbr),
            "mcd" => Ok(Self::Mcd),
            "der" => Ok(Self::Der),
            "ran" => Ok(Self::Ran),
            other => Err(Error::InvalidArgument(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Mean and population variance of a set of stochastic predictions.
pub fn mc_dropout_moments<T: Real>(samples: &[T]) -> Result<(T, T)> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "MC dropout needs at least 2 passes, got {}",
            samples.len()
        )));
    }
    // shifted by the first sample so identical passes give exactly zero
    let n = T::from_usize_lossy(samples.len());
    let s0 = samples[0];
    let shift = samples.iter().map(|&s| s - s0).sum::<T>() / n;
    let var = samples
        .iter()
        .map(|&s| {
            let d = s - s0 - shift;
            d * d
        })
        .sum::<T>()
        / n;
    Ok((s0 + shift, var))
}

/// `β/(α-1) + β/(υ(α-1))`.
pub fn der_total_uncertainty<T: Real>(p: &DerPrediction<T>) -> T {
    p.aleatoric() + p.epistemic()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UncertaintyEstimator {
    kind: EstimatorKind,
    passes: usize,
    pass_counter: u64,
}

impl UncertaintyEstimator {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            passes: DEFAULT_MC_PASSES,
            pass_counter: 0,
        }
    }

    pub fn with_passes(kind: EstimatorKind, passes: usize) -> Result<Self> {
        if !(2..=MAX_MC_PASSES).contains(&passes) {
            return Err(Error::InvalidArgument(format!(
                "MC dropout passes must lie in 2..={MAX_MC_PASSES}, got {passes}"
            )));
        }
        Ok(Self {
            kind,
            passes,
            pass_counter: 0,
        })
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn passes(&self) -> usize {
        self.passes
    }

    pub fn pass_counter(&self) -> u64 {
        self.pass_counter
    }

    fn require<T: Real>(&self, model: &Mlp<T>) -> Result<()> {
        match self.kind.required_head() {
            Some(h) if h != model.head() => Err(Error::HeadMismatch {
                estimator: self.kind.name(),
                required: h.name(),
                actual: model.head().name(),
            }),
            _ => Ok(()),
        }
    }

    pub fn dbr_uncertainty<T: Real>(&mut self, model: &Mlp<T>, x: &[T]) -> Result<T> {
        self.require(model)?;
        let out = model.predict(x)?;
        self.pass_counter += 1;
        match out {
            HeadOutput::Beta(p) => Ok(beta_entropy(&p)),
            _ => unreachable!("head checked"),
        }
    }

    /// Returns `(mean, variance)` over the configured number of stochastic passes.
    pub fn mcd_moments<T: Real, R: Rng>(&mut self, model: &Mlp<T>, x: &[T], rng: &mut R) -> Result<(T, T)> {
        self.require(model)?;
        let mut samples = Vec::with_capacity(self.passes);
        for _ in 0..self.passes {
            samples.push(model.forward(x, Mode::Train, rng)?.point());
            self.pass_counter += 1;
        }
        mc_dropout_moments(&samples)
    }

    pub fn mcd_uncertainty<T: Real, R: Rng>(&mut self, model: &Mlp<T>, x: &[T], rng: &mut R) -> Result<T> {
        Ok(self.mcd_moments(model, x, rng)?.1)
    }

    pub fn der_uncertainty<T: Real>(&mut self, model: &Mlp<T>, x: &[T]) -> Result<T> {
        self.require(model)?;
        let out = model.predict(x)?;
        self.pass_counter += 1;
        match out {
            HeadOutput::Der(p) => Ok(der_total_uncertainty(&p)),
            _ => unreachable!("head checked"),
        }
    }

    /// Constant score; random selection comes from the tie-breaking permutation.
    pub fn ran_uncertainty<T: Real>(&self, _x: &[T]) -> T {
        T::zero()
    }

    pub fn score<T: Real, R: Rng>(&mut self, model: &Mlp<T>, x: &[T], rng: &mut R) -> Result<T> {
        match self.kind {
            EstimatorKind::Dbr => self.dbr_uncertainty(model, x),
            EstimatorKind::Mcd => self.mcd_uncertainty(model, x, rng),
            EstimatorKind::Der => self.der_uncertainty(model, x),
            EstimatorKind::Ran => Ok(self.ran_uncertainty(x)),
        }
    }

    pub fn score_pool<T: Real, R: Rng>(&mut self, model: &Mlp<T>, pool: &[&[T]], rng: &mut R) -> Result<Vec<T>> {
        self.require(model)?;
        pool.iter().map(|x| self.score(model, x, rng)).collect()
    }
}
