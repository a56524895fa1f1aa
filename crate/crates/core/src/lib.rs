pub mod beta;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod special;
pub mod synth;
pub mod ugel;
pub mod verify;

pub use beta::{BetaPrediction, LossWeights};
pub use error::{Error, Result};
pub use nn::{ArchSpec, HeadKind, HeadOutput, Mlp};
pub use scalar::Real;
pub use nn::head::DerPrediction;

pub type Mlp64 = Mlp<f64>;
pub type Mlp32 = Mlp<f32>;
pub type Beta64 = BetaPrediction<f64>;
pub type Beta32 = BetaPrediction<f32>;
pub type Der64 = DerPrediction<f64>;
pub type Der32 = DerPrediction<f32>;
