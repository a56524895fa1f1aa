//! A small fully connected regressor with interchangeable output heads.
//!
//! Parameters of all layers live in one flat buffer so gradients and optimiser
//! moments are plain vectors of the same length. Weights of a layer are stored
//! row-major by output unit (`w[o * in_dim + i]`).

pub mod adam;
pub mod head;
pub mod loss;
pub mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use adam::{AdamConfig, OptimState};
pub use head::{DerPrediction, HeadKind, HeadOutput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub head: HeadKind,
    pub dropout_rate: f64,
}

impl ArchSpec {
    /// 256 -> 64 -> 32 -> head, with dropout 0.2 on the scalar head only.
    pub fn desk_default(input_dim: usize, head: HeadKind) -> Self {
        let dropout_rate = if head == HeadKind::ScalarDropout { 0.2 } else { 0.0 };
        Self {
            input_dim,
            hidden_dims: vec![64, 32],
            head,
            dropout_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidArgument("input_dim must be positive".into()));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidArgument(
                "at least one hidden layer of positive width is required".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct LayerLayout {
    in_dim: usize,
    out_dim: usize,
    weights: usize,
    biases: usize,
}

/// How dropout behaves during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout sampled (if the architecture has any).
    Train,
    /// Deterministic, no dropout.
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    arch: ArchSpec,
    layers: Vec<LayerLayout>,
    params: Vec<T>,
    init_seed: u64,
}

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    /// Input followed by each hidden layer's output after ReLU and dropout.
    activations: Vec<Vec<T>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<T>>,
    /// Inverted-dropout scale per hidden unit, when dropout was sampled.
    masks: Vec<Option<Vec<T>>>,
    pub raw: Vec<T>,
}

impl<T: Real> Mlp<T> {
    /// He-uniform hidden layers, Glorot-uniform head, zero biases.
    pub fn init(arch: ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut dims = vec![arch.input_dim];
        dims.extend(&arch.hidden_dims);
        dims.push(arch.head.output_dim());
        let mut layers = Vec::with_capacity(dims.len() - 1);
        let mut offset = 0;
        for pair in dims.windows(2) {
            let (in_dim, out_dim) = (pair[0], pair[1]);
            layers.push(LayerLayout {
                in_dim,
                out_dim,
                weights: offset,
                biases: offset + in_dim * out_dim,
            });
            offset += in_dim * out_dim + out_dim;
        }
        let mut params = vec![T::zero(); offset];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = layers.len() - 1;
        for (k, layer) in layers.iter().enumerate() {
            let bound = if k == last {
                (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt()
            } else {
                (6.0 / layer.in_dim as f64).sqrt()
            };
            for w in &mut params[layer.weights..layer.biases] {
                *w = T::lit(rng.gen_range(-bound..bound));
            }
        }
        Ok(Self {
            arch,
            layers,
            params,
            init_seed: seed,
        })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn head(&self) -> HeadKind {
        self.arch.head
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Overrides the dropout rate, e.g. to evaluate a dropout model deterministically.
    pub fn set_dropout(&mut self, rate: f64) {
        self.arch.dropout_rate = rate;
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Weights of layer `k` as a flat `(out_dim, in_dim)` slice.
    pub fn layer_weights(&self, k: usize) -> &[T] {
        let l = &self.layers[k];
        &self.params[l.weights..l.biases]
    }

    /// Biases of the output layer; handy for pinning a constant prediction.
    pub fn head_bias_mut(&mut self) -> &mut [T] {
        let l = self.layers[self.layers.len() - 1];
        &mut self.params[l.biases..l.biases + l.out_dim]
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.arch.input_dim {
            return Err(Error::Shape {
                op: "forward",
                expected: self.arch.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Forward pass returning the activated head output.
    ///
    /// `rng` is consulted only when `mode` is [`Mode::Train`] and the
    /// architecture has a non-zero dropout rate.
    pub fn forward<R: Rng>(&self, x: &[T], mode: Mode, rng: &mut R) -> Result<HeadOutput<T>> {
        Ok(head::activate(self.head(), &self.forward_trace(x, mode, rng)?.raw))
    }

    /// Evaluation-mode forward pass; never touches a random stream.
    pub fn predict(&self, x: &[T]) -> Result<HeadOutput<T>> {
        self.check_input(x)?;
        Ok(head::activate(self.head(), &self.run(x, None::<&mut ChaCha8Rng>, false).raw))
    }

    pub fn forward_trace<R: Rng>(&self, x: &[T], mode: Mode, rng: &mut R) -> Result<Trace<T>> {
        self.check_input(x)?;
        let sample = mode == Mode::Train && self.arch.dropout_rate > 0.0;
        Ok(if sample {
            self.run(x, Some(rng), true)
        } else {
            self.run(x, None::<&mut R>, true)
        })
    }

    fn run<R: Rng>(&self, x: &[T], mut rng: Option<&mut R>, keep: bool) -> Trace<T> {
        let hidden = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(if keep { hidden + 1 } else { 0 });
        let mut pre = Vec::with_capacity(if keep { hidden } else { 0 });
        let mut masks = Vec::with_capacity(if keep { hidden } else { 0 });
        let rate = self.arch.dropout_rate;
        let keep_scale = T::lit(1.0 / (1.0 - rate));
        let mut current = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = self.affine(layer, &current);
            if k == hidden {
                if keep {
                    activations.push(current);
                }
                return Trace {
                    activations,
                    pre,
                    masks,
                    raw: z,
                };
            }
            let mut a: Vec<T> = z.iter().map(|&v| v.max(T::zero())).collect();
            let mask = rng.as_mut().map(|r| {
                (0..a.len())
                    .map(|_| if r.gen::<f64>() < rate { T::zero() } else { keep_scale })
                    .collect::<Vec<T>>()
            });
            if let Some(m) = &mask {
                for (v, &s) in a.iter_mut().zip(m) {
                    *v *= s;
                }
            }
            if keep {
                activations.push(std::mem::replace(&mut current, a));
                pre.push(z);
                masks.push(mask);
            } else {
                current = a;
            }
        }
        unreachable!("network has an output layer")
    }

    fn affine(&self, layer: &LayerLayout, input: &[T]) -> Vec<T> {
        let w = &self.params[layer.weights..layer.biases];
        let b = &self.params[layer.biases..layer.biases + layer.out_dim];
        w.chunks_exact(layer.in_dim)
            .zip(b)
            .map(|(row, &bias)| {
                let mut acc = bias;
                for (&wi, &xi) in row.iter().zip(input) {
                    acc += wi * xi;
                }
                acc
            })
            .collect()
    }

    /// Accumulates `∂L/∂θ` into `grads` given `∂L/∂raw` for one traced pass.
    pub fn backward(&self, trace: &Trace<T>, d_raw: &[T], grads: &mut [T]) {
        debug_assert_eq!(grads.len(), self.params.len());
        let mut delta = d_raw.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let input = &trace.activations[k];
            let (in_dim, out_dim) = (layer.in_dim, layer.out_dim);
            for o in 0..out_dim {
                let d = delta[o];
                if d == T::zero() {
                    continue;
                }
                grads[layer.biases + o] += d;
                let row = &mut grads[layer.weights + o * in_dim..layer.weights + (o + 1) * in_dim];
                for (g, &xi) in row.iter_mut().zip(input) {
                    *g += d * xi;
                }
            }
            if k == 0 {
                break;
            }
            let w = &self.params[layer.weights..layer.biases];
            let mut d_input = vec![T::zero(); in_dim];
            for (o, row) in w.chunks_exact(in_dim).enumerate() {
                let d = delta[o];
                if d == T::zero() {
                    continue;
                }
                for (di, &wi) in d_input.iter_mut().zip(row) {
                    *di += d * wi;
                }
            }
            // through dropout and ReLU of hidden layer k - 1
            let z = &trace.pre[k - 1];
            if let Some(mask) = &trace.masks[k - 1] {
                for (di, &s) in d_input.iter_mut().zip(mask) {
                    *di *= s;
                }
            }
            for (di, &zi) in d_input.iter_mut().zip(z) {
                if zi <= T::zero() {
                    *di = T::zero();
                }
            }
            delta = d_input;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch(head: HeadKind) -> ArchSpec {
        ArchSpec {
            input_dim: 256,
            hidden_dims: vec![32, 16],
            head,
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = Mlp::<f64>::init(arch(HeadKind::Dbr), 7).unwrap();
        let b = Mlp::<f64>::init(arch(HeadKind::Dbr), 7).unwrap();
        let c = Mlp::<f64>::init(arch(HeadKind::Dbr), 8).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
        assert_eq!(a.layer_weights(0).len(), 256 * 32);
        assert_eq!(a.num_params(), 256 * 32 + 32 + 32 * 16 + 16 + 16 * 2 + 2);
    }

    #[test]
    fn invalid_arch_rejected() {
        let mut bad = arch(HeadKind::Dbr);
        bad.hidden_dims.clear();
        assert!(Mlp::<f64>::init(bad, 0).is_err());
        let mut bad = arch(HeadKind::Dbr);
        bad.dropout_rate = 1.0;
        assert!(Mlp::<f64>::init(bad, 0).is_err());
    }

    #[test]
    fn forward_shape_checked() {
        let m = Mlp::<f64>::init(arch(HeadKind::Dbr), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(m.forward(&[0.0; 10], Mode::Eval, &mut rng).is_err());
    }

    #[test]
    fn zero_dropout_train_equals_eval() {
        let m = Mlp::<f64>::init(arch(HeadKind::ScalarDropout), 1).unwrap();
        let x: Vec<f64> = (0..256).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let train = m.forward(&x, Mode::Train, &mut rng).unwrap();
        let eval = m.predict(&x).unwrap();
        assert_eq!(train, eval);
    }

    #[test]
    fn zero_weights_raw_zero() {
        let mut m = Mlp::<f64>::init(arch(HeadKind::Dbr), 1).unwrap();
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let HeadOutput::Beta(p) = m.predict(&[0.5; 256]).unwrap() else { panic!() };
        assert_eq!(p.mu(), 0.5);
        assert!((p.nu() - (2f64.ln() + head::NU_FLOOR)).abs() < 1e-15);
    }

    #[test]
    fn dropout_masks_follow_the_stream() {
        let mut a = arch(HeadKind::ScalarDropout);
        a.dropout_rate = 0.5;
        let m = Mlp::<f64>::init(a, 3).unwrap();
        let x = vec![0.7; 256];
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let first: Vec<f64> = (0..5).map(|_| m.forward(&x, Mode::Train, &mut r1).unwrap().point()).collect();
        let again: Vec<f64> = (0..5).map(|_| m.forward(&x, Mode::Train, &mut r2).unwrap().point()).collect();
        assert_eq!(first, again);
        // masks are resampled per call
        assert!(first.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn single_precision_model_runs() {
        let m = Mlp::<f32>::init(arch(HeadKind::Der), 5).unwrap();
        let HeadOutput::Der(d) = m.predict(&[0.25_f32; 256]).unwrap() else { panic!() };
        assert!(d.alpha > 1.0);
    }
}
