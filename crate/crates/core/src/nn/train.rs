//! Composite objective over a model pair and the epoch loop that minimises it.
//!
//! The objective is `L_s(primary) + L_s(twin) + τ · C`, where `L_s` is the
//! head's supervised loss on the labelled samples and `C` is the RMSE between
//! the two models' point predictions over labelled and pseudo-labelled
//! samples. Without a twin only `L_s(primary)` remains.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::scalar::Real;

use super::adam::{AdamConfig, OptimState};
use super::head::{raw_gradient, HeadOutput};
use super::loss::{consistency_loss, supervised_loss, LossConfig};
use super::{Mlp, Mode, Trace};

/// How the consistency term supervises each model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyMode {
    /// One RMSE between the live predictions of both models; gradients reach both.
    #[default]
    Joint,
    /// Each model is pulled towards the other's detached predictions on the
    /// labelled samples and towards the other's pre-retraining pseudo-labels
    /// on the pseudo-labelled samples.
    CrossPseudo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<T> {
    pub epochs: usize,
    pub adam: AdamConfig<T>,
    pub loss: LossConfig<T>,
    pub consistency: ConsistencyMode,
    /// Training sets up to this size are processed in one batch; larger
    /// ones are shuffled into mini-batches of `batch_size` every epoch.
    pub full_batch_limit: usize,
    pub batch_size: usize,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            epochs: 12,
            adam: AdamConfig::default(),
            loss: LossConfig::default(),
            consistency: ConsistencyMode::Joint,
            full_batch_limit: 0,
            batch_size: 16,
        }
    }
}

/// Inputs to one training run. Slices borrow the pool's pixel buffers.
#[derive(Debug, Clone, Default)]
pub struct TrainSet<'a, T> {
    pub labelled: Vec<&'a [T]>,
    pub targets: Vec<T>,
    pub unlabelled: Vec<&'a [T]>,
    /// Pre-retraining pseudo-labels of `unlabelled` from (primary, twin).
    /// Required by [`ConsistencyMode::CrossPseudo`].
    pub pseudo: Option<(Vec<T>, Vec<T>)>,
}

impl<T> TrainSet<'_, T> {
    pub fn len(&self) -> usize {
        self.labelled.len() + self.unlabelled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Index subsets of a [`TrainSet`] used for one optimisation step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub labelled: Vec<usize>,
    pub unlabelled: Vec<usize>,
}

impl Batch {
    pub fn full<T>(set: &TrainSet<'_, T>) -> Self {
        Self {
            labelled: (0..set.labelled.len()).collect(),
            unlabelled: (0..set.unlabelled.len()).collect(),
        }
    }

    fn len(&self) -> usize {
        self.labelled.len() + self.unlabelled.len()
    }
}

/// Objective value and parameter gradients at the current weights.
#[derive(Debug, Clone)]
pub struct ObjectiveEval<T> {
    pub value: T,
    pub primary_grad: Vec<T>,
    pub twin_grad: Option<Vec<T>>,
    pub forward_passes: u64,
}

struct Pass<T> {
    traces: Vec<Trace<T>>,
    outputs: Vec<HeadOutput<T>>,
}

fn run_model<T: Real>(
    model: &Mlp<T>,
    set: &TrainSet<'_, T>,
    batch: &Batch,
    rng: &mut ChaCha8Rng,
) -> Result<Pass<T>> {
    let inputs = batch
        .labelled
        .iter()
        .map(|&i| set.labelled[i])
        .chain(batch.unlabelled.iter().map(|&i| set.unlabelled[i]));
    let mut traces = Vec::with_capacity(batch.len());
    let mut outputs = Vec::with_capacity(batch.len());
    for x in inputs {
        let t = model.forward_trace(x, Mode::Train, rng)?;
        outputs.push(super::head::activate(model.head(), &t.raw));
        traces.push(t);
    }
    Ok(Pass { traces, outputs })
}

fn supervised_part<T: Real>(
    pass: &Pass<T>,
    set: &TrainSet<'_, T>,
    batch: &Batch,
    cfg: &LossConfig<T>,
    d_params: &mut [Vec<T>],
) -> Result<T> {
    if batch.labelled.is_empty() {
        return Ok(T::zero());
    }
    let n = batch.labelled.len();
    let targets: Vec<T> = batch.labelled.iter().map(|&i| set.targets[i]).collect();
    let lg = supervised_loss(&pass.outputs[..n], &targets, cfg)?;
    for (acc, g) in d_params.iter_mut().zip(lg.grads) {
        for (a, v) in acc.iter_mut().zip(g) {
            *a += v;
        }
    }
    Ok(lg.value)
}

fn backprop<T: Real>(model: &Mlp<T>, pass: &Pass<T>, d_params: &[Vec<T>]) -> Vec<T> {
    let mut grads = vec![T::zero(); model.num_params()];
    for (trace, dp) in pass.traces.iter().zip(d_params) {
        let d_raw = raw_gradient(model.head(), &trace.raw, dp);
        model.backward(trace, &d_raw, &mut grads);
    }
    grads
}

/// Evaluates the composite objective and its exact gradients on `batch`.
///
/// Dropout masks, if any, are drawn from `rngs` (primary, twin), so reseeding
/// the streams reproduces the same objective.
pub fn objective<T: Real>(
    primary: &Mlp<T>,
    twin: Option<&Mlp<T>>,
    set: &TrainSet<'_, T>,
    batch: &Batch,
    cfg: &TrainConfig<T>,
    rngs: (&mut ChaCha8Rng, &mut ChaCha8Rng),
) -> Result<ObjectiveEval<T>> {
    let width = primary.head().output_dim();
    let p_pass = run_model(primary, set, batch, rngs.0)?;
    let mut p_dparams = vec![vec![T::zero(); width]; batch.len()];
    let mut value = supervised_part(&p_pass, set, batch, &cfg.loss, &mut p_dparams)?;
    let mut forward_passes = batch.len() as u64;

    let Some(twin) = twin else {
        return Ok(ObjectiveEval {
            value,
            primary_grad: backprop(primary, &p_pass, &p_dparams),
            twin_grad: None,
            forward_passes,
        });
    };
    if twin.head() != primary.head() {
        return Err(Error::InvalidArgument("twin must share the primary's architecture".into()));
    }
    let t_pass = run_model(twin, set, batch, rngs.1)?;
    forward_passes += batch.len() as u64;
    let mut t_dparams = vec![vec![T::zero(); width]; batch.len()];
    value += supervised_part(&t_pass, set, batch, &cfg.loss, &mut t_dparams)?;

    let tau = cfg.loss.weights.tau;
    if tau > T::zero() && batch.len() > 0 {
        let p_points: Vec<T> = p_pass.outputs.iter().map(HeadOutput::point).collect();
        let t_points: Vec<T> = t_pass.outputs.iter().map(HeadOutput::point).collect();
        match cfg.consistency {
            ConsistencyMode::Joint => {
                let (c, gp, gt) = consistency_loss(&p_points, &t_points)?;
                value += tau * c;
                for (dp, g) in p_dparams.iter_mut().zip(gp) {
                    dp[0] += tau * g;
                }
                for (dt, g) in t_dparams.iter_mut().zip(gt) {
                    dt[0] += tau * g;
                }
            }
            ConsistencyMode::CrossPseudo => {
                let (p_pseudo, t_pseudo) = set.pseudo.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("cross-pseudo consistency needs pre-retraining pseudo-labels".into())
                })?;
                let n = batch.labelled.len();
                let mut target_for_primary = t_points[..n].to_vec();
                target_for_primary.extend(batch.unlabelled.iter().map(|&i| t_pseudo[i]));
                let mut target_for_twin = p_points[..n].to_vec();
                target_for_twin.extend(batch.unlabelled.iter().map(|&i| p_pseudo[i]));
                let (cp, gp, _) = consistency_loss(&p_points, &target_for_primary)?;
                let (ct, gt, _) = consistency_loss(&t_points, &target_for_twin)?;
                value += tau * (cp + ct);
                for (dp, g) in p_dparams.iter_mut().zip(gp) {
                    dp[0] += tau * g;
                }
                for (dt, g) in t_dparams.iter_mut().zip(gt) {
                    dt[0] += tau * g;
                }
            }
        }
    }
    Ok(ObjectiveEval {
        value,
        primary_grad: backprop(primary, &p_pass, &p_dparams),
        twin_grad: Some(backprop(twin, &t_pass, &t_dparams)),
        forward_passes,
    })
}

/// What a training run reports back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean step objective per epoch.
    pub loss_trace: Vec<f64>,
    pub steps: u64,
    /// Per-sample forward evaluations across both models.
    pub forward_passes: u64,
}

fn batches<T>(set: &TrainSet<'_, T>, cfg: &TrainConfig<T>, rng: &mut ChaCha8Rng) -> Vec<Batch> {
    if set.len() <= cfg.full_batch_limit {
        return vec![Batch::full(set)];
    }
    let n_lab = set.labelled.len();
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(rng);
    order
        .chunks(cfg.batch_size.max(1))
        .map(|chunk| {
            let mut b = Batch {
                labelled: Vec::new(),
                unlabelled: Vec::new(),
            };
            for &i in chunk {
                if i < n_lab {
                    b.labelled.push(i);
                } else {
                    b.unlabelled.push(i - n_lab);
                }
            }
            b
        })
        .collect()
}

/// Trains the model (pair) for `cfg.epochs` from its current weights with
/// fresh Adam state. Deterministic given `seed`.
pub fn train<T: Real>(
    primary: &mut Mlp<T>,
    mut twin: Option<&mut Mlp<T>>,
    set: &TrainSet<'_, T>,
    cfg: &TrainConfig<T>,
    seed: u64,
) -> Result<TrainReport> {
    if set.labelled.is_empty() && set.unlabelled.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if set.labelled.len() != set.targets.len() {
        return Err(Error::Shape {
            op: "train",
            expected: set.labelled.len(),
            got: set.targets.len(),
        });
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(stream(seed, 0));
    let mut drop_p = ChaCha8Rng::seed_from_u64(stream(seed, 1));
    let mut drop_t = ChaCha8Rng::seed_from_u64(stream(seed, 2));
    let mut opt_p = OptimState::new(cfg.adam, primary.num_params());
    let mut opt_t = twin.as_ref().map(|t| OptimState::new(cfg.adam, t.num_params()));
    let mut report = TrainReport {
        loss_trace: Vec::with_capacity(cfg.epochs),
        steps: 0,
        forward_passes: 0,
    };
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        let plan = batches(set, cfg, &mut shuffle_rng);
        for (step, batch) in plan.iter().enumerate() {
            let eval = objective(&*primary, twin.as_deref(), set, batch, cfg, (&mut drop_p, &mut drop_t))?;
            let value = eval.value.as_f64();
            let grads_finite = eval.primary_grad.iter().all(|g| g.is_finite())
                && eval.twin_grad.as_ref().is_none_or(|g| g.iter().all(|v| v.is_finite()));
            if !value.is_finite() || !grads_finite {
                return Err(Error::Divergence { epoch, step, value });
            }
            opt_p.step(primary.params_mut(), &eval.primary_grad)?;
            if let (Some(t), Some(opt), Some(g)) = (twin.as_deref_mut(), opt_t.as_mut(), eval.twin_grad.as_ref()) {
                opt.step(t.params_mut(), g)?;
            }
            total += value;
            report.steps += 1;
            report.forward_passes += eval.forward_passes;
        }
        report.loss_trace.push(total / plan.len() as f64);
    }
    Ok(report)
}

/// The full-batch objective in evaluation mode (no dropout), value only.
pub fn evaluate<T: Real>(
    primary: &Mlp<T>,
    twin: Option<&Mlp<T>>,
    set: &TrainSet<'_, T>,
    cfg: &TrainConfig<T>,
) -> Result<T> {
    let mut p = primary.clone();
    p.set_dropout(0.0);
    let t = twin.map(|t| {
        let mut t = t.clone();
        t.set_dropout(0.0);
        t
    });
    let mut r0 = ChaCha8Rng::seed_from_u64(0);
    let mut r1 = ChaCha8Rng::seed_from_u64(0);
    Ok(objective(&p, t.as_ref(), set, &Batch::full(set), cfg, (&mut r0, &mut r1))?.value)
}
