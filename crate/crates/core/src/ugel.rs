//! The round engine: score the pool, pick the most and least uncertain
//! subsets, query the oracle for the former, pseudo-label the latter, then
//! retrain a freshly initialised model pair on the composite objective.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beta::{rmse, LossWeights};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, UncertaintyEstimator, DEFAULT_MC_PASSES};
use crate::nn::loss::{consistency_loss, supervised_loss, LossConfig};
use crate::nn::train::{train, ConsistencyMode, TrainConfig, TrainSet};
use crate::nn::{AdamConfig, ArchSpec, HeadKind, HeadOutput, Mlp};
use crate::rng::derive;
use crate::synth::{Patch, Splits};

/// Added to the primary's init seed to get the twin's.
pub const TWIN_SEED_OFFSET: u64 = 1 << 32;

// per-round stream indices under `derive(base_seed, &[round, _])`
const SEED_TRAIN: u64 = 2;
const SEED_SCORE: u64 = 3;
const SEED_SELECT_U: u64 = 4;
const SEED_SELECT_C: u64 = 5;

/// How many pool samples receive pseudo-labels each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertainBudget {
    /// As many as are currently labelled (capped by what the pool can spare).
    #[default]
    EqualD,
    Fixed(usize),
    /// Everything left after the human-labelled subset.
    AllRemaining,
    Zero,
}

impl CertainBudget {
    pub fn resolve(self, labelled: usize, spare: usize) -> Result<usize> {
        match self {
            Self::EqualD => Ok(labelled.min(spare)),
            Self::Fixed(k) if k > spare => Err(Error::PoolExhausted {
                available: spare,
                required: k,
            }),
            Self::Fixed(k) => Ok(k),
            Self::AllRemaining => Ok(spare),
            Self::Zero => Ok(0),
        }
    }
}

impl std::str::FromStr for CertainBudget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "equal_d" => Ok(Self::EqualD),
            "all_remaining" => Ok(Self::AllRemaining),
            "zero" => Ok(Self::Zero),
            _ => s
                .strip_prefix("fixed(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|k| k.trim().parse().ok())
                .map(Self::Fixed)
                .ok_or_else(|| Error::Config(format!("unknown certain budget `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UgelConfig {
    /// Initial labelled set size.
    pub m: usize,
    /// Human labels per round.
    pub b_u: usize,
    pub b_c: CertainBudget,
    pub tau: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub estimator: EstimatorKind,
    pub mc_passes: usize,
    pub rounds: usize,
    pub base_seed: u64,
    /// Train a second, differently initialised model alongside the primary.
    pub twin: bool,
    pub consistency: ConsistencyMode,
    /// Defaults to the head the estimator needs (beta head for RAN).
    pub head: Option<HeadKind>,
    pub hidden_dims: Vec<usize>,
    /// Defaults to 0.2 for the scalar head and 0 otherwise.
    pub dropout_rate: Option<f64>,
    pub batch_size: usize,
    pub full_batch_limit: usize,
}

impl Default for UgelConfig {
    fn default() -> Self {
        Self {
            m: 12,
            b_u: 6,
            b_c: CertainBudget::EqualD,
            tau: 2.0,
            lambda: 1.0,
            epochs: 12,
            learning_rate: 1e-3,
            estimator: EstimatorKind::Dbr,
            mc_passes: DEFAULT_MC_PASSES,
            rounds: 10,
            base_seed: 0,
            twin: true,
            consistency: ConsistencyMode::Joint,
            head: None,
            hidden_dims: vec![64, 32],
            dropout_rate: None,
            batch_size: 16,
            full_batch_limit: 0,
        }
    }
}

impl UgelConfig {
    pub fn head(&self) -> HeadKind {
        self.head
            .unwrap_or_else(|| self.estimator.required_head().unwrap_or(HeadKind::Dbr))
    }

    pub fn arch(&self, input_dim: usize) -> ArchSpec {
        let head = self.head();
        let mut arch = ArchSpec::desk_default(input_dim, head);
        arch.hidden_dims = self.hidden_dims.clone();
        if let Some(rate) = self.dropout_rate {
            arch.dropout_rate = rate;
        }
        arch
    }

    pub fn train_config(&self) -> Result<TrainConfig<f64>> {
        Ok(TrainConfig {
            epochs: self.epochs,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
            loss: LossConfig {
                weights: LossWeights::new(self.lambda, self.tau, crate::beta::DEFAULT_EPS_CLAMP)?,
                ..LossConfig::default()
            },
            consistency: self.consistency,
            full_batch_limit: self.full_batch_limit,
            batch_size: self.batch_size,
        })
    }

    pub fn estimator(&self) -> Result<UncertaintyEstimator> {
        if self.estimator == EstimatorKind::Mcd {
            UncertaintyEstimator::with_passes(self.estimator, self.mc_passes)
        } else {
            Ok(UncertaintyEstimator::new(self.estimator))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("m must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if let Some(h) = self.estimator.required_head() {
            if h != self.head() {
                return Err(Error::HeadMismatch {
                    estimator: self.estimator.name(),
                    required: h.name(),
                    actual: self.head().name(),
                });
            }
        }
        self.train_config()?;
        self.estimator()?;
        self.arch(1).validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labelled {
    pub id: u64,
    pub pixels: Vec<f64>,
    pub y: f64,
}

/// A pool sample; its label sits with the [`Oracle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unlabelled {
    pub id: u64,
    pub pixels: Vec<f64>,
}

/// Keeper of the pool's hidden labels. Every read is counted.
#[derive(Debug, Clone, Default)]
pub struct Oracle {
    labels: BTreeMap<u64, f64>,
    accesses: u64,
}

impl Oracle {
    pub fn accesses(&self) -> u64 {
        self.accesses
    }

    pub fn label(&mut self, ids: &[u64]) -> Result<Vec<f64>> {
        let ys = ids
            .iter()
            .map(|id| self.labels.get(id).copied().ok_or(Error::NoHiddenLabel(*id)))
            .collect::<Result<Vec<_>>>()?;
        self.accesses += ids.len() as u64;
        Ok(ys)
    }
}

#[derive(Debug, Clone)]
pub struct PoolState {
    pub labelled: Vec<Labelled>,
    pub unlabelled: Vec<Unlabelled>,
    pub test: Vec<Labelled>,
    pub round_index: usize,
    oracle: Oracle,
}

fn to_labelled(p: Patch) -> Labelled {
    Labelled {
        id: p.id,
        pixels: p.pixels,
        y: p.y,
    }
}

impl PoolState {
    pub fn new(splits: Splits) -> Result<Self> {
        let mut oracle = Oracle::default();
        let unlabelled = splits
            .unlabelled
            .into_iter()
            .map(|p| {
                oracle.labels.insert(p.id, p.y);
                Unlabelled { id: p.id, pixels: p.pixels }
            })
            .collect();
        let state = Self {
            labelled: splits.labelled.into_iter().map(to_labelled).collect(),
            unlabelled,
            test: splits.test.into_iter().map(to_labelled).collect(),
            round_index: 0,
            oracle,
        };
        state.check_disjoint()?;
        Ok(state)
    }

    fn check_disjoint(&self) -> Result<()> {
        let mut ids: Vec<u64> = self
            .labelled
            .iter()
            .map(|s| s.id)
            .chain(self.unlabelled.iter().map(|s| s.id))
            .chain(self.test.iter().map(|s| s.id))
            .collect();
        let n = ids.len();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != n {
            return Err(Error::InvalidArgument("splits share sample ids".into()));
        }
        Ok(())
    }

    pub fn oracle_accesses(&self) -> u64 {
        self.oracle.accesses()
    }

    /// Hidden labels of the pool samples at `indices`.
    pub fn oracle_label(&mut self, indices: &[usize]) -> Result<Vec<f64>> {
        let ids = indices
            .iter()
            .map(|&i| self.unlabelled.get(i).map(|s| s.id).ok_or(Error::NoHiddenLabel(i as u64)))
            .collect::<Result<Vec<_>>>()?;
        self.oracle.label(&ids)
    }

    pub fn input_dim(&self) -> usize {
        self.labelled
            .first()
            .map(|s| s.pixels.len())
            .or_else(|| self.unlabelled.first().map(|s| s.pixels.len()))
            .unwrap_or(0)
    }

    /// Moves the pool samples at `indices` into the labelled set, in selection order.
    fn annotate(&mut self, indices: &[usize], ys: &[f64]) {
        let mut desc = indices.to_vec();
        // highest index first so earlier removals do not shift later ones
        desc.sort_unstable_by(|a, b| b.cmp(a));
        let mut taken: BTreeMap<usize, Unlabelled> = desc.into_iter().map(|i| (i, self.unlabelled.remove(i))).collect();
        for (i, &y) in indices.iter().zip(ys) {
            let s = taken.remove(i).expect("indices are distinct");
            self.labelled.push(Labelled {
                id: s.id,
                pixels: s.pixels,
                y,
            });
        }
    }
}

fn ranked(scores: &[f64], candidates: Vec<usize>, descending: bool, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order = candidates;
    order.shuffle(rng);
    if descending {
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    } else {
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    }
    order
}

/// Indices of the `b_u` largest scores. Ties fall to a random permutation
/// applied before a stable sort.
pub fn select_uncertain(scores: &[f64], b_u: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if b_u > scores.len() {
        return Err(Error::PoolExhausted {
            available: scores.len(),
            required: b_u,
        });
    }
    let mut order = ranked(scores, (0..scores.len()).collect(), true, rng);
    order.truncate(b_u);
    Ok(order)
}

/// Indices of the `b_c` smallest scores outside `excluded`, same tie policy.
pub fn select_certain(scores: &[f64], b_c: usize, excluded: &[usize], rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let mut skip = vec![false; scores.len()];
    for &i in excluded {
        if let Some(s) = skip.get_mut(i) {
            *s = true;
        }
    }
    let candidates: Vec<usize> = (0..scores.len()).filter(|&i| !skip[i]).collect();
    if b_c > candidates.len() {
        return Err(Error::PoolExhausted {
            available: candidates.len(),
            required: b_c,
        });
    }
    let mut order = ranked(scores, candidates, false, rng);
    order.truncate(b_c);
    Ok(order)
}

/// Point predictions in evaluation mode, one forward pass per sample.
pub fn pseudo_label(model: &Mlp<f64>, xs: &[&[f64]]) -> Result<Vec<f64>> {
    xs.iter().map(|x| Ok(model.predict(x)?.point())).collect()
}

/// `L_s(primary) + L_s(twin) + τ · RMSE` over labelled and pseudo-labelled points.
pub fn round_loss(
    primary: &[HeadOutput<f64>],
    twin: &[HeadOutput<f64>],
    labels: &[f64],
    primary_pseudo: &[f64],
    twin_pseudo: &[f64],
    cfg: &LossConfig<f64>,
) -> Result<f64> {
    if primary.len() != twin.len() || primary_pseudo.len() != twin_pseudo.len() {
        return Err(Error::Shape {
            op: "round_loss",
            expected: primary.len() + primary_pseudo.len(),
            got: twin.len() + twin_pseudo.len(),
        });
    }
    let ls = supervised_loss(primary, labels, cfg)?.value + supervised_loss(twin, labels, cfg)?.value;
    let a: Vec<f64> = primary.iter().map(HeadOutput::point).chain(primary_pseudo.iter().copied()).collect();
    let b: Vec<f64> = twin.iter().map(HeadOutput::point).chain(twin_pseudo.iter().copied()).collect();
    Ok(ls + cfg.weights.tau * consistency_loss(&a, &b)?.0)
}

/// Init seed of the primary model in `round`.
pub fn init_seed(base_seed: u64, round: usize) -> u64 {
    base_seed.wrapping_add(round as u64)
}

#[derive(Debug, Clone)]
pub struct ModelPair {
    pub primary: Mlp<f64>,
    pub twin: Option<Mlp<f64>>,
}

impl ModelPair {
    pub fn init(cfg: &UgelConfig, input_dim: usize, round: usize) -> Result<Self> {
        let arch = cfg.arch(input_dim);
        let seed = init_seed(cfg.base_seed, round);
        Ok(Self {
            primary: Mlp::init(arch.clone(), seed)?,
            twin: if cfg.twin {
                Some(Mlp::init(arch, seed.wrapping_add(TWIN_SEED_OFFSET))?)
            } else {
                None
            },
        })
    }
}

/// Per-sample forward evaluations by phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassCounts {
    pub scoring: u64,
    pub pseudo: u64,
    pub training: u64,
    pub evaluation: u64,
}

/// Wall-clock seconds by phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub scoring: f64,
    pub training: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: usize,
    pub test_rmse: f64,
    /// Pool ids sent to the oracle, most uncertain first.
    pub uncertain_ids: Vec<u64>,
    /// Pool ids pseudo-labelled, most certain first.
    pub certain_ids: Vec<u64>,
    pub labelled_size: usize,
    pub unlabelled_size: usize,
    pub oracle_accesses: u64,
    pub loss_trace: Vec<f64>,
    pub passes: PassCounts,
    /// Hash of the primary's trained parameters.
    pub primary_digest: u64,
    pub times: PhaseTimes,
}

impl RoundRecord {
    /// Hash of every field except wall times.
    pub fn fingerprint(&self) -> u64 {
        let mut r = self.clone();
        r.times = PhaseTimes::default();
        let json = serde_json::to_string(&r).expect("records serialise");
        let mut h = DefaultHasher::new();
        json.hash(&mut h);
        h.finish()
    }
}

pub fn param_digest(params: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    for p in params {
        p.to_bits().hash(&mut h);
    }
    h.finish()
}

fn test_rmse(model: &Mlp<f64>, test: &[Labelled]) -> Result<f64> {
    if test.is_empty() {
        return Ok(f64::NAN);
    }
    let preds = test.iter().map(|s| Ok(model.predict(&s.pixels)?.point())).collect::<Result<Vec<_>>>()?;
    let ys: Vec<f64> = test.iter().map(|s| s.y).collect();
    rmse(&preds, &ys)
}

/// Round 0: fit the initial pair on the starting labelled set, supervised loss only.
pub fn pretrain(state: &PoolState, cfg: &UgelConfig) -> Result<(ModelPair, RoundRecord)> {
    let mut pair = ModelPair::init(cfg, state.input_dim(), 0)?;
    let mut tcfg = cfg.train_config()?;
    tcfg.loss.weights = LossWeights::new(cfg.lambda, 0.0, tcfg.loss.weights.eps_clamp)?;
    let set = TrainSet {
        labelled: state.labelled.iter().map(|s| s.pixels.as_slice()).collect(),
        targets: state.labelled.iter().map(|s| s.y).collect(),
        unlabelled: Vec::new(),
        pseudo: None,
    };
    let t0 = Instant::now();
    let report = train(
        &mut pair.primary,
        pair.twin.as_mut(),
        &set,
        &tcfg,
        derive(cfg.base_seed, &[0, SEED_TRAIN]),
    )?;
    let training = t0.elapsed().as_secs_f64();
    let record = RoundRecord {
        round_index: 0,
        test_rmse: test_rmse(&pair.primary, &state.test)?,
        uncertain_ids: Vec::new(),
        certain_ids: Vec::new(),
        labelled_size: state.labelled.len(),
        unlabelled_size: state.unlabelled.len(),
        oracle_accesses: 0,
        loss_trace: report.loss_trace,
        passes: PassCounts {
            training: report.forward_passes,
            evaluation: state.test.len() as u64,
            ..PassCounts::default()
        },
        primary_digest: param_digest(pair.primary.params()),
        times: PhaseTimes { scoring: 0.0, training },
    };
    Ok((pair, record))
}

/// One full round. Fails with [`Error::PoolExhausted`] when fewer than `b_u`
/// pool samples remain.
pub fn ugel_round(state: &mut PoolState, pair: &ModelPair, cfg: &UgelConfig) -> Result<(ModelPair, RoundRecord)> {
    if state.unlabelled.len() < cfg.b_u {
        return Err(Error::PoolExhausted {
            available: state.unlabelled.len(),
            required: cfg.b_u,
        });
    }
    let round = state.round_index + 1;
    let seed = |k| derive(cfg.base_seed, &[round as u64, k]);
    let accesses_before = state.oracle_accesses();

    // score the pool
    let t0 = Instant::now();
    let mut estimator = cfg.estimator()?;
    let pool: Vec<&[f64]> = state.unlabelled.iter().map(|s| s.pixels.as_slice()).collect();
    let mut score_rng = ChaCha8Rng::seed_from_u64(seed(SEED_SCORE));
    let scores = estimator.score_pool(&pair.primary, &pool, &mut score_rng)?;
    let scoring = t0.elapsed().as_secs_f64();

    let b_c = cfg.b_c.resolve(state.labelled.len(), state.unlabelled.len() - cfg.b_u)?;
    let t_u = select_uncertain(&scores, cfg.b_u, &mut ChaCha8Rng::seed_from_u64(seed(SEED_SELECT_U)))?;
    let t_c = select_certain(&scores, b_c, &t_u, &mut ChaCha8Rng::seed_from_u64(seed(SEED_SELECT_C)))?;

    let certain: Vec<&[f64]> = t_c.iter().map(|&i| pool[i]).collect();
    let pseudo_p = pseudo_label(&pair.primary, &certain)?;
    let pseudo_t = match &pair.twin {
        Some(t) => pseudo_label(t, &certain)?,
        None => pseudo_p.clone(),
    };
    let mut passes = PassCounts {
        scoring: estimator.pass_counter(),
        pseudo: (certain.len() * if pair.twin.is_some() { 2 } else { 1 }) as u64,
        ..PassCounts::default()
    };
    let certain_pixels: Vec<Vec<f64>> = certain.iter().map(|x| x.to_vec()).collect();
    let uncertain_ids: Vec<u64> = t_u.iter().map(|&i| state.unlabelled[i].id).collect();
    let certain_ids: Vec<u64> = t_c.iter().map(|&i| state.unlabelled[i].id).collect();

    let y_u = state.oracle_label(&t_u)?;
    state.annotate(&t_u, &y_u);

    let mut next = ModelPair::init(cfg, state.input_dim(), round)?;
    let tcfg = cfg.train_config()?;
    let set = TrainSet {
        labelled: state.labelled.iter().map(|s| s.pixels.as_slice()).collect(),
        targets: state.labelled.iter().map(|s| s.y).collect(),
        unlabelled: certain_pixels.iter().map(Vec::as_slice).collect(),
        pseudo: Some((pseudo_p, pseudo_t)),
    };
    let t1 = Instant::now();
    let report = train(&mut next.primary, next.twin.as_mut(), &set, &tcfg, seed(SEED_TRAIN))?;
    let training = t1.elapsed().as_secs_f64();
    passes.training = report.forward_passes;
    passes.evaluation = state.test.len() as u64;
    state.round_index = round;

    let record = RoundRecord {
        round_index: round,
        test_rmse: test_rmse(&next.primary, &state.test)?,
        uncertain_ids,
        certain_ids,
        labelled_size: state.labelled.len(),
        unlabelled_size: state.unlabelled.len(),
        oracle_accesses: state.oracle_accesses() - accesses_before,
        loss_trace: report.loss_trace,
        passes,
        primary_digest: param_digest(next.primary.params()),
        times: PhaseTimes { scoring, training },
    };
    Ok((next, record))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub records: Vec<RoundRecord>,
    /// The pool ran out before `rounds` rounds completed.
    pub exhausted: bool,
}

/// Pretraining followed by up to `cfg.rounds` rounds.
pub fn run_ugel(cfg: &UgelConfig, splits: Splits) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut state = PoolState::new(splits)?;
    if state.labelled.is_empty() {
        return Err(Error::InvalidArgument("the starting labelled set is empty".into()));
    }
    let (mut pair, first) = pretrain(&state, cfg)?;
    let mut records = vec![first];
    let mut exhausted = false;
    for _ in 0..cfg.rounds {
        if state.unlabelled.len() < cfg.b_u {
            exhausted = true;
            break;
        }
        let (next, record) = ugel_round(&mut state, &pair, cfg)?;
        pair = next;
        records.push(record);
    }
    Ok(RunOutcome { records, exhausted })
}

/// A plain uncertainty-sampling loop with a single model: score, label the
/// top `b_u`, retrain from a fresh init on the labelled set.
pub fn run_uncertainty_al(cfg: &UgelConfig, splits: Splits) -> Result<RunOutcome> {
    let mut al = cfg.clone();
    al.twin = false;
    al.b_c = CertainBudget::Zero;
    al.tau = 0.0;
    al.validate()?;
    let tcfg = al.train_config()?;
    let mut labelled: Vec<Labelled> = splits.labelled.into_iter().map(to_labelled).collect();
    let mut pool: Vec<Patch> = splits.unlabelled;
    let test: Vec<Labelled> = splits.test.into_iter().map(to_labelled).collect();
    let dim = labelled[0].pixels.len();

    let fit = |labelled: &[Labelled], round: usize| -> Result<(Mlp<f64>, Vec<f64>, u64)> {
        let mut m = Mlp::init(al.arch(dim), init_seed(al.base_seed, round))?;
        let set = TrainSet {
            labelled: labelled.iter().map(|s| s.pixels.as_slice()).collect(),
            targets: labelled.iter().map(|s| s.y).collect(),
            unlabelled: Vec::new(),
            pseudo: None,
        };
        let r = train(&mut m, None, &set, &tcfg, derive(al.base_seed, &[round as u64, SEED_TRAIN]))?;
        Ok((m, r.loss_trace, r.forward_passes))
    };

    let (mut model, trace, fp) = fit(&labelled, 0)?;
    let mut records = vec![RoundRecord {
        round_index: 0,
        test_rmse: test_rmse(&model, &test)?,
        uncertain_ids: Vec::new(),
        certain_ids: Vec::new(),
        labelled_size: labelled.len(),
        unlabelled_size: pool.len(),
        oracle_accesses: 0,
        loss_trace: trace,
        passes: PassCounts {
            training: fp,
            evaluation: test.len() as u64,
            ..PassCounts::default()
        },
        primary_digest: param_digest(model.params()),
        times: PhaseTimes::default(),
    }];
    let mut exhausted = false;
    for round in 1..=al.rounds {
        if pool.len() < al.b_u {
            exhausted = true;
            break;
        }
        let seed = |k| derive(al.base_seed, &[round as u64, k]);
        let mut est = al.estimator()?;
        let xs: Vec<&[f64]> = pool.iter().map(|p| p.pixels.as_slice()).collect();
        let scores = est.score_pool(&model, &xs, &mut ChaCha8Rng::seed_from_u64(seed(SEED_SCORE)))?;
        let picked = select_uncertain(&scores, al.b_u, &mut ChaCha8Rng::seed_from_u64(seed(SEED_SELECT_U)))?;
        let ids: Vec<u64> = picked.iter().map(|&i| pool[i].id).collect();
        let mut gone = picked.clone();
        gone.sort_unstable_by(|a, b| b.cmp(a));
        let mut taken: BTreeMap<usize, Patch> = BTreeMap::new();
        for i in gone {
            taken.insert(i, pool.remove(i));
        }
        for i in &picked {
            labelled.push(to_labelled(taken.remove(i).expect("picked once")));
        }
        let (m, trace, fp) = fit(&labelled, round)?;
        model = m;
        records.push(RoundRecord {
            round_index: round,
            test_rmse: test_rmse(&model, &test)?,
            uncertain_ids: ids,
            certain_ids: Vec::new(),
            labelled_size: labelled.len(),
            unlabelled_size: pool.len(),
            oracle_accesses: al.b_u as u64,
            loss_trace: trace,
            passes: PassCounts {
                scoring: est.pass_counter(),
                pseudo: 0,
                training: fp,
                evaluation: test.len() as u64,
            },
            primary_digest: param_digest(model.params()),
            times: PhaseTimes::default(),
        });
    }
    Ok(RunOutcome { records, exhausted })
}
