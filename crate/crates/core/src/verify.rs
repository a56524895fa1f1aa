//! Self-checks against independent references: numerical quadrature for the
//! beta quantities, central differences for the training gradients, and
//! brute-force enumeration for the signed-rank p-values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::beta::{beta_entropy_shape, beta_nll, BetaPrediction, LossWeights};
use crate::harness::stats::{wilcoxon_with, PValueMethod};
use crate::nn::train::{objective, Batch, TrainConfig, TrainSet};
use crate::nn::{ArchSpec, HeadKind, Mlp};
use crate::oracle;
use crate::special::ln_gamma;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    /// Worst error seen against the reference.
    pub error: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

fn worst(suite: &'static str, name: impl Into<String>, tolerance: f64, errs: impl IntoIterator<Item = f64>) -> Check {
    let error = errs.into_iter().fold(0.0, |m: f64, e| if e.is_nan() { f64::INFINITY } else { m.max(e) });
    Check {
        suite,
        name: name.into(),
        error,
        tolerance,
    }
}

pub fn quadrature() -> Vec<Check> {
    let grid = [0.1, 0.5, 1.0, 2.0, 5.0, 20.0];
    let pairs: Vec<(f64, f64)> = grid.iter().flat_map(|&a| grid.iter().map(move |&b| (a, b))).collect();
    let entropy = pairs.iter().map(|&(a, b)| {
        let closed = beta_entropy_shape(a, b);
        (closed - oracle::beta_entropy_by_quadrature(a, b)).abs() / closed.abs().max(1.0)
    });
    let mass = pairs.iter().map(|&(a, b)| (oracle::beta_mass_by_quadrature(a, b) - 1.0).abs());
    let nll = pairs.iter().map(|&(a, b)| {
        let p = BetaPrediction::from_shape(a, b).unwrap();
        let y = 0.3;
        let reference = -oracle::beta_ln_pdf(y, a, b);
        (beta_nll(&p, y) - reference).abs() / reference.abs().max(1.0)
    });
    let lg = [0.3, 1.0, 1.5, 4.0, 10.0, 30.0]
        .into_iter()
        .map(|x: f64| (ln_gamma(x).unwrap() - oracle::ln_gamma_by_quadrature(x)).abs() / ln_gamma(x).unwrap().abs().max(1.0));
    vec![
        worst("quadrature", "beta entropy", 1e-8, entropy),
        worst("quadrature", "beta density mass", 1e-9, mass),
        worst("quadrature", "beta nll", 1e-10, nll),
        worst("quadrature", "ln gamma", 1e-9, lg),
    ]
}

pub fn finite_differences() -> Vec<Check> {
    const H: f64 = 1e-6;
    let mut out = Vec::new();
    for head in [HeadKind::Dbr, HeadKind::Der, HeadKind::ScalarDropout] {
        let mut errs = Vec::new();
        for seed in 0..3u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = 4;
            let mut draw = |n: usize| -> Vec<Vec<f64>> { (0..n).map(|_| (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect()).collect() };
            let xs = draw(3);
            let unl = draw(2);
            let set = TrainSet {
                labelled: xs.iter().map(Vec::as_slice).collect(),
                targets: xs.iter().map(|x| x.iter().sum::<f64>() / dim as f64).collect(),
                unlabelled: unl.iter().map(Vec::as_slice).collect(),
                pseudo: None,
            };
            let arch = ArchSpec {
                input_dim: dim,
                hidden_dims: vec![4, 3],
                head,
                dropout_rate: if head == HeadKind::ScalarDropout { 0.3 } else { 0.0 },
            };
            let mut p = Mlp::<f64>::init(arch.clone(), 2 * seed + 1).unwrap();
            let t = Mlp::<f64>::init(arch, 2 * seed + 2).unwrap();
            for v in p.params_mut() {
                *v += rng.gen_range(-0.05..0.05);
            }
            let mut cfg = TrainConfig::<f64>::default();
            cfg.loss.weights = LossWeights::new(1.0, 2.0, 1e-6).unwrap();
            let value = |m: &Mlp<f64>| {
                let (mut r0, mut r1) = (ChaCha8Rng::seed_from_u64(5), ChaCha8Rng::seed_from_u64(6));
                objective(m, Some(&t), &set, &Batch::full(&set), &cfg, (&mut r0, &mut r1))
            };
            let Ok(eval) = value(&p) else {
                errs.push(f64::INFINITY);
                continue;
            };
            for i in 0..p.num_params() {
                let orig = p.params()[i];
                p.params_mut()[i] = orig + H;
                let up = value(&p).map_or(f64::NAN, |e| e.value);
                p.params_mut()[i] = orig - H;
                let down = value(&p).map_or(f64::NAN, |e| e.value);
                p.params_mut()[i] = orig;
                errs.push(oracle::relative_error(eval.primary_grad[i], (up - down) / (2.0 * H), 1e-3));
            }
        }
        out.push(worst("finite_differences", format!("{head:?} objective gradient"), 1e-4, errs));
    }
    out
}

pub fn exact_wilcoxon() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut errs = Vec::new();
    for trial in 0..200 {
        let n = 5 + trial % 8;
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64 * 0.1).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64 * 0.1).collect();
        let exact = wilcoxon_with(&a, &b, Some(PValueMethod::Exact)).map_or(f64::NAN, |r| r.p_value);
        errs.push((exact - oracle::signed_rank_p_brute_force(&a, &b)).abs());
    }
    vec![worst("exact_wilcoxon", "exact p against enumeration", 1e-12, errs)]
}

pub fn all() -> Vec<Check> {
    let mut v = quadrature();
    v.extend(finite_differences());
    v.extend(exact_wilcoxon());
    v
}
