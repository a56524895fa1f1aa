//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints its verdict whether or not it passes; exits nonzero if any fails.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ugel_core::beta::{beta_entropy, beta_entropy_shape, beta_nll, grad_nll, BetaPrediction, LossWeights};
use ugel_core::estimators::EstimatorKind;
use ugel_core::harness::plan::{ExperimentPlan, Preset};
use ugel_core::harness::report::{self, TableFormat};
use ugel_core::harness::runner::{run_cell, run_plan, ResultsMatrix, RunOptions};
use ugel_core::harness::stats::{wilcoxon_signed_rank, wilcoxon_with, PValueMethod};
use ugel_core::nn::train::{objective, Batch, ConsistencyMode, TrainConfig, TrainSet};
use ugel_core::nn::{ArchSpec, HeadKind, Mlp};
use ugel_core::oracle::{beta_entropy_by_quadrature, central_difference, relative_error};
use ugel_core::synth::{Dataset, LabelDistribution};
use ugel_core::ugel::{run_uncertainty_al, run_ugel, CertainBudget, RoundRecord, UgelConfig};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn entropy_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let mu: f64 = rng.gen_range(0.01..0.99);
        let nu: f64 = rng.gen_range(0.5..50.0);
        let p = BetaPrediction::new(mu, nu).unwrap();
        let q = beta_entropy_by_quadrature(p.alpha(), p.beta());
        worst = worst.max((beta_entropy(&p) - q).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(worst <= 1e-6 && secs < 10.0, format!("max |err| {worst:.2e} (tol 1e-6), {secs:.2} s (limit 10 s)"))
}

fn reparameterisation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0_f64;
    for _ in 0..10_000 {
        let mu: f64 = rng.gen_range(0.01..0.99);
        let nu: f64 = rng.gen_range(0.5..50.0);
        let p = BetaPrediction::new(mu, nu).unwrap();
        worst = worst.max((beta_entropy(&p) - beta_entropy_shape(mu * nu, (1.0 - mu) * nu)).abs());
    }
    verdict(worst <= 1e-10, format!("max |err| {worst:.2e} over 10000 points (tol 1e-10)"))
}

fn network_case(rng: &mut ChaCha8Rng, head: HeadKind, twin: bool, tau: f64, lambda: f64, seed: u64) -> f64 {
    const H: f64 = 1e-6;
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
        dropout_rate: if head == HeadKind::ScalarDropout { 0.25 } else { 0.0 },
    };
    let mut p = Mlp::<f64>::init(arch.clone(), 2 * seed + 1).unwrap();
    let mut t = Mlp::<f64>::init(arch, 2 * seed + 2).unwrap();
    for v in p.params_mut().iter_mut().chain(t.params_mut()) {
        *v += rng.gen_range(-0.05..0.05);
    }
    let mut cfg = TrainConfig::<f64>::default();
    cfg.loss.weights = LossWeights::new(lambda, tau, 1e-6).unwrap();
    cfg.consistency = ConsistencyMode::Joint;
    let value = |p: &Mlp<f64>, t: &Mlp<f64>| {
        let (mut r0, mut r1) = (ChaCha8Rng::seed_from_u64(seed), ChaCha8Rng::seed_from_u64(seed + 1));
        objective(p, twin.then_some(t), &set, &Batch::full(&set), &cfg, (&mut r0, &mut r1)).unwrap()
    };
    let eval = value(&p, &t);
    let mut worst = 0.0_f64;
    for i in 0..p.num_params() {
        let orig = p.params()[i];
        let fd = central_difference(
            |v| {
                let mut q = p.clone();
                q.params_mut()[i] = v;
                value(&q, &t).value
            },
            orig,
            H,
        );
        worst = worst.max(relative_error(eval.primary_grad[i], fd, 1e-3));
    }
    if let Some(tg) = &eval.twin_grad {
        for i in 0..t.num_params() {
            let orig = t.params()[i];
            let fd = central_difference(
                |v| {
                    let mut q = t.clone();
                    q.params_mut()[i] = v;
                    value(&p, &q).value
                },
                orig,
                H,
            );
            worst = worst.max(relative_error(tg[i], fd, 1e-3));
        }
    }
    worst
}

fn gradient_fidelity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for _ in 0..500 {
        let mu: f64 = rng.gen_range(0.05..0.95);
        let nu: f64 = rng.gen_range(0.5..50.0);
        let y = rng.gen_range(0.01..0.99);
        let (dm, dn) = grad_nll(&BetaPrediction::new(mu, nu).unwrap(), y);
        let f = |m: f64, n: f64| beta_nll(&BetaPrediction::new(m, n).unwrap(), y);
        let fm = central_difference(|m| f(m, nu), mu, 1e-6);
        let fn_ = central_difference(|n| f(mu, n), nu, 1e-6);
        worst = worst.max(relative_error(dm, fm, 1e-3)).max(relative_error(dn, fn_, 1e-3));
        cases += 1;
    }
    let mut seed = 0;
    for head in [HeadKind::Dbr, HeadKind::Der, HeadKind::ScalarDropout] {
        for twin in [false, true] {
            for (tau, lambda) in [(0.0, 1.0), (2.0, 1.0), (2.0, 0.0), (0.5, 0.3)] {
                for _ in 0..5 {
                    worst = worst.max(network_case(&mut rng, head, twin, tau, lambda, seed));
                    seed += 1;
                    cases += 1;
                }
            }
        }
    }
    verdict(worst <= 1e-4 && cases >= 500, format!("{cases} cases, max relative error {worst:.2e} (tol 1e-4)"))
}

fn bookkeeping() -> Verdict {
    let data = Dataset::generate(LabelDistribution::bimodal(), 400, 100, 8, 4).unwrap();
    let cfg = UgelConfig {
        rounds: 20,
        base_seed: 4,
        ..UgelConfig::default()
    };
    let out = run_ugel(&cfg, data.split(12, 4).unwrap()).unwrap();
    let mut problems = Vec::new();
    if out.records.len() != 21 {
        problems.push(format!("{} rounds recorded", out.records.len() - 1));
    }
    for (r, rec) in out.records.iter().enumerate().skip(1) {
        let disjoint = rec.uncertain_ids.iter().all(|id| !rec.certain_ids.contains(id));
        let ok = disjoint
            && rec.uncertain_ids.len() == 6
            && rec.certain_ids.len() == 12 + 6 * (r - 1)
            && rec.labelled_size == 12 + 6 * r
            && rec.unlabelled_size == 388 - 6 * r
            && rec.oracle_accesses == 6;
        if !ok {
            problems.push(format!("round {r}"));
        }
    }
    let total: u64 = out.records.iter().map(|r| r.oracle_accesses).sum();
    if total != 120 {
        problems.push(format!("{total} oracle accesses in total"));
    }
    let seq: Vec<usize> = out.records[1..4].iter().map(|r| r.certain_ids.len()).collect();
    verdict(problems.is_empty(), format!("20 rounds, B_C starts {seq:?}, violations: {problems:?}"))
}

fn reductions() -> Verdict {
    let data = Dataset::generate(LabelDistribution::neg_skewed(), 200, 50, 8, 5).unwrap();
    let mut same = true;
    for (estimator, seed) in [(EstimatorKind::Dbr, 1), (EstimatorKind::Mcd, 2), (EstimatorKind::Der, 3)] {
        let cfg = UgelConfig {
            estimator,
            b_c: CertainBudget::Zero,
            tau: 0.0,
            twin: false,
            rounds: 6,
            base_seed: seed,
            ..UgelConfig::default()
        };
        let u = run_ugel(&cfg, data.split(12, seed).unwrap()).unwrap();
        let a = run_uncertainty_al(&cfg, data.split(12, seed).unwrap()).unwrap();
        let ids = |o: &[RoundRecord]| o.iter().map(|r| r.uncertain_ids.clone()).collect::<Vec<_>>();
        same &= ids(&u.records) == ids(&a.records) && u.records.len() == 7;
    }
    let cfg = UgelConfig {
        b_c: CertainBudget::AllRemaining,
        rounds: 4,
        ..UgelConfig::default()
    };
    let out = run_ugel(&cfg, data.split(12, 0).unwrap()).unwrap();
    let all = out.records[1..].iter().all(|r| r.certain_ids.len() == r.unlabelled_size && r.unlabelled_size > 0);
    verdict(same && all, format!("AL trajectory identical: {same}; ALL_REMAINING takes whole pool: {all}"))
}

fn cost_dominance(data: &Dataset) -> Verdict {
    let run = |estimator| {
        let cfg = UgelConfig {
            estimator,
            mc_passes: 10,
            base_seed: 0,
            ..UgelConfig::default()
        };
        run_ugel(&cfg, data.split(12, 0).unwrap()).unwrap().records
    };
    let dbr = run(EstimatorKind::Dbr);
    let der = run(EstimatorKind::Der);
    let mcd = run(EstimatorKind::Mcd);
    let ran = run(EstimatorKind::Ran);
    let mut counts_ok = true;
    let mut dominant = 0;
    let mut ordered = 0;
    let mut lines = Vec::new();
    for r in 1..=10 {
        let (b, d, m, a) = (&dbr[r], &der[r], &mcd[r], &ran[r]);
        counts_ok &= m.passes.scoring == 10 * b.passes.scoring
            && m.passes.scoring == 10 * d.passes.scoring
            && a.passes.scoring == 0
            && b.passes.scoring == (2000 - 12 - 6 * (r - 1)) as u64;
        if b.passes.scoring > b.passes.training {
            dominant += 1;
        }
        if m.times.scoring > d.times.scoring && d.times.scoring >= b.times.scoring {
            ordered += 1;
        }
        lines.push(format!(
            "r{r}: dbr {}/{} passes, time mcd {:.1} der {:.1} dbr {:.1} ms",
            b.passes.scoring,
            b.passes.training,
            m.times.scoring * 1e3,
            d.times.scoring * 1e3,
            b.times.scoring * 1e3
        ));
    }
    for l in &lines {
        println!("    {l}");
    }
    verdict(
        counts_ok && dominant == 10 && ordered >= 9,
        format!(
            "counts exact: {counts_ok}; scoring > training passes in {dominant}/10 rounds; MCD > DER >= DBR time in {ordered}/10 rounds (need 9)"
        ),
    )
}

const BIG_PLAN: &str = r#"
dataset = { dist = "bimodal", pool = 2000, test = 1000, patch = 16, seed = 0 }
rounds = 10
checkpoints = [4, 6, 8]

[[methods]]
preset = "ugel_dbr"

[[methods]]
preset = "al_random"

[[methods]]
preset = "ugel_ran"
"#;

fn pvalue_row(m: &ResultsMatrix, a: &str, b: &str, round: usize) -> (f64, f64, f64) {
    let xa: Vec<f64> = m.values_at(a, round).iter().map(|v| v.1).collect();
    let xb: Vec<f64> = m.values_at(b, round).iter().map(|v| v.1).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(&xa), mean(&xb), wilcoxon_signed_rank(&xa, &xb).map_or(f64::NAN, |r| r.p_value))
}

fn convergence(m: &ResultsMatrix, secs: f64) -> Verdict {
    let mut below = 0;
    let mut significant = 0;
    for round in [4, 6, 8] {
        let (d, a, p) = pvalue_row(m, "ugel_dbr", "al_random", round);
        println!("    round {round}: ugel_dbr {d:.4} vs al_random {a:.4}, p = {p:.4}");
        below += usize::from(d < a);
        significant += usize::from(d < a && p < 0.05);
    }
    verdict(
        m.failures().is_empty() && below == 3 && significant >= 2 && secs < 900.0,
        format!("below at {below}/3 checkpoints, p < 0.05 at {significant}/3, {secs:.0} s for 30 runs (limit 900 s)"),
    )
}

fn ablation(m: &ResultsMatrix) -> Verdict {
    let (d, r, p) = pvalue_row(m, "ugel_dbr", "ugel_ran", 8);
    verdict(d <= r, format!("round 8: ugel_dbr {d:.4} vs ugel_ran {r:.4}, p = {p:.4}"))
}

fn wilcoxon() -> Verdict {
    let pos = wilcoxon_signed_rank(&[0.5, 0.4, 0.3, 0.2, 0.1], &[0.0; 5]).unwrap();
    let same = wilcoxon_signed_rank(&[0.3; 7], &[0.3; 7]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let a: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..1.0)).collect();
        let e = wilcoxon_with(&a, &b, Some(PValueMethod::Exact)).unwrap().p_value;
        let n = wilcoxon_with(&a, &b, Some(PValueMethod::Normal)).unwrap().p_value;
        worst = worst.max((e - n).abs());
    }
    verdict(
        pos.p_value == 0.0625 && pos.method == PValueMethod::Exact && same.p_value == 1.0 && worst <= 0.02,
        format!("n=5 positive p = {}, identical p = {}, exact vs normal at n=12 max gap {worst:.4} (tol 0.02)", pos.p_value, same.p_value),
    )
}

fn determinism(big: &Dataset, matrix: &ResultsMatrix) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let small = Dataset::generate(LabelDistribution::gaussian(), 160, 40, 8, 2).unwrap();
    small.save(dir.path().join("g.ugeldata")).unwrap();
    let mut text = String::from("dataset = \"g.ugeldata\"\nseeds = [0, 1, 2, 3, 4]\nrounds = 3\ncheckpoints = [1, 3]\n");
    for p in Preset::ALL {
        text.push_str(&format!("[[methods]]\npreset = \"{}\"\nhidden_dims = [12]\n", p.name()));
    }
    let plan = ExperimentPlan::from_toml(&text, dir.path()).unwrap();
    let a = run_plan(&plan, &small, &dir.path().join("a"), &RunOptions::default()).unwrap();
    let b = run_plan(&plan, &small, &dir.path().join("b"), &RunOptions { workers: 3, ..RunOptions::default() }).unwrap();
    let prints = |m: &ResultsMatrix| {
        m.cells()
            .map(|c| c.outcome().map(|o| o.records.iter().map(RoundRecord::fingerprint).collect::<Vec<_>>()))
            .collect::<Vec<_>>()
    };
    let records_same = prints(&a) == prints(&b) && a.failures().is_empty();
    let mut reports_same = true;
    for (ta, tb) in report::tables(&a, &plan.checkpoints).iter().zip(report::tables(&b, &plan.checkpoints)) {
        reports_same &= ta.render(TableFormat::Csv).unwrap() == tb.render(TableFormat::Csv).unwrap();
    }
    let m = &matrix.plan.methods[0];
    let again = run_cell(big, &m.config, &m.name, 3);
    let original = matrix.cell(&m.name, 3).unwrap();
    let fp = |c: &ugel_core::harness::runner::CellResult| c.outcome().unwrap().records.iter().map(RoundRecord::fingerprint).collect::<Vec<_>>();
    let big_same = fp(&again) == fp(original);
    verdict(
        records_same && reports_same && big_same,
        format!("8 presets x 5 seeds: records identical {records_same}, reports identical {reports_same}; full-size rerun identical {big_same}"),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut record = |n, name, v: Verdict| {
        println!("criterion {n:>2} {} {name}: {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, name, v));
    };
    record(1, "entropy oracle", entropy_oracle());
    record(2, "reparameterisation identity", reparameterisation());
    record(3, "gradient fidelity", gradient_fidelity());
    record(4, "selection and bookkeeping", bookkeeping());
    record(5, "reduction identities", reductions());
    record(9, "signed-rank correctness", wilcoxon());

    let dir = tempfile::tempdir().unwrap();
    let plan = ExperimentPlan::from_toml(BIG_PLAN, dir.path()).unwrap();
    let big = plan.dataset.load().unwrap();
    assert_eq!(big.header.distribution, LabelDistribution::bimodal());
    record(6, "cost dominance", cost_dominance(&big));

    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let start = Instant::now();
    let matrix = run_plan(&plan, &big, dir.path(), &RunOptions { workers, ..RunOptions::default() }).unwrap();
    let secs = start.elapsed().as_secs_f64();
    record(7, "convergence against random acquisition", convergence(&matrix, secs));
    record(8, "estimator ablation", ablation(&matrix));
    record(10, "determinism", determinism(&big, &matrix));

    let failed: Vec<_> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    println!("acceptance: {}/{} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
