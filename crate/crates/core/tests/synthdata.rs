use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ugel_core::synth::{render_patch, sample_targets, Dataset, LabelDistribution, FORMAT_VERSION};
use ugel_core::Error;

fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn label_shapes_pass_two_sample_ks() {
    let n = 10_000;
    // 1% critical value of the two-sample statistic
    let crit = 1.628 * (2.0 / n as f64).sqrt();
    for (k, dist) in ["bimodal", "negskew", "uniform", "gaussian"].iter().enumerate() {
        let d: LabelDistribution = dist.parse().unwrap();
        let a = sample_targets(&d, n, &mut ChaCha8Rng::seed_from_u64(k as u64)).unwrap();
        let b = sample_targets(&d, n, &mut ChaCha8Rng::seed_from_u64(1000 + k as u64)).unwrap();
        assert!(a.iter().all(|y| (0.0..=1.0).contains(y)));
        let stat = ks_statistic(&a, &b);
        assert!(stat < crit, "{dist}: D = {stat}, critical {crit}");
    }
    // and the statistic does separate different shapes
    let a = sample_targets(&LabelDistribution::bimodal(), n, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = sample_targets(&LabelDistribution::uniform(), n, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert!(ks_statistic(&a, &b) > crit);
}

#[test]
fn same_seed_same_draws() {
    let d = LabelDistribution::bimodal();
    let a = sample_targets(&d, 500, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let b = sample_targets(&d, 500, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exact_fraction_rendering() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let y: f64 = rng.gen();
        let side = rng.gen_range(4..=24);
        let p = render_patch(0, y, side, &mut rng).unwrap();
        let area = (side * side) as f64;
        let expect = (y * area).round() / area;
        assert_eq!(p.y, expect);
        assert_eq!(p.foreground_count() as f64 / area, expect);
    }
}

#[test]
fn round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.ugeldata");
    let d = Dataset::generate(LabelDistribution::neg_skewed(), 80, 20, 8, 3).unwrap();
    d.save(&path).unwrap();
    let back = Dataset::load(&path).unwrap();
    assert_eq!(back.header, d.header);
    for (a, b) in back.pool.iter().chain(&back.test).zip(d.pool.iter().chain(&d.test)) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.y.to_bits(), b.y.to_bits());
        assert!(a.pixels.iter().zip(&b.pixels).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn truncated_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.ugeldata");
    Dataset::generate(LabelDistribution::uniform(), 10, 5, 6, 1).unwrap().save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    for cut in [3, 14, 40, bytes.len() - 1] {
        std::fs::write(&path, &bytes[..cut]).unwrap();
        assert!(matches!(Dataset::load(&path), Err(Error::Format { .. })), "cut {cut}");
    }
}

#[test]
fn version_mismatch_is_explicit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.ugeldata");
    Dataset::generate(LabelDistribution::uniform(), 10, 5, 6, 1).unwrap().save(&path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    std::fs::write(&path, &bytes).unwrap();
    match Dataset::load(&path) {
        Err(e @ Error::Version { .. }) => assert!(e.to_string().contains("version 2")),
        other => panic!("expected a version error, got {other:?}"),
    }
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(Dataset::load("/nonexistent/x.ugeldata"), Err(Error::Io { .. })));
}
