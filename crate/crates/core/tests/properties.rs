use gazeforge_core::display::{eccentricity_map, retarget, DisplayConfig, EccentricityProfile, RetargetMode};
use gazeforge_core::metrics::{aggregate, cc, evaluate_pair, kl_divergence, sim};
use gazeforge_core::video::evaluate_sequence;
use gazeforge_core::{SaliencyMap, SaliencySequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_map(rng: &mut ChaCha8Rng, w: usize, h: usize) -> SaliencyMap {
    SaliencyMap::from_fn(w, h, |_, _| rng.gen_range(0.01..1.0)).unwrap()
}

#[test]
fn weight_mode_ratio_depends_only_on_eccentricity() {
    let d = DisplayConfig::study_24in();
    let p = EccentricityProfile::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let target = random_map(&mut rng, 64, 36);
    let out = retarget(&target, &d, &p, RetargetMode::Weight).unwrap();
    let ecc = eccentricity_map(&d, 64, 36).unwrap();
    let k = out.get(0, 0) / (target.get(0, 0) * p.weight(ecc.get(0, 0)));
    for y in 0..36 {
        for x in 0..64 {
            let want = k * target.get(x, y) * p.weight(ecc.get(x, y));
            assert!((out.get(x, y) - want).abs() < 1e-9);
        }
    }
    // Mirror pixels share eccentricity, so they share the ratio.
    let r = |x, y| out.get(x, y) / target.get(x, y);
    assert!((r(5, 7) - r(58, 28)).abs() < 1e-9);
}

#[test]
fn weight_mode_twice_is_weight_squared() {
    let d = DisplayConfig::study_24in();
    let p = EccentricityProfile::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let target = random_map(&mut rng, 48, 27);
    let twice = retarget(&retarget(&target, &d, &p, RetargetMode::Weight).unwrap(), &d, &p, RetargetMode::Weight).unwrap();
    let ecc = eccentricity_map(&d, 48, 27).unwrap();
    let want = SaliencyMap::from_fn(48, 27, |x, y| target.get(x, y) * p.weight(ecc.get(x, y)).powi(2))
        .unwrap()
        .normalize_to_max()
        .unwrap();
    for (a, b) in twice.values().iter().zip(want.values()) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(twice.argmax(), want.argmax());
}

#[test]
fn metric_scale_invariance_and_symmetry() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let a = random_map(&mut rng, 8, 8);
        let b = random_map(&mut rng, 8, 8);
        let k = rng.gen_range(0.1..10.0);
        let ak = a.scaled(k).unwrap();
        assert!((cc(&a, &b).unwrap() - cc(&ak, &b).unwrap()).abs() < 1e-9);
        assert!((sim(&a, &b).unwrap() - sim(&ak, &b).unwrap()).abs() < 1e-9);
        assert!((kl_divergence(&a, &b, 1e-8).unwrap() - kl_divergence(&ak, &b, 1e-8).unwrap()).abs() < 1e-9);
        assert!((sim(&a, &b).unwrap() - sim(&b, &a).unwrap()).abs() < 1e-15);
        assert!((cc(&a, &b).unwrap() - cc(&b, &a).unwrap()).abs() < 1e-15);
    }
}

#[test]
fn batch_mean_matches_individual_reports() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let reports: Vec<_> = (0..50)
        .map(|_| {
            let t = random_map(&mut rng, 8, 8);
            let a = random_map(&mut rng, 8, 8);
            evaluate_pair(&t, &a, None)
        })
        .collect();
    let agg = aggregate(&reports);
    let mean_cc = reports.iter().map(|r| r.cc.value().unwrap()).sum::<f64>() / 50.0;
    assert!((agg.cc.unwrap().mean - mean_cc).abs() < 1e-12);
}

#[test]
fn two_frame_sequence_hand_average() {
    let f = |v: Vec<f64>| SaliencyMap::new(2, 2, v).unwrap();
    let target = SaliencySequence::new(vec![f(vec![1.0, 2.0, 3.0, 4.0]), f(vec![4.0, 1.0, 1.0, 2.0])], 30.0).unwrap();
    let achieved = SaliencySequence::new(vec![f(vec![1.0, 2.0, 4.0, 3.0]), f(vec![2.0, 2.0, 1.0, 3.0])], 30.0).unwrap();
    let report = evaluate_sequence(&target, &achieved).unwrap();
    let c0 = cc(&target.frames()[0], &achieved.frames()[0]).unwrap();
    let c1 = cc(&target.frames()[1], &achieved.frames()[1]).unwrap();
    let s0 = sim(&target.frames()[0], &achieved.frames()[0]).unwrap();
    let s1 = sim(&target.frames()[1], &achieved.frames()[1]).unwrap();
    let agg = report.aggregate;
    assert!((agg.cc.unwrap().mean - (c0 + c1) / 2.0).abs() < 1e-12);
    assert!((agg.cc.unwrap().std - ((c0 - c1) / 2.0).abs()).abs() < 1e-12);
    assert!((agg.sim.unwrap().mean - (s0 + s1) / 2.0).abs() < 1e-12);
}
