//! Co-design search against brute-force scans.

mod support;

use ingnn::dse::{
    enumerate, evaluate, explore, pareto_front, points_csv, select, Candidate, CountingOracle, DesignPoint, DseConstraints,
    Objective, SearchSpace, SyntheticOracle,
};
use ingnn::hwmodel::{HwBudget, LatencyEstimate, PipelineDepths};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{brute_pareto, brute_select};

fn space_500() -> SearchSpace {
    SearchSpace {
        n_o: 30,
        p: 16,
        d_e: 8,
        d_o: 8,
        fr_layer_counts: vec![1, 2, 3, 4],
        fr_sizes: vec![8, 16, 24, 32, 48],
        fo_first_sizes: vec![16, 32, 48, 64, 96],
        phio_first_sizes: vec![16, 32, 48, 64, 96],
        fo_tail: vec![24],
        phio_tail: vec![24],
        max_reuse: 16,
        max_n_fr: None,
        ii_mult: 1,
        depths: PipelineDepths::default(),
    }
}

#[test]
fn selections_and_front_match_scans() {
    let space = space_500();
    assert_eq!(space.len(), 500);
    for (dsp, latn_r) in [(12_288, 1.0), (6_000, 1.0), (3_000, 2.0)] {
        for objective in [Objective::OptLatn, Objective::OptAcc] {
            let c = DseConstraints::new(latn_r, 2.0, HwBudget::new(dsp, 200.0).unwrap(), objective).unwrap();
            let oracle = CountingOracle::new(SyntheticOracle);
            let points = explore(&space, space.graph(), &c, &oracle).unwrap();
            assert_eq!(points.len(), 500);
            let unpruned: Vec<&DesignPoint> = points.iter().filter(|p| !p.is_pruned()).collect();
            assert_eq!(oracle.calls(), unpruned.len());
            let seen = oracle.seen();
            assert!(points.iter().filter(|p| p.is_pruned()).all(|p| !seen.contains(&p.config)));

            let got = select(&points, &c).ok().map(|p| p.config.clone());
            assert_eq!(got, brute_select(&points, &c), "dsp={dsp} {objective:?}");
            if let Ok(sel) = select(&points, &c) {
                assert!(sel.latency_us().unwrap() <= c.threshold_us());
            }

            let mut front: Vec<String> = pareto_front(&points).into_iter().map(|p| p.config).collect();
            front.sort();
            assert_eq!(front, brute_pareto(&points));
        }
    }
}

#[test]
fn enumeration_is_deterministic() {
    let space = space_500();
    let c = DseConstraints::new(1.0, 2.0, HwBudget::U250, Objective::OptAcc).unwrap();
    let a = explore(&space, space.graph(), &c, &SyntheticOracle).unwrap();
    let b = explore(&space, space.graph(), &c, &SyntheticOracle).unwrap();
    assert_eq!(points_csv(&a), points_csv(&b));
}

#[test]
fn infinite_alpha_prunes_nothing_by_latency() {
    let space = space_500();
    let c = DseConstraints::new(0.01, f64::INFINITY, HwBudget::U250, Objective::OptLatn).unwrap();
    let points = enumerate(&space, space.graph(), &c).unwrap();
    assert!(points.iter().all(|p| p.pruned != Some(ingnn::dse::PruneReason::Latency)));
}

fn synthetic_point(i: usize, latency: u64, accuracy: f64) -> DesignPoint {
    DesignPoint {
        config: format!("p{i:04}"),
        candidate: Candidate { fr_layers: i, fr_size: 1, fo_first: 1, phio_first: 1 },
        weights: i,
        par: None,
        resources: Some(ingnn::hwmodel::ResourceEstimate { mlps: vec![], total: (i % 7) as u64, feasible: true }),
        latency: Some(LatencyEstimate {
            ii_loop: 1,
            ii_model: 1,
            latency,
            ii_us: 0.0,
            latency_us: latency as f64 / 200.0,
            dp_loop: 0,
            dp_tail: 0,
        }),
        accuracy: Some(accuracy),
        pruned: None,
    }
}

#[test]
fn pareto_on_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let pts: Vec<DesignPoint> =
            (0..200).map(|i| synthetic_point(i, rng.gen_range(20..400), (rng.gen_range(0..50) as f64) / 100.0)).collect();
        let front = pareto_front(&pts);
        let mut names: Vec<String> = front.iter().map(|p| p.config.clone()).collect();
        assert!(front.windows(2).all(|w| w[0].latency_cycles() <= w[1].latency_cycles()));
        names.sort();
        assert_eq!(names, brute_pareto(&pts));
    }
}

proptest! {
    #[test]
    fn opt_latn_ignores_monotone_rescaling(seed in any::<u64>(), scale in 0.01f64..10.0, offset in -1.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<DesignPoint> =
            (0..40).map(|i| synthetic_point(i, rng.gen_range(50..70), rng.gen_range(0..10) as f64 / 10.0)).collect();
        let rescaled: Vec<DesignPoint> = pts
            .iter()
            .cloned()
            .map(|mut p| {
                p.accuracy = p.accuracy.map(|a| a * scale + offset);
                p
            })
            .collect();
        let c = DseConstraints::new(1.0, 2.0, HwBudget::U250, Objective::OptLatn).unwrap();
        prop_assert_eq!(&select(&pts, &c).unwrap().config, &select(&rescaled, &c).unwrap().config);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn evaluation_only_touches_unpruned(latn_r in 0.2f64..3.0, alpha in 1.0f64..3.0) {
        let mut space = space_500();
        space.fr_sizes.truncate(2);
        space.fo_first_sizes.truncate(2);
        let c = DseConstraints::new(latn_r, alpha, HwBudget::U250, Objective::OptLatn).unwrap();
        let mut points = enumerate(&space, space.graph(), &c).unwrap();
        let oracle = CountingOracle::new(SyntheticOracle);
        evaluate(&mut points, &oracle).unwrap();
        prop_assert_eq!(oracle.calls(), points.iter().filter(|p| !p.is_pruned()).count());
        for p in &points {
            prop_assert_eq!(p.accuracy.is_some(), !p.is_pruned());
            if p.accuracy.is_some() {
                prop_assert!(p.latency_us().unwrap() <= alpha * latn_r);
            }
        }
    }
}
