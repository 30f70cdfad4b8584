use eos::mask::MaskSource;
use eos::metrics::evaluate;
use eos::scene::{
    generate_scene, render, Part, Pose, RigidBody, Scene, SceneGenConfig, TableBounds,
};
use eos::segmenter::{OracleConfig, OracleSegmenter, Segmenter};
use eos::uncos::{
    generate_region_hypotheses, partition_regions, uncos, HypothesisContext, RegionKind,
    UncosParams,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const RES: f64 = 0.004;

fn block(id: u32, x: f64, y: f64, w: f64, d: f64, h: f64) -> RigidBody {
    RigidBody {
        id,
        pose: Pose::new(x, y, 0.0),
        parts: vec![Part::new([0.0, 0.0], [w, d], 0.0, h)],
    }
}

fn table(bodies: Vec<RigidBody>) -> Scene {
    let s = Scene {
        table: TableBounds::centered(0.4, 0.4),
        bodies,
    };
    s.validate().unwrap();
    s
}

#[test]
fn noise_free_oracle_reproduces_ground_truth() {
    let oracle = OracleSegmenter::new(OracleConfig::noise_free());
    let params = UncosParams::default();
    for seed in 0..10 {
        let scene = generate_scene(
            &SceneGenConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap();
        let obs = render(&scene, RES);
        let result = uncos(&obs, &oracle, &params, seed).unwrap();
        assert!(result.uncertain.is_empty(), "seed {seed}");
        let eval = evaluate::<f64>(&result.most_likely(), &obs.ground_truth_masks());
        assert_eq!(eval.f_n, 1.0, "seed {seed}");
    }
}

#[test]
fn separated_bodies_are_confident() {
    let scene = table(vec![
        block(1, -0.1, 0.0, 0.05, 0.05, 0.03),
        block(2, 0.0, 0.1, 0.04, 0.06, 0.05),
        block(3, 0.1, -0.05, 0.06, 0.04, 0.02),
    ]);
    let obs = render(&scene, RES);
    let oracle = OracleSegmenter::new(OracleConfig::noise_free());
    let result = uncos(&obs, &oracle, &UncosParams::default(), 1).unwrap();
    assert_eq!(result.confident.len(), 3);
    assert!(result.uncertain.is_empty());
}

#[test]
fn ambiguous_pair_yields_split_and_merged() {
    let scene = table(vec![
        block(1, -0.025, 0.0, 0.05, 0.05, 0.03),
        block(2, 0.025, 0.0, 0.05, 0.05, 0.03),
    ]);
    let obs = render(&scene, RES);
    let oracle = OracleSegmenter::new(OracleConfig {
        p_merge: 0.5,
        ..OracleConfig::noise_free()
    });
    let result = uncos(&obs, &oracle, &UncosParams::default(), 3).unwrap();
    assert_eq!(result.uncertain.len(), 1);
    let hyps = &result.uncertain[0].hypotheses;
    assert!(hyps.len() >= 2);
    let counts: Vec<usize> = hyps.iter().map(|h| h.masks.len()).collect();
    assert!(counts.contains(&1) && counts.contains(&2));
    let total: f64 = hyps.iter().map(|h| h.weight).sum();
    assert!((total - 1.0).abs() < 1e-9);
    for h in hyps {
        assert!(((h.weight * 20.0).round() - h.weight * 20.0).abs() < 1e-9);
    }
}

#[test]
fn deterministic_for_fixed_seed() {
    let scene = generate_scene(
        &SceneGenConfig::default(),
        &mut ChaCha8Rng::seed_from_u64(5),
    )
    .unwrap();
    let obs = render(&scene, RES);
    let oracle = OracleSegmenter::new(OracleConfig::default());
    let a = uncos(&obs, &oracle, &UncosParams::default(), 9).unwrap();
    let b = uncos(&obs, &oracle, &UncosParams::default(), 9).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn regions_are_disjoint() {
    let oracle = OracleSegmenter::new(OracleConfig::default());
    for seed in 0..5 {
        let scene = generate_scene(
            &SceneGenConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap();
        let obs = render(&scene, RES);
        let result = uncos(&obs, &oracle, &UncosParams::default(), seed).unwrap();
        let mut all: Vec<&eos::mask::Mask> = result.confident.iter().collect();
        all.extend(result.uncertain.iter().map(|u| &u.region.footprint));
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                assert_eq!(a.intersection_count(b), 0);
            }
        }
        for u in &result.uncertain {
            assert_eq!(u.region.kind, RegionKind::Uncertain);
            for h in &u.hypotheses {
                let covered: usize = h.masks.iter().map(|m| m.len()).sum();
                let union = eos::mask::union_all(obs.dims, &h.masks, MaskSource::BottomUp);
                assert_eq!(covered, union.len(), "masks overlap");
                if !h.partial {
                    assert!(union.len() as f64 >= 0.95 * u.region.footprint.len() as f64);
                }
            }
        }
    }
}

#[test]
fn part_level_seeds_become_separate_candidates() {
    let body = RigidBody {
        id: 1,
        pose: Pose::new(0.0, 0.0, 0.0),
        parts: vec![
            Part::new([-0.02, 0.0], [0.04, 0.04], 0.0, 0.03),
            Part::new([0.02, 0.0], [0.04, 0.04], 0.0, 0.05),
        ],
    };
    let obs = render(&table(vec![body]), RES);
    let clean = OracleSegmenter::new(OracleConfig::noise_free());
    let partition = partition_regions(
        &obs,
        &clean,
        &UncosParams::default(),
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    assert_eq!(partition.confident.len(), 1);
    let parts = OracleSegmenter::new(OracleConfig {
        p_part: 1.0,
        ..OracleConfig::noise_free()
    });
    let partition = partition_regions(
        &obs,
        &parts,
        &UncosParams::default(),
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    // the two part masks never overlap, so no IoM edge links them
    assert_eq!(partition.confident.len(), 2);
    assert!(partition.uncertain.is_empty());
}

#[test]
fn whole_region_seed_needs_no_prompts() {
    let scene = table(vec![block(1, 0.0, 0.0, 0.05, 0.05, 0.03)]);
    let obs = render(&scene, RES);
    let oracle = OracleSegmenter::new(OracleConfig::noise_free());
    let params = UncosParams::default();
    let partition =
        partition_regions(&obs, &oracle, &params, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let region = obs.body_mask(1);
    let before = oracle.stats().prompts;
    let ctx = HypothesisContext {
        obs: &obs,
        segmenter: &oracle,
        table: &partition.table,
        foreground: &partition.foreground,
        params: &UncosParams {
            n_hypotheses: 1,
            ..params.clone()
        },
    };
    let hyps = generate_region_hypotheses(
        &ctx,
        &region,
        std::slice::from_ref(&region),
        &mut ChaCha8Rng::seed_from_u64(1),
    )
    .unwrap();
    assert_eq!(oracle.stats().prompts, before);
    assert_eq!(hyps.len(), 1);
    assert_eq!(hyps[0].weight, 1.0);
    assert!(hyps[0].masks[0].same_pixels(&region));
    oracle.release_frame(obs.handle);
}
