#![allow(dead_code)]

use eos::belief::{init_belief, Belief, BeliefParams};
use eos::geometry::Plane;
use eos::mask::{Mask, MaskSource};
use eos::scene::{render, Observation, Part, Pose, RigidBody, Scene, TableBounds};
use eos::uncos::{Region, RegionHypothesis, RegionKind, UncertainRegion, UncosResult};

pub const RES: f64 = 0.004;

pub fn block(id: u32, x: f64, y: f64, w: f64, d: f64, h: f64) -> RigidBody {
    RigidBody {
        id,
        pose: Pose::new(x, y, 0.0),
        parts: vec![Part::new([0.0, 0.0], [w, d], 0.0, h)],
    }
}

pub fn table(bodies: Vec<RigidBody>) -> Scene {
    let s = Scene {
        table: TableBounds::centered(0.4, 0.4),
        bodies,
    };
    s.validate().unwrap();
    s
}

/// Two equally tall boxes touching along x; body 1 holds 60% of the pixels.
pub fn touching_pair() -> (Scene, Observation) {
    let scene = table(vec![
        block(1, -0.018, 0.0, 0.06, 0.048, 0.04),
        block(2, 0.032, 0.0, 0.04, 0.048, 0.04),
    ]);
    let obs = render(&scene, RES);
    (scene, obs)
}

/// Segmentation result with one uncertain region holding the merged
/// (weight `w_merged`) and split hypotheses of bodies 1 and 2.
pub fn merged_vs_split(obs: &Observation, w_merged: f64) -> UncosResult {
    let a = obs.body_mask(1);
    let b = obs.body_mask(2);
    let both = a.union(&b);
    UncosResult {
        confident: Vec::new(),
        uncertain: vec![UncertainRegion {
            region: Region {
                footprint: both.clone(),
                kind: RegionKind::Uncertain,
            },
            hypotheses: vec![
                RegionHypothesis {
                    masks: vec![both],
                    weight: w_merged,
                    partial: false,
                },
                RegionHypothesis {
                    masks: vec![a, b],
                    weight: 1.0 - w_merged,
                    partial: false,
                },
            ],
        }],
        table: Plane::horizontal(0.0),
    }
}

pub fn pair_belief(obs: &Observation) -> Belief {
    init_belief(&merged_vs_split(obs, 0.6), obs, &BeliefParams::default())
}

pub fn object_count(masks: &[Mask]) -> usize {
    masks.iter().filter(|m| !m.is_empty()).count()
}

pub fn mask(obs: &Observation, idx: impl IntoIterator<Item = u32>) -> Mask {
    Mask::from_indices(obs.dims, idx, MaskSource::BottomUp)
}
