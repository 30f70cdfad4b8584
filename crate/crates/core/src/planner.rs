//! Push selection: find the most ambiguous region, instantiate the likely
//! worlds as simulable scenes, and pick the push whose outcomes differ most
//! across those worlds.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use nalgebra::Point3;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{project_to_masks, Belief, BeliefRegion, ObjectHypothesis};
use crate::geometry::Plane;
use crate::mask::Mask;
use crate::scene::{
    apply_push, render, Observation, Part, Pose, PushAction, RigidBody, Scene, TableBounds,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    /// Candidate pushes per step.
    pub k: usize,
    pub world_cap: usize,
    /// Push length in meters; defaults to twice the median object radius.
    pub push_distance: Option<f64>,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            k: 16,
            world_cap: 32,
            push_distance: None,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 || self.world_cap == 0 {
            return Err("k and world_cap must be positive".into());
        }
        if self
            .push_distance
            .is_some_and(|d| !(d > 0.0 && d.is_finite()))
        {
            return Err("push_distance must be positive".into());
        }
        Ok(())
    }
}

/// Number of hypotheses of a region scoring above `delta`.
pub fn region_uncertainty(region: &BeliefRegion, lambda: f64, delta: f64) -> usize {
    region.scores(lambda).iter().filter(|&&s| s > delta).count()
}

/// The region with the most likely hypotheses; ties prefer regions not yet
/// pushed, then larger area, then lower index. `None`
/// when no region has two or more likely hypotheses.
pub fn select_target_region(belief: &Belief) -> Option<usize> {
    let p = &belief.params;
    let keyed: Vec<(usize, bool, usize)> = belief
        .regions
        .iter()
        .map(|r| {
            (
                region_uncertainty(r, p.lambda, p.delta),
                r.was_moved(p.eps_w),
                r.area(),
            )
        })
        .collect();
    (0..keyed.len())
        .filter(|&i| keyed[i].0 > 1)
        .min_by(|&a, &b| {
            let (ka, ea, aa) = keyed[a];
            let (kb, eb, ab) = keyed[b];
            ea.cmp(&eb)
                .then(kb.cmp(&ka))
                .then(ab.cmp(&aa))
                .then(a.cmp(&b))
        })
}

/// A fully specified scene hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub scene: Scene,
    /// Chosen hypothesis index per belief region.
    pub choice: Vec<usize>,
    /// Sum of the chosen hypotheses' scores.
    pub score: f64,
}

/// Up to `world_cap` worlds of highest total score. Per region only
/// hypotheses scoring above `delta` are used (the best one if none does).
/// Each object becomes a body extruded from its mask down to the table.
pub fn construct_worlds(belief: &Belief, obs: &Observation, world_cap: usize) -> Vec<World> {
    let options = (0..belief.regions.len())
        .map(|r| likely_hypotheses(belief, r))
        .collect();
    worlds_from(belief, obs, options, world_cap)
}

/// Worlds that differ only in the hypothesis of region `target`: its likely
/// hypotheses, every other region held at its preferred one.
pub fn region_worlds(
    belief: &Belief,
    obs: &Observation,
    target: usize,
    world_cap: usize,
) -> Vec<World> {
    let p = &belief.params;
    let options = belief
        .regions
        .iter()
        .enumerate()
        .map(|(r, region)| {
            if r == target {
                likely_hypotheses(belief, r)
            } else {
                let b = region.best(p);
                vec![(b, region.scores(p.lambda)[b])]
            }
        })
        .collect();
    worlds_from(belief, obs, options, world_cap)
}

/// `(hypothesis, score)` above `delta` by decreasing score, or the preferred
/// hypothesis alone.
fn likely_hypotheses(belief: &Belief, region: usize) -> Vec<(usize, f64)> {
    let p = &belief.params;
    let r = &belief.regions[region];
    let scores = r.scores(p.lambda);
    let mut keep: Vec<(usize, f64)> = scores
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, s)| s > p.delta)
        .collect();
    if keep.is_empty() {
        let b = r.best(p);
        keep.push((b, scores[b]));
    }
    keep.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    keep
}

fn worlds_from(
    belief: &Belief,
    obs: &Observation,
    options: Vec<Vec<(usize, f64)>>,
    world_cap: usize,
) -> Vec<World> {
    best_products(&options, world_cap)
        .into_iter()
        .map(|ranks| {
            let choice: Vec<usize> = ranks.iter().zip(&options).map(|(&k, o)| o[k].0).collect();
            let score = ranks.iter().zip(&options).map(|(&k, o)| o[k].1).sum();
            let mut objects: Vec<&ObjectHypothesis> = belief.confident.iter().collect();
            for (r, &h) in belief.regions.iter().zip(&choice) {
                objects.extend(r.hypotheses[h].objects.iter());
            }
            World {
                scene: extrude(&objects, obs, &belief.table),
                choice,
                score,
            }
        })
        .collect()
}

/// The `cap` highest-sum index tuples over per-list options sorted by
/// decreasing value, in decreasing order of sum (ties: lexicographic).
fn best_products(options: &[Vec<(usize, f64)>], cap: usize) -> Vec<Vec<usize>> {
    #[derive(PartialEq)]
    struct Entry(f64, Vec<usize>);
    impl Eq for Entry {}
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> Ordering {
            self.0
                .total_cmp(&other.0)
                .then_with(|| other.1.cmp(&self.1))
        }
    }
    let total = |ranks: &[usize]| ranks.iter().zip(options).map(|(&k, o)| o[k].1).sum::<f64>();
    let start = vec![0; options.len()];
    let mut heap = BinaryHeap::from([Entry(total(&start), start.clone())]);
    let mut seen = HashSet::from([start]);
    let mut out = Vec::new();
    while let Some(Entry(_, ranks)) = heap.pop() {
        for i in 0..ranks.len() {
            if ranks[i] + 1 < options[i].len() {
                let mut next = ranks.clone();
                next[i] += 1;
                if seen.insert(next.clone()) {
                    heap.push(Entry(total(&next), next));
                }
            }
        }
        out.push(ranks);
        if out.len() == cap {
            break;
        }
    }
    out
}

/// Bodies built from the objects' visible masks: every row run of pixels
/// with equal height becomes a box from the table up to that height.
pub fn extrude(objects: &[&ObjectHypothesis], obs: &Observation, table: &Plane<f64>) -> Scene {
    let bounds = TableBounds {
        min: obs.origin,
        max: [
            obs.origin[0] + obs.dims.cols as f64 * obs.resolution,
            obs.origin[1] + obs.dims.rows as f64 * obs.resolution,
        ],
    };
    let res = obs.resolution;
    let height = |i: usize| {
        let c = obs.cloud[i];
        table
            .signed_distance(&Point3::new(c[0], c[1], c[2]))
            .max(res / 4.0)
    };
    let bodies = project_to_masks(objects, obs)
        .iter()
        .enumerate()
        .map(|(k, mask)| RigidBody {
            id: k as u32 + 1,
            pose: Pose::new(0.0, 0.0, 0.0),
            parts: row_runs(mask, &height)
                .into_iter()
                .map(|(r, c0, c1, h)| {
                    let x0 = obs.origin[0] + c0 as f64 * res;
                    let x1 = obs.origin[0] + c1 as f64 * res;
                    let y0 = obs.origin[1] + r as f64 * res;
                    Part::new([(x0 + x1) / 2.0, y0 + res / 2.0], [x1 - x0, res], 0.0, h)
                })
                .collect(),
        })
        .collect();
    Scene {
        table: bounds,
        bodies,
    }
}

/// `(row, first col, end col, height)` runs of a mask, splitting where the
/// height changes by more than a millimetre fraction.
fn row_runs(mask: &Mask, height: &impl Fn(usize) -> f64) -> Vec<(usize, usize, usize, f64)> {
    let dims = mask.dims();
    let mut runs: Vec<(usize, usize, usize, f64)> = Vec::new();
    for &i in mask.indices() {
        let i = i as usize;
        let (r, c) = (i / dims.cols, i % dims.cols);
        let h = height(i);
        match runs.last_mut() {
            Some(last) if last.0 == r && last.2 == c && (last.3 - h).abs() < 1e-4 => last.2 = c + 1,
            _ => runs.push((r, c, c + 1, h)),
        }
    }
    runs
}

/// A candidate push and the object it was aimed at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCandidate {
    pub action: PushAction,
    /// `(hypothesis, object)` within the target region, if drawn from one.
    pub object: Option<(usize, usize)>,
}

/// Twice the median radius of the most likely objects' footprints.
pub fn default_push_distance(belief: &Belief, resolution: f64) -> f64 {
    let mut radii: Vec<f64> = belief
        .most_likely()
        .iter()
        .filter(|o| !o.mask.is_empty())
        .map(|o| (o.mask.len() as f64 / std::f64::consts::PI).sqrt() * resolution)
        .collect();
    if radii.is_empty() {
        return 10.0 * resolution;
    }
    radii.sort_by(f64::total_cmp);
    let n = radii.len();
    let median = if n % 2 == 1 {
        radii[n / 2]
    } else {
        0.5 * (radii[n / 2 - 1] + radii[n / 2])
    };
    2.0 * median
}

/// Push through the mask centroid along `direction`, starting just outside
/// the mask on the far side.
pub fn push_through(
    mask: &Mask,
    obs: &Observation,
    direction: [f64; 2],
    distance: f64,
) -> Option<PushAction> {
    let (r, c) = mask.centroid()?;
    let centre = [
        obs.origin[0] + (c + 0.5) * obs.resolution,
        obs.origin[1] + (r + 0.5) * obs.resolution,
    ];
    let step = obs.resolution / 4.0;
    let mut t = 0.0;
    loop {
        let p = [centre[0] - direction[0] * t, centre[1] - direction[1] * t];
        match obs.world_to_index(p[0], p[1]) {
            Some(i) if mask.contains_index(i) || t == 0.0 => t += step,
            _ => return PushAction::new(p, direction, distance).ok(),
        }
    }
}

fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> [f64; 2] {
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    [theta.cos(), theta.sin()]
}

/// `k` pushes, each through a uniformly drawn object of the region's
/// hypotheses in a uniformly drawn direction.
pub fn sample_actions<R: Rng + ?Sized>(
    belief: &Belief,
    region: usize,
    obs: &Observation,
    k: usize,
    push_distance: f64,
    rng: &mut R,
) -> Vec<ActionCandidate> {
    let objects: Vec<(usize, usize, &Mask)> = belief.regions[region]
        .hypotheses
        .iter()
        .enumerate()
        .flat_map(|(h, hyp)| {
            hyp.objects
                .iter()
                .enumerate()
                .map(move |(j, o)| (h, j, &o.mask))
        })
        .filter(|(_, _, m)| !m.is_empty())
        .collect();
    let mut out = Vec::with_capacity(k);
    if objects.is_empty() {
        return out;
    }
    while out.len() < k {
        let (h, j, mask) = objects[rng.random_range(0..objects.len())];
        let dir = random_direction(rng);
        if let Some(action) = push_through(mask, obs, dir, push_distance) {
            out.push(ActionCandidate {
                action,
                object: Some((h, j)),
            });
        }
    }
    out
}

/// A push through a uniformly drawn object of the whole belief.
pub fn random_action<R: Rng + ?Sized>(
    belief: &Belief,
    obs: &Observation,
    push_distance: f64,
    rng: &mut R,
) -> Option<PushAction> {
    let masks: Vec<&Mask> = belief
        .all_objects()
        .map(|o| &o.mask)
        .filter(|m| !m.is_empty())
        .collect();
    if masks.is_empty() {
        return None;
    }
    let mask = masks[rng.random_range(0..masks.len())];
    let dir = random_direction(rng);
    push_through(mask, obs, dir, push_distance)
}

/// Mean absolute deviation of each world's post-push depth from the
/// across-world mean, over pixels any world occupies before or after.
pub fn action_objective(worlds: &[World], action: &PushAction, resolution: f64) -> f64 {
    if worlds.len() < 2 {
        return 0.0;
    }
    let renders: Vec<(Vec<f64>, Vec<f64>)> = worlds
        .iter()
        .map(|w| {
            let before = render(&w.scene, resolution).depth;
            let after = apply_push(&w.scene, action).map_or_else(|_| w.scene.clone(), |o| o.scene);
            (before, render(&after, resolution).depth)
        })
        .collect();
    let n = renders[0].1.len();
    let active: Vec<usize> = (0..n)
        .filter(|&i| renders.iter().any(|(b, a)| b[i] > 0.0 || a[i] > 0.0))
        .collect();
    if active.is_empty() {
        return 0.0;
    }
    let m = worlds.len() as f64;
    let mut total = 0.0;
    for &i in &active {
        let mean = renders.iter().map(|(_, a)| a[i]).sum::<f64>() / m;
        total += renders
            .iter()
            .map(|(_, a)| (a[i] - mean).abs())
            .sum::<f64>();
    }
    total / m / active.len() as f64
}

/// Index of the candidate with the highest objective (lowest index on
/// ties) and every candidate's objective.
pub fn select_action(
    worlds: &[World],
    candidates: &[ActionCandidate],
    resolution: f64,
) -> Option<(usize, Vec<f64>)> {
    if candidates.is_empty() || worlds.is_empty() {
        return None;
    }
    let objectives: Vec<f64> = candidates
        .par_iter()
        .map(|c| action_objective(worlds, &c.action, resolution))
        .collect();
    let best = (0..objectives.len())
        .min_by(|&a, &b| objectives[b].total_cmp(&objectives[a]).then(a.cmp(&b)))
        .expect("non-empty");
    Some((best, objectives))
}
