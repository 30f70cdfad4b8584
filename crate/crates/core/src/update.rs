//! Belief update after one push: every hypothesized object is tracked into
//! the new frame, registered against its previous points, and scored by the
//! fraction of points that moved with the estimated rigid motion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{wholeness, Belief, BeliefParams, Evidence, ObjectHypothesis};
use crate::geometry::{register_rigid_ransac, PointSet};
use crate::mask::{Mask, MaskSource};
use crate::scene::{correspondence_map, CorrespondenceMap, Observation, Scene};

/// A mask carried into the next frame, with the pixel pairs it was built
/// from.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub mask: Mask,
    /// `(previous pixel, new pixel)` correspondences, both inside their
    /// masks; may cover only part of the mask.
    pub pairs: Vec<(u32, u32)>,
}

pub trait Tracker: Sync {
    /// Follows `prev_mask` into `new_obs`; `None` when nothing of it is
    /// visible any more.
    fn track(
        &self,
        prev_obs: &Observation,
        prev_mask: &Mask,
        new_obs: &Observation,
        rng: &mut ChaCha8Rng,
    ) -> Option<Track>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerParams {
    /// Probability of losing each tracked pixel.
    pub dropout: f64,
    /// Maximum boundary dilation/erosion in pixels.
    pub jitter: usize,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self::exact()
    }
}

impl TrackerParams {
    pub fn exact() -> Self {
        Self {
            dropout: 0.0,
            jitter: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("dropout = {} must lie in [0, 1)", self.dropout));
        }
        Ok(())
    }
}

/// Tracker backed by the simulator's ground-truth pixel correspondence
/// between two frames. A pixel of the new frame is tracked when the surface
/// point it shows was inside the previous mask.
#[derive(Debug, Clone)]
pub struct SimTracker {
    map: CorrespondenceMap,
    params: TrackerParams,
}

impl SimTracker {
    pub fn new(map: CorrespondenceMap, params: TrackerParams) -> Self {
        Self { map, params }
    }

    pub fn between(
        scene_before: &Scene,
        scene_after: &Scene,
        obs_before: &Observation,
        obs_after: &Observation,
        params: TrackerParams,
    ) -> Self {
        Self::new(
            correspondence_map(scene_before, scene_after, obs_before, obs_after),
            params,
        )
    }
}

impl Tracker for SimTracker {
    fn track(
        &self,
        prev: &Observation,
        prev_mask: &Mask,
        new_obs: &Observation,
        rng: &mut ChaCha8Rng,
    ) -> Option<Track> {
        let mut pairs = self.map.backward_pairs(prev_mask);
        if self.params.dropout > 0.0 {
            pairs.retain(|_| !rng.random_bool(self.params.dropout));
        }
        let mut mask =
            Mask::from_indices(new_obs.dims, pairs.iter().map(|p| p.1), MaskSource::Tracked);
        if self.params.jitter > 0 {
            let k = rng.random_range(0..=self.params.jitter);
            if rng.random_bool(0.5) {
                mask = mask.dilate(k);
            } else {
                mask = mask.erode(k);
                pairs.retain(|p| mask.contains_index(p.1 as usize));
            }
        }
        // a pixel pair straddling a height step shows two different surfaces
        pairs.retain(|&(i, j)| (prev.depth[i as usize] - new_obs.depth[j as usize]).abs() < 1e-6);
        (!mask.is_empty()).then_some(Track { mask, pairs })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpdateParams {
    pub ransac_iters: usize,
    /// Registration inlier distance; defaults to `1.5 * resolution`.
    pub inlier_dist: Option<f64>,
    /// Voxel cell for merging clouds, as a fraction of the resolution.
    pub voxel_frac: f64,
}

impl Default for UpdateParams {
    fn default() -> Self {
        Self {
            ransac_iters: 200,
            inlier_dist: None,
            voxel_frac: 0.5,
        }
    }
}

impl UpdateParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.ransac_iters == 0
            || self.voxel_frac.is_nan()
            || self.voxel_frac <= 0.0
            || self.inlier_dist.is_some_and(|d| d <= 0.0)
        {
            return Err("ransac_iters, voxel_frac and inlier_dist must be positive".into());
        }
        Ok(())
    }

    pub fn inlier_dist(&self, resolution: f64) -> f64 {
        self.inlier_dist.unwrap_or(1.5 * resolution)
    }
}

/// Applies one step of rigid-motion evidence to every object. The belief's
/// structure (regions, hypotheses, objects) is preserved.
pub fn update_belief<T: Tracker + ?Sized>(
    belief: &Belief,
    prev_obs: &Observation,
    new_obs: &Observation,
    tracker: &T,
    params: &UpdateParams,
    seed: u64,
) -> Belief {
    let step = belief.step + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objects: Vec<&ObjectHypothesis> = belief.all_objects().collect();
    let seeds: Vec<u64> = objects.iter().map(|_| rng.random()).collect();
    let mut updated: Vec<ObjectHypothesis> = objects
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(o, &s)| {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            update_object(
                o,
                prev_obs,
                new_obs,
                tracker,
                params,
                &belief.params,
                step,
                &mut r,
            )
        })
        .collect::<Vec<_>>();

    let mut next = belief.clone();
    next.step = step;
    let mut it = updated.drain(..);
    for o in next.confident.iter_mut() {
        *o = it.next().expect("one update per object");
    }
    for r in next.regions.iter_mut() {
        for h in r.hypotheses.iter_mut() {
            for o in h.objects.iter_mut() {
                *o = it.next().expect("one update per object");
            }
        }
    }
    next
}

#[allow(clippy::too_many_arguments)]
fn update_object<T: Tracker + ?Sized>(
    o: &ObjectHypothesis,
    prev_obs: &Observation,
    new_obs: &Observation,
    tracker: &T,
    params: &UpdateParams,
    belief: &BeliefParams,
    step: usize,
    rng: &mut ChaCha8Rng,
) -> ObjectHypothesis {
    let mut next = o.clone();
    let track = if o.mask.is_empty() {
        None
    } else {
        tracker.track(prev_obs, &o.mask, new_obs, rng)
    };
    let Some(track) = track else {
        next.mask = Mask::empty(new_obs.dims, MaskSource::Tracked);
        next.score_history.push(Evidence {
            step,
            score: o.wholeness,
            displacement: belief.eps_w,
            moved: false,
        });
        next.wholeness = wholeness(&next.score_history, belief.p0, belief.eps_w);
        return next;
    };

    let src = PointSet::from_mask(prev_obs, &o.mask);
    let dst = PointSet::from_mask(new_obs, &track.mask);
    let corr = pair_indices(&o.mask, &track.mask, &track.pairs);
    let evidence = match register_rigid_ransac(
        &src,
        &dst,
        &corr,
        params.ransac_iters,
        params.inlier_dist(new_obs.resolution),
        rng,
    ) {
        Ok(reg) => {
            let cell = params.voxel_frac * new_obs.resolution;
            next.cloud = o
                .cloud
                .transformed(&reg.transform)
                .union(&dst)
                .voxel_dedup(cell);
            let d = reg.transform.translation.norm() + belief.kappa_rot * reg.transform.angle();
            Evidence {
                step,
                score: reg.inlier_fraction,
                displacement: d.max(belief.eps_w),
                moved: track.pairs.iter().any(|(a, b)| a != b),
            }
        }
        Err(_) => Evidence {
            step,
            score: 0.0,
            displacement: belief.eps_w,
            moved: false,
        },
    };
    next.mask = track.mask;
    next.score_history.push(evidence);
    next.wholeness = wholeness(&next.score_history, belief.p0, belief.eps_w);
    next
}

/// Pixel pairs as positions in the two masks' sorted index lists.
fn pair_indices(prev: &Mask, new: &Mask, pairs: &[(u32, u32)]) -> Vec<(usize, usize)> {
    pairs
        .iter()
        .filter_map(|&(a, b)| {
            let i = prev.indices().binary_search(&a).ok()?;
            let j = new.indices().binary_search(&b).ok()?;
            Some((i, j))
        })
        .collect()
}
