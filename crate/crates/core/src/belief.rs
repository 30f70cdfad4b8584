//! Factored 3-D belief: confident objects plus, for every uncertain region,
//! a weighted list of alternative object sets. Each object carries a point
//! cloud and a wholeness score that rises or falls with rigid-motion
//! evidence.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geometry::{Plane, PointSet};
use crate::mask::{union_all, Mask, MaskSource};
use crate::scene::Observation;
use crate::uncos::{mask_list_cmp, UncosResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeliefParams {
    /// Penalty per object beyond the region's smallest hypothesis.
    pub lambda: f64,
    /// Hypotheses scoring above this count as likely.
    pub delta: f64,
    /// Initial wholeness of every object.
    pub p0: f64,
    /// Displacement floor (meters) used as the weight of weak evidence.
    pub eps_w: f64,
    /// Meters of displacement credited per radian of rotation.
    pub kappa_rot: f64,
    /// Registration scores within this of 1 count as rigid motion.
    pub rigid_tol: f64,
}

impl Default for BeliefParams {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            delta: 0.65,
            p0: 0.8,
            eps_w: 1e-3,
            kappa_rot: 0.1,
            rigid_tol: 0.15,
        }
    }
}

impl BeliefParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(format!("lambda = {} must be non-negative", self.lambda));
        }
        for (name, v) in [
            ("delta", self.delta),
            ("p0", self.p0),
            ("rigid_tol", self.rigid_tol),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} must lie in [0, 1]"));
            }
        }
        if !(self.eps_w > 0.0 && self.eps_w.is_finite())
            || self.kappa_rot.is_nan()
            || self.kappa_rot < 0.0
        {
            return Err("eps_w must be positive and kappa_rot non-negative".into());
        }
        Ok(())
    }
}

/// One rigid-motion observation of an object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub step: usize,
    /// Inlier fraction of the registration at this step.
    pub score: f64,
    /// Floored displacement magnitude used as the weight.
    pub displacement: f64,
    /// Some tracked pixel changed position, even if the registration
    /// followed a part that stayed put.
    #[serde(default)]
    pub moved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectHypothesis {
    /// World-frame points accumulated over the episode.
    pub cloud: PointSet<f64>,
    pub wholeness: f64,
    pub score_history: Vec<Evidence>,
    /// Projection on the latest frame; empty once the object is lost.
    pub mask: Mask,
}

impl ObjectHypothesis {
    pub fn new(obs: &Observation, mask: &Mask, p0: f64) -> Option<Self> {
        let cloud = PointSet::from_mask(obs, mask);
        if cloud.is_empty() {
            return None;
        }
        Some(Self {
            cloud,
            wholeness: p0,
            score_history: Vec::new(),
            mask: mask.clone(),
        })
    }

    /// Whether any step moved the object.
    pub fn was_moved(&self, eps_w: f64) -> bool {
        self.score_history
            .iter()
            .any(|e| e.moved || e.displacement > eps_w)
    }

    /// Whether the object moved at some step without doing so rigidly.
    pub fn rigidity_violated(&self, params: &BeliefParams) -> bool {
        self.score_history
            .iter()
            .any(|e| (e.moved || e.displacement > params.eps_w) && e.score < 1.0 - params.rigid_tol)
    }
}

/// Displacement-weighted mean of the history, anchored by a prior entry
/// `(eps_w, p0)` so that an object that never moves keeps a score near `p0`
/// until stationary evidence accumulates.
pub fn wholeness(history: &[Evidence], p0: f64, eps_w: f64) -> f64 {
    let (mut num, mut den) = (eps_w * p0, eps_w);
    for e in history {
        let w = e.displacement.max(eps_w);
        num += w * e.score;
        den += w;
    }
    (num / den).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefHypothesis {
    pub objects: Vec<ObjectHypothesis>,
    /// Bootstrap weight from the segmentation stage.
    pub weight: f64,
}

impl BeliefHypothesis {
    /// Some object moved without doing so rigidly.
    pub fn refuted(&self, params: &BeliefParams) -> bool {
        self.objects.iter().any(|o| o.rigidity_violated(params))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefRegion {
    pub hypotheses: Vec<BeliefHypothesis>,
}

impl BeliefRegion {
    pub fn min_count(&self) -> usize {
        self.hypotheses
            .iter()
            .map(|h| h.objects.len())
            .min()
            .unwrap_or(0)
    }

    pub fn scores(&self, lambda: f64) -> Vec<f64> {
        let min = self.min_count();
        self.hypotheses
            .iter()
            .map(|h| hypothesis_score(&wholeness_of(h), lambda, min))
            .collect()
    }

    /// Pixels currently covered by any hypothesis.
    pub fn area(&self) -> usize {
        let masks = self
            .hypotheses
            .iter()
            .flat_map(|h| h.objects.iter().map(|o| &o.mask));
        match self.hypotheses.first().and_then(|h| h.objects.first()) {
            Some(o) => union_all(o.mask.dims(), masks, MaskSource::Tracked).len(),
            None => 0,
        }
    }

    pub fn was_moved(&self, eps_w: f64) -> bool {
        self.hypotheses
            .iter()
            .any(|h| h.objects.iter().any(|o| o.was_moved(eps_w)))
    }

    /// Whether some hypothesized object of the region failed a rigidity
    /// check, i.e. the interactions so far discriminate between hypotheses.
    pub fn has_evidence(&self, params: &BeliefParams) -> bool {
        self.hypotheses.iter().any(|h| h.refuted(params))
    }

    /// Index of the preferred hypothesis. Hypotheses none of whose objects
    /// failed a rigidity check come first, ranked by bootstrap weight: the
    /// interactions so far are equally consistent with all of them. Refuted
    /// hypotheses follow, ranked by wholeness score, then weight. Remaining
    /// ties go to fewer objects, then lexicographic mask order.
    pub fn best(&self, params: &BeliefParams) -> usize {
        let scores = self.scores(params.lambda);
        let refuted: Vec<bool> = self.hypotheses.iter().map(|h| h.refuted(params)).collect();
        let order = |a: usize, b: usize| -> Ordering {
            let (ha, hb) = (&self.hypotheses[a], &self.hypotheses[b]);
            let primary = match (refuted[a], refuted[b]) {
                (false, true) => Ordering::Less,
                (true, false) => Ordering::Greater,
                (true, true) => scores[b].total_cmp(&scores[a]),
                (false, false) => Ordering::Equal,
            };
            primary
                .then(hb.weight.total_cmp(&ha.weight))
                .then(ha.objects.len().cmp(&hb.objects.len()))
                .then_with(|| {
                    let ma: Vec<Mask> = ha.objects.iter().map(|o| o.mask.clone()).collect();
                    let mb: Vec<Mask> = hb.objects.iter().map(|o| o.mask.clone()).collect();
                    mask_list_cmp(&ma, &mb)
                })
        };
        (0..self.hypotheses.len())
            .min_by(|&a, &b| order(a, b))
            .unwrap_or(0)
    }
}

fn wholeness_of(h: &BeliefHypothesis) -> Vec<f64> {
    h.objects.iter().map(|o| o.wholeness).collect()
}

/// Mean wholeness minus `lambda` per object beyond `min_count`.
pub fn hypothesis_score(wholeness: &[f64], lambda: f64, min_count: usize) -> f64 {
    if wholeness.is_empty() {
        return 0.0;
    }
    let mean = wholeness.iter().sum::<f64>() / wholeness.len() as f64;
    mean - lambda * (wholeness.len() as f64 - min_count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub confident: Vec<ObjectHypothesis>,
    pub regions: Vec<BeliefRegion>,
    pub params: BeliefParams,
    /// Support plane fitted on the first frame.
    pub table: Plane<f64>,
    /// Number of updates applied so far.
    pub step: usize,
}

/// Lifts every mask of a segmentation result to the observed cloud.
/// Objects without points are dropped, hypotheses left empty are dropped
/// and the survivors' weights renormalized.
pub fn init_belief(result: &UncosResult, obs: &Observation, params: &BeliefParams) -> Belief {
    let confident = result
        .confident
        .iter()
        .filter_map(|m| ObjectHypothesis::new(obs, m, params.p0))
        .collect();
    let mut regions = Vec::new();
    for u in &result.uncertain {
        let mut hypotheses: Vec<BeliefHypothesis> = u
            .hypotheses
            .iter()
            .filter_map(|h| {
                let objects: Vec<ObjectHypothesis> = h
                    .masks
                    .iter()
                    .filter_map(|m| ObjectHypothesis::new(obs, m, params.p0))
                    .collect();
                (!objects.is_empty()).then_some(BeliefHypothesis {
                    objects,
                    weight: h.weight,
                })
            })
            .collect();
        let total: f64 = hypotheses.iter().map(|h| h.weight).sum();
        if hypotheses.is_empty() {
            continue;
        }
        if hypotheses.len() < u.hypotheses.len() && total > 0.0 {
            for h in &mut hypotheses {
                h.weight /= total;
            }
        }
        regions.push(BeliefRegion { hypotheses });
    }
    Belief {
        confident,
        regions,
        params: params.clone(),
        table: result.table,
        step: 0,
    }
}

impl Belief {
    /// Confident objects plus the preferred hypothesis of every region.
    pub fn most_likely(&self) -> Vec<&ObjectHypothesis> {
        let mut out: Vec<&ObjectHypothesis> = self.confident.iter().collect();
        for r in &self.regions {
            if let Some(h) = r.hypotheses.get(r.best(&self.params)) {
                out.extend(h.objects.iter());
            }
        }
        out
    }

    /// Every object of the belief, confident ones first.
    pub fn all_objects(&self) -> impl Iterator<Item = &ObjectHypothesis> {
        self.confident.iter().chain(
            self.regions
                .iter()
                .flat_map(|r| r.hypotheses.iter().flat_map(|h| h.objects.iter())),
        )
    }

    pub fn snapshot(&self) -> BeliefSnapshot {
        let object = |o: &ObjectHypothesis| ObjectSummary {
            pixels: o.mask.len(),
            points: o.cloud.len(),
            wholeness: o.wholeness,
            last_score: o.score_history.last().map(|e| e.score),
        };
        BeliefSnapshot {
            step: self.step,
            confident: self.confident.iter().map(object).collect(),
            regions: self
                .regions
                .iter()
                .map(|r| {
                    let scores = r.scores(self.params.lambda);
                    RegionSummary {
                        selected: r.best(&self.params),
                        hypotheses: r
                            .hypotheses
                            .iter()
                            .zip(scores)
                            .map(|(h, score)| HypothesisSummary {
                                weight: h.weight,
                                score,
                                objects: h.objects.iter().map(object).collect(),
                            })
                            .collect(),
                    }
                })
                .collect(),
        }
    }
}

/// Cloud-free summary of a belief for step logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSnapshot {
    pub step: usize,
    pub confident: Vec<ObjectSummary>,
    pub regions: Vec<RegionSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub pixels: usize,
    pub points: usize,
    pub wholeness: f64,
    pub last_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub selected: usize,
    pub hypotheses: Vec<HypothesisSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSummary {
    pub weight: f64,
    pub score: f64,
    pub objects: Vec<ObjectSummary>,
}

impl BeliefSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serializes")
    }
}

/// 2-D masks of the given objects on the current frame. Where masks
/// overlap, the pixel goes to the object whose cloud is highest there
/// (ties to the earlier object); objects left without pixels are omitted.
pub fn project_to_masks(objects: &[&ObjectHypothesis], obs: &Observation) -> Vec<Mask> {
    let mut owner: Vec<Option<(usize, f64)>> = vec![None; obs.dims.len()];
    for (k, o) in objects.iter().enumerate() {
        let heights = cloud_heights(o, obs);
        for &i in o.mask.indices() {
            let i = i as usize;
            let h = if heights[i].is_finite() {
                heights[i]
            } else {
                obs.depth[i]
            };
            match owner[i] {
                Some((_, best)) if best >= h => {}
                _ => owner[i] = Some((k, h)),
            }
        }
    }
    let mut pixels: Vec<Vec<u32>> = vec![Vec::new(); objects.len()];
    for (i, o) in owner.iter().enumerate() {
        if let Some((k, _)) = o {
            pixels[*k].push(i as u32);
        }
    }
    pixels
        .into_iter()
        .filter(|p| !p.is_empty())
        .map(|p| Mask::from_indices(obs.dims, p, MaskSource::Tracked))
        .collect()
}

/// Highest cloud point per pixel, `-inf` where the cloud has none.
fn cloud_heights(o: &ObjectHypothesis, obs: &Observation) -> Vec<f64> {
    let mut top = vec![f64::NEG_INFINITY; obs.dims.len()];
    for p in o.cloud.points() {
        if let Some(i) = obs.world_to_index(p.x, p.y) {
            top[i] = top[i].max(p.z);
        }
    }
    top
}
