//! Uncertainty-aware segmentation: split the image into confidently
//! segmented objects and uncertain regions, and sample a weighted set of
//! alternative partitions for every uncertain region.

mod hypotheses;
mod partition;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hypotheses::{duplicate_test, generate_region_hypotheses, HypothesisContext};
pub use partition::{partition_regions, Partition};

use crate::geometry::{GeometryError, Plane};
use crate::mask::{Mask, MaskSource};
use crate::scene::Observation;
use crate::segmenter::{Segmenter, SegmenterError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UncosError {
    #[error(transparent)]
    Segmenter(#[from] SegmenterError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid parameters: {0}")]
    Params(String),
}

/// Thresholds and budgets of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncosParams {
    /// A top-down mask seeds a region when this fraction of it lies inside.
    pub gamma: f64,
    /// Intersection-over-min above which two seed masks are linked.
    pub sigma_m: f64,
    /// Verification prompts must reach this IoU with a confident candidate.
    pub sigma_u: f64,
    /// Verification prompts per confident candidate.
    pub verify_prompts: usize,
    /// Sampling episodes per uncertain region.
    pub n_hypotheses: usize,
    /// Episodes stop once the unexplained residual is at most this fraction
    /// of the region.
    pub alpha_frac: f64,
    /// A prompted mask is accepted when this fraction of it lies in the
    /// residual.
    pub beta: f64,
    /// Mean matched IoU above which two hypotheses are duplicates.
    pub dup_iou: f64,
    /// Masks rising less than this above the table are rejected (meters).
    pub thickness: f64,
    /// Seed masks overlapping an earlier seed by more than this IoU are
    /// dropped before building the overlap graph.
    pub nms_iou: f64,
    /// Prompts per episode before giving up.
    pub attempt_budget: usize,
    /// Residual slivers up to this width (pixels) are absorbed into
    /// neighbouring masks instead of being prompted.
    pub sliver_width: usize,
    pub plane_iters: usize,
    /// RANSAC plane inlier distance; defaults to `0.5 * resolution * sqrt(2)`.
    pub plane_inlier_dist: Option<f64>,
}

impl Default for UncosParams {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            sigma_m: 0.8,
            sigma_u: 0.6,
            verify_prompts: 3,
            n_hypotheses: 20,
            alpha_frac: 0.05,
            beta: 0.7,
            dup_iou: 0.9,
            thickness: 0.01,
            nms_iou: 0.9,
            attempt_budget: 30,
            sliver_width: 1,
            plane_iters: 256,
            plane_inlier_dist: None,
        }
    }
}

impl UncosParams {
    pub fn validate(&self) -> Result<(), UncosError> {
        let open = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(UncosError::Params(format!(
                    "{name} = {v} must lie in (0, 1)"
                )))
            }
        };
        open("gamma", self.gamma)?;
        open("sigma_m", self.sigma_m)?;
        open("sigma_u", self.sigma_u)?;
        open("alpha_frac", self.alpha_frac)?;
        open("beta", self.beta)?;
        open("dup_iou", self.dup_iou)?;
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(UncosError::Params("nms_iou must lie in (0, 1]".into()));
        }
        if self.verify_prompts == 0
            || self.n_hypotheses == 0
            || self.attempt_budget == 0
            || self.plane_iters == 0
        {
            return Err(UncosError::Params(
                "verify_prompts, n_hypotheses, attempt_budget and plane_iters must be positive"
                    .into(),
            ));
        }
        if self.thickness < 0.0 || self.plane_inlier_dist.is_some_and(|d| d <= 0.0) {
            return Err(UncosError::Params(
                "thickness and plane_inlier_dist must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn inlier_dist(&self, resolution: f64) -> f64 {
        self.plane_inlier_dist
            .unwrap_or(0.5 * resolution * std::f64::consts::SQRT_2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKind {
    Confident,
    Uncertain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub footprint: Mask,
    pub kind: RegionKind,
}

/// One complete partition of an uncertain region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionHypothesis {
    pub masks: Vec<Mask>,
    /// Share of sampling episodes that produced this partition.
    pub weight: f64,
    /// The representative episode ran out of prompts before covering the
    /// region.
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertainRegion {
    pub region: Region,
    /// Sorted by decreasing weight.
    pub hypotheses: Vec<RegionHypothesis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncosResult {
    pub confident: Vec<Mask>,
    pub uncertain: Vec<UncertainRegion>,
    /// Fitted support plane.
    pub table: Plane<f64>,
}

impl UncosResult {
    /// Confident masks plus the highest-weight hypothesis of each region
    /// (ties: fewer masks, then lexicographic mask order).
    pub fn most_likely(&self) -> Vec<Mask> {
        let mut out = self.confident.clone();
        for u in &self.uncertain {
            if let Some(best) = u.hypotheses.iter().min_by(|a, b| hypothesis_order(a, b)) {
                out.extend(best.masks.iter().cloned());
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

/// Preference order among a region's hypotheses before any interaction:
/// higher weight, then fewer masks, then lexicographic masks.
pub(crate) fn hypothesis_order(a: &RegionHypothesis, b: &RegionHypothesis) -> std::cmp::Ordering {
    b.weight
        .total_cmp(&a.weight)
        .then(a.masks.len().cmp(&b.masks.len()))
        .then_with(|| mask_list_cmp(&a.masks, &b.masks))
}

pub(crate) fn mask_list_cmp(a: &[Mask], b: &[Mask]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.lex_cmp(y);
        if o.is_ne() {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

/// Full pipeline on one frame: partition, one top-down query, seed
/// selection, then hypothesis sampling for every uncertain region.
pub fn uncos<S: Segmenter + ?Sized>(
    obs: &Observation,
    segmenter: &S,
    params: &UncosParams,
    seed: u64,
) -> Result<UncosResult, UncosError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let partition = partition_regions(obs, segmenter, params, &mut rng)?;
    if partition.uncertain.is_empty() {
        return Ok(UncosResult {
            confident: partition.confident,
            uncertain: Vec::new(),
            table: partition.table,
        });
    }
    let td_seed: u64 = rng.random();
    let top_down: Vec<Mask> = segmenter
        .high_precision(obs.handle, td_seed)?
        .into_iter()
        .map(|m| m.intersect(&partition.foreground))
        .filter(|m| !m.is_empty())
        .collect();

    let jobs: Vec<(usize, Vec<Mask>, u64)> = partition
        .uncertain
        .iter()
        .enumerate()
        .map(|(k, (region, demoted_seed))| {
            let seeds = match demoted_seed {
                Some(candidate) => vec![candidate.clone()],
                None => select_seeds(&region.footprint, &top_down, params.gamma),
            };
            (k, seeds, rng.random())
        })
        .collect();

    let ctx = HypothesisContext {
        obs,
        segmenter,
        table: &partition.table,
        foreground: &partition.foreground,
        params,
    };
    let hypotheses: Vec<Result<Vec<RegionHypothesis>, UncosError>> = jobs
        .par_iter()
        .map(|(k, seeds, s)| {
            let mut r = ChaCha8Rng::seed_from_u64(*s);
            generate_region_hypotheses(&ctx, &partition.uncertain[*k].0.footprint, seeds, &mut r)
        })
        .collect();

    let mut uncertain = Vec::new();
    for ((region, _), hyps) in partition.uncertain.into_iter().zip(hypotheses) {
        let hyps = hyps?;
        if !hyps.is_empty() {
            uncertain.push(UncertainRegion {
                region,
                hypotheses: hyps,
            });
        }
    }
    Ok(UncosResult {
        confident: partition.confident,
        uncertain,
        table: partition.table,
    })
}

/// Top-down masks lying mostly inside the region, clipped to it.
fn select_seeds(footprint: &Mask, top_down: &[Mask], gamma: f64) -> Vec<Mask> {
    top_down
        .iter()
        .filter(|m| m.intersection_count(footprint) as f64 / m.len() as f64 > gamma)
        .map(|m| m.intersect(footprint).with_source(MaskSource::TopDown))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::GridDims;

    fn hyp(dims: GridDims, masks: &[&[u32]], weight: f64) -> RegionHypothesis {
        RegionHypothesis {
            masks: masks
                .iter()
                .map(|m| Mask::from_indices(dims, m.iter().copied(), MaskSource::BottomUp))
                .collect(),
            weight,
            partial: false,
        }
    }

    #[test]
    fn preference_order() {
        let d = GridDims::new(1, 4);
        let split = hyp(d, &[&[0, 1], &[2, 3]], 0.5);
        let merged = hyp(d, &[&[0, 1, 2, 3]], 0.5);
        assert!(hypothesis_order(&merged, &split).is_lt());
        let heavier = hyp(d, &[&[0, 1], &[2, 3]], 0.6);
        assert!(hypothesis_order(&heavier, &merged).is_lt());
    }

    #[test]
    fn seed_selection_by_containment() {
        let d = GridDims::new(1, 10);
        let region = Mask::from_indices(d, 0..5, MaskSource::BottomUp);
        let td = vec![
            Mask::from_indices(d, 0..3, MaskSource::TopDown),
            Mask::from_indices(d, 3..9, MaskSource::TopDown),
            Mask::from_indices(d, 4..7, MaskSource::TopDown),
        ];
        let seeds = select_seeds(&region, &td, 0.5);
        assert_eq!(seeds.len(), 1);
        assert_eq!(seeds[0].indices(), &[0, 1, 2]);
    }

    #[test]
    fn params_validation() {
        assert!(UncosParams::default().validate().is_ok());
        let bad = UncosParams {
            beta: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!((UncosParams::default().inlier_dist(0.004) - 0.002828427).abs() < 1e-8);
    }
}
