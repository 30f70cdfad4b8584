use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{OracleConfig, Segmenter, SegmenterError};
use crate::mask::{GridDims, Mask, MaskSource, Pixel};
use crate::scene::{FrameHandle, Observation};

/// Ground truth the oracle keeps per frame.
#[derive(Debug)]
struct FrameTruth {
    dims: GridDims,
    labels: Vec<u32>,
    parts: Vec<u16>,
    bodies: BTreeMap<u32, Mask>,
    /// Bodies whose visible footprints share a pixel edge.
    neighbors: BTreeMap<u32, Vec<u32>>,
    background: Mask,
}

impl FrameTruth {
    fn new(obs: &Observation) -> Self {
        let dims = obs.dims;
        let mut pixels: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        let mut adjacent: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
        for (i, &l) in obs.labels.iter().enumerate() {
            if l == 0 {
                continue;
            }
            pixels.entry(l).or_default().push(i as u32);
            for j in dims.neighbors4(i) {
                let o = obs.labels[j];
                if o != 0 && o != l {
                    adjacent.entry(l).or_default().insert(o);
                }
            }
        }
        let bodies = pixels
            .into_iter()
            .map(|(id, px)| (id, Mask::from_indices(dims, px, MaskSource::BottomUp)))
            .collect();
        let neighbors = adjacent
            .into_iter()
            .map(|(id, set)| (id, set.into_iter().collect()))
            .collect();
        let background = Mask::from_indices(
            dims,
            obs.labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == 0)
                .map(|(i, _)| i as u32),
            MaskSource::BottomUp,
        );
        Self {
            dims,
            labels: obs.labels.clone(),
            parts: obs.parts.clone(),
            bodies,
            neighbors,
            background,
        }
    }

    fn part_mask(&self, index: usize) -> Mask {
        let (id, part) = (self.labels[index], self.parts[index]);
        Mask::from_indices(
            self.dims,
            (0..self.labels.len())
                .filter(|&i| self.labels[i] == id && self.parts[i] == part)
                .map(|i| i as u32),
            MaskSource::BottomUp,
        )
    }

    fn merged_with_neighbor<R: Rng>(&self, id: u32, rng: &mut R) -> Option<Mask> {
        let neighbors = self.neighbors.get(&id).filter(|n| !n.is_empty())?;
        let other = neighbors[rng.random_range(0..neighbors.len())];
        Some(self.bodies[&id].union(&self.bodies[&other]))
    }
}

/// Counts of the random events drawn by point prompts, for calibration
/// checks against the configured probabilities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OracleStats {
    /// Point prompts on a body (dense seeding included).
    pub prompts: u64,
    pub background_prompts: u64,
    pub part_draws: u64,
    /// Merge outcome drawn, whether or not a neighbour existed.
    pub merge_draws: u64,
    /// Merge outcome drawn and a neighbour was merged in.
    pub merges: u64,
}

#[derive(Debug, Default)]
struct Counters {
    prompts: AtomicU64,
    background_prompts: AtomicU64,
    part_draws: AtomicU64,
    merge_draws: AtomicU64,
    merges: AtomicU64,
}

/// Segmenter that answers from simulator ground truth, corrupted by the
/// failure modes in [`OracleConfig`].
#[derive(Debug)]
pub struct OracleSegmenter {
    config: OracleConfig,
    frames: RwLock<HashMap<FrameHandle, Arc<FrameTruth>>>,
    counters: Counters,
}

impl OracleSegmenter {
    pub fn new(config: OracleConfig) -> Self {
        Self {
            config,
            frames: RwLock::new(HashMap::new()),
            counters: Counters::default(),
        }
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn stats(&self) -> OracleStats {
        let c = &self.counters;
        OracleStats {
            prompts: c.prompts.load(Ordering::Relaxed),
            background_prompts: c.background_prompts.load(Ordering::Relaxed),
            part_draws: c.part_draws.load(Ordering::Relaxed),
            merge_draws: c.merge_draws.load(Ordering::Relaxed),
            merges: c.merges.load(Ordering::Relaxed),
        }
    }

    pub fn reset_stats(&self) {
        let c = &self.counters;
        for a in [
            &c.prompts,
            &c.background_prompts,
            &c.part_draws,
            &c.merge_draws,
            &c.merges,
        ] {
            a.store(0, Ordering::Relaxed);
        }
    }

    fn frame(&self, handle: FrameHandle) -> Result<Arc<FrameTruth>, SegmenterError> {
        self.frames
            .read()
            .expect("frame registry poisoned")
            .get(&handle)
            .cloned()
            .ok_or_else(|| SegmenterError::StaleFrame(handle.to_string()))
    }

    /// Random dilation or erosion of radius `0..=boundary_noise`.
    fn jitter<R: Rng>(&self, mask: Mask, rng: &mut R) -> Mask {
        let r = self.config.boundary_noise;
        if r == 0 {
            return mask;
        }
        let k = rng.random_range(0..=r);
        let grow = rng.random_bool(0.5);
        match (k, grow) {
            (0, _) => mask,
            (k, true) => mask.dilate(k),
            (k, false) => mask.erode(k),
        }
    }

    fn prompt(&self, truth: &FrameTruth, pixel: Pixel, rng: &mut ChaCha8Rng) -> Mask {
        let index = truth.dims.index(pixel);
        let id = truth.labels[index];
        if id == 0 {
            self.counters
                .background_prompts
                .fetch_add(1, Ordering::Relaxed);
            return truth.background.clone();
        }
        self.counters.prompts.fetch_add(1, Ordering::Relaxed);
        let u: f64 = rng.random();
        let base = if u < self.config.p_part {
            self.counters.part_draws.fetch_add(1, Ordering::Relaxed);
            truth.part_mask(index)
        } else if u < self.config.p_part + self.config.p_merge {
            self.counters.merge_draws.fetch_add(1, Ordering::Relaxed);
            match truth.merged_with_neighbor(id, rng) {
                Some(m) => {
                    self.counters.merges.fetch_add(1, Ordering::Relaxed);
                    m
                }
                None => truth.bodies[&id].clone(),
            }
        } else {
            truth.bodies[&id].clone()
        };
        let noisy = self.jitter(base, rng);
        if noisy.contains_index(index) {
            noisy
        } else {
            noisy.union(&Mask::from_indices(
                truth.dims,
                [index as u32],
                MaskSource::BottomUp,
            ))
        }
    }
}

impl Segmenter for OracleSegmenter {
    fn load_frame(&self, obs: &Observation) -> Result<(), SegmenterError> {
        if self
            .frames
            .read()
            .expect("frame registry poisoned")
            .contains_key(&obs.handle)
        {
            return Ok(());
        }
        let truth = Arc::new(FrameTruth::new(obs));
        self.frames
            .write()
            .expect("frame registry poisoned")
            .entry(obs.handle)
            .or_insert(truth);
        Ok(())
    }

    fn release_frame(&self, frame: FrameHandle) {
        self.frames
            .write()
            .expect("frame registry poisoned")
            .remove(&frame);
    }

    fn seed_all(&self, frame: FrameHandle, seed: u64) -> Result<Vec<Mask>, SegmenterError> {
        let truth = self.frame(frame)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(truth.bodies.len() * self.config.seeds_per_body);
        for body in truth.bodies.values() {
            for _ in 0..self.config.seeds_per_body {
                let pixel = body
                    .sample_pixel(&mut rng)
                    .expect("visible bodies are non-empty");
                let mut sub = ChaCha8Rng::seed_from_u64(rng.random());
                out.push(self.prompt(&truth, pixel, &mut sub));
            }
        }
        Ok(out)
    }

    fn prompt_point(
        &self,
        frame: FrameHandle,
        pixel: Pixel,
        seed: u64,
    ) -> Result<Mask, SegmenterError> {
        let truth = self.frame(frame)?;
        if !truth.dims.contains(pixel) {
            return Err(SegmenterError::PixelOutOfRange {
                row: pixel.row,
                col: pixel.col,
            });
        }
        Ok(self.prompt(&truth, pixel, &mut ChaCha8Rng::seed_from_u64(seed)))
    }

    fn high_precision(&self, frame: FrameHandle, seed: u64) -> Result<Vec<Mask>, SegmenterError> {
        let truth = self.frame(frame)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for (&id, body) in &truth.bodies {
            if !rng.random_bool(self.config.td_recall) {
                continue;
            }
            let mask = if rng.random_bool(self.config.td_merge) {
                truth
                    .merged_with_neighbor(id, &mut rng)
                    .unwrap_or_else(|| body.clone())
            } else {
                body.clone()
            };
            let mask = self.jitter(mask, &mut rng).with_source(MaskSource::TopDown);
            if !mask.is_empty() {
                out.push(mask);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::tests::cube;
    use crate::scene::{render, Part, Pose, RigidBody, Scene, TableBounds};

    fn two_part_body(id: u32, x: f64) -> RigidBody {
        RigidBody {
            id,
            pose: Pose::new(x, 0.0, 0.0),
            parts: vec![
                Part::new([-0.02, 0.0], [0.04, 0.04], 0.0, 0.03),
                Part::new([0.02, 0.0], [0.04, 0.04], 0.0, 0.05),
            ],
        }
    }

    fn setup(config: OracleConfig, bodies: Vec<RigidBody>) -> (OracleSegmenter, Observation) {
        let scene = Scene {
            table: TableBounds::centered(0.4, 0.4),
            bodies,
        };
        scene.validate().unwrap();
        let obs = render(&scene, 0.01);
        let oracle = OracleSegmenter::new(config);
        oracle.load_frame(&obs).unwrap();
        (oracle, obs)
    }

    fn pixel_of(obs: &Observation, id: u32) -> Pixel {
        obs.body_mask(id).pixels().next().unwrap()
    }

    #[test]
    fn noise_free_prompt_is_exact_footprint() {
        let (o, obs) = setup(
            OracleConfig::noise_free(),
            vec![cube(1, -0.1, 0.0, 0.05), cube(3, 0.1, 0.0, 0.05)],
        );
        let m = o.prompt_point(obs.handle, pixel_of(&obs, 3), 11).unwrap();
        assert!(m.same_pixels(&obs.body_mask(3)));
        assert_eq!(m.source(), MaskSource::BottomUp);
    }

    #[test]
    fn merge_without_neighbor_falls_back() {
        let config = OracleConfig {
            p_merge: 1.0,
            ..OracleConfig::noise_free()
        };
        let (o, obs) = setup(config, vec![cube(1, 0.0, 0.0, 0.05)]);
        for seed in 0..10 {
            let m = o.prompt_point(obs.handle, pixel_of(&obs, 1), seed).unwrap();
            assert!(m.same_pixels(&obs.body_mask(1)));
        }
        assert_eq!(o.stats().merge_draws, 10);
        assert_eq!(o.stats().merges, 0);
    }

    #[test]
    fn merge_with_touching_neighbor() {
        let config = OracleConfig {
            p_merge: 1.0,
            ..OracleConfig::noise_free()
        };
        let (o, obs) = setup(
            config,
            vec![cube(1, 0.0, 0.0, 0.05), cube(2, 0.05, 0.0, 0.05)],
        );
        let m = o.prompt_point(obs.handle, pixel_of(&obs, 1), 0).unwrap();
        assert!(m.same_pixels(&obs.body_mask(1).union(&obs.body_mask(2))));
    }

    #[test]
    fn part_prompt_returns_part_footprint() {
        let config = OracleConfig {
            p_part: 1.0,
            ..OracleConfig::noise_free()
        };
        let (o, obs) = setup(config, vec![two_part_body(1, 0.0)]);
        let body = obs.body_mask(1);
        let left: Vec<Pixel> = body
            .pixels()
            .filter(|p| obs.pixel_center(*p)[0] < 0.0)
            .collect();
        let expected = Mask::from_pixels(obs.dims, left.clone(), MaskSource::BottomUp);
        let m = o.prompt_point(obs.handle, left[0], 5).unwrap();
        assert!(m.same_pixels(&expected));
        assert_eq!(m.len(), 16);
    }

    #[test]
    fn noise_keeps_prompt_pixel() {
        let config = OracleConfig {
            boundary_noise: 3,
            ..OracleConfig::noise_free()
        };
        let (o, obs) = setup(config, vec![cube(1, 0.0, 0.0, 0.03)]);
        let corner = obs.body_mask(1).pixels().next().unwrap();
        for seed in 0..50 {
            assert!(o
                .prompt_point(obs.handle, corner, seed)
                .unwrap()
                .contains(corner));
        }
    }

    #[test]
    fn same_seed_same_mask() {
        let (o, obs) = setup(
            OracleConfig::default(),
            vec![cube(1, 0.0, 0.0, 0.05), cube(2, 0.05, 0.0, 0.05)],
        );
        let p = pixel_of(&obs, 2);
        assert_eq!(
            o.prompt_point(obs.handle, p, 42).unwrap(),
            o.prompt_point(obs.handle, p, 42).unwrap()
        );
        assert_eq!(
            o.seed_all(obs.handle, 7).unwrap(),
            o.seed_all(obs.handle, 7).unwrap()
        );
        assert_eq!(
            o.high_precision(obs.handle, 9).unwrap(),
            o.high_precision(obs.handle, 9).unwrap()
        );
    }

    #[test]
    fn background_prompt_returns_background() {
        let (o, obs) = setup(OracleConfig::default(), vec![cube(1, 0.0, 0.0, 0.05)]);
        let m = o.prompt_point(obs.handle, Pixel::new(0, 0), 1).unwrap();
        assert_eq!(m.len(), obs.dims.len() - 25);
    }

    #[test]
    fn seed_all_counts_and_coverage() {
        let config = OracleConfig {
            seeds_per_body: 3,
            ..OracleConfig::noise_free()
        };
        let (o, obs) = setup(
            config,
            vec![cube(1, -0.1, 0.0, 0.05), cube(2, 0.1, 0.0, 0.05)],
        );
        let seeds = o.seed_all(obs.handle, 3).unwrap();
        assert_eq!(seeds.len(), 6);
        let covered = crate::mask::union_all(obs.dims, &seeds, MaskSource::BottomUp);
        assert!(covered.same_pixels(&obs.body_mask(1).union(&obs.body_mask(2))));
    }

    #[test]
    fn high_precision_extremes() {
        let bodies = vec![cube(1, -0.1, 0.0, 0.05), cube(2, 0.1, 0.0, 0.05)];
        let (o, obs) = setup(OracleConfig::noise_free(), bodies.clone());
        let hp = o.high_precision(obs.handle, 0).unwrap();
        assert_eq!(hp.len(), 2);
        assert!(hp[0].same_pixels(&obs.body_mask(1)) && hp[1].same_pixels(&obs.body_mask(2)));
        assert!(hp.iter().all(|m| m.source() == MaskSource::TopDown));
        let none = OracleConfig {
            td_recall: 0.0,
            ..OracleConfig::noise_free()
        };
        let (o, obs) = setup(none, bodies);
        assert!(o.high_precision(obs.handle, 0).unwrap().is_empty());
    }

    #[test]
    fn unknown_frame_is_stale() {
        let o = OracleSegmenter::new(OracleConfig::default());
        let err = o
            .prompt_point(FrameHandle(1), Pixel::new(0, 0), 0)
            .unwrap_err();
        assert!(matches!(err, SegmenterError::StaleFrame(_)));
        assert!(err.to_string().starts_with("stale frame"));
        assert!(!err.is_retriable());
    }
}
