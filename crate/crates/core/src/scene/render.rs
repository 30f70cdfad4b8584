use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::Scene;
use crate::mask::{GridDims, Mask, MaskSource, Pixel};

/// Opaque token naming a rendered frame; segmenters and trackers key their
/// per-frame state on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameHandle(pub u64);

impl fmt::Display for FrameHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "frame-{:016x}", self.0)
    }
}

/// Top-down orthographic depth frame.
///
/// Row `r`, column `c` covers the cell whose centre is
/// `origin + ((c + 0.5) * resolution, (r + 0.5) * resolution)`.
/// `labels` and `parts` are ground truth for oracles and evaluators only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub dims: GridDims,
    pub resolution: f64,
    pub origin: [f64; 2],
    pub depth: Vec<f64>,
    pub labels: Vec<u32>,
    /// Index of the topmost part of the labelled body, meaningless where
    /// `labels` is zero.
    pub parts: Vec<u16>,
    pub cloud: Vec<[f64; 3]>,
    pub handle: FrameHandle,
}

impl Observation {
    pub fn pixel_center(&self, p: Pixel) -> [f64; 2] {
        [
            self.origin[0] + (p.col as f64 + 0.5) * self.resolution,
            self.origin[1] + (p.row as f64 + 0.5) * self.resolution,
        ]
    }

    pub fn world_to_pixel(&self, x: f64, y: f64) -> Option<Pixel> {
        let c = ((x - self.origin[0]) / self.resolution).floor();
        let r = ((y - self.origin[1]) / self.resolution).floor();
        if c < 0.0 || r < 0.0 {
            return None;
        }
        let p = Pixel::new(r as usize, c as usize);
        self.dims.contains(p).then_some(p)
    }

    pub fn world_to_index(&self, x: f64, y: f64) -> Option<usize> {
        self.world_to_pixel(x, y).map(|p| self.dims.index(p))
    }

    /// Foreground pixels of one body.
    pub fn body_mask(&self, id: u32) -> Mask {
        Mask::from_indices(
            self.dims,
            self.labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == id)
                .map(|(i, _)| i as u32),
            MaskSource::TopDown,
        )
    }

    /// Visible body ids in ascending order.
    pub fn visible_bodies(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.labels.iter().copied().filter(|&l| l != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Ground-truth instance masks, one per visible body.
    pub fn ground_truth_masks(&self) -> Vec<Mask> {
        let mut per_body: std::collections::BTreeMap<u32, Vec<u32>> = Default::default();
        for (i, &l) in self.labels.iter().enumerate() {
            if l != 0 {
                per_body.entry(l).or_default().push(i as u32);
            }
        }
        per_body
            .into_values()
            .map(|px| Mask::from_indices(self.dims, px, MaskSource::TopDown))
            .collect()
    }
}

/// Rasterizes the scene top-down: each pixel takes the tallest part whose
/// footprint covers the pixel centre (lowest body id on exact ties).
pub fn render(scene: &Scene, resolution: f64) -> Observation {
    assert!(resolution > 0.0, "resolution must be positive");
    let origin = scene.table.min;
    let width = scene.table.max[0] - scene.table.min[0];
    let height = scene.table.max[1] - scene.table.min[1];
    let cols = (width / resolution - 1e-9).ceil().max(0.0) as usize;
    let rows = (height / resolution - 1e-9).ceil().max(0.0) as usize;
    let dims = GridDims::new(rows, cols);

    let mut depth = vec![0.0; dims.len()];
    let mut labels = vec![0u32; dims.len()];
    let mut parts = vec![0u16; dims.len()];

    let mut order: Vec<usize> = (0..scene.bodies.len()).collect();
    order.sort_by_key(|&i| scene.bodies[i].id);
    let span = |lo: f64, hi: f64, o: f64, n: usize| {
        let a = ((lo - o) / resolution - 0.5).ceil().max(0.0) as usize;
        let b = ((hi - o) / resolution - 0.5).ceil().max(0.0) as usize;
        (a.min(n), b.min(n))
    };
    for bi in order {
        let body = &scene.bodies[bi];
        for (pi, b) in body.world_parts().iter().enumerate() {
            let (c0, c1) = span(b.min[0], b.max[0], origin[0], cols);
            let (r0, r1) = span(b.min[1], b.max[1], origin[1], rows);
            for r in r0..r1 {
                for c in c0..c1 {
                    let i = r * cols + c;
                    if b.max[2] > depth[i] {
                        depth[i] = b.max[2];
                        labels[i] = body.id;
                        parts[i] = pi as u16;
                    }
                }
            }
        }
    }

    let cloud = (0..dims.len())
        .map(|i| {
            let p = dims.pixel(i);
            [
                origin[0] + (p.col as f64 + 0.5) * resolution,
                origin[1] + (p.row as f64 + 0.5) * resolution,
                depth[i],
            ]
        })
        .collect();

    let mut hasher = DefaultHasher::new();
    dims.hash(&mut hasher);
    resolution.to_bits().hash(&mut hasher);
    origin.map(f64::to_bits).hash(&mut hasher);
    labels.hash(&mut hasher);
    parts.hash(&mut hasher);
    for d in &depth {
        d.to_bits().hash(&mut hasher);
    }
    // Include poses so that two scenes rendering identically but with
    // different ground truth still get distinct handles.
    for body in &scene.bodies {
        body.id.hash(&mut hasher);
        body.pose.x.to_bits().hash(&mut hasher);
        body.pose.y.to_bits().hash(&mut hasher);
    }

    Observation {
        dims,
        resolution,
        origin,
        depth,
        labels,
        parts,
        cloud,
        handle: FrameHandle(hasher.finish()),
    }
}
