use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    in_contact, interpenetrate, parts_connected, Aabb, Part, Pose, RigidBody, Scene, SceneError,
    TableBounds,
};

/// Parameters of the random tabletop generator. Ranges are inclusive
/// `[min, max]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneGenConfig {
    /// Table width and depth in meters, centred on the origin.
    pub table_size: [f64; 2],
    pub body_count: [usize; 2],
    pub part_count: [usize; 2],
    /// Planar side length of a part, meters.
    pub part_size: [f64; 2],
    pub part_height: [f64; 2],
    /// Probability that an extra part is stacked on an existing part rather
    /// than attached beside it.
    pub stack_prob: f64,
    /// Probability that a new body is placed touching an existing one.
    pub clutter: f64,
    /// Minimum planar gap between bodies that are not in contact.
    pub min_gap: f64,
    /// Free border kept clear when placing bodies.
    pub edge_margin: f64,
    /// Placement attempts per body before giving up.
    pub max_attempts: usize,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        Self {
            table_size: [0.4, 0.4],
            body_count: [3, 6],
            part_count: [1, 2],
            part_size: [0.04, 0.08],
            part_height: [0.02, 0.06],
            stack_prob: 0.3,
            clutter: 0.7,
            min_gap: 0.012,
            edge_margin: 0.02,
            max_attempts: 200,
        }
    }
}

impl SceneGenConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |msg: &str| Err(SceneError::Config(msg.to_string()));
        let ordered = |r: [f64; 2]| r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite();
        if !(self.table_size[0] > 0.0 && self.table_size[1] > 0.0) {
            return bad("table_size must be positive");
        }
        if self.body_count[0] > self.body_count[1] {
            return bad("body_count range is reversed");
        }
        if self.part_count[0] == 0 || self.part_count[0] > self.part_count[1] {
            return bad("part_count must be a non-empty range starting at 1 or more");
        }
        if !ordered(self.part_size) || !ordered(self.part_height) {
            return bad("part_size and part_height must be positive ordered ranges");
        }
        if !(0.0..=1.0).contains(&self.stack_prob) || !(0.0..=1.0).contains(&self.clutter) {
            return bad("stack_prob and clutter must lie in [0, 1]");
        }
        if self.min_gap < 0.0 || self.edge_margin < 0.0 {
            return bad("min_gap and edge_margin must be non-negative");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be at least 1");
        }
        Ok(())
    }
}

/// Samples a random scene satisfying every [`Scene`] invariant.
pub fn generate_scene<R: Rng + ?Sized>(
    config: &SceneGenConfig,
    rng: &mut R,
) -> Result<Scene, SceneError> {
    config.validate()?;
    let table = TableBounds::centered(config.table_size[0], config.table_size[1]);
    let mut scene = Scene::empty(table);
    let count = rng.random_range(config.body_count[0]..=config.body_count[1]);
    for id in 1..=count as u32 {
        let touching = !scene.bodies.is_empty() && rng.random_bool(config.clutter);
        let mut placed = None;
        for _ in 0..config.max_attempts {
            let shape = sample_shape(config, rng);
            let yaw = rng.random_range(0..4u8) as f64 * FRAC_PI_2;
            let candidate = if touching {
                place_touching(&scene, id, shape, yaw, rng)
            } else {
                place_free(&scene, config, id, shape, yaw, rng)
            };
            if let Some(body) = candidate.filter(|b| admissible(&scene, config, b, touching)) {
                placed = Some(body);
                break;
            }
        }
        scene.bodies.push(placed.ok_or(SceneError::Saturated)?);
    }
    debug_assert!(scene.validate().is_ok());
    Ok(scene)
}

fn sample_range<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Body-frame parts, recentred so the planar bounding box is centred on the
/// body origin.
fn sample_shape<R: Rng + ?Sized>(config: &SceneGenConfig, rng: &mut R) -> Vec<Part> {
    let n = rng.random_range(config.part_count[0]..=config.part_count[1]);
    let mut parts = vec![Part::new(
        [0.0, 0.0],
        [
            sample_range(rng, config.part_size),
            sample_range(rng, config.part_size),
        ],
        0.0,
        sample_range(rng, config.part_height),
    )];
    let min_side = config.part_size[0] * 0.4;
    while parts.len() < n {
        let mut added = false;
        for _ in 0..16 {
            let parent = parts[rng.random_range(0..parts.len())];
            let part = if rng.random_bool(config.stack_prob) {
                let ex = (parent.extents[0] * rng.random_range(0.5..0.9))
                    .max(min_side.min(parent.extents[0]));
                let ey = (parent.extents[1] * rng.random_range(0.5..0.9))
                    .max(min_side.min(parent.extents[1]));
                let cx = parent.center[0] + rng.random_range(-0.5..=0.5) * (parent.extents[0] - ex);
                let cy = parent.center[1] + rng.random_range(-0.5..=0.5) * (parent.extents[1] - ey);
                Part::new(
                    [cx, cy],
                    [ex, ey],
                    parent.top(),
                    sample_range(rng, config.part_height),
                )
            } else {
                if parent.base > 0.0 {
                    continue;
                }
                let ext = [
                    sample_range(rng, config.part_size),
                    sample_range(rng, config.part_size),
                ];
                let axis = rng.random_range(0..2usize);
                let other = 1 - axis;
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let mut center = [0.0; 2];
                center[axis] =
                    parent.center[axis] + sign * (parent.extents[axis] + ext[axis]) / 2.0;
                // keep a shared face at least half as wide as the narrower part
                let slack = ((parent.extents[other] + ext[other]) / 2.0
                    - parent.extents[other].min(ext[other]) / 2.0)
                    .max(0.0);
                center[other] = parent.center[other] + rng.random_range(-1.0..=1.0) * slack;
                Part::new(center, ext, 0.0, sample_range(rng, config.part_height))
            };
            let boxes: Vec<Aabb> = parts
                .iter()
                .chain(std::iter::once(&part))
                .map(Part::local_box)
                .collect();
            let last = boxes.len() - 1;
            if boxes[..last].iter().any(|b| b.penetrates(&boxes[last])) || !parts_connected(&boxes)
            {
                continue;
            }
            parts.push(part);
            added = true;
            break;
        }
        if !added {
            break;
        }
    }
    let bounds = parts[1..]
        .iter()
        .fold(parts[0].local_box(), |acc, p| acc.hull(&p.local_box()));
    let mid = [
        (bounds.min[0] + bounds.max[0]) / 2.0,
        (bounds.min[1] + bounds.max[1]) / 2.0,
    ];
    for p in &mut parts {
        p.center = [p.center[0] - mid[0], p.center[1] - mid[1]];
    }
    parts
}

/// World half-extents of a recentred shape under a quarter-turn yaw.
fn half_extents(parts: &[Part], yaw: f64) -> [f64; 2] {
    let body = RigidBody {
        id: 1,
        pose: Pose::new(0.0, 0.0, yaw),
        parts: parts.to_vec(),
    };
    let b = body.world_bounds();
    [(b.max[0] - b.min[0]) / 2.0, (b.max[1] - b.min[1]) / 2.0]
}

fn place_free<R: Rng + ?Sized>(
    scene: &Scene,
    config: &SceneGenConfig,
    id: u32,
    parts: Vec<Part>,
    yaw: f64,
    rng: &mut R,
) -> Option<RigidBody> {
    let h = half_extents(&parts, yaw);
    let lo = [
        scene.table.min[0] + config.edge_margin + h[0],
        scene.table.min[1] + config.edge_margin + h[1],
    ];
    let hi = [
        scene.table.max[0] - config.edge_margin - h[0],
        scene.table.max[1] - config.edge_margin - h[1],
    ];
    if lo[0] > hi[0] || lo[1] > hi[1] {
        return None;
    }
    let x = sample_range(rng, [lo[0], hi[0]]);
    let y = sample_range(rng, [lo[1], hi[1]]);
    Some(RigidBody {
        id,
        pose: Pose::new(x, y, yaw),
        parts,
    })
}

/// Puts the new body's bounding box flush against a random side of an
/// existing body's bounding box.
fn place_touching<R: Rng + ?Sized>(
    scene: &Scene,
    id: u32,
    parts: Vec<Part>,
    yaw: f64,
    rng: &mut R,
) -> Option<RigidBody> {
    let anchor = &scene.bodies[rng.random_range(0..scene.bodies.len())];
    let bb = anchor.world_bounds();
    let h = half_extents(&parts, yaw);
    let axis = rng.random_range(0..2usize);
    let other = 1 - axis;
    let mut pos = [0.0; 2];
    pos[axis] = if rng.random_bool(0.5) {
        bb.max[axis] + h[axis]
    } else {
        bb.min[axis] - h[axis]
    };
    let span = [bb.min[other] - h[other], bb.max[other] + h[other]];
    let inset = 0.25 * (2.0 * h[other]).min(bb.max[other] - bb.min[other]);
    pos[other] = sample_range(rng, [span[0] + inset, span[1] - inset]);
    Some(RigidBody {
        id,
        pose: Pose::new(pos[0], pos[1], yaw),
        parts,
    })
}

fn planar_gap(a: &Aabb, b: &Aabb) -> f64 {
    let gx = (a.min[0] - b.max[0]).max(b.min[0] - a.max[0]);
    let gy = (a.min[1] - b.max[1]).max(b.min[1] - a.max[1]);
    gx.max(gy)
}

fn admissible(scene: &Scene, config: &SceneGenConfig, body: &RigidBody, touching: bool) -> bool {
    if body.validate().is_err()
        || !body
            .world_parts()
            .iter()
            .all(|p| scene.table.contains_box(p))
    {
        return false;
    }
    let bounds = body.world_bounds();
    let mut contacts = 0;
    for other in &scene.bodies {
        if interpenetrate(body, other) {
            return false;
        }
        if in_contact(body, other) {
            contacts += 1;
        } else if planar_gap(&bounds, &other.world_bounds()) < config.min_gap {
            return false;
        }
    }
    !touching || contacts > 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_body_on_empty_table() {
        let config = SceneGenConfig {
            body_count: [1, 1],
            ..Default::default()
        };
        let scene = generate_scene(&config, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(scene.bodies.len(), 1);
        scene.validate().unwrap();
    }

    #[test]
    fn same_seed_same_scene() {
        let config = SceneGenConfig::default();
        let a = generate_scene(&config, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = generate_scene(&config, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn full_clutter_yields_contact() {
        let config = SceneGenConfig {
            body_count: [3, 3],
            clutter: 1.0,
            ..Default::default()
        };
        for seed in 0..20 {
            let scene = generate_scene(&config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            scene.validate().unwrap();
            assert!(!scene.contacts().is_empty(), "seed {seed}");
        }
    }

    #[test]
    fn overfull_table_saturates() {
        let config = SceneGenConfig {
            table_size: [0.1, 0.1],
            body_count: [20, 20],
            clutter: 0.0,
            max_attempts: 20,
            ..Default::default()
        };
        let err = generate_scene(&config, &mut ChaCha8Rng::seed_from_u64(1)).unwrap_err();
        assert_eq!(err, SceneError::Saturated);
        assert_eq!(err.to_string(), "scene generation saturated");
    }

    #[test]
    fn many_seeds_valid() {
        let config = SceneGenConfig {
            part_count: [1, 3],
            ..Default::default()
        };
        for seed in 0..100 {
            let scene = generate_scene(&config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            scene.validate().unwrap();
        }
    }
}
