use serde::{Deserialize, Serialize};

use super::{Aabb, Scene, SceneError, CONTACT_EPS};

/// Distance behind the target point at which the pusher starts, meters.
pub const APPROACH_MARGIN: f64 = 0.01;

/// A planar push: the pusher travels along `direction` through `target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushAction {
    pub target: [f64; 2],
    pub direction: [f64; 2],
    pub distance: f64,
}

impl PushAction {
    /// Builds an action, normalizing the direction.
    pub fn new(target: [f64; 2], direction: [f64; 2], distance: f64) -> Result<Self, SceneError> {
        let norm = direction[0].hypot(direction[1]);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(SceneError::InvalidPush("zero direction".into()));
        }
        let action = Self {
            target,
            direction: [direction[0] / norm, direction[1] / norm],
            distance,
        };
        action.validate()?;
        Ok(action)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.distance > 0.0 && self.distance.is_finite()) {
            return Err(SceneError::InvalidPush(format!(
                "distance {} must be positive",
                self.distance
            )));
        }
        if !(self.target[0].is_finite() && self.target[1].is_finite()) {
            return Err(SceneError::InvalidPush("non-finite target".into()));
        }
        let norm = self.direction[0].hypot(self.direction[1]);
        if (norm - 1.0).abs() > 1e-9 {
            return Err(SceneError::InvalidPush(format!(
                "direction norm {norm} is not 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PushOutcome {
    pub scene: Scene,
    /// Body first hit by the pusher; `None` means the push touched nothing.
    pub contacted: Option<u32>,
    /// Travel along the push direction of every body that moved, in the
    /// order bodies joined the moving chain.
    pub moved: Vec<(u32, f64)>,
    /// Motion was cut short by the table edge.
    pub clipped: bool,
}

impl PushOutcome {
    pub fn no_contact(&self) -> bool {
        self.contacted.is_none()
    }

    pub fn displacement(&self, id: u32) -> f64 {
        self.moved
            .iter()
            .find(|(b, _)| *b == id)
            .map_or(0.0, |(_, s)| *s)
    }
}

/// Entry parameter of a 2-D ray into a planar box, if within `[0, len]`.
fn ray_entry(origin: [f64; 2], dir: [f64; 2], len: f64, b: &Aabb) -> Option<f64> {
    let mut lo = 0.0f64;
    let mut hi = len;
    for k in 0..2 {
        if dir[k].abs() < 1e-15 {
            if origin[k] < b.min[k] || origin[k] > b.max[k] {
                return None;
            }
        } else {
            let t0 = (b.min[k] - origin[k]) / dir[k];
            let t1 = (b.max[k] - origin[k]) / dir[k];
            lo = lo.max(t0.min(t1));
            hi = hi.min(t0.max(t1));
        }
    }
    (lo <= hi).then_some(lo)
}

/// Travel along `dir` after which moving box `m` would start to penetrate
/// static box `s`, if it ever does.
fn time_of_impact(m: &Aabb, s: &Aabb, dir: [f64; 2]) -> Option<f64> {
    if m.max[2] <= s.min[2] + CONTACT_EPS || s.max[2] <= m.min[2] + CONTACT_EPS {
        return None;
    }
    let mut enter = f64::NEG_INFINITY;
    let mut exit = f64::INFINITY;
    for (k, &d) in dir.iter().enumerate() {
        if d.abs() < 1e-15 {
            if m.max[k] <= s.min[k] + CONTACT_EPS || s.max[k] <= m.min[k] + CONTACT_EPS {
                return None;
            }
        } else {
            let (t0, t1) = if d > 0.0 {
                ((s.min[k] - m.max[k]) / d, (s.max[k] - m.min[k]) / d)
            } else {
                ((s.max[k] - m.min[k]) / d, (s.min[k] - m.max[k]) / d)
            };
            enter = enter.max(t0);
            exit = exit.min(t1);
        }
    }
    (enter < exit - CONTACT_EPS && exit > CONTACT_EPS).then_some(enter.max(0.0))
}

/// Quasi-static push: the first body on the pusher's line translates by
/// `direction * distance`, carrying every body it runs into, until the table
/// edge stops the chain.
pub fn apply_push(scene: &Scene, action: &PushAction) -> Result<PushOutcome, SceneError> {
    action.validate()?;
    let dir = action.direction;
    let origin = [
        action.target[0] - dir[0] * APPROACH_MARGIN,
        action.target[1] - dir[1] * APPROACH_MARGIN,
    ];
    let reach = APPROACH_MARGIN + action.distance;

    let parts: Vec<Vec<Aabb>> = scene.bodies.iter().map(|b| b.world_parts()).collect();
    let mut hit: Option<(f64, u32, usize)> = None;
    for (i, body) in scene.bodies.iter().enumerate() {
        for b in &parts[i] {
            if let Some(t) = ray_entry(origin, dir, reach, b) {
                let better = match hit {
                    None => true,
                    Some((bt, bid, _)) => {
                        t < bt - CONTACT_EPS || (t <= bt + CONTACT_EPS && body.id < bid)
                    }
                };
                if better {
                    hit = Some((t, body.id, i));
                }
            }
        }
    }
    let Some((_, contacted, first)) = hit else {
        return Ok(PushOutcome {
            scene: scene.clone(),
            contacted: None,
            moved: Vec::new(),
            clipped: false,
        });
    };

    // travel already covered by the chain when each body joined it
    let mut joined_at: Vec<Option<f64>> = vec![None; scene.bodies.len()];
    let mut order = vec![first];
    joined_at[first] = Some(0.0);
    let mut travelled = 0.0;
    let mut clipped = false;
    let table = scene.table;

    for _ in 0..=scene.bodies.len() {
        let remaining = action.distance - travelled;
        if remaining <= 0.0 {
            break;
        }
        let shift = |i: usize| travelled - joined_at[i].unwrap();
        let mut wall = f64::INFINITY;
        for &i in &order {
            let s = shift(i);
            for b in &parts[i] {
                let b = b.translated(dir[0] * s, dir[1] * s);
                for (k, &d) in dir.iter().enumerate() {
                    if d > 1e-15 {
                        wall = wall.min((table.max[k] - b.max[k]) / d);
                    } else if d < -1e-15 {
                        wall = wall.min((table.min[k] - b.min[k]) / d);
                    }
                }
            }
        }
        let wall = wall.max(0.0);
        let mut impact = f64::INFINITY;
        let mut struck: Vec<usize> = Vec::new();
        for (j, static_parts) in parts.iter().enumerate() {
            if joined_at[j].is_some() {
                continue;
            }
            let mut tj = f64::INFINITY;
            for &i in &order {
                let s = shift(i);
                for m in &parts[i] {
                    let m = m.translated(dir[0] * s, dir[1] * s);
                    for st in static_parts {
                        if let Some(t) = time_of_impact(&m, st, dir) {
                            tj = tj.min(t);
                        }
                    }
                }
            }
            if tj < impact - CONTACT_EPS {
                impact = tj;
                struck.clear();
                struck.push(j);
            } else if tj <= impact + CONTACT_EPS && tj.is_finite() {
                struck.push(j);
            }
        }
        let step = remaining.min(wall).min(impact);
        travelled += step;
        if wall <= step && wall < remaining {
            clipped = true;
            break;
        }
        if impact <= step && impact < remaining + CONTACT_EPS {
            struck.sort_by_key(|&j| scene.bodies[j].id);
            for j in struck {
                joined_at[j] = Some(travelled);
                order.push(j);
            }
        } else {
            break;
        }
    }

    let mut out = scene.clone();
    let mut moved = Vec::with_capacity(order.len());
    for &i in &order {
        let s = travelled - joined_at[i].unwrap();
        if s > 0.0 {
            let pose = &mut out.bodies[i].pose;
            pose.x += dir[0] * s;
            pose.y += dir[1] * s;
        }
        moved.push((scene.bodies[i].id, s));
    }
    Ok(PushOutcome {
        scene: out,
        contacted: Some(contacted),
        moved,
        clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::tests::cube;
    use crate::scene::{interpenetrate, TableBounds};

    fn table_scene(bodies: Vec<crate::scene::RigidBody>) -> Scene {
        Scene {
            table: TableBounds::centered(0.4, 0.4),
            bodies,
        }
    }

    #[test]
    fn empty_region_is_no_contact() {
        let scene = table_scene(vec![cube(1, 0.1, 0.1, 0.04)]);
        let action = PushAction::new([-0.1, -0.1], [1.0, 0.0], 0.05).unwrap();
        let out = apply_push(&scene, &action).unwrap();
        assert!(out.no_contact());
        assert_eq!(out.scene, scene);
    }

    #[test]
    fn free_translation_is_exact() {
        let scene = table_scene(vec![cube(1, 0.0, 0.0, 0.04)]);
        let action = PushAction::new([-0.02, 0.0], [1.0, 0.0], 0.05).unwrap();
        let out = apply_push(&scene, &action).unwrap();
        assert_eq!(out.contacted, Some(1));
        assert_eq!(out.scene.bodies[0].pose.x, 0.05);
        assert_eq!(out.scene.bodies[0].pose.y, 0.0);
        assert!(!out.clipped);
    }

    #[test]
    fn chain_push_keeps_contact() {
        let scene = table_scene(vec![cube(1, 0.0, 0.0, 0.04), cube(2, 0.04, 0.0, 0.04)]);
        let action = PushAction::new([-0.02, 0.0], [1.0, 0.0], 0.05).unwrap();
        let out = apply_push(&scene, &action).unwrap();
        let (a, b) = (&out.scene.bodies[0], &out.scene.bodies[1]);
        assert!((a.pose.x - 0.05).abs() < 1e-12);
        assert!((b.pose.x - 0.09).abs() < 1e-12);
        assert!(!interpenetrate(a, b));
        let gap = b.world_bounds().min[0] - a.world_bounds().max[0];
        assert!(gap.abs() < 1e-12);
        out.scene.validate().unwrap();
    }

    #[test]
    fn gap_is_closed_before_second_body_moves() {
        let scene = table_scene(vec![cube(1, 0.0, 0.0, 0.04), cube(2, 0.06, 0.0, 0.04)]);
        let action = PushAction::new([-0.02, 0.0], [1.0, 0.0], 0.05).unwrap();
        let out = apply_push(&scene, &action).unwrap();
        assert!((out.displacement(2) - 0.03).abs() < 1e-12);
        assert!((out.scene.bodies[1].pose.x - 0.09).abs() < 1e-12);
    }

    #[test]
    fn sliding_contact_does_not_drag() {
        // body 2 touches body 1 along a face parallel to the push
        let scene = table_scene(vec![cube(1, 0.0, 0.0, 0.04), cube(2, 0.0, 0.04, 0.04)]);
        let action = PushAction::new([-0.02, 0.0], [1.0, 0.0], 0.05).unwrap();
        let out = apply_push(&scene, &action).unwrap();
        assert_eq!(out.scene.bodies[1], scene.bodies[1]);
    }

    #[test]
    fn table_edge_clips_motion() {
        let scene = table_scene(vec![cube(1, 0.15, 0.0, 0.04)]);
        let action = PushAction::new([0.13, 0.0], [1.0, 0.0], 0.1).unwrap();
        let out = apply_push(&scene, &action).unwrap();
        assert!(out.clipped);
        assert!((out.scene.bodies[0].pose.x - 0.18).abs() < 1e-12);
        assert!(out.displacement(1) < 0.1);
        out.scene.validate().unwrap();
    }

    #[test]
    fn short_bodies_pass_under_overhang() {
        use crate::scene::{Part, Pose, RigidBody};
        // body 1 has a raised slab; body 2 is low enough to slide beneath it
        let arch = RigidBody {
            id: 1,
            pose: Pose::new(0.06, 0.0, 0.0),
            parts: vec![
                Part::new([0.03, 0.0], [0.02, 0.04], 0.0, 0.05),
                Part::new([0.0, 0.0], [0.08, 0.04], 0.05, 0.01),
            ],
        };
        let low = RigidBody {
            id: 2,
            pose: Pose::new(-0.02, 0.0, 0.0),
            parts: vec![Part::new([0.0, 0.0], [0.02, 0.02], 0.0, 0.02)],
        };
        let scene = table_scene(vec![arch, low]);
        scene.validate().unwrap();
        let action = PushAction::new([-0.03, 0.0], [1.0, 0.0], 0.06).unwrap();
        let out = apply_push(&scene, &action).unwrap();
        assert_eq!(out.contacted, Some(2));
        assert!((out.scene.bodies[1].pose.x - 0.04).abs() < 1e-12);
        assert_eq!(out.scene.bodies[0], scene.bodies[0]);
        out.scene.validate().unwrap();
    }

    #[test]
    fn rejects_bad_actions() {
        let bad = PushAction {
            target: [0.0, 0.0],
            direction: [1.0, 1.0],
            distance: 0.1,
        };
        assert!(bad.validate().is_err());
        assert!(PushAction::new([0.0, 0.0], [1.0, 0.0], 0.0).is_err());
        assert!(PushAction::new([0.0, 0.0], [0.0, 0.0], 0.1).is_err());
    }
}
