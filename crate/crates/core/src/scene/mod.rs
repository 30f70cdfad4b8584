//! Synthetic 2.5-D tabletop world.
//!
//! Bodies are rigid unions of axis-aligned boxes resting on a table at
//! height zero. Yaw is restricted to quarter turns so that every part stays
//! axis-aligned in the world frame; pushes only translate.

mod correspondence;
mod generate;
pub mod io;
mod push;
mod render;

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use correspondence::{correspondence_map, CorrespondenceMap};
pub use generate::{generate_scene, SceneGenConfig};
pub use push::{apply_push, PushAction, PushOutcome, APPROACH_MARGIN};
pub use render::{render, FrameHandle, Observation};

/// Geometric slack for contact and penetration tests, in meters.
pub const CONTACT_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("scene generation saturated")]
    Saturated,
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("body {0}: {1}")]
    InvalidBody(u32, String),
    #[error("bodies {0} and {1} interpenetrate")]
    Interpenetration(u32, u32),
    #[error("body {0} leaves the table")]
    OutOfBounds(u32),
    #[error("invalid push: {0}")]
    InvalidPush(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }

    /// Number of quarter turns encoded by `yaw`, if it is one.
    pub fn quarter_turns(&self) -> Option<u8> {
        let k = (self.yaw / FRAC_PI_2).round();
        ((self.yaw - k * FRAC_PI_2).abs() < 1e-9).then(|| k.rem_euclid(4.0) as u8)
    }

    fn rotate(&self, v: [f64; 2]) -> [f64; 2] {
        match self.quarter_turns().unwrap_or(0) {
            0 => v,
            1 => [-v[1], v[0]],
            2 => [-v[0], -v[1]],
            _ => [v[1], -v[0]],
        }
    }

    fn rotate_inverse(&self, v: [f64; 2]) -> [f64; 2] {
        match self.quarter_turns().unwrap_or(0) {
            0 => v,
            1 => [v[1], -v[0]],
            2 => [-v[0], -v[1]],
            _ => [-v[1], v[0]],
        }
    }

    /// Body frame to world frame (planar part only).
    pub fn to_world(&self, p: [f64; 2]) -> [f64; 2] {
        let r = self.rotate(p);
        [r[0] + self.x, r[1] + self.y]
    }

    pub fn to_body(&self, p: [f64; 2]) -> [f64; 2] {
        self.rotate_inverse([p[0] - self.x, p[1] - self.y])
    }
}

/// Axis-aligned box in a body frame: planar center and full extents, plus
/// the height interval `[base, base + height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub center: [f64; 2],
    pub extents: [f64; 2],
    pub base: f64,
    pub height: f64,
}

impl Part {
    pub fn new(center: [f64; 2], extents: [f64; 2], base: f64, height: f64) -> Self {
        Self {
            center,
            extents,
            base,
            height,
        }
    }

    pub fn top(&self) -> f64 {
        self.base + self.height
    }

    fn local_box(&self) -> Aabb {
        Aabb {
            min: [
                self.center[0] - self.extents[0] / 2.0,
                self.center[1] - self.extents[1] / 2.0,
                self.base,
            ],
            max: [
                self.center[0] + self.extents[0] / 2.0,
                self.center[1] + self.extents[1] / 2.0,
                self.top(),
            ],
        }
    }
}

/// World-frame axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    /// Positive-volume overlap, beyond [`CONTACT_EPS`].
    pub fn penetrates(&self, other: &Aabb) -> bool {
        (0..3).all(|k| {
            self.min[k] < other.max[k] - CONTACT_EPS && self.max[k] > other.min[k] + CONTACT_EPS
        })
    }

    /// Closed boxes share a face patch of positive area.
    pub fn touches(&self, other: &Aabb) -> bool {
        let mut positive = 0;
        for k in 0..3 {
            let lo = self.min[k].max(other.min[k]);
            let hi = self.max[k].min(other.max[k]);
            if hi < lo - CONTACT_EPS {
                return false;
            }
            if hi > lo + CONTACT_EPS {
                positive += 1;
            }
        }
        positive >= 2
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Aabb {
        Aabb {
            min: [self.min[0] + dx, self.min[1] + dy, self.min[2]],
            max: [self.max[0] + dx, self.max[1] + dy, self.max[2]],
        }
    }

    fn hull(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: std::array::from_fn(|k| self.min[k].min(other.min[k])),
            max: std::array::from_fn(|k| self.max[k].max(other.max[k])),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidBody {
    pub id: u32,
    pub pose: Pose,
    pub parts: Vec<Part>,
}

impl RigidBody {
    /// World-frame boxes of every part, in part order.
    pub fn world_parts(&self) -> Vec<Aabb> {
        self.parts
            .iter()
            .map(|part| {
                let local = part.local_box();
                let a = self.pose.to_world([local.min[0], local.min[1]]);
                let b = self.pose.to_world([local.max[0], local.max[1]]);
                Aabb {
                    min: [a[0].min(b[0]), a[1].min(b[1]), local.min[2]],
                    max: [a[0].max(b[0]), a[1].max(b[1]), local.max[2]],
                }
            })
            .collect()
    }

    pub fn world_bounds(&self) -> Aabb {
        let parts = self.world_parts();
        parts[1..].iter().fold(parts[0], |acc, b| acc.hull(b))
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |msg: &str| Err(SceneError::InvalidBody(self.id, msg.to_string()));
        if self.id == 0 {
            return bad("id 0 is reserved for the background");
        }
        if self.parts.is_empty() {
            return bad("no parts");
        }
        if self.pose.quarter_turns().is_none() {
            return bad("yaw must be a multiple of pi/2");
        }
        for part in &self.parts {
            let finite = part
                .center
                .iter()
                .chain(&part.extents)
                .chain([&part.base, &part.height])
                .all(|v| v.is_finite());
            if !finite || part.extents[0] <= 0.0 || part.extents[1] <= 0.0 || part.height <= 0.0 {
                return bad("part extents and height must be positive and finite");
            }
            if part.base < 0.0 {
                return bad("part below the table");
            }
        }
        if !parts_connected(&self.world_parts()) {
            return bad("parts do not form one connected solid");
        }
        Ok(())
    }
}

/// Whether the union of boxes is a single connected solid.
pub fn parts_connected(parts: &[Aabb]) -> bool {
    let mut seen = vec![false; parts.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..parts.len() {
            if !seen[j] && (parts[i].touches(&parts[j]) || parts[i].penetrates(&parts[j])) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableBounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl TableBounds {
    /// Table of the given size centred on the origin.
    pub fn centered(width: f64, depth: f64) -> Self {
        Self {
            min: [-width / 2.0, -depth / 2.0],
            max: [width / 2.0, depth / 2.0],
        }
    }

    pub fn contains_box(&self, b: &Aabb) -> bool {
        b.min[0] >= self.min[0] - CONTACT_EPS
            && b.min[1] >= self.min[1] - CONTACT_EPS
            && b.max[0] <= self.max[0] + CONTACT_EPS
            && b.max[1] <= self.max[1] + CONTACT_EPS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub table: TableBounds,
    pub bodies: Vec<RigidBody>,
}

impl Scene {
    pub fn empty(table: TableBounds) -> Self {
        Self {
            table,
            bodies: Vec::new(),
        }
    }

    pub fn body(&self, id: u32) -> Option<&RigidBody> {
        self.bodies.iter().find(|b| b.id == id)
    }

    /// Checks every scene invariant: valid bodies, unique ids, footprints on
    /// the table, and no interpenetration.
    pub fn validate(&self) -> Result<(), SceneError> {
        let mut ids: Vec<u32> = self.bodies.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(SceneError::InvalidBody(w[0], "duplicate id".into()));
        }
        for body in &self.bodies {
            body.validate()?;
            if !body
                .world_parts()
                .iter()
                .all(|p| self.table.contains_box(p))
            {
                return Err(SceneError::OutOfBounds(body.id));
            }
        }
        for (i, a) in self.bodies.iter().enumerate() {
            for b in &self.bodies[i + 1..] {
                if interpenetrate(a, b) {
                    return Err(SceneError::Interpenetration(a.id, b.id));
                }
            }
        }
        Ok(())
    }

    /// Pairs of body ids in contact, sorted.
    pub fn contacts(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for (i, a) in self.bodies.iter().enumerate() {
            for b in &self.bodies[i + 1..] {
                if in_contact(a, b) {
                    out.push((a.id.min(b.id), a.id.max(b.id)));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

pub fn interpenetrate(a: &RigidBody, b: &RigidBody) -> bool {
    let pb = b.world_parts();
    a.world_parts()
        .iter()
        .any(|x| pb.iter().any(|y| x.penetrates(y)))
}

/// Zero-gap contact over a face patch of positive area.
pub fn in_contact(a: &RigidBody, b: &RigidBody) -> bool {
    let pb = b.world_parts();
    a.world_parts()
        .iter()
        .any(|x| pb.iter().any(|y| x.touches(y)))
}
