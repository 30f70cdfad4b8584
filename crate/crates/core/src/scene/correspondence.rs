use super::{Observation, Scene};
use crate::mask::{GridDims, Mask, Pixel};

/// Pixel maps between two frames: for every foreground pixel of the
/// earlier frame, the pixel of the later frame showing the same body-frame
/// surface point (`None` where it is hidden or off-grid), and the same in
/// reverse for the later frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrespondenceMap {
    pub before: GridDims,
    pub after: GridDims,
    targets: Vec<Option<u32>>,
    sources: Vec<Option<u32>>,
}

impl CorrespondenceMap {
    pub fn get(&self, index: usize) -> Option<usize> {
        self.targets
            .get(index)
            .copied()
            .flatten()
            .map(|t| t as usize)
    }

    /// `(source, target)` pairs for the visible pixels of a mask on the
    /// earlier frame.
    pub fn forward_pairs(&self, mask: &Mask) -> Vec<(u32, u32)> {
        mask.indices()
            .iter()
            .filter_map(|&i| {
                self.targets
                    .get(i as usize)
                    .copied()
                    .flatten()
                    .map(|t| (i, t))
            })
            .collect()
    }

    /// `(source, target)` pairs for every later-frame pixel whose surface
    /// point was visible inside `mask` on the earlier frame. Unlike
    /// [`Self::forward_pairs`] this covers the whole moved footprint even
    /// when a sub-pixel shift makes it a row or column wider.
    pub fn backward_pairs(&self, mask: &Mask) -> Vec<(u32, u32)> {
        self.sources
            .iter()
            .enumerate()
            .filter_map(|(j, s)| {
                s.filter(|&i| mask.contains_index(i as usize))
                    .map(|i| (i, j as u32))
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

pub fn correspondence_map(
    scene_before: &Scene,
    scene_after: &Scene,
    obs_before: &Observation,
    obs_after: &Observation,
) -> CorrespondenceMap {
    CorrespondenceMap {
        before: obs_before.dims,
        after: obs_after.dims,
        targets: pixel_map(scene_before, scene_after, obs_before, obs_after, false),
        sources: pixel_map(scene_after, scene_before, obs_after, obs_before, true),
    }
}

/// With `snap`, a point landing just outside its body's footprint (on
/// background or on a touching neighbour) goes to the nearest pixel of that
/// footprint.
fn pixel_map(
    from_scene: &Scene,
    to_scene: &Scene,
    from: &Observation,
    to: &Observation,
    snap: bool,
) -> Vec<Option<u32>> {
    (0..from.dims.len())
        .map(|i| {
            let id = from.labels[i];
            if id == 0 {
                return None;
            }
            let a = from_scene.body(id)?;
            let b = to_scene.body(id)?;
            let p = from.pixel_center(from.dims.pixel(i));
            let q = b.pose.to_world(a.pose.to_body(p));
            let j = to.world_to_index(q[0], q[1])?;
            if to.labels[j] == id {
                return Some(j as u32);
            }
            if !snap {
                return None;
            }
            let c = to.dims.pixel(j);
            let mut best: Option<(f64, usize)> = None;
            for r in c.row.saturating_sub(1)..=(c.row + 1).min(to.dims.rows - 1) {
                for k in c.col.saturating_sub(1)..=(c.col + 1).min(to.dims.cols - 1) {
                    let n = to.dims.index(Pixel { row: r, col: k });
                    if to.labels[n] != id {
                        continue;
                    }
                    let m = to.pixel_center(Pixel { row: r, col: k });
                    let d = (m[0] - q[0]).hypot(m[1] - q[1]);
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, n));
                    }
                }
            }
            best.map(|(_, n)| n as u32)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::tests::cube;
    use crate::scene::{apply_push, render, Part, Pose, PushAction, RigidBody, TableBounds};

    fn scene(bodies: Vec<RigidBody>) -> Scene {
        Scene {
            table: TableBounds::centered(0.4, 0.4),
            bodies,
        }
    }

    #[test]
    fn identity_without_motion() {
        let s = scene(vec![cube(1, 0.0, 0.0, 0.05), cube(2, 0.1, 0.0, 0.03)]);
        let obs = render(&s, 0.01);
        let map = correspondence_map(&s, &s, &obs, &obs);
        for i in 0..obs.dims.len() {
            let expect = (obs.labels[i] != 0).then_some(i);
            assert_eq!(map.get(i), expect);
        }
    }

    #[test]
    fn translation_shifts_by_whole_pixels() {
        let s = scene(vec![cube(1, 0.0, 0.0, 0.05)]);
        let out = apply_push(
            &s,
            &PushAction::new([-0.03, 0.0], [1.0, 0.0], 0.03).unwrap(),
        )
        .unwrap();
        let before = render(&s, 0.01);
        let after = render(&out.scene, 0.01);
        let map = correspondence_map(&s, &out.scene, &before, &after);
        let mut count = 0;
        for i in 0..before.dims.len() {
            if before.labels[i] != 0 {
                let p = before.dims.pixel(i);
                let q = after.dims.pixel(map.get(i).unwrap());
                assert_eq!((q.row, q.col), (p.row, p.col + 3));
                count += 1;
            }
        }
        assert_eq!(count, 25);
        let back = map.backward_pairs(&before.body_mask(1));
        assert_eq!(back.len(), 25);
        assert!(back
            .iter()
            .all(|&(i, j)| map.get(i as usize) == Some(j as usize)));
    }

    #[test]
    fn backward_pairs_cover_widened_footprint() {
        let s = scene(vec![cube(1, 0.0, 0.0, 0.045)]);
        let out = apply_push(
            &s,
            &PushAction::new([-0.03, 0.0], [1.0, 0.0], 0.015).unwrap(),
        )
        .unwrap();
        let before = render(&s, 0.01);
        let after = render(&out.scene, 0.01);
        let n_before = before.body_mask(1).len();
        assert!(after.body_mask(1).len() > n_before);
        let map = correspondence_map(&s, &out.scene, &before, &after);
        assert_eq!(map.forward_pairs(&before.body_mask(1)).len(), n_before);
        let back = map.backward_pairs(&before.body_mask(1));
        let mask = Mask::from_indices(
            after.dims,
            back.iter().map(|p| p.1),
            crate::mask::MaskSource::Tracked,
        );
        assert!(mask.same_pixels(&after.body_mask(1)));
    }

    #[test]
    fn backward_pairs_snap_past_touching_neighbour() {
        let s = scene(vec![cube(1, 0.0, 0.0, 0.045), cube(2, 0.045, 0.0, 0.045)]);
        let out = apply_push(
            &s,
            &PushAction::new([-0.01, 0.0], [-1.0, 0.0], 0.015).unwrap(),
        )
        .unwrap();
        assert_eq!(out.scene.body(2).unwrap().pose, s.body(2).unwrap().pose);
        let before = render(&s, 0.01);
        let after = render(&out.scene, 0.01);
        let map = correspondence_map(&s, &out.scene, &before, &after);
        for id in [1, 2] {
            let back = map.backward_pairs(&before.body_mask(id));
            let mask = Mask::from_indices(
                after.dims,
                back.iter().map(|p| p.1),
                crate::mask::MaskSource::Tracked,
            );
            assert!(mask.same_pixels(&after.body_mask(id)), "body {id}");
        }
    }

    #[test]
    fn occluded_pixels_map_to_none() {
        let arch = RigidBody {
            id: 1,
            pose: Pose::new(0.06, 0.0, 0.0),
            parts: vec![
                Part::new([0.04, 0.0], [0.02, 0.06], 0.0, 0.05),
                Part::new([0.0, 0.0], [0.1, 0.06], 0.05, 0.01),
            ],
        };
        let low = cube(2, -0.04, 0.0, 0.02);
        let s = scene(vec![arch, low]);
        let out = apply_push(
            &s,
            &PushAction::new([-0.05, 0.0], [1.0, 0.0], 0.06).unwrap(),
        )
        .unwrap();
        let before = render(&s, 0.01);
        let after = render(&out.scene, 0.01);
        let map = correspondence_map(&s, &out.scene, &before, &after);
        let body2 = before.body_mask(2);
        assert_eq!(body2.len(), 4);
        // the cube now sits entirely beneath the slab
        assert!(after.body_mask(2).is_empty());
        assert!(map.forward_pairs(&body2).is_empty());
        // every pixel that stays visible agrees with the depth of its source
        for (i, j) in map.forward_pairs(&before.body_mask(1)) {
            assert_eq!(before.depth[i as usize], after.depth[j as usize]);
        }
    }
}
