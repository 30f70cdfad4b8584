use rand::Rng;

use super::{Region, RegionKind, UncosError, UncosParams};
use crate::geometry::{fit_plane_ransac, mask_iom, mask_iou, Plane, PointSet};
use crate::mask::{Mask, MaskSource};
use crate::scene::Observation;
use crate::segmenter::Segmenter;

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub confident: Vec<Mask>,
    /// Uncertain regions; demoted confident candidates carry the candidate
    /// mask as their only hypothesis seed.
    pub uncertain: Vec<(Region, Option<Mask>)>,
    pub table: Plane<f64>,
    /// Pixels neither on nor below the support plane.
    pub foreground: Mask,
}

/// Dense seeding, background removal, overlap-graph grouping and
/// verification of isolated masks.
pub fn partition_regions<S: Segmenter + ?Sized, R: Rng + ?Sized>(
    obs: &Observation,
    segmenter: &S,
    params: &UncosParams,
    rng: &mut R,
) -> Result<Partition, UncosError> {
    segmenter.load_frame(obs)?;
    let cloud = PointSet::from_observation(obs);
    let fit = fit_plane_ransac(
        &cloud,
        params.plane_iters,
        params.inlier_dist(obs.resolution),
        rng,
    )?;
    let table = fit.plane;
    let background: Vec<bool> = cloud
        .points()
        .iter()
        .zip(&fit.inliers)
        .map(|(p, &inlier)| inlier || table.signed_distance(p) < 0.0)
        .collect();
    let foreground = Mask::from_dense(
        obs.dims,
        &background.iter().map(|b| !b).collect::<Vec<_>>(),
        MaskSource::BottomUp,
    );
    let seed_all_seed: u64 = rng.random();
    if foreground.is_empty() {
        return Ok(Partition {
            confident: Vec::new(),
            uncertain: Vec::new(),
            table,
            foreground,
        });
    }

    let mut seeds: Vec<Mask> = Vec::new();
    for m in segmenter.seed_all(obs.handle, seed_all_seed)? {
        let bg = m
            .indices()
            .iter()
            .filter(|&&i| background[i as usize])
            .count();
        if 2 * bg >= m.len() {
            continue;
        }
        let m = m.intersect(&foreground);
        let duplicate = seeds
            .iter()
            .any(|k| mask_iou::<f64>(k, &m).unwrap_or(0.0) > params.nms_iou);
        if !duplicate {
            seeds.push(m);
        }
    }

    // connected components of the IoM graph
    let n = seeds.len();
    let mut component = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let id = groups.len();
        component[start] = id;
        let mut members = vec![start];
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if component[j] == usize::MAX
                    && mask_iom::<f64>(&seeds[i], &seeds[j]).unwrap_or(0.0) > params.sigma_m
                {
                    component[j] = id;
                    members.push(j);
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }

    let mut candidates = Vec::new();
    let mut regions = Vec::new();
    for members in &groups {
        if members.len() == 1 {
            candidates.push(seeds[members[0]].clone());
        } else {
            let footprint = crate::mask::union_all(
                obs.dims,
                members.iter().map(|&i| &seeds[i]),
                MaskSource::BottomUp,
            );
            regions.push(footprint);
        }
    }

    let verify_seeds: Vec<Vec<u64>> = candidates
        .iter()
        .map(|_| (0..params.verify_prompts).map(|_| rng.random()).collect())
        .collect();
    let mut pixel_rng_seeds: Vec<u64> = Vec::with_capacity(candidates.len());
    for _ in &candidates {
        pixel_rng_seeds.push(rng.random());
    }
    let mut confident = Vec::new();
    let mut demoted = Vec::new();
    for ((cand, seeds), pix_seed) in candidates
        .into_iter()
        .zip(verify_seeds)
        .zip(pixel_rng_seeds)
    {
        let mut pix_rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(pix_seed);
        let mut ok = true;
        for s in seeds {
            let pixel = cand
                .sample_pixel(&mut pix_rng)
                .expect("candidate is non-empty");
            let response = segmenter
                .prompt_point(obs.handle, pixel, s)?
                .intersect(&foreground);
            if mask_iou::<f64>(&response, &cand).unwrap_or(0.0) < params.sigma_u {
                ok = false;
                break;
            }
        }
        if ok {
            confident.push(cand);
        } else {
            demoted.push(cand);
        }
    }

    // make everything pairwise disjoint: confident masks claim first
    let mut claimed = Mask::empty(obs.dims, MaskSource::BottomUp);
    let mut clip = |m: Mask| -> Option<Mask> {
        let out = m.difference(&claimed);
        claimed = claimed.union(&out);
        (!out.is_empty()).then_some(out)
    };
    let confident: Vec<Mask> = confident.into_iter().filter_map(&mut clip).collect();
    let mut uncertain = Vec::new();
    for footprint in regions {
        if let Some(f) = clip(footprint) {
            uncertain.push((
                Region {
                    footprint: f,
                    kind: RegionKind::Uncertain,
                },
                None,
            ));
        }
    }
    for cand in demoted {
        if let Some(f) = clip(cand) {
            uncertain.push((
                Region {
                    footprint: f.clone(),
                    kind: RegionKind::Uncertain,
                },
                Some(f),
            ));
        }
    }
    Ok(Partition {
        confident,
        uncertain,
        table,
        foreground,
    })
}
