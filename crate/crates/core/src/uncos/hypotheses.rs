use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{RegionHypothesis, UncosError, UncosParams};
use crate::assignment::max_weight_assignment;
use crate::geometry::{is_degenerate, mask_iou, Plane};
use crate::mask::{Mask, MaskSource};
use crate::scene::Observation;
use crate::segmenter::Segmenter;

/// Frame-level inputs shared by every region's hypothesis sampling.
pub struct HypothesisContext<'a, S: ?Sized> {
    pub obs: &'a Observation,
    pub segmenter: &'a S,
    pub table: &'a Plane<f64>,
    pub foreground: &'a Mask,
    pub params: &'a UncosParams,
}

/// Same number of masks and a one-to-one matching with mean IoU above
/// `dup_iou`.
pub fn duplicate_test(a: &[Mask], b: &[Mask], dup_iou: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    if a.is_empty() {
        return true;
    }
    let n = a.len();
    let iou: Vec<f64> = a
        .iter()
        .flat_map(|x| b.iter().map(move |y| mask_iou::<f64>(x, y).unwrap_or(0.0)))
        .collect();
    let assign = max_weight_assignment(&iou, n, n);
    let total: f64 = assign
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| iou[i * n + j]))
        .sum();
    total / n as f64 > dup_iou
}

struct Episode {
    masks: Vec<Mask>,
    partial: bool,
}

/// Samples `n_hypotheses` partitions of `region` and groups near-duplicates
/// into weighted classes. Episode `i` starts from `seeds[i]` when present.
pub fn generate_region_hypotheses<S: Segmenter + ?Sized, R: Rng + ?Sized>(
    ctx: &HypothesisContext<'_, S>,
    region: &Mask,
    seeds: &[Mask],
    rng: &mut R,
) -> Result<Vec<RegionHypothesis>, UncosError> {
    assert!(!region.is_empty(), "region must be non-empty");
    let n = ctx.params.n_hypotheses;
    let episode_seeds: Vec<u64> = (0..n).map(|_| rng.random()).collect();
    let episodes: Vec<Result<Option<Episode>, UncosError>> = episode_seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            let seed = seeds.get(i);
            let first = run_episode(ctx, region, seed, &mut r)?;
            if !first.partial {
                return Ok(Some(first));
            }
            // one resample, then accept whatever comes back
            let second = run_episode(ctx, region, seed, &mut r)?;
            Ok((!second.masks.is_empty()).then_some(second))
        })
        .collect();

    let mut classes: Vec<(Episode, usize)> = Vec::new();
    let mut total = 0usize;
    for ep in episodes {
        let Some(ep) = ep? else { continue };
        total += 1;
        match classes
            .iter_mut()
            .find(|(rep, _)| duplicate_test(&rep.masks, &ep.masks, ctx.params.dup_iou))
        {
            Some((_, count)) => *count += 1,
            None => classes.push((ep, 1)),
        }
    }
    let mut out: Vec<RegionHypothesis> = classes
        .into_iter()
        .map(|(ep, count)| RegionHypothesis {
            masks: ep.masks,
            weight: count as f64 / total as f64,
            partial: ep.partial,
        })
        .collect();
    // stable: equal weights keep first-appearance order
    out.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    Ok(out)
}

/// Residual pixels thick enough to be worth prompting: the morphological
/// opening of the residual.
fn prompt_core(residual: &Mask, width: usize) -> Mask {
    if width == 0 {
        return residual.clone();
    }
    residual.erode(width).dilate(width).intersect(residual)
}

fn run_episode<S: Segmenter + ?Sized, R: Rng + ?Sized>(
    ctx: &HypothesisContext<'_, S>,
    region: &Mask,
    seed: Option<&Mask>,
    rng: &mut R,
) -> Result<Episode, UncosError> {
    let p = ctx.params;
    let stop = p.alpha_frac * region.len() as f64;
    let mut masks: Vec<Mask> = Vec::new();
    let mut residual = region.clone();
    if let Some(seed) = seed {
        let m = seed.intersect(&residual);
        if !m.is_empty() {
            residual = residual.difference(&m);
            masks.push(m);
        }
    }
    let mut attempts = 0;
    let mut partial = false;
    loop {
        let core = prompt_core(&residual, p.sliver_width);
        if core.len() as f64 <= stop {
            break;
        }
        if attempts >= p.attempt_budget {
            partial = true;
            break;
        }
        attempts += 1;
        let pixel = core.sample_pixel(rng).expect("core is non-empty");
        let query_seed: u64 = rng.random();
        let response = ctx
            .segmenter
            .prompt_point(ctx.obs.handle, pixel, query_seed)?
            .intersect(ctx.foreground)
            .intersect(region);
        if response.is_empty() {
            continue;
        }
        let inside = response.intersect(&residual);
        let contained = inside.len() as f64 / response.len() as f64;
        if contained > p.beta && !is_degenerate(&inside, ctx.obs, ctx.table, p.thickness) {
            residual = residual.difference(&inside);
            masks.push(inside.with_source(MaskSource::BottomUp));
        }
    }
    absorb_leftovers(&mut masks, &residual);
    masks.sort_by(|a, b| a.lex_cmp(b));
    let partial = partial || masks.is_empty();
    Ok(Episode { masks, partial })
}

/// Hands unexplained residual pixels to the adjacent mask reached first by a
/// breadth-first sweep from all masks (lower mask index wins ties).
fn absorb_leftovers(masks: &mut [Mask], residual: &Mask) {
    if masks.is_empty() || residual.is_empty() {
        return;
    }
    let dims = residual.dims();
    let mut owner: Vec<Option<usize>> = vec![None; dims.len()];
    let mut queue = VecDeque::new();
    for (k, m) in masks.iter().enumerate() {
        for &i in m.indices() {
            owner[i as usize] = Some(k);
            queue.push_back(i as usize);
        }
    }
    let mut gained: Vec<Vec<u32>> = vec![Vec::new(); masks.len()];
    while let Some(i) = queue.pop_front() {
        let k = owner[i].expect("queued pixels are owned");
        for j in dims.neighbors4(i) {
            if owner[j].is_none() && residual.contains_index(j) {
                owner[j] = Some(k);
                gained[k].push(j as u32);
                queue.push_back(j);
            }
        }
    }
    for (m, extra) in masks.iter_mut().zip(gained) {
        if !extra.is_empty() {
            *m = m.union(&Mask::from_indices(dims, extra, m.source()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::GridDims;

    fn m(d: GridDims, idx: impl IntoIterator<Item = u32>) -> Mask {
        Mask::from_indices(d, idx, MaskSource::BottomUp)
    }

    #[test]
    fn duplicate_rules() {
        let d = GridDims::new(10, 10);
        let a = vec![m(d, 0..20), m(d, 50..70)];
        assert!(duplicate_test(&a, &a, 0.9));
        assert!(!duplicate_test(&a, &[m(d, 0..70)], 0.9));
        // IoUs 19/20 = 0.95 and 0.92 (23 of 25)
        let b = vec![m(d, 0..19), m(d, (50..70).chain(70..73).chain(47..49))];
        let iou2 = 20.0 / 25.0;
        assert!(iou2 < 0.9);
        let c = vec![m(d, 0..19), m(d, (50..70).chain(70..71).chain(49..50))];
        let mean = (0.95 + 20.0 / 22.0) / 2.0;
        assert!(mean > 0.9);
        assert!(duplicate_test(&a, &c, 0.9));
        assert!(!duplicate_test(&a, &b, 0.9));
        // matching is by best assignment, not list order
        let swapped = vec![a[1].clone(), a[0].clone()];
        assert!(duplicate_test(&a, &swapped, 0.9));
    }

    #[test]
    fn leftovers_go_to_nearest_mask() {
        let d = GridDims::new(1, 6);
        let mut masks = vec![m(d, [0]), m(d, [5])];
        absorb_leftovers(&mut masks, &m(d, 1..5));
        assert_eq!(masks[0].indices(), &[0, 1, 2]);
        assert_eq!(masks[1].indices(), &[3, 4, 5]);
    }

    #[test]
    fn core_drops_one_pixel_slivers() {
        let d = GridDims::new(6, 6);
        // a ring of width one around an inner 2x2 block
        let ring: Vec<u32> = (0..36u32)
            .filter(|&i| {
                let (r, c) = (i / 6, i % 6);
                (1..=4).contains(&r)
                    && (1..=4).contains(&c)
                    && !((2..=3).contains(&r) && (2..=3).contains(&c))
            })
            .collect();
        assert!(prompt_core(&m(d, ring), 1).is_empty());
        let block: Vec<u32> = (0..36u32)
            .filter(|&i| (1..=4).contains(&(i / 6)) && (1..=4).contains(&(i % 6)))
            .collect();
        // the cross-shaped opening keeps a 4x4 block except its corners
        assert_eq!(prompt_core(&m(d, block.clone()), 1).len(), block.len() - 4);
    }
}
