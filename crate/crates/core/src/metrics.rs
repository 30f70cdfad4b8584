//! Segmentation scores: optimal segment matching, object-size-normalized
//! precision/recall/F, and pixel-pooled precision/recall/F.

use crate::assignment::max_weight_assignment;
use crate::mask::Mask;
use crate::num::Real;

/// Precision, recall and F of one predicted segment against one
/// ground-truth segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore<T> {
    pub precision: T,
    pub recall: T,
    pub f: T,
}

pub fn pair_score<T: Real>(pred: &Mask, gt: &Mask) -> PairScore<T> {
    let inter = pred.intersection_count(gt);
    if inter == 0 {
        return PairScore {
            precision: T::zero(),
            recall: T::zero(),
            f: T::zero(),
        };
    }
    let precision = T::of_usize(inter) / T::of_usize(pred.len());
    let recall = T::of_usize(inter) / T::of_usize(gt.len());
    let f = T::of(2.0) * precision * recall / (precision + recall);
    PairScore {
        precision,
        recall,
        f,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegEval<T> {
    pub n_pred: usize,
    pub n_gt: usize,
    pub p_n: T,
    pub r_n: T,
    pub f_n: T,
    pub p: T,
    pub r: T,
    pub f: T,
    /// Ground-truth index matched to each predicted segment.
    pub matching: Vec<Option<usize>>,
    /// No predicted segments were given; every score is zero.
    pub empty_prediction: bool,
}

/// One-to-one matching of predicted to ground-truth segments maximizing the
/// summed pair F-scores. Pairs with zero overlap are left unmatched.
pub fn match_segments<T: Real>(pred: &[Mask], gt: &[Mask]) -> Vec<Option<usize>> {
    let scores: Vec<T> = pred
        .iter()
        .flat_map(|s| gt.iter().map(move |g| pair_score::<T>(s, g).f))
        .collect();
    let assign = max_weight_assignment(&scores, pred.len(), gt.len());
    assign
        .into_iter()
        .enumerate()
        .map(|(i, g)| g.filter(|&j| scores[i * gt.len() + j] > T::zero()))
        .collect()
}

fn ratio<T: Real>(num: T, den: usize) -> T {
    if den == 0 {
        T::zero()
    } else {
        num / T::of_usize(den)
    }
}

fn f_of<T: Real>(p: T, r: T) -> T {
    if p + r > T::zero() {
        T::of(2.0) * p * r / (p + r)
    } else {
        T::zero()
    }
}

/// Full evaluation of a predicted segmentation against ground truth.
pub fn evaluate<T: Real>(pred: &[Mask], gt: &[Mask]) -> SegEval<T> {
    let matching = match_segments::<T>(pred, gt);
    let (mut sp, mut sr, mut sf) = (T::zero(), T::zero(), T::zero());
    let (mut tp, mut pred_px, mut gt_px) = (0usize, 0usize, 0usize);
    for (i, m) in matching.iter().enumerate() {
        if let Some(j) = *m {
            let s = pair_score::<T>(&pred[i], &gt[j]);
            sp += s.precision;
            sr += s.recall;
            sf += s.f;
            tp += pred[i].intersection_count(&gt[j]);
            pred_px += pred[i].len();
            gt_px += gt[j].len();
        }
    }
    let p = ratio(T::of_usize(tp), pred_px);
    let r = ratio(T::of_usize(tp), gt_px);
    SegEval {
        n_pred: pred.len(),
        n_gt: gt.len(),
        p_n: ratio(sp, pred.len()),
        r_n: ratio(sr, gt.len()),
        f_n: ratio(sf, pred.len().max(gt.len())),
        p,
        r,
        f: f_of(p, r),
        matching,
        empty_prediction: pred.is_empty(),
    }
}

/// `(P_n, R_n, F_n)`: per-segment scores summed over matched pairs and
/// normalized by segment counts.
pub fn osn_scores<T: Real>(pred: &[Mask], gt: &[Mask]) -> (T, T, T) {
    let e = evaluate(pred, gt);
    (e.p_n, e.r_n, e.f_n)
}

/// `(P, R, F)` pooled over the pixels of matched pairs.
pub fn pixel_scores<T: Real>(pred: &[Mask], gt: &[Mask]) -> (T, T, T) {
    let e = evaluate(pred, gt);
    (e.p, e.r, e.f)
}
