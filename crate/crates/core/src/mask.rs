//! Pixel masks on an observation grid and their run-length encoding.
//!
//! A [`Mask`] stores the row-major linear indices of its pixels, sorted and
//! unique, so set operations are linear merges.

use std::cmp::Ordering;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MaskError {
    #[error("empty mask")]
    EmptyMask,
    #[error("grid mismatch: {0} vs {1}")]
    GridMismatch(GridDims, GridDims),
    #[error("malformed RLE: {0}")]
    Rle(String),
}

/// Size of an observation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub rows: usize,
    pub cols: usize,
}

impl fmt::Display for GridDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl GridDims {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, pixel: Pixel) -> usize {
        pixel.row * self.cols + pixel.col
    }

    pub fn pixel(&self, index: usize) -> Pixel {
        Pixel {
            row: index / self.cols,
            col: index % self.cols,
        }
    }

    pub fn contains(&self, pixel: Pixel) -> bool {
        pixel.row < self.rows && pixel.col < self.cols
    }

    /// The up-to-four edge neighbours of a pixel that lie on the grid.
    pub fn neighbors4(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let p = self.pixel(index);
        let up = (p.row > 0).then(|| index - self.cols);
        let down = (p.row + 1 < self.rows).then(|| index + self.cols);
        let left = (p.col > 0).then(|| index - 1);
        let right = (p.col + 1 < self.cols).then(|| index + 1);
        [up, down, left, right].into_iter().flatten()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub row: usize,
    pub col: usize,
}

impl Pixel {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Which kind of query produced a mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskSource {
    BottomUp,
    TopDown,
    Tracked,
}

/// A set of pixels on a grid.
///
/// Segmenter outputs are never empty, but intermediate results of set
/// algebra may be; [`Mask::is_empty`] distinguishes them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "MaskRepr", into = "MaskRepr")]
pub struct Mask {
    dims: GridDims,
    pixels: Vec<u32>,
    source: MaskSource,
}

impl Mask {
    /// Builds a mask from arbitrary linear indices; duplicates are removed.
    ///
    /// Panics if an index falls outside the grid.
    pub fn from_indices(
        dims: GridDims,
        indices: impl IntoIterator<Item = u32>,
        source: MaskSource,
    ) -> Self {
        let mut pixels: Vec<u32> = indices.into_iter().collect();
        pixels.sort_unstable();
        pixels.dedup();
        if let Some(&last) = pixels.last() {
            assert!(
                (last as usize) < dims.len(),
                "pixel index {last} outside {dims}"
            );
        }
        Self {
            dims,
            pixels,
            source,
        }
    }

    pub fn from_pixels(
        dims: GridDims,
        pixels: impl IntoIterator<Item = Pixel>,
        source: MaskSource,
    ) -> Self {
        Self::from_indices(
            dims,
            pixels.into_iter().map(|p| dims.index(p) as u32),
            source,
        )
    }

    /// Builds a mask from a dense row-major boolean grid.
    pub fn from_dense(dims: GridDims, dense: &[bool], source: MaskSource) -> Self {
        assert_eq!(dense.len(), dims.len());
        let pixels = dense
            .iter()
            .enumerate()
            .filter_map(|(i, &on)| on.then_some(i as u32))
            .collect();
        Self {
            dims,
            pixels,
            source,
        }
    }

    pub fn empty(dims: GridDims, source: MaskSource) -> Self {
        Self {
            dims,
            pixels: Vec::new(),
            source,
        }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn source(&self) -> MaskSource {
        self.source
    }

    pub fn with_source(mut self, source: MaskSource) -> Self {
        self.source = source;
        self
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Sorted linear pixel indices.
    pub fn indices(&self) -> &[u32] {
        &self.pixels
    }

    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        self.pixels.iter().map(|&i| self.dims.pixel(i as usize))
    }

    pub fn contains_index(&self, index: usize) -> bool {
        self.pixels.binary_search(&(index as u32)).is_ok()
    }

    pub fn contains(&self, pixel: Pixel) -> bool {
        self.dims.contains(pixel) && self.contains_index(self.dims.index(pixel))
    }

    pub fn to_dense(&self) -> Vec<bool> {
        let mut dense = vec![false; self.dims.len()];
        for &i in &self.pixels {
            dense[i as usize] = true;
        }
        dense
    }

    /// Same pixel set, ignoring the source tag.
    pub fn same_pixels(&self, other: &Mask) -> bool {
        self.dims == other.dims && self.pixels == other.pixels
    }

    /// Uniformly random pixel of the mask.
    pub fn sample_pixel<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Pixel> {
        if self.pixels.is_empty() {
            return None;
        }
        let i = rng.random_range(0..self.pixels.len());
        Some(self.dims.pixel(self.pixels[i] as usize))
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        debug_assert_eq!(self.dims, other.dims);
        let (a, b) = (&self.pixels, &other.pixels);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn union_count(&self, other: &Mask) -> usize {
        self.len() + other.len() - self.intersection_count(other)
    }

    /// Pixels in both masks; keeps `self`'s source.
    pub fn intersect(&self, other: &Mask) -> Mask {
        self.merge_with(other, |a, b| a && b)
    }

    /// Pixels in either mask; keeps `self`'s source.
    pub fn union(&self, other: &Mask) -> Mask {
        self.merge_with(other, |a, b| a || b)
    }

    /// Pixels of `self` not in `other`.
    pub fn difference(&self, other: &Mask) -> Mask {
        self.merge_with(other, |a, b| a && !b)
    }

    fn merge_with(&self, other: &Mask, keep: impl Fn(bool, bool) -> bool) -> Mask {
        debug_assert_eq!(self.dims, other.dims);
        let (a, b) = (&self.pixels, &other.pixels);
        let mut out = Vec::with_capacity(a.len().max(b.len()));
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let (value, in_a, in_b) = match (a.get(i), b.get(j)) {
                (Some(&x), Some(&y)) if x == y => {
                    i += 1;
                    j += 1;
                    (x, true, true)
                }
                (Some(&x), Some(&y)) if x < y => {
                    i += 1;
                    (x, true, false)
                }
                (Some(_), Some(&y)) => {
                    j += 1;
                    (y, false, true)
                }
                (Some(&x), None) => {
                    i += 1;
                    (x, true, false)
                }
                (None, Some(&y)) => {
                    j += 1;
                    (y, false, true)
                }
                (None, None) => unreachable!(),
            };
            if keep(in_a, in_b) {
                out.push(value);
            }
        }
        Mask {
            dims: self.dims,
            pixels: out,
            source: self.source,
        }
    }

    /// Morphological dilation with the 4-neighbourhood, `radius` times.
    pub fn dilate(&self, radius: usize) -> Mask {
        let mut dense = self.to_dense();
        let mut frontier: Vec<usize> = self.pixels.iter().map(|&i| i as usize).collect();
        for _ in 0..radius {
            let mut next = Vec::new();
            for &i in &frontier {
                for n in self.dims.neighbors4(i) {
                    if !dense[n] {
                        dense[n] = true;
                        next.push(n);
                    }
                }
            }
            frontier = next;
        }
        Mask::from_dense(self.dims, &dense, self.source)
    }

    /// Morphological erosion with the 4-neighbourhood, `radius` times.
    /// Pixels on the grid border count as having off-grid background.
    pub fn erode(&self, radius: usize) -> Mask {
        let mut current = self.clone();
        for _ in 0..radius {
            let dense = current.to_dense();
            let kept = current.pixels.iter().copied().filter(|&i| {
                let p = self.dims.pixel(i as usize);
                let interior = p.row > 0
                    && p.col > 0
                    && p.row + 1 < self.dims.rows
                    && p.col + 1 < self.dims.cols;
                interior && self.dims.neighbors4(i as usize).all(|n| dense[n])
            });
            current = Mask {
                dims: self.dims,
                pixels: kept.collect(),
                source: self.source,
            };
        }
        current
    }

    /// Centre of mass in (row, col) pixel units.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        if self.is_empty() {
            return None;
        }
        let (mut r, mut c) = (0.0, 0.0);
        for p in self.pixels() {
            r += p.row as f64;
            c += p.col as f64;
        }
        let n = self.len() as f64;
        Some((r / n, c / n))
    }

    /// Row-major run lengths alternating background/foreground, starting
    /// with a (possibly zero) background run.
    pub fn run_lengths(&self) -> Vec<u32> {
        let mut runs = Vec::new();
        let mut cursor = 0u32;
        let mut k = 0;
        while k < self.pixels.len() {
            let start = self.pixels[k];
            let mut end = start + 1;
            k += 1;
            while k < self.pixels.len() && self.pixels[k] == end {
                end += 1;
                k += 1;
            }
            runs.push(start - cursor);
            runs.push(end - start);
            cursor = end;
        }
        let total = self.dims.len() as u32;
        if cursor < total || runs.is_empty() {
            runs.push(total - cursor);
        }
        runs
    }

    /// Space-separated run lengths; see [`Mask::run_lengths`].
    pub fn to_rle(&self) -> String {
        self.run_lengths()
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn from_rle(dims: GridDims, rle: &str, source: MaskSource) -> Result<Mask, MaskError> {
        let mut pixels = Vec::new();
        let mut cursor: u64 = 0;
        let total = dims.len() as u64;
        for (k, token) in rle.split_whitespace().enumerate() {
            let run: u64 = token
                .parse()
                .map_err(|_| MaskError::Rle(format!("bad run length {token:?}")))?;
            if cursor + run > total {
                return Err(MaskError::Rle(format!(
                    "runs exceed grid of {total} pixels"
                )));
            }
            if k % 2 == 1 {
                pixels.extend((cursor..cursor + run).map(|i| i as u32));
            }
            cursor += run;
        }
        if cursor != total {
            return Err(MaskError::Rle(format!(
                "runs cover {cursor} of {total} pixels"
            )));
        }
        Ok(Mask {
            dims,
            pixels,
            source,
        })
    }

    /// Lexicographic order on pixel index lists.
    pub fn lex_cmp(&self, other: &Mask) -> Ordering {
        self.pixels.cmp(&other.pixels)
    }
}

#[derive(Serialize, Deserialize)]
struct MaskRepr {
    rows: usize,
    cols: usize,
    source: MaskSource,
    rle: String,
}

impl From<Mask> for MaskRepr {
    fn from(mask: Mask) -> Self {
        MaskRepr {
            rows: mask.dims.rows,
            cols: mask.dims.cols,
            source: mask.source,
            rle: mask.to_rle(),
        }
    }
}

impl TryFrom<MaskRepr> for Mask {
    type Error = MaskError;

    fn try_from(repr: MaskRepr) -> Result<Self, Self::Error> {
        Mask::from_rle(GridDims::new(repr.rows, repr.cols), &repr.rle, repr.source)
    }
}

/// Union of many masks on the same grid.
pub fn union_all<'a>(
    dims: GridDims,
    masks: impl IntoIterator<Item = &'a Mask>,
    source: MaskSource,
) -> Mask {
    let mut dense = vec![false; dims.len()];
    for m in masks {
        for &i in m.indices() {
            dense[i as usize] = true;
        }
    }
    Mask::from_dense(dims, &dense, source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dims() -> GridDims {
        GridDims::new(4, 5)
    }

    #[test]
    fn set_algebra() {
        let a = Mask::from_indices(dims(), [0, 1, 2, 7], MaskSource::BottomUp);
        let b = Mask::from_indices(dims(), [2, 3, 7, 9], MaskSource::TopDown);
        assert_eq!(a.intersect(&b).indices(), &[2, 7]);
        assert_eq!(a.union(&b).indices(), &[0, 1, 2, 3, 7, 9]);
        assert_eq!(a.difference(&b).indices(), &[0, 1]);
        assert_eq!(a.intersection_count(&b), 2);
        assert_eq!(a.union_count(&b), 6);
        assert_eq!(a.union(&b).source(), MaskSource::BottomUp);
    }

    #[test]
    fn dilate_and_erode_single_block() {
        let d = GridDims::new(7, 7);
        let block = Mask::from_pixels(
            d,
            (2..5).flat_map(|r| (2..5).map(move |c| Pixel::new(r, c))),
            MaskSource::BottomUp,
        );
        assert_eq!(block.dilate(1).len(), 9 + 12);
        assert_eq!(
            block.erode(1).indices(),
            &[d.index(Pixel::new(3, 3)) as u32]
        );
        assert!(block.erode(2).is_empty());
        assert_eq!(block.dilate(0), block);
    }

    #[test]
    fn rle_starts_with_background_run() {
        let m = Mask::from_indices(dims(), [0, 1, 5], MaskSource::BottomUp);
        assert_eq!(m.to_rle(), "0 2 3 1 14");
        let empty = Mask::empty(dims(), MaskSource::BottomUp);
        assert_eq!(empty.to_rle(), "20");
        let full = Mask::from_indices(dims(), 0..20, MaskSource::BottomUp);
        assert_eq!(full.to_rle(), "0 20");
    }

    #[test]
    fn rle_rejects_bad_totals() {
        assert!(Mask::from_rle(dims(), "3 2", MaskSource::BottomUp).is_err());
        assert!(Mask::from_rle(dims(), "3 x 15", MaskSource::BottomUp).is_err());
        assert!(Mask::from_rle(dims(), "30", MaskSource::BottomUp).is_err());
    }

    #[test]
    fn serde_uses_rle() {
        let m = Mask::from_indices(dims(), [4, 5, 6], MaskSource::Tracked);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"rle\":\"4 3 13\""), "{json}");
        let back: Mask = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    proptest! {
        #[test]
        fn rle_roundtrip(rows in 1usize..12, cols in 1usize..12, bits in proptest::collection::vec(any::<bool>(), 144)) {
            let d = GridDims::new(rows, cols);
            let m = Mask::from_dense(d, &bits[..d.len()], MaskSource::BottomUp);
            let back = Mask::from_rle(d, &m.to_rle(), MaskSource::BottomUp).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn counts_agree_with_sets(a in proptest::collection::btree_set(0u32..30, 0..20),
                                  b in proptest::collection::btree_set(0u32..30, 0..20)) {
            let d = GridDims::new(5, 6);
            let ma = Mask::from_indices(d, a.iter().copied(), MaskSource::BottomUp);
            let mb = Mask::from_indices(d, b.iter().copied(), MaskSource::BottomUp);
            prop_assert_eq!(ma.intersection_count(&mb), a.intersection(&b).count());
            prop_assert_eq!(ma.union(&mb).len(), a.union(&b).count());
            prop_assert_eq!(ma.difference(&mb).len(), a.difference(&b).count());
        }
    }
}
