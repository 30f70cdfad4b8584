//! Maximum-weight bipartite assignment (Kuhn-Munkres with potentials).

use crate::num::Real;

/// Assigns rows to columns one-to-one, maximizing the summed weight.
///
/// `weights` is row-major with `rows * cols` entries. Returns, per row, the
/// assigned column; when `rows > cols` some rows stay unassigned. Every
/// column or row that can be assigned is assigned, so callers that treat
/// zero-weight pairs as "no match" should filter them afterwards.
pub fn max_weight_assignment<T: Real>(
    weights: &[T],
    rows: usize,
    cols: usize,
) -> Vec<Option<usize>> {
    assert_eq!(weights.len(), rows * cols);
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows > cols {
        let transposed: Vec<T> = (0..cols * rows)
            .map(|k| weights[(k % rows) * cols + k / rows])
            .collect();
        let by_col = max_weight_assignment(&transposed, cols, rows);
        let mut out = vec![None; rows];
        for (c, r) in by_col.into_iter().enumerate() {
            if let Some(r) = r {
                out[r] = Some(c);
            }
        }
        return out;
    }
    // minimize negated weights; 1-based arrays with a virtual column 0
    let (n, m) = (rows, cols);
    let cost = |i: usize, j: usize| -weights[(i - 1) * cols + (j - 1)];
    let inf = T::max_value().expect("bounded scalar");
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}
