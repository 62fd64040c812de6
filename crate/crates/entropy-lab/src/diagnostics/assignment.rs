//! Exact minimum-cost assignment (Hungarian method).
//!
//! Shortest-augmenting-path formulation with row/column potentials, O(n^3).
//! Rectangular inputs are padded internally with zero-cost sentinel cells;
//! every padded match is dropped from the returned assignment, and the
//! returned total is re-summed over real cells in row order.

use crate::error::{Error, Result};
use crate::mat::Mat;

const NONE: usize = usize::MAX;

/// Minimum-cost bijective assignment.
///
/// Returns `assignment[row] = Some(col)` (or `None` for rows absorbed by
/// padding when `rows > cols`) and the total cost over assigned real cells.
pub fn hungarian(cost: &Mat) -> Result<(Vec<Option<usize>>, f64)> {
    let (rows, cols) = (cost.rows(), cost.cols());
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("empty cost matrix".into()));
    }
    if let Some(v) = cost.data().iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("cost entry {v}")));
    }
    let n = rows.max(cols);
    let at = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            cost.get(i, j)
        } else {
            0.0
        }
    };

    // p[j] = row matched to column j; column n is the virtual start column.
    let mut u = vec![0.0_f64; n];
    let mut v = vec![0.0_f64; n + 1];
    let mut p = vec![NONE; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 0..n {
        p[n] = i;
        let mut j0 = n;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 0..n {
                if used[j] {
                    continue;
                }
                let cur = at(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    if p[j] != NONE {
                        u[p[j]] += delta;
                    }
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == NONE {
                break;
            }
        }
        // Augment along the stored path.
        while j0 != n {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        }
    }

    let mut assignment = vec![None; rows];
    for (j, &i) in p.iter().enumerate().take(n) {
        if i < rows && j < cols {
            assignment[i] = Some(j);
        }
    }
    let mut total = 0.0;
    for (i, a) in assignment.iter().enumerate() {
        if let Some(j) = a {
            total += cost.get(i, *j);
        }
    }
    Ok((assignment, total))
}

/// Brute-force assignment minimum by permutation enumeration. Test oracle
/// for small square instances; factorial time.
pub fn brute_force_assignment(cost: &Mat) -> Result<(Vec<usize>, f64)> {
    let n = cost.rows();
    if n != cost.cols() {
        return Err(Error::DimMismatch("brute force needs a square matrix".into()));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = perm_cost(cost, &perm);
    // Heap's algorithm.
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let cur = perm_cost(cost, &perm);
            if cur < best_cost {
                best_cost = cur;
                best = perm.clone();
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok((best, best_cost))
}

fn perm_cost(cost: &Mat, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum()
}
