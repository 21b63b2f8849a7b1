//! Shortest augmenting path assignment (Jonker-Volgenant style potentials)
//! with costs computed on the fly, so memory stays O(N).

use super::{check_sizes, cost_of, CouplingPlan};
use crate::error::Result;
use crate::linalg::Vec3;
use crate::scalar::Real;

/// Exact assignment solver that remembers the last solution.
///
/// Successive calls on slowly moving ensembles reuse the previous column
/// potentials and permutation as a starting point, which typically leaves
/// only a handful of rows to augment. The result never depends on the warm
/// start beyond ties, which are resolved to the lexicographically smallest
/// optimal permutation either way.
#[derive(Clone, Debug, Default)]
pub struct AssignmentSolver<T> {
    warm: Option<Warm<T>>,
}

#[derive(Clone, Debug)]
struct Warm<T> {
    v: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Real> AssignmentSolver<T> {
    pub fn new() -> Self {
        Self { warm: None }
    }

    /// Forgets the previous solution.
    pub fn reset(&mut self) {
        self.warm = None;
    }

    pub fn solve(&mut self, a: impl AsRef<[Vec3<T>]>, b: impl AsRef<[Vec3<T>]>) -> Result<CouplingPlan<T>> {
        let (a, b) = (a.as_ref(), b.as_ref());
        check_sizes(a, b)?;
        let n = a.len();
        let warm = self.warm.take().filter(|w| w.v.len() == n);
        let (perm, u, v) = solve_dense(a, b, warm.as_ref());
        let perm = lexicographic_representative(a, b, perm, &u, &v);
        let cost = cost_of(&perm, a, b);
        self.warm = Some(Warm { v, perm: perm.clone() });
        Ok(CouplingPlan::from_parts(perm, cost))
    }
}

#[inline(always)]
fn c<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>], i: usize, j: usize) -> T {
    (a[i] - b[j]).norm_squared()
}

/// Returns the permutation and the row and column potentials
/// (`u_i + v_j <= c_ij`, with equality on the matching up to rounding).
fn solve_dense<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>], warm: Option<&Warm<T>>) -> (Vec<usize>, Vec<T>, Vec<T>) {
    let n = a.len();
    let inf = T::infinity();
    // 1-based rows and columns; column 0 is the virtual root of each search.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut p = vec![0usize; n + 1];
    if let Some(w) = warm {
        v[1..].copy_from_slice(&w.v);
    }

    // Feasible row potentials for the given columns, then a greedy matching
    // on tight edges, preferring the previous partner.
    let mut argmin = vec![0usize; n + 1];
    for i in 1..=n {
        let mut best = inf;
        for j in 1..=n {
            let r = c(a, b, i - 1, j - 1) - v[j];
            if r < best {
                best = r;
                argmin[i] = j;
            }
        }
        u[i] = best;
    }
    let tight = |u: &[T], v: &[T], i: usize, j: usize| c(a, b, i - 1, j - 1) - v[j] - u[i] <= T::zero();
    let mut row_free = vec![true; n + 1];
    for i in 1..=n {
        let prev = warm.map(|w| w.perm[i - 1] + 1);
        for j in prev.into_iter().chain(std::iter::once(argmin[i])) {
            if p[j] == 0 && tight(&u, &v, i, j) {
                p[j] = i;
                row_free[i] = false;
                break;
            }
        }
    }

    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        if !row_free[i] {
            continue;
        }
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c(a, b, i0 - 1, j - 1) - v[j] - u[i0];
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
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
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

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    (perm, u[1..].to_vec(), v[1..].to_vec())
}

/// Among the perfect matchings on (numerically) tight edges, all of which are
/// optimal, picks the lexicographically smallest by fixing rows in order and
/// rerouting along alternating paths.
fn lexicographic_representative<T: Real>(
    a: &[Vec3<T>],
    b: &[Vec3<T>],
    perm: Vec<usize>,
    u: &[T],
    v: &[T],
) -> Vec<usize> {
    let n = a.len();
    let radius = |s: &[Vec3<T>]| s.iter().map(|x| x.norm()).fold(T::zero(), T::max);
    let cmax = (radius(a) + radius(b)).powi(2);
    let umax = u.iter().map(|x| x.abs()).fold(T::zero(), T::max);
    let vmax = v.iter().map(|x| x.abs()).fold(T::zero(), T::max);
    let tol = T::lit(64.0) * T::epsilon() * (cmax + umax + vmax);

    let tight = |i: usize| (0..n).filter(move |&j| c(a, b, i, j) - v[j] - u[i] <= tol);
    // Only rows with more than one tight edge can change partner.
    if (0..n).all(|i| tight(i).nth(1).is_none()) {
        return perm;
    }
    let adj: Vec<Vec<usize>> = (0..n).map(|i| tight(i).collect()).collect();

    let mut row_col = perm;
    let mut col_row = vec![0usize; n];
    for (i, &j) in row_col.iter().enumerate() {
        col_row[j] = i;
    }
    let mut fixed = vec![false; n];
    let mut visited = vec![usize::MAX; n];
    let mut attempt = 0;
    for i in 0..n {
        for &j in &adj[i] {
            if fixed[j] {
                continue;
            }
            if j == row_col[i] {
                break;
            }
            // Row `col_row[j]` gives `j` up and must reach `row_col[i]`.
            let target = row_col[i];
            let root = col_row[j];
            attempt += 1;
            visited[j] = attempt;
            if let Some(path) = alternating_path(&adj, &col_row, &fixed, &mut visited, attempt, root, target) {
                for (r, col) in path {
                    row_col[r] = col;
                    col_row[col] = r;
                }
                row_col[i] = j;
                col_row[j] = i;
                break;
            }
        }
        fixed[row_col[i]] = true;
    }
    row_col
}

/// Depth-first search for rows `root = r0, r1, ..., rk` and columns
/// `c1, ..., ck, target` such that each row can move to the next column.
/// Returns the `(row, new column)` moves.
fn alternating_path(
    adj: &[Vec<usize>],
    col_row: &[usize],
    fixed: &[bool],
    visited: &mut [usize],
    stamp: usize,
    root: usize,
    target: usize,
) -> Option<Vec<(usize, usize)>> {
    // Frames of (row, next adjacency index, chosen column).
    let mut stack: Vec<(usize, usize, usize)> = vec![(root, 0, usize::MAX)];
    while let Some(top) = stack.last_mut() {
        let (row, next) = (top.0, top.1);
        if next == adj[row].len() {
            stack.pop();
            continue;
        }
        top.1 += 1;
        let col = adj[row][next];
        if fixed[col] || visited[col] == stamp {
            continue;
        }
        visited[col] = stamp;
        top.2 = col;
        if col == target {
            return Some(stack.iter().map(|f| (f.0, f.2)).collect());
        }
        stack.push((col_row[col], 0, usize::MAX));
    }
    None
}
