//! Exact neighbor queries over points sorted along the first axis.

use rayon::prelude::*;

use crate::linalg::Vec3;
use crate::scalar::Real;

pub(crate) struct SortedX<T> {
    /// `order[p]` is the original index of sorted position `p`.
    order: Vec<usize>,
    pts: Vec<Vec3<T>>,
}

impl<T: Real> SortedX<T> {
    pub(crate) fn new(v: &[Vec3<T>]) -> Self {
        let mut order: Vec<usize> = (0..v.len()).collect();
        // Ties broken by index keep the layout independent of the sort
        // implementation.
        order.sort_by(|&a, &b| v[a].x.partial_cmp(&v[b].x).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
        let pts = order.iter().map(|&k| v[k]).collect();
        Self { order, pts }
    }

    /// Squared distance from each point to its `k`-th nearest other point,
    /// in original index order.
    pub(crate) fn kth_distance2(&self, k: usize) -> Vec<T> {
        let n = self.pts.len();
        assert!(k >= 1 && k < n);
        let sorted: Vec<T> = (0..n).into_par_iter().map(|p| self.kth_at(p, k)).collect();
        let mut out = vec![T::zero(); n];
        for (p, d) in sorted.into_iter().enumerate() {
            out[self.order[p]] = d;
        }
        out
    }

    fn kth_at(&self, p: usize, k: usize) -> T {
        let c = self.pts[p];
        // Ascending k smallest squared distances seen so far.
        let mut best: Vec<T> = Vec::with_capacity(k + 1);
        let mut lo = p;
        let mut hi = p + 1;
        loop {
            let dl = if lo > 0 { Some(c.x - self.pts[lo - 1].x) } else { None };
            let dh = if hi < self.pts.len() { Some(self.pts[hi].x - c.x) } else { None };
            let take_low = match (dl, dh) {
                (None, None) => break,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (Some(a), Some(b)) => a <= b,
            };
            let (q, dx) = if take_low {
                lo -= 1;
                (lo, dl.unwrap_or_default())
            } else {
                hi += 1;
                (hi - 1, dh.unwrap_or_default())
            };
            if best.len() == k && dx * dx > best[k - 1] {
                break;
            }
            let d2 = (self.pts[q] - c).norm_squared();
            if best.len() < k || d2 < best[k - 1] {
                let at = best.partition_point(|&b| b <= d2);
                best.insert(at, d2);
                best.truncate(k);
            }
        }
        best[k - 1]
    }

    /// `f(p, q)` summed over all `q != p` with `|x_p - x_q| <= reach`, for
    /// every point, in original index order. Within a point the sum runs
    /// over sorted positions in ascending order.
    pub(crate) fn window_sums(&self, reach: T, f: impl Fn(Vec3<T>, Vec3<T>) -> T + Sync) -> Vec<T> {
        let n = self.pts.len();
        let sorted: Vec<T> = (0..n)
            .into_par_iter()
            .map(|p| {
                let c = self.pts[p];
                let mut lo = p;
                while lo > 0 && c.x - self.pts[lo - 1].x <= reach {
                    lo -= 1;
                }
                let mut acc = T::zero();
                for q in lo..n {
                    if q == p {
                        continue;
                    }
                    if self.pts[q].x - c.x > reach {
                        break;
                    }
                    acc = acc + f(c, self.pts[q]);
                }
                acc
            })
            .collect();
        let mut out = vec![T::zero(); n];
        for (p, s) in sorted.into_iter().enumerate() {
            out[self.order[p]] = s;
        }
        out
    }
}
