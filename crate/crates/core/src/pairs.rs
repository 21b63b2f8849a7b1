//! Vectorizable O(N) sums over one particle's interaction partners.
//!
//! Particles are stored structure-of-arrays and padded to a multiple of
//! [`LANES`]. Every sum keeps one accumulator per lane and folds them with a
//! fixed tree at the end, so the summation order depends only on `N`, never
//! on the thread count.

use crate::kernel::KernelParams;
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

pub(crate) const LANES: usize = 8;

type Lanes<T> = [T; LANES];

#[derive(Clone, Debug)]
pub(crate) struct Soa<T> {
    x: Vec<T>,
    y: Vec<T>,
    z: Vec<T>,
    n: usize,
}

impl<T: Real> Soa<T> {
    pub(crate) fn new(v: &[Vec3<T>]) -> Self {
        let n = v.len();
        let padded = n.div_ceil(LANES) * LANES;
        let mut soa = Self { x: vec![T::zero(); padded], y: vec![T::zero(); padded], z: vec![T::zero(); padded], n };
        for (k, p) in v.iter().enumerate() {
            soa.x[k] = p.x;
            soa.y[k] = p.y;
            soa.z[k] = p.z;
        }
        soa
    }

    #[inline(always)]
    pub(crate) fn get(&self, k: usize) -> Vec3<T> {
        Vec3::new(self.x[k], self.y[k], self.z[k])
    }

    fn chunks(&self) -> usize {
        self.x.len() / LANES
    }

    #[inline(always)]
    fn load(&self, c: usize, p: Vec3<T>) -> [Lanes<T>; 3] {
        let r = c * LANES..(c + 1) * LANES;
        let lanes = |v: &[T]| -> Lanes<T> { v[r.clone()].try_into().expect("chunk is LANES wide") };
        let (x, y, z) = (lanes(&self.x), lanes(&self.y), lanes(&self.z));
        let mut d = [[T::zero(); LANES]; 3];
        for l in 0..LANES {
            d[0][l] = p.x - x[l];
            d[1][l] = p.y - y[l];
            d[2][l] = p.z - z[l];
        }
        d
    }
}

#[inline(always)]
fn fold<T: Real>(a: &Lanes<T>) -> T {
    ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7]))
}

#[inline(always)]
fn norm2<T: Real>(d: &[Lanes<T>; 3]) -> Lanes<T> {
    let mut r2 = [T::zero(); LANES];
    for l in 0..LANES {
        r2[l] = d[0][l] * d[0][l] + d[1][l] * d[1][l] + d[2][l] * d[2][l];
    }
    r2
}

/// Zeroes lanes that are padding or equal to `skip`.
#[inline(always)]
fn mask<T: Real>(w: &mut Lanes<T>, c: usize, n: usize, skip: usize) {
    let o = c * LANES;
    for l in 0..LANES {
        let j = o + l;
        w[l] = T::select(j < n && j != skip, w[l], T::zero());
    }
}

/// `sum_j max(|p - V_j|, eps)^gamma` over `j != skip`.
pub(crate) fn radial_sum<T: Real>(soa: &Soa<T>, p: Vec3<T>, skip: Option<usize>, kp: &KernelParams<T>) -> T {
    let skip = skip.unwrap_or(usize::MAX);
    let mut acc = [T::zero(); LANES];
    for c in 0..soa.chunks() {
        let mut w = norm2(&soa.load(c, p));
        kp.radial_lanes(&mut w);
        mask(&mut w, c, soa.n, skip);
        for l in 0..LANES {
            acc[l] = acc[l] + w[l];
        }
    }
    fold(&acc)
}

/// Interaction sums of one particle against its whole ensemble.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct PairSums<T> {
    /// `sum_j b(V_i - V_j)`.
    pub(crate) drift: Vec3<T>,
    /// `sum_{j != i} max(|V_i - V_j|, eps)^gamma`.
    pub(crate) jsum: T,
    /// `sum_j sigma(V_i - V_j) sigma(V_i - V_j)^T`; zero when not requested.
    pub(crate) cov: Mat3<T>,
}

/// Differences `V_i - V_j` over chunk `c`, their radial factors
/// `s = max(|z|, eps)^(gamma/2)` (zeroed on padding and `j = i`) and `y = s z`.
#[inline(always)]
fn chunk<T: Real>(soa: &Soa<T>, p: Vec3<T>, c: usize, i: usize, kp: &KernelParams<T>) -> (Lanes<T>, [Lanes<T>; 3]) {
    let d = soa.load(c, p);
    let mut s = norm2(&d);
    kp.radial_half_lanes(&mut s);
    mask(&mut s, c, soa.n, i);
    let mut y = [[T::zero(); LANES]; 3];
    for k in 0..3 {
        for l in 0..LANES {
            y[k][l] = s[l] * d[k][l];
        }
    }
    (s, y)
}

const UPPER: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

/// Lane accumulators for `sum s y`, `sum s^2` and the upper triangle of
/// `sum y y^T`.
#[derive(Clone, Copy)]
struct Accum<T> {
    sy: [Lanes<T>; 3],
    ss: Lanes<T>,
    yy: [Lanes<T>; 6],
}

impl<T: Real> Accum<T> {
    fn new() -> Self {
        Self { sy: [[T::zero(); LANES]; 3], ss: [T::zero(); LANES], yy: [[T::zero(); LANES]; 6] }
    }

    #[inline(always)]
    fn add<const COV: bool>(&mut self, s: &Lanes<T>, y: &[Lanes<T>; 3]) {
        for k in 0..3 {
            for l in 0..LANES {
                self.sy[k][l] = self.sy[k][l] + s[l] * y[k][l];
            }
        }
        for l in 0..LANES {
            self.ss[l] = self.ss[l] + s[l] * s[l];
        }
        if COV {
            add_outer(&mut self.yy, y, y);
        }
    }

    fn finish<const COV: bool>(&self) -> PairSums<T> {
        PairSums {
            drift: Vec3::new(fold(&self.sy[0]), fold(&self.sy[1]), fold(&self.sy[2])).scale(T::lit(-2.0)),
            jsum: fold(&self.ss),
            cov: if COV { frame_gram(&self.yy.map(|a| fold(&a))) } else { Mat3::zero() },
        }
    }
}

/// Adds the upper triangle of `a b^T` (symmetric when `a = b`).
#[inline(always)]
fn add_outer<T: Real>(acc: &mut [Lanes<T>; 6], a: &[Lanes<T>; 3], b: &[Lanes<T>; 3]) {
    for (k, (r, q)) in UPPER.into_iter().enumerate() {
        for l in 0..LANES {
            acc[k][l] = acc[k][l] + a[r][l] * b[q][l];
        }
    }
}

/// `tr(S) I - S` for the folded symmetric sum `S = sum y y^T`, which
/// equals `sum M(y) M(y)^T`.
fn frame_gram<T: Real>(s: &[T; 6]) -> Mat3<T> {
    let tr = s[0] + s[3] + s[5];
    Mat3::from_rows([[tr - s[0], -s[1], -s[2]], [-s[1], tr - s[3], -s[4]], [-s[2], -s[4], tr - s[5]]])
}

fn single_row<T: Real, const COV: bool>(soa: &Soa<T>, i: usize, kp: &KernelParams<T>) -> PairSums<T> {
    let p = soa.get(i);
    let mut acc = Accum::new();
    for c in 0..soa.chunks() {
        let (s, y) = chunk(soa, p, c, i, kp);
        acc.add::<COV>(&s, &y);
    }
    acc.finish::<COV>()
}

/// Fused drift, `J` and diffusion-covariance sums for every particle.
///
/// The radial factor of `b` is taken as `s^2` with `s = max(|z|, eps)^(gamma/2)`
/// so that a single power evaluation serves all three sums. Each row keeps
/// one accumulator per lane, folded with a fixed tree, so results do not
/// depend on the thread count.
pub(crate) fn single<T: Real>(soa: &Soa<T>, kp: &KernelParams<T>, cov: bool) -> Vec<PairSums<T>> {
    use rayon::prelude::*;
    let rows = 0..soa.n;
    if cov {
        rows.into_par_iter().map(|i| single_row::<T, true>(soa, i, kp)).collect()
    } else {
        rows.into_par_iter().map(|i| single_row::<T, false>(soa, i, kp)).collect()
    }
}

/// Sums for the aligned pair `(A_i, B'_i)` of a coupled step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct CoupledSums<T> {
    pub(crate) a: PairSums<T>,
    pub(crate) b: PairSums<T>,
    /// `sum_j (sigma_B - sigma_A)(sigma_B - sigma_A)^T`.
    pub(crate) dd: Mat3<T>,
    /// `sum_j sigma_A (sigma_B - sigma_A)^T`.
    pub(crate) ad: Mat3<T>,
}

fn coupled_row<T: Real, const COV: bool>(
    soa_a: &Soa<T>,
    soa_b: &Soa<T>,
    i: usize,
    kp: &KernelParams<T>,
) -> CoupledSums<T> {
    let (pa, pb) = (soa_a.get(i), soa_b.get(i));
    let (mut acc_a, mut acc_b) = (Accum::new(), Accum::new());
    let mut dd = [[T::zero(); LANES]; 6];
    let mut dy = [[T::zero(); LANES]; 9];
    for c in 0..soa_a.chunks() {
        let (sa, ya) = chunk(soa_a, pa, c, i, kp);
        let (sb, yb) = chunk(soa_b, pb, c, i, kp);
        acc_a.add::<COV>(&sa, &ya);
        acc_b.add::<false>(&sb, &yb);
        if COV {
            let mut del = [[T::zero(); LANES]; 3];
            for k in 0..3 {
                for l in 0..LANES {
                    del[k][l] = yb[k][l] - ya[k][l];
                }
            }
            add_outer(&mut dd, &del, &del);
            for r in 0..3 {
                for k in 0..3 {
                    for l in 0..LANES {
                        dy[3 * r + k][l] = dy[3 * r + k][l] + del[r][l] * ya[k][l];
                    }
                }
            }
        }
    }
    let (dd, ad) = if COV {
        // sum M(y) M(x)^T = (y . x) I - x y^T with y = y_A, x = delta.
        let m = dy.map(|a| fold(&a));
        let tr = m[0] + m[4] + m[8];
        let ad = Mat3::from_fn(|r, k| if r == k { tr - m[3 * r + k] } else { -m[3 * r + k] });
        (frame_gram(&dd.map(|a| fold(&a))), ad)
    } else {
        (Mat3::zero(), Mat3::zero())
    };
    CoupledSums { a: acc_a.finish::<COV>(), b: acc_b.finish::<false>(), dd, ad }
}

/// Coupled analogue of [`single`]; `b` must be aligned with `a`. The `a`
/// parts are bitwise identical to `single(soa_a, kp, cov)`.
pub(crate) fn coupled<T: Real>(soa_a: &Soa<T>, soa_b: &Soa<T>, kp: &KernelParams<T>, cov: bool) -> Vec<CoupledSums<T>> {
    use rayon::prelude::*;
    let rows = 0..soa_a.n;
    if cov {
        rows.into_par_iter().map(|i| coupled_row::<T, true>(soa_a, soa_b, i, kp)).collect()
    } else {
        rows.into_par_iter().map(|i| coupled_row::<T, false>(soa_a, soa_b, i, kp)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{a_matrix, b_drift, sigma};

    fn cloud(n: usize) -> Vec<Vec3<f64>> {
        (0..n)
            .map(|k| {
                let t = k as f64;
                Vec3::new((1.3 * t).sin() * 2.0, (0.7 * t).cos(), (0.37 * t * t).sin() * 0.5)
            })
            .collect()
    }

    #[test]
    fn fused_sums_match_direct_evaluation() {
        for &gamma in &[0.0, -0.5, -1.0, -2.0, -2.9, -1.3] {
            let kp = KernelParams::new(gamma, 1e-3).unwrap();
            let v = cloud(21);
            let soa = Soa::new(&v);
            let all = single(&soa, &kp, true);
            for i in [0, 7, 20] {
                let got = all[i];
                let mut drift = Vec3::zero();
                let mut cov = Mat3::zero();
                let mut jsum = 0.0;
                for j in 0..v.len() {
                    let z = v[i] - v[j];
                    drift += b_drift(z, &kp);
                    cov = cov + a_matrix(z, &kp);
                    if j != i {
                        jsum += kp.radial(z.norm_squared());
                    }
                }
                let tol = 1e-12 * (1.0 + jsum);
                assert!((got.drift - drift).norm() < tol, "gamma {gamma}");
                assert!(got.cov.max_abs_diff(&cov) < tol);
                assert!((got.jsum - jsum).abs() < tol);
                let r = radial_sum(&soa, v[i], Some(i), &kp);
                assert!((r - jsum).abs() < tol);
            }
        }
    }

    #[test]
    fn coupled_cross_terms() {
        let kp = KernelParams::new(-1.0, 1e-3).unwrap();
        let a = cloud(13);
        let b: Vec<_> = a.iter().map(|p| Vec3::new(p.y, p.x * 1.1, p.z - 0.2)).collect();
        let (sa, sb) = (Soa::new(&a), Soa::new(&b));
        let i = 5;
        let got = coupled(&sa, &sb, &kp, true)[i];
        assert_eq!(got.a, single(&sa, &kp, true)[i]);
        assert_eq!(coupled(&sa, &sb, &kp, false)[i].a, single(&sa, &kp, false)[i]);
        let mut dd = Mat3::zero();
        let mut ad = Mat3::zero();
        for j in 0..a.len() {
            let s_a = sigma(a[i] - a[j], &kp);
            let s_d = sigma(b[i] - b[j], &kp) - s_a;
            dd = dd + s_d * s_d.transpose();
            ad = ad + s_a * s_d.transpose();
        }
        assert!(got.dd.max_abs_diff(&dd) < 1e-12);
        assert!(got.ad.max_abs_diff(&ad) < 1e-12);
        assert_eq!(got.b, single(&sb, &kp, false)[i]);
    }
}
