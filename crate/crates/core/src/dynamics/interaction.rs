//! Per-particle interaction sums, by three interchangeable routes:
//!
//! * the fused SoA pair loop (default),
//! * a moment closure for `gamma = 0`, where every sum is an affine function
//!   of the ensemble mean and covariance and the step costs O(N),
//! * a literal per-pair evaluation through the public kernel functions,
//!   used when a kernel fault is injected and as the validation reference.

use rayon::prelude::*;

use crate::kernel::{b_drift, sigma, KernelParams};
use crate::linalg::{Mat3, Vec3};
use crate::pairs::{self, CoupledSums, PairSums, Soa};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Route {
    Fused,
    Maxwell,
    Reference,
}

impl Route {
    pub(crate) fn for_kernel<T: Real>(kp: &KernelParams<T>) -> Self {
        if kp.fault().is_some() {
            Route::Reference
        } else if kp.is_maxwell() {
            Route::Maxwell
        } else {
            Route::Fused
        }
    }
}

pub(crate) fn single<T: Real>(v: &[Vec3<T>], kp: &KernelParams<T>, cov: bool, route: Route) -> Vec<PairSums<T>> {
    let n = v.len();
    match route {
        Route::Fused => pairs::single(&Soa::new(v), kp, cov),
        Route::Maxwell => {
            let m = Moments::new(v);
            (0..n).map(|i| m.sums(v[i], cov)).collect()
        }
        Route::Reference => (0..n).into_par_iter().map(|i| reference(v, i, kp, cov)).collect(),
    }
}

/// `b` is aligned with `a`: `b[i]` is the partner of `a[i]`.
pub(crate) fn coupled<T: Real>(
    a: &[Vec3<T>],
    b: &[Vec3<T>],
    kp: &KernelParams<T>,
    cov: bool,
    route: Route,
) -> Vec<CoupledSums<T>> {
    let n = a.len();
    match route {
        Route::Fused => pairs::coupled(&Soa::new(a), &Soa::new(b), kp, cov),
        Route::Maxwell => {
            let (ma, mb) = (Moments::new(a), Moments::new(b));
            let e: Vec<Vec3<T>> = a.iter().zip(b).map(|(&x, &y)| y - x).collect();
            let me = Moments::new(&e);
            let nf = T::from_count(n);
            // (1/N) sum_j (e_j - ebar)(a_j - abar)^T
            let mut cross = Mat3::zero();
            for (x, y) in a.iter().zip(&e) {
                cross = cross + (*y - me.mean).outer(*x - ma.mean);
            }
            let cross = cross.scale(T::one() / nf);
            (0..n)
                .map(|i| {
                    let (da, de) = (a[i] - ma.mean, e[i] - me.mean);
                    let (dd, ad) = if cov {
                        let ee = (de.outer(de) + me.cov).scale(nf);
                        let ey = (de.outer(da) + cross).scale(nf);
                        (frame_gram(&ee), frame_cross(&ey))
                    } else {
                        (Mat3::zero(), Mat3::zero())
                    };
                    CoupledSums { a: ma.sums(a[i], cov), b: mb.sums(b[i], false), dd, ad }
                })
                .collect()
        }
        Route::Reference => (0..n).into_par_iter().map(|i| reference_coupled(a, b, i, kp, cov)).collect(),
    }
}

/// `tr(S) I - S`.
fn frame_gram<T: Real>(s: &Mat3<T>) -> Mat3<T> {
    Mat3::identity().scale(s.trace()) - *s
}

/// `sum_j M(y_j) M(x_j)^T = tr(X) I - X` for `X = sum_j x_j y_j^T`.
fn frame_cross<T: Real>(x: &Mat3<T>) -> Mat3<T> {
    Mat3::identity().scale(x.trace()) - *x
}

struct Moments<T> {
    n: T,
    count: usize,
    mean: Vec3<T>,
    cov: Mat3<T>,
}

impl<T: Real> Moments<T> {
    fn new(v: &[Vec3<T>]) -> Self {
        let n = T::from_count(v.len());
        let mean = crate::ensemble::mean_of(v);
        let mut cov = Mat3::zero();
        for &x in v {
            cov = cov + (x - mean).outer(x - mean);
        }
        Self { n, count: v.len(), mean, cov: cov.scale(T::one() / n) }
    }

    /// With unit radial factor: `sum_j (v - V_j) = N (v - m)` and
    /// `sum_j (v - V_j)(v - V_j)^T = N ((v - m)(v - m)^T + C)`.
    fn sums(&self, v: Vec3<T>, cov: bool) -> PairSums<T> {
        let d = v - self.mean;
        PairSums {
            drift: d.scale(T::lit(-2.0) * self.n),
            jsum: T::from_count(self.count - 1),
            cov: if cov { frame_gram(&(d.outer(d) + self.cov).scale(self.n)) } else { Mat3::zero() },
        }
    }
}

pub(crate) fn reference<T: Real>(v: &[Vec3<T>], i: usize, kp: &KernelParams<T>, cov: bool) -> PairSums<T> {
    let mut out = PairSums { drift: Vec3::zero(), jsum: T::zero(), cov: Mat3::zero() };
    for (j, &w) in v.iter().enumerate() {
        let z = v[i] - w;
        out.drift += b_drift(z, kp);
        if j != i {
            out.jsum = out.jsum + kp.radial(z.norm_squared());
        }
        if cov {
            let s = sigma(z, kp);
            out.cov = out.cov + s * s.transpose();
        }
    }
    out
}

fn reference_coupled<T: Real>(
    a: &[Vec3<T>],
    b: &[Vec3<T>],
    i: usize,
    kp: &KernelParams<T>,
    cov: bool,
) -> CoupledSums<T> {
    let mut dd = Mat3::zero();
    let mut ad = Mat3::zero();
    if cov {
        for j in 0..a.len() {
            let sa = sigma(a[i] - a[j], kp);
            let sd = sigma(b[i] - b[j], kp) - sa;
            dd = dd + sd * sd.transpose();
            ad = ad + sa * sd.transpose();
        }
    }
    CoupledSums { a: reference(a, i, kp, cov), b: reference(b, i, kp, false), dd, ad }
}
