//! Landau collision coefficients for the power-law kernel `|z|^gamma`.
//!
//! With `z = v - v*`:
//!
//! ```text
//! a(z)     = |z|^gamma (|z|^2 I - z z^T)
//! b(z)     = -2 |z|^gamma z
//! sigma(z) = |z|^(gamma/2) [[ z2, -z3,   0],
//!                           [-z1,   0,  z3],
//!                           [  0,  z1, -z2]]      sigma sigma^T = a
//! ```
//!
//! For `gamma < 0` the radial factor is singular at the origin. Every
//! coefficient here replaces `|z|` by `max(|z|, eps)` inside the radial factor
//! only, so the matrix and vector factors stay exact: `sigma sigma^T = a`
//! holds identically, `b` stays odd and `a(z) z = 0`.

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

/// `q^e` for `q = |z|^2`, with a fast path when `8e` is an integer.
///
/// The fast path replaces `powf` by a chain of square roots so that the
/// pair loops vectorize. Results agree with `powf` to a few ulps.
#[derive(Clone, Copy, Debug, PartialEq)]
enum PowRule<T> {
    One,
    /// `q^(-m/8)` or `q^(m/8)` with `m = 8*whole + 4*half + 2*quarter + eighth`.
    Dyadic {
        whole: u8,
        half: bool,
        quarter: bool,
        eighth: bool,
        negative: bool,
    },
    General(T),
}

impl<T: Real> PowRule<T> {
    fn new(exponent: T) -> Self {
        let m = exponent * T::lit(8.0);
        let mr = m.round();
        if (m - mr).abs() < T::lit(1e-9) && mr.abs() <= T::lit(64.0) {
            let k = mr.abs().to_u32().unwrap_or(0);
            if k == 0 {
                return PowRule::One;
            }
            return PowRule::Dyadic {
                whole: (k / 8) as u8,
                half: k & 4 != 0,
                quarter: k & 2 != 0,
                eighth: k & 1 != 0,
                negative: mr < T::zero(),
            };
        }
        PowRule::General(exponent)
    }

    #[inline(always)]
    fn eval(self, q: T) -> T {
        match self {
            PowRule::One => T::one(),
            PowRule::Dyadic { whole, half, quarter, eighth, negative } => {
                let r1 = q.sqrt();
                let r2 = r1.sqrt();
                let r3 = r2.sqrt();
                let mut p = T::one();
                for _ in 0..whole {
                    p = p * q;
                }
                if half {
                    p = p * r1;
                }
                if quarter {
                    p = p * r2;
                }
                if eighth {
                    p = p * r3;
                }
                if negative {
                    T::one() / p
                } else {
                    p
                }
            }
            PowRule::General(e) => q.powf(e),
        }
    }

    /// Same operations as [`PowRule::eval`] in the same order, applied to a
    /// fixed block of lanes so the loop body stays branch-free.
    #[inline(always)]
    fn eval_lanes<const L: usize>(self, q: &mut [T; L]) {
        match self {
            PowRule::One => *q = [T::one(); L],
            PowRule::Dyadic { whole, half, quarter, eighth, negative } => {
                let mut p = [T::one(); L];
                for _ in 0..whole {
                    for l in 0..L {
                        p[l] = p[l] * q[l];
                    }
                }
                if half || quarter || eighth {
                    let mut r = [T::zero(); L];
                    for l in 0..L {
                        r[l] = q[l].sqrt();
                    }
                    if half {
                        for l in 0..L {
                            p[l] = p[l] * r[l];
                        }
                    }
                    if quarter || eighth {
                        for l in 0..L {
                            r[l] = r[l].sqrt();
                        }
                        if quarter {
                            for l in 0..L {
                                p[l] = p[l] * r[l];
                            }
                        }
                        if eighth {
                            for l in 0..L {
                                p[l] = p[l] * r[l].sqrt();
                            }
                        }
                    }
                }
                if negative {
                    for l in 0..L {
                        q[l] = T::one() / p[l];
                    }
                } else {
                    *q = p;
                }
            }
            PowRule::General(e) => {
                for x in q.iter_mut() {
                    *x = x.powf(e);
                }
            }
        }
    }
}

/// Deliberate defects used to check that the validation suite catches them.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelFault {
    /// Flips the sign of `b(z)` on the half-space `z.x > 0`, which makes the
    /// drift even instead of odd.
    DriftSignFlip,
}

/// Interaction exponent and the distance floor of the radial factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams<T> {
    gamma: T,
    eps: T,
    eps2: T,
    half_rule: PowRule<T>,
    full_rule: PowRule<T>,
    fault: Option<KernelFault>,
}

impl<T: Real> KernelParams<T> {
    /// `gamma` must lie in `(-3, 0]` and `eps` must be positive.
    ///
    /// `gamma = 0` (Maxwell molecules) is accepted as a validation mode.
    pub fn new(gamma: T, eps: T) -> Result<Self> {
        if !(gamma > T::lit(-3.0) && gamma <= T::zero()) {
            return Err(Error::param("gamma", format!("{gamma} is outside (-3, 0]")));
        }
        if !(eps > T::zero()) || !eps.is_finite() {
            return Err(Error::param("eps", format!("{eps} must be positive and finite")));
        }
        Ok(Self {
            gamma,
            eps,
            eps2: eps * eps,
            half_rule: PowRule::new(gamma / T::lit(4.0)),
            full_rule: PowRule::new(gamma / T::lit(2.0)),
            fault: None,
        })
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    #[doc(hidden)]
    pub fn with_fault(mut self, fault: KernelFault) -> Self {
        self.fault = Some(fault);
        self
    }

    #[doc(hidden)]
    pub fn fault(&self) -> Option<KernelFault> {
        self.fault
    }

    pub fn is_maxwell(&self) -> bool {
        self.gamma == T::zero()
    }

    /// `max(|z|, eps)^2` from `|z|^2`.
    #[inline(always)]
    pub fn floored_r2(&self, r2: T) -> T {
        T::select(r2 > self.eps2, r2, self.eps2)
    }

    /// `max(|z|, eps)^gamma` from `|z|^2`.
    #[inline(always)]
    pub fn radial(&self, r2: T) -> T {
        self.full_rule.eval(self.floored_r2(r2))
    }

    /// `max(|z|, eps)^(gamma/2)` from `|z|^2`.
    #[inline(always)]
    pub fn radial_half(&self, r2: T) -> T {
        self.half_rule.eval(self.floored_r2(r2))
    }

    /// In-place `r2 -> max(|z|, eps)^gamma` over a block of lanes.
    #[inline(always)]
    pub(crate) fn radial_lanes<const L: usize>(&self, r2: &mut [T; L]) {
        for x in r2.iter_mut() {
            *x = self.floored_r2(*x);
        }
        self.full_rule.eval_lanes(r2);
    }

    /// In-place `r2 -> max(|z|, eps)^(gamma/2)` over a block of lanes.
    #[inline(always)]
    pub(crate) fn radial_half_lanes<const L: usize>(&self, r2: &mut [T; L]) {
        for x in r2.iter_mut() {
            *x = self.floored_r2(*x);
        }
        self.half_rule.eval_lanes(r2);
    }
}

/// `a(z) = max(|z|, eps)^gamma (|z|^2 I - z z^T)`.
pub fn a_matrix<T: Real>(z: Vec3<T>, kp: &KernelParams<T>) -> Mat3<T> {
    let r2 = z.norm_squared();
    let w = kp.radial(r2);
    let zz = z.outer(z);
    Mat3::from_fn(|i, j| {
        let d = if i == j { r2 } else { T::zero() };
        w * (d - zz.m[i][j])
    })
}

/// `b(z) = -2 max(|z|, eps)^gamma z`.
pub fn b_drift<T: Real>(z: Vec3<T>, kp: &KernelParams<T>) -> Vec3<T> {
    let w = kp.radial(z.norm_squared());
    let b = z.scale(T::lit(-2.0) * w);
    match kp.fault {
        Some(KernelFault::DriftSignFlip) if z.x > T::zero() => -b,
        _ => b,
    }
}

/// The linear map `M(z)` with `M(z) M(z)^T = |z|^2 I - z z^T`.
#[inline(always)]
pub fn sigma_frame<T: Real>(z: Vec3<T>) -> Mat3<T> {
    let o = T::zero();
    Mat3::from_rows([[z.y, -z.z, o], [-z.x, o, z.z], [o, z.x, -z.y]])
}

/// `sigma(z) = max(|z|, eps)^(gamma/2) M(z)`, a square root of `a(z)`.
pub fn sigma<T: Real>(z: Vec3<T>, kp: &KernelParams<T>) -> Mat3<T> {
    let s = kp.radial_half(z.norm_squared());
    sigma_frame(z.scale(s))
}

/// `trace a(z) = 2 max(|z|, eps)^gamma |z|^2`.
pub fn trace_a<T: Real>(z: Vec3<T>, kp: &KernelParams<T>) -> T {
    let r2 = z.norm_squared();
    T::lit(2.0) * kp.radial(r2) * r2
}

/// Right-hand side of the Lipschitz estimate for `sigma`:
/// `(|gamma|/2 + 1) |z - zt| (|z|^(gamma/2) + |zt|^(gamma/2))`.
pub fn sigma_lipschitz_bound<T: Real>(z: Vec3<T>, zt: Vec3<T>, gamma: T) -> T {
    let e = gamma / T::lit(2.0);
    (gamma.abs() / T::lit(2.0) + T::one()) * (z - zt).norm() * (z.norm().powf(e) + zt.norm().powf(e))
}

/// Right-hand side of the Lipschitz estimate for `b`:
/// `2 (|gamma| + 1) |z - zt| (|z|^gamma + |zt|^gamma)`.
pub fn drift_lipschitz_bound<T: Real>(z: Vec3<T>, zt: Vec3<T>, gamma: T) -> T {
    T::lit(2.0) * (gamma.abs() + T::one()) * (z - zt).norm() * (z.norm().powf(gamma) + zt.norm().powf(gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kp(gamma: f64) -> KernelParams<f64> {
        KernelParams::new(gamma, 1e-8).unwrap()
    }

    fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
        Vec3::new(x, y, z)
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(KernelParams::new(-3.0, 1e-4).is_err());
        assert!(KernelParams::new(0.5, 1e-4).is_err());
        assert!(KernelParams::new(-1.0, 0.0).is_err());
        assert!(KernelParams::new(f64::NAN, 1e-4).is_err());
        assert!(KernelParams::new(0.0, 1e-4).is_ok());
    }

    #[test]
    fn a_matrix_examples() {
        assert_eq!(a_matrix(v(1.0, 0.0, 0.0), &kp(-1.0)), Mat3::from_diag([0.0, 1.0, 1.0]));
        assert_eq!(a_matrix(v(0.0, 0.0, 0.0), &kp(-2.5)), Mat3::zero());
        let want = Mat3::from_rows([[0.5, -0.5, 0.0], [-0.5, 0.5, 0.0], [0.0, 0.0, 1.0]]);
        assert!(a_matrix(v(1.0, 1.0, 0.0), &kp(-2.0)).max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn b_drift_examples() {
        assert_eq!(b_drift(v(2.0, 0.0, 0.0), &kp(-1.0)), v(-2.0, 0.0, 0.0));
        assert_eq!(b_drift(v(0.0, 0.0, 0.0), &kp(-1.0)), Vec3::zero());
        let b = b_drift(v(1.0, 1.0, 0.0), &kp(-2.0));
        assert!((b - v(-1.0, -1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn sigma_examples() {
        let s = sigma(v(1.0, 0.0, 0.0), &kp(-1.0));
        assert_eq!(s, Mat3::from_rows([[0.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]));
        assert_eq!(s * s.transpose(), Mat3::from_diag([0.0, 1.0, 1.0]));
        assert_eq!(sigma(Vec3::zero(), &kp(-1.0)), Mat3::zero());
    }

    #[test]
    fn trace_examples() {
        assert_eq!(trace_a(v(1.0, 0.0, 0.0), &kp(-1.0)), 2.0);
        assert_eq!(trace_a(Vec3::zero(), &kp(-1.0)), 0.0);
        assert_eq!(trace_a(v(2.0, 0.0, 0.0), &kp(-2.0)), 2.0);
    }

    #[test]
    fn floor_applies_below_eps() {
        let k = KernelParams::<f64>::new(-1.0, 1e-2).unwrap();
        assert!((k.radial(1e-8) - 100.0).abs() < 1e-9);
        assert!((k.radial_half(1e-8) - 10.0).abs() < 1e-10);
    }

    #[test]
    fn pow_rules_match_powf() {
        for gamma in [-0.5f64, -1.0, -1.5, -2.0, -2.5, -2.9, -0.3, -1.7] {
            let k = KernelParams::new(gamma, 1e-6).unwrap();
            for r2 in [1e-6f64, 0.3, 1.0, 7.5, 1e4] {
                let full = r2.powf(gamma / 2.0);
                let half = r2.powf(gamma / 4.0);
                assert!((k.radial(r2) - full).abs() <= 1e-14 * full, "{gamma} {r2}");
                assert!((k.radial_half(r2) - half).abs() <= 1e-14 * half, "{gamma} {r2}");
            }
        }
    }

    #[test]
    fn fault_breaks_oddness() {
        let k = kp(-1.0).with_fault(KernelFault::DriftSignFlip);
        let z = v(0.5, 0.2, -0.1);
        assert_eq!(b_drift(-z, &k), b_drift(z, &k));
    }

    #[test]
    fn single_precision_identities() {
        let k = KernelParams::<f32>::new(-1.0, 1e-4).unwrap();
        let z = Vec3::new(0.3f32, -1.2, 0.8);
        let s = sigma(z, &k);
        assert!((s * s.transpose()).max_abs_diff(&a_matrix(z, &k)) < 1e-5);
    }

    fn vec_strategy() -> impl Strategy<Value = Vec3<f64>> {
        prop::array::uniform3(-5.0f64..5.0).prop_map(Vec3::from_array)
    }

    proptest! {
        #[test]
        fn sigma_squares_to_a(z in vec_strategy(), gi in 0usize..4) {
            let gamma = [-0.5, -1.0, -2.0, -2.9][gi];
            let k = KernelParams::new(gamma, 1e-4).unwrap();
            prop_assume!(z.norm() >= 1e-4);
            let s = sigma(z, &k);
            let a = a_matrix(z, &k);
            prop_assert!((s * s.transpose() - a).frobenius_norm() <= 1e-12 * (1.0 + a.frobenius_norm()));
            prop_assert!(a.mul_vec(z).norm() <= 1e-12 * (1.0 + a.frobenius_norm() * z.norm()));
            prop_assert!(a.min_eigenvalue() >= -1e-12 * (1.0 + a.frobenius_norm()));
            prop_assert!((trace_a(z, &k) - a.trace()).abs() <= 1e-12 * (1.0 + a.trace()));
        }

        #[test]
        fn parity(z in vec_strategy(), gamma in -2.99f64..0.0) {
            let k = KernelParams::new(gamma, 1e-4).unwrap();
            prop_assert_eq!(b_drift(-z, &k), -b_drift(z, &k));
            prop_assert_eq!(a_matrix(-z, &k), a_matrix(z, &k));
        }

        #[test]
        fn lipschitz_bounds(z in vec_strategy(), zt in vec_strategy(), gamma in -2.99f64..-0.01) {
            let k = KernelParams::new(gamma, 1e-6).unwrap();
            prop_assume!(z.norm() >= 1e-3 && zt.norm() >= 1e-3);
            let ds = (sigma(z, &k) - sigma(zt, &k)).frobenius_norm();
            prop_assert!(ds <= sigma_lipschitz_bound(z, zt, gamma) * (1.0 + 1e-12));
            let db = (b_drift(z, &k) - b_drift(zt, &k)).norm();
            prop_assert!(db <= drift_lipschitz_bound(z, zt, gamma) * (1.0 + 1e-12));
        }
    }
}
