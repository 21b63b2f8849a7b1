//! Fixed-size 3-vectors and 3x3 matrices.
//!
//! Only what the simulator needs: arithmetic, outer products, a Jacobi
//! eigensolver for symmetric matrices and the factorizations built on it.

use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub, SubAssign};

use crate::scalar::Real;

/// A velocity (or velocity difference) in R^3.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    #[inline(always)]
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    #[inline(always)]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    #[inline(always)]
    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    #[inline(always)]
    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    #[inline(always)]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline(always)]
    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    #[inline(always)]
    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    #[inline(always)]
    pub fn scale(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// `self * other^T`.
    pub fn outer(self, other: Self) -> Mat3<T> {
        let a = self.to_array();
        let b = other.to_array();
        Mat3::from_fn(|i, j| a[i] * b[j])
    }

    pub fn cast<U: Real>(self) -> Vec3<U> {
        Vec3::new(U::lit(self.x.to_f64_lossy()), U::lit(self.y.to_f64_lossy()), U::lit(self.z.to_f64_lossy()))
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline(always)]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline(always)]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline(always)]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline(always)]
    fn mul(self, s: T) -> Self {
        self.scale(s)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline(always)]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    #[inline(always)]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// Row-major 3x3 matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Mat3<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Real> Mat3<T> {
    pub const fn from_rows(m: [[T; 3]; 3]) -> Self {
        Self { m }
    }

    pub fn from_fn(f: impl Fn(usize, usize) -> T) -> Self {
        let mut m = [[T::zero(); 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = f(i, j);
            }
        }
        Self { m }
    }

    pub fn zero() -> Self {
        Self::from_fn(|_, _| T::zero())
    }

    pub fn identity() -> Self {
        Self::from_diag([T::one(); 3])
    }

    pub fn from_diag(d: [T; 3]) -> Self {
        Self::from_fn(|i, j| if i == j { d[i] } else { T::zero() })
    }

    #[inline(always)]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.m[i][j]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(|i, j| self.m[j][i])
    }

    pub fn scale(&self, s: T) -> Self {
        Self::from_fn(|i, j| self.m[i][j] * s)
    }

    pub fn trace(&self) -> T {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn frobenius_norm(&self) -> T {
        self.m.iter().flatten().map(|&e| e * e).sum::<T>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|e| e.is_finite())
    }

    pub fn max_abs_diff(&self, o: &Self) -> T {
        let mut d = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                d = d.max((self.m[i][j] - o.m[i][j]).abs());
            }
        }
        d
    }

    pub fn is_symmetric(&self) -> bool {
        self.m[0][1] == self.m[1][0] && self.m[0][2] == self.m[2][0] && self.m[1][2] == self.m[2][1]
    }

    /// `(A + A^T) / 2`.
    pub fn symmetrized(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(|i, j| (self.m[i][j] + self.m[j][i]) * half)
    }

    #[inline(always)]
    pub fn mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        let r = &self.m;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        Self::from_fn(|i, j| (0..3).map(|k| self.m[i][k] * o.m[k][j]).sum())
    }

    pub fn cast<U: Real>(&self) -> Mat3<U> {
        Mat3::from_fn(|i, j| U::lit(self.m[i][j].to_f64_lossy()))
    }

    /// Eigen-decomposition of the symmetric part by cyclic Jacobi rotations.
    ///
    /// Returns eigenvalues in ascending order and the matching orthonormal
    /// eigenvectors as the columns of the second matrix.
    pub fn sym_eigen(&self) -> ([T; 3], Mat3<T>) {
        let mut a = self.symmetrized().m;
        let mut v = Mat3::<T>::identity().m;
        let two = T::lit(2.0);
        for _sweep in 0..64 {
            let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
            let diag = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
            if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
                break;
            }
            for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
                let apq = a[p][q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..3 {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..3 {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap_or(std::cmp::Ordering::Equal));
        let values = [a[order[0]][order[0]], a[order[1]][order[1]], a[order[2]][order[2]]];
        let vectors = Mat3::from_fn(|i, j| v[i][order[j]]);
        (values, vectors)
    }

    pub fn sym_eigenvalues(&self) -> [T; 3] {
        self.sym_eigen().0
    }

    pub fn min_eigenvalue(&self) -> T {
        self.sym_eigenvalues()[0]
    }

    /// A factor `L` with `L L^T` equal to the PSD projection of the
    /// symmetric part (negative eigenvalues are clamped to zero).
    pub fn psd_factor(&self) -> Mat3<T> {
        let (lam, q) = self.sym_eigen();
        let r = lam.map(|l| l.max(T::zero()).sqrt());
        Mat3::from_fn(|i, j| q.m[i][j] * r[j])
    }

    /// Lower-triangular Cholesky factor; `None` unless the matrix is
    /// symmetric positive definite.
    pub fn cholesky(&self) -> Option<Mat3<T>> {
        let a = &self.m;
        let tol = T::lit(1e-10) * (T::one() + self.frobenius_norm());
        for i in 0..3 {
            for j in 0..i {
                if (a[i][j] - a[j][i]).abs() > tol || !a[i][j].is_finite() {
                    return None;
                }
            }
        }
        let mut l = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..=i {
                let mut s = a[i][j];
                for k in 0..j {
                    s = s - l[i][k] * l[j][k];
                }
                if i == j {
                    if !(s > T::zero()) {
                        return None;
                    }
                    l[i][i] = s.sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        Some(Mat3 { m: l })
    }
}

impl<T: Real> Add for Mat3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::from_fn(|i, j| self.m[i][j] + o.m[i][j])
    }
}

impl<T: Real> Sub for Mat3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::from_fn(|i, j| self.m[i][j] - o.m[i][j])
    }
}

impl<T: Real> Mul for Mat3<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.mul_mat(&o)
    }
}

impl<T: Real> Mul<Vec3<T>> for Mat3<T> {
    type Output = Vec3<T>;
    fn mul(self, v: Vec3<T>) -> Vec3<T> {
        self.mul_vec(v)
    }
}

/// Rotation about an arbitrary axis (Rodrigues' formula).
pub fn rotation<T: Real>(axis: Vec3<T>, angle: T) -> Mat3<T> {
    let n = axis.norm();
    let k = axis.scale(T::one() / n);
    let (s, c) = angle.sin_cos();
    let cross = Mat3::from_rows([[T::zero(), -k.z, k.y], [k.z, T::zero(), -k.x], [-k.y, k.x, T::zero()]]);
    let kk = k.outer(k);
    Mat3::identity().scale(c) + cross.scale(s) + kk.scale(T::one() - c)
}
