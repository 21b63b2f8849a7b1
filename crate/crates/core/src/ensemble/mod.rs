//! Equally weighted velocity particles standing in for `f_t`, plus the
//! estimators for every functional the stability and a priori estimates use.

mod estimators;
mod neighbors;

pub use estimators::{
    abar, cbar, ellipticity_floor, entropy_hat, grid_probes, j_gamma_hat, j_gamma_probes, lp_norm_hat,
    silverman_bandwidth, EntropyEstimate,
};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::noise::NoiseStream;
use crate::scalar::Real;

/// `N >= 2` finite velocities, each carrying mass `1/N`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble<T> {
    velocities: Vec<Vec3<T>>,
}

impl<T: Real> Ensemble<T> {
    pub fn new(velocities: Vec<Vec3<T>>) -> Result<Self> {
        if velocities.len() < 2 {
            return Err(Error::param("n", format!("an ensemble needs at least 2 particles, got {}", velocities.len())));
        }
        if velocities.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { velocities })
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_trusted(velocities: Vec<Vec3<T>>) -> Self {
        debug_assert!(velocities.len() >= 2);
        Self { velocities }
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn velocities(&self) -> &[Vec3<T>] {
        &self.velocities
    }

    pub fn into_velocities(self) -> Vec<Vec3<T>> {
        self.velocities
    }

    pub fn mean(&self) -> Vec3<T> {
        mean_of(&self.velocities)
    }

    /// Empirical covariance with the `1/N` normalization.
    pub fn covariance(&self) -> Mat3<T> {
        let m = self.mean();
        let n = T::from_count(self.len());
        let mut c = Mat3::zero();
        for v in &self.velocities {
            let d = *v - m;
            c = c + d.outer(d);
        }
        c.scale(T::one() / n)
    }

    /// `m_k = (1/N) sum |V_i|^k`.
    pub fn moment(&self, k: T) -> T {
        moment_of(&self.velocities, k)
    }

    pub fn shifted(&self, u: Vec3<T>) -> Self {
        Self::from_trusted(self.velocities.iter().map(|&v| v + u).collect())
    }

    pub fn mapped(&self, f: impl Fn(Vec3<T>) -> Vec3<T>) -> Result<Self> {
        Self::new(self.velocities.iter().map(|&v| f(v)).collect())
    }
}

impl<T> AsRef<[Vec3<T>]> for Ensemble<T> {
    fn as_ref(&self) -> &[Vec3<T>] {
        &self.velocities
    }
}

pub(crate) fn mean_of<T: Real>(v: &[Vec3<T>]) -> Vec3<T> {
    let mut s = Vec3::zero();
    for &x in v {
        s += x;
    }
    s.scale(T::one() / T::from_count(v.len()))
}

pub(crate) fn moment_of<T: Real>(v: &[Vec3<T>], k: T) -> T {
    let n = T::from_count(v.len());
    if k == T::zero() {
        return T::one();
    }
    let sum: T = if k == T::lit(2.0) {
        v.iter().map(|x| x.norm_squared()).sum()
    } else if k == T::lit(4.0) {
        v.iter().map(|x| x.norm_squared() * x.norm_squared()).sum()
    } else {
        let e = k / T::lit(2.0);
        v.iter().map(|x| x.norm_squared().powf(e)).sum()
    };
    sum / n
}

/// Law of the initial particles.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialSpec<T> {
    Gaussian { mean: Vec3<T>, covariance: Mat3<T> },
    Mixture { weights: [T; 2], means: [Vec3<T>; 2], covariances: [Mat3<T>; 2] },
    UniformBall { center: Vec3<T>, radius: T },
}

impl<T: Real> InitialSpec<T> {
    pub fn standard_gaussian() -> Self {
        InitialSpec::Gaussian { mean: Vec3::zero(), covariance: Mat3::identity() }
    }

    pub fn validate(&self) -> Result<()> {
        self.prepare().map(|_| ())
    }

    fn prepare(&self) -> Result<Prepared<T>> {
        let chol = |c: &Mat3<T>| c.cholesky().ok_or(Error::NotSpd { what: "initial covariance" });
        match self {
            InitialSpec::Gaussian { mean, covariance } => {
                Ok(Prepared::Gaussian { mean: *mean, factor: chol(covariance)? })
            }
            InitialSpec::Mixture { weights, means, covariances } => {
                let [w0, w1] = *weights;
                if !(w0 >= T::zero() && w1 >= T::zero()) || (w0 + w1 - T::one()).abs() > T::lit(1e-9) {
                    return Err(Error::param("weights", "mixture weights must be non-negative and sum to 1"));
                }
                Ok(Prepared::Mixture {
                    first_weight: w0,
                    means: *means,
                    factors: [chol(&covariances[0])?, chol(&covariances[1])?],
                })
            }
            InitialSpec::UniformBall { center, radius } => {
                if !(*radius > T::zero()) || !radius.is_finite() {
                    return Err(Error::param("radius", "must be positive and finite"));
                }
                Ok(Prepared::Ball { center: *center, radius: *radius })
            }
        }
    }
}

enum Prepared<T> {
    Gaussian { mean: Vec3<T>, factor: Mat3<T> },
    Mixture { first_weight: T, means: [Vec3<T>; 2], factors: [Mat3<T>; 2] },
    Ball { center: Vec3<T>, radius: T },
}

/// Draws `n` i.i.d. particles. Particle `i` depends only on `(seed, i)`.
pub fn sample_initial<T: Real>(spec: &InitialSpec<T>, n: usize, seed: u64) -> Result<Ensemble<T>> {
    sample_initial_stream(spec, n, seed, 0)
}

pub(crate) fn sample_initial_stream<T: Real>(
    spec: &InitialSpec<T>,
    n: usize,
    seed: u64,
    stream: u64,
) -> Result<Ensemble<T>> {
    if n < 2 {
        return Err(Error::param("n", format!("need at least 2 particles, got {n}")));
    }
    let prepared = spec.prepare()?;
    let noise = NoiseStream::new(seed);
    let velocities: Vec<Vec3<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cur = noise.initial(stream, i as u64);
            let g = cur.gaussian3();
            let g = Vec3::new(T::lit(g[0]), T::lit(g[1]), T::lit(g[2]));
            match &prepared {
                Prepared::Gaussian { mean, factor } => *mean + factor.mul_vec(g),
                Prepared::Mixture { first_weight, means, factors } => {
                    let k = if T::lit(cur.uniform()) <= *first_weight { 0 } else { 1 };
                    means[k] + factors[k].mul_vec(g)
                }
                Prepared::Ball { center, radius } => {
                    let r = T::lit(cur.uniform()).cbrt() * *radius;
                    let norm = g.norm();
                    let dir = if norm > T::zero() {
                        g.scale(T::one() / norm)
                    } else {
                        Vec3::new(T::one(), T::zero(), T::zero())
                    };
                    // Rounding can push |dir| a hair above one.
                    let p = dir.scale(r);
                    let len = p.norm();
                    *center + if len > *radius { p.scale(*radius / len) } else { p }
                }
            }
        })
        .collect();
    Ensemble::new(velocities)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_reproducible() {
        let spec = InitialSpec::<f64>::standard_gaussian();
        let a = sample_initial(&spec, 4, 7).unwrap();
        let b = sample_initial(&spec, 4, 7).unwrap();
        assert_eq!(a, b);
        let longer = sample_initial(&spec, 10, 7).unwrap();
        assert_eq!(&longer.velocities()[..4], a.velocities());
        assert_ne!(sample_initial(&spec, 4, 8).unwrap(), a);
    }

    #[test]
    fn ball_support() {
        let spec = InitialSpec::UniformBall { center: Vec3::new(1.0, -2.0, 0.5), radius: 0.3f64 };
        let e = sample_initial(&spec, 5000, 3).unwrap();
        assert!(e.velocities().iter().all(|v| (*v - Vec3::new(1.0, -2.0, 0.5)).norm() <= 0.3));
        // E|V-c|^2 = 3 r^2 / 5 for the uniform ball.
        let m2 = e.shifted(Vec3::new(-1.0, 2.0, -0.5)).moment(2.0);
        assert!((m2 - 0.6 * 0.09).abs() < 0.003);
    }

    #[test]
    fn gaussian_covariance_converges() {
        let e = sample_initial(&InitialSpec::<f64>::standard_gaussian(), 100_000, 11).unwrap();
        let err = (e.covariance() - Mat3::identity()).frobenius_norm();
        assert!(err < 0.03, "{err}");
        assert!((e.moment(2.0) - 3.0).abs() < 0.09);
    }

    #[test]
    fn mixture_weights() {
        let spec = InitialSpec::Mixture {
            weights: [0.25, 0.75],
            means: [Vec3::new(-5.0, 0.0, 0.0), Vec3::new(5.0, 0.0, 0.0)],
            covariances: [Mat3::identity(), Mat3::identity()],
        };
        let e = sample_initial(&spec, 20_000, 5).unwrap();
        let left = e.velocities().iter().filter(|v| v.x < 0.0).count() as f64 / 20_000.0;
        assert!((left - 0.25).abs() < 0.015);
        let bad =
            InitialSpec::Mixture { weights: [0.5, 0.6], means: [Vec3::zero(); 2], covariances: [Mat3::identity(); 2] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rejects_non_spd() {
        let spec = InitialSpec::Gaussian { mean: Vec3::zero(), covariance: Mat3::from_diag([1.0, -1.0, 1.0]) };
        assert_eq!(sample_initial(&spec, 4, 1).unwrap_err(), Error::NotSpd { what: "initial covariance" });
        assert!(sample_initial(&InitialSpec::<f64>::standard_gaussian(), 1, 1).is_err());
    }

    #[test]
    fn moment_examples() {
        let e = Ensemble::new(vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(e.moment(0.0), 1.0);
        assert_eq!(e.moment(2.0), 1.0);
        assert_eq!(e.moment(3.0), 1.0);
        assert!(Ensemble::new(vec![Vec3::new(f64::NAN, 0.0, 0.0), Vec3::zero()]).is_err());
    }
}
