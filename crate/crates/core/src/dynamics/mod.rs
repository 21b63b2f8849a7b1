//! Euler-Maruyama stepping of the interacting particle system, alone and
//! as a coupled pair driven by shared noise.
//!
//! One step of particle `i` reads only the frozen pre-step ensemble:
//!
//! ```text
//! V_i += (dt/N) sum_j b(V_i - V_j) + sqrt(dt/N) sum_j sigma(V_i - V_j) xi_ij
//! ```
//!
//! [`NoiseMode`] selects how the martingale term is realized.

mod interaction;
mod run;

pub use run::{
    run, run_coupled, run_coupled_from, run_from, Bandwidth, CoupledConfig, CoupledRecord, CoupledTimeSeries,
    EstimatorSettings, JSup, Record, RecordFlags, SimConfig, TimeSeries, STIFF_THRESHOLD,
};

pub(crate) use interaction::{reference as reference_sums, single as single_sums, Route};

use rayon::prelude::*;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::kernel::{sigma, KernelParams};
use crate::linalg::{Mat3, Vec3};
use crate::noise::NoiseStream;
use crate::pairs::{CoupledSums, PairSums};
use crate::scalar::Real;
use crate::transport::CouplingPlan;

/// Realization of `sum_j sigma(V_i - V_j) xi_ij` for one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NoiseMode {
    /// Drift only.
    Off,
    /// One Gaussian per atom, `xi_ij = noise(step, i N + j)`: O(N^2)
    /// Gaussians per step.
    PerAtom,
    /// `atoms` atoms drawn uniformly per particle, scaled by `sqrt(dt/atoms)`.
    Subsampled { atoms: usize },
    /// The sum is Gaussian with covariance `sum_j sigma sigma^T` given the
    /// pre-step state, so it is drawn directly from that law with one 3-d
    /// Gaussian per particle (two per pair in the coupled step). Identical
    /// in law to [`NoiseMode::PerAtom`].
    #[default]
    Aggregated,
}

impl NoiseMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseMode::Subsampled { atoms: 0 } => Err(Error::param("atoms", "must be at least 1")),
            _ => Ok(()),
        }
    }
}

/// A particle left the finite range during a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("non-finite velocity of particle {particle} in step {step}")]
pub struct BlowUp {
    /// Zero-based index of the step that failed.
    pub step: u64,
    pub particle: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome<T> {
    pub ensemble: Ensemble<T>,
    /// `J_gamma` estimate of the pre-step ensemble, a by-product of the pair
    /// sums.
    pub j_gamma: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledOutcome<T> {
    pub a: Ensemble<T>,
    /// In the original indexing of the second ensemble.
    pub b: Ensemble<T>,
    pub j_a: T,
    pub j_b: T,
}

fn j_from<T: Real>(sums: impl Iterator<Item = T>, n: usize) -> T {
    sums.fold(T::neg_infinity(), T::max) / T::from_count(n - 1)
}

fn check_finite<T: Real>(v: &[Vec3<T>], step: u64) -> std::result::Result<(), BlowUp> {
    match v.iter().position(|x| !x.norm_squared().is_finite()) {
        Some(particle) => Err(BlowUp { step, particle }),
        None => Ok(()),
    }
}

fn gaussian_pair<T: Real>(noise: &NoiseStream, step: u64, i: usize) -> (Vec3<T>, Vec3<T>) {
    let mut c = noise.cursor(step, 2 * i as u64);
    (c.next_gaussian(), c.next_gaussian())
}

/// Diffusion sum over explicit atoms, for the per-atom and subsampled modes.
/// Returns `(sum_k sigma_A xi_k, sum_k sigma_B xi_k)` and the scale count.
fn atom_noise<T: Real>(
    a: &[Vec3<T>],
    b: Option<&[Vec3<T>]>,
    i: usize,
    kp: &KernelParams<T>,
    noise: &NoiseStream,
    step: u64,
    mode: NoiseMode,
) -> (Vec3<T>, Vec3<T>, usize) {
    let n = a.len();
    let mut xa = Vec3::zero();
    let mut xb = Vec3::zero();
    let mut add = |j: usize, xi: Vec3<T>| {
        xa += sigma(a[i] - a[j], kp).mul_vec(xi);
        if let Some(b) = b {
            xb += sigma(b[i] - b[j], kp).mul_vec(xi);
        }
    };
    match mode {
        NoiseMode::PerAtom => {
            let mut c = noise.cursor(step, (i * n) as u64);
            for j in 0..n {
                add(j, c.next_gaussian());
            }
            (xa, xb, n)
        }
        NoiseMode::Subsampled { atoms } => {
            let first = (i * atoms) as u64;
            let mut c = noise.cursor(step, first);
            let mut pick = noise.atom_choices(step, first);
            for _ in 0..atoms {
                let j = pick.next_index(n);
                add(j, c.next_gaussian());
            }
            (xa, xb, atoms)
        }
        NoiseMode::Off | NoiseMode::Aggregated => unreachable!("no explicit atoms in this mode"),
    }
}

fn drift_part<T: Real>(v: Vec3<T>, s: &PairSums<T>, dt_n: T) -> Vec3<T> {
    v + s.drift.scale(dt_n)
}

/// One synchronous Euler-Maruyama step. Returns the new ensemble and the
/// `J_gamma` estimate of the old one.
pub fn step<T: Real>(
    ens: &Ensemble<T>,
    kp: &KernelParams<T>,
    dt: T,
    noise: &NoiseStream,
    step_index: u64,
    mode: NoiseMode,
) -> std::result::Result<StepOutcome<T>, BlowUp> {
    step_routed(ens, kp, dt, noise, step_index, mode, Route::for_kernel(kp))
}

pub(crate) fn step_routed<T: Real>(
    ens: &Ensemble<T>,
    kp: &KernelParams<T>,
    dt: T,
    noise: &NoiseStream,
    step_index: u64,
    mode: NoiseMode,
    route: Route,
) -> std::result::Result<StepOutcome<T>, BlowUp> {
    let v = ens.velocities();
    let n = v.len();
    let aggregated = mode == NoiseMode::Aggregated;
    let sums = interaction::single(v, kp, aggregated, route);
    let dt_n = dt / T::from_count(n);
    let next: Vec<Vec3<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = &sums[i];
            let base = drift_part(v[i], s, dt_n);
            match mode {
                NoiseMode::Off => base,
                NoiseMode::Aggregated => {
                    let (z, _) = gaussian_pair::<T>(noise, step_index, i);
                    base + s.cov.psd_factor().mul_vec(z).scale(dt_n.sqrt())
                }
                NoiseMode::PerAtom | NoiseMode::Subsampled { .. } => {
                    let (x, _, m) = atom_noise(v, None, i, kp, noise, step_index, mode);
                    base + x.scale((dt / T::from_count(m)).sqrt())
                }
            }
        })
        .collect();
    check_finite(&next, step_index)?;
    Ok(StepOutcome { ensemble: Ensemble::from_trusted(next), j_gamma: j_from(sums.iter().map(|s| s.jsum), n) })
}

/// Draws `(X_A, X_B)` jointly Gaussian with `Cov X_A = S_AA`,
/// `Cov(X_B - X_A) = S_DD` and `Cov(X_A, X_B - X_A) = S_AD`.
///
/// `X_A = Q L^(1/2) z1` exactly as in the single step, and
/// `D = X_B - X_A = G z1 + R^(1/2) z2` with `G = S_DA Q L^(-1/2)` and
/// `R = S_DD - G G^T`.
fn joint_increment<T: Real>(s: &CoupledSums<T>, z1: Vec3<T>, z2: Vec3<T>) -> (Vec3<T>, Vec3<T>) {
    let xa = s.a.cov.psd_factor().mul_vec(z1);
    if s.dd == Mat3::zero() && s.ad == Mat3::zero() {
        return (xa, xa);
    }
    let (lam, q) = s.a.cov.sym_eigen();
    let top = lam[2].max(T::zero());
    let floor = T::lit(64.0) * T::epsilon() * top;
    let sda = s.ad.transpose();
    let g = Mat3::from_fn(|r, k| {
        if lam[k] > floor {
            let mut acc = T::zero();
            for m in 0..3 {
                acc = acc + sda.m[r][m] * q.m[m][k];
            }
            acc / lam[k].sqrt()
        } else {
            T::zero()
        }
    });
    let resid = (s.dd - g * g.transpose()).symmetrized();
    let d = g.mul_vec(z1) + resid.psd_factor().mul_vec(z2);
    (xa, xa + d)
}

/// One coupled step. Particle `i` of `a` is paired with particle
/// `plan.permutation()[i]` of `b`, and each pair shares its noise.
///
/// The update of `a` is bitwise identical to [`step`] with the same noise.
pub fn step_coupled<T: Real>(
    a: &Ensemble<T>,
    b: &Ensemble<T>,
    plan: &CouplingPlan<T>,
    kp: &KernelParams<T>,
    dt: T,
    noise: &NoiseStream,
    step_index: u64,
    mode: NoiseMode,
) -> Result<std::result::Result<CoupledOutcome<T>, BlowUp>> {
    if a.len() != b.len() || plan.len() != a.len() {
        return Err(Error::SizeMismatch { left: a.len(), right: b.len().min(plan.len()) });
    }
    Ok(step_coupled_routed(a, b, plan.permutation(), kp, dt, noise, step_index, mode, Route::for_kernel(kp)))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn step_coupled_routed<T: Real>(
    a: &Ensemble<T>,
    b: &Ensemble<T>,
    perm: &[usize],
    kp: &KernelParams<T>,
    dt: T,
    noise: &NoiseStream,
    step_index: u64,
    mode: NoiseMode,
    route: Route,
) -> std::result::Result<CoupledOutcome<T>, BlowUp> {
    let va = a.velocities();
    let n = va.len();
    let vb: Vec<Vec3<T>> = perm.iter().map(|&j| b.velocities()[j]).collect();
    let aggregated = mode == NoiseMode::Aggregated;
    let sums = interaction::coupled(va, &vb, kp, aggregated, route);
    let dt_n = dt / T::from_count(n);
    let next: Vec<(Vec3<T>, Vec3<T>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = &sums[i];
            let (ba, bb) = (drift_part(va[i], &s.a, dt_n), drift_part(vb[i], &s.b, dt_n));
            match mode {
                NoiseMode::Off => (ba, bb),
                NoiseMode::Aggregated => {
                    let (z1, z2) = gaussian_pair(noise, step_index, i);
                    let (xa, xb) = joint_increment(s, z1, z2);
                    let sc = dt_n.sqrt();
                    (ba + xa.scale(sc), bb + xb.scale(sc))
                }
                NoiseMode::PerAtom | NoiseMode::Subsampled { .. } => {
                    let (xa, xb, m) = atom_noise(va, Some(&vb), i, kp, noise, step_index, mode);
                    let sc = (dt / T::from_count(m)).sqrt();
                    (ba + xa.scale(sc), bb + xb.scale(sc))
                }
            }
        })
        .collect();
    let new_a: Vec<Vec3<T>> = next.iter().map(|p| p.0).collect();
    let mut new_b = vec![Vec3::zero(); n];
    for (i, &j) in perm.iter().enumerate() {
        new_b[j] = next[i].1;
    }
    check_finite(&new_a, step_index)?;
    check_finite(&new_b, step_index)?;
    Ok(CoupledOutcome {
        a: Ensemble::from_trusted(new_a),
        b: Ensemble::from_trusted(new_b),
        j_a: j_from(sums.iter().map(|s| s.a.jsum), n),
        j_b: j_from(sums.iter().map(|s| s.b.jsum), n),
    })
}
