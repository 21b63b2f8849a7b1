use rayon::prelude::*;

use super::neighbors::SortedX;
use super::Ensemble;
use crate::error::{Error, Result};
use crate::kernel::{a_matrix, KernelParams};
use crate::linalg::{Mat3, Vec3};
use crate::pairs::{radial_sum, Soa};
use crate::scalar::Real;

/// `max_i (1/(N-1)) sum_{j != i} max(|V_i - V_j|, eps)^gamma`.
///
/// The supremum over velocity space is taken over the particle locations,
/// and the self-atom is excluded since its term is infinite for an atomic
/// measure.
pub fn j_gamma_hat<T: Real>(ens: &Ensemble<T>, kp: &KernelParams<T>) -> T {
    let soa = Soa::new(ens.velocities());
    let n1 = T::from_count(ens.len() - 1);
    let sums: Vec<T> = (0..ens.len()).into_par_iter().map(|i| radial_sum(&soa, soa.get(i), Some(i), kp)).collect();
    sums.into_iter().fold(T::neg_infinity(), T::max) / n1
}

/// `max_p (1/N) sum_j max(|p - V_j|, eps)^gamma` over arbitrary probes.
pub fn j_gamma_probes<T: Real>(ens: &Ensemble<T>, kp: &KernelParams<T>, probes: &[Vec3<T>]) -> Result<T> {
    if probes.is_empty() {
        return Err(Error::param("probes", "need at least one probe"));
    }
    let soa = Soa::new(ens.velocities());
    let n = T::from_count(ens.len());
    let sums: Vec<T> = probes.par_iter().map(|&p| radial_sum(&soa, p, None, kp)).collect();
    Ok(sums.into_iter().fold(T::neg_infinity(), T::max) / n)
}

/// A `per_axis^3` lattice spanning the bounding box of the ensemble.
pub fn grid_probes<T: Real>(ens: &Ensemble<T>, per_axis: usize) -> Vec<Vec3<T>> {
    let v = ens.velocities();
    let mut lo = v[0];
    let mut hi = v[0];
    for p in v {
        lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
        hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
    }
    let per_axis = per_axis.max(1);
    let at = |k: usize, d: usize| {
        if per_axis == 1 {
            (lo[d] + hi[d]) / T::lit(2.0)
        } else {
            lo[d] + (hi[d] - lo[d]) * T::from_count(k) / T::from_count(per_axis - 1)
        }
    };
    let mut out = Vec::with_capacity(per_axis.pow(3));
    for a in 0..per_axis {
        for b in 0..per_axis {
            for c in 0..per_axis {
                out.push(Vec3::new(at(a, 0), at(b, 1), at(c, 2)));
            }
        }
    }
    out
}

/// Nearest-neighbor estimate of `H(f) = int f log f`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyEstimate<T> {
    /// `+inf` when the estimate is degenerate.
    pub value: T,
    /// Some particle has a coincident neighbor, so the sample has atoms and
    /// no density.
    pub degenerate: bool,
}

/// `psi(n)` for a positive integer.
fn digamma_int(n: usize) -> f64 {
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    -EULER_GAMMA + (1..n).map(|m| 1.0 / m as f64).sum::<f64>()
}

/// Kozachenko-Leonenko estimator with `k` neighbors, negated so that it
/// estimates `int f log f` rather than the differential entropy:
///
/// `-(psi(N) - psi(k) + ln(4 pi / 3) + (3/N) sum_i ln eps_i)`.
pub fn entropy_hat<T: Real>(ens: &Ensemble<T>, k: usize) -> Result<EntropyEstimate<T>> {
    let n = ens.len();
    if k == 0 || n <= k {
        return Err(Error::param("k_neighbors", format!("need 1 <= k < N, got k = {k}, N = {n}")));
    }
    let d2 = SortedX::new(ens.velocities()).kth_distance2(k);
    if d2.iter().any(|&d| d <= T::zero()) {
        return Ok(EntropyEstimate { value: T::infinity(), degenerate: true });
    }
    // ln eps_i = ln(d2_i) / 2.
    let log_sum: f64 = d2.iter().map(|&d| d.to_f64_lossy().ln()).sum::<f64>() / 2.0;
    let h = digamma_int(n) - digamma_int(k) + (4.0 * std::f64::consts::PI / 3.0).ln() + 3.0 * log_sum / n as f64;
    Ok(EntropyEstimate { value: T::lit(-h), degenerate: false })
}

/// Silverman's rule in three dimensions: `h = s (4 / (5N))^(1/7)` with
/// `s^2` the mean per-axis variance.
pub fn silverman_bandwidth<T: Real>(ens: &Ensemble<T>) -> T {
    let s = (ens.covariance().trace() / T::lit(3.0)).sqrt();
    s * (T::lit(4.0) / (T::lit(5.0) * T::from_count(ens.len()))).powf(T::lit(1.0 / 7.0))
}

/// Gaussian kernels are cut at this many bandwidths (relative weight
/// `exp(-40.5)`).
const KDE_REACH: f64 = 9.0;

/// `L^p` norm of the Gaussian kernel density estimate in plug-in form:
/// `((1/N) sum_i fhat_{-i}(V_i)^(p-1))^(1/p)`, where `fhat_{-i}` leaves
/// particle `i` out.
pub fn lp_norm_hat<T: Real>(ens: &Ensemble<T>, p: T, bandwidth: T) -> Result<T> {
    if !(p > T::one()) || !p.is_finite() {
        return Err(Error::param("p", format!("{p} must exceed 1")));
    }
    if !(bandwidth > T::zero()) || !bandwidth.is_finite() {
        return Err(Error::param("bandwidth", format!("{bandwidth} must be positive")));
    }
    let n = ens.len();
    let h = bandwidth;
    let reach = T::lit(KDE_REACH) * h;
    let reach2 = reach * reach;
    let inv2h2 = T::one() / (T::lit(2.0) * h * h);
    let sums = SortedX::new(ens.velocities()).window_sums(reach, |a, b| {
        let d2 = (a - b).norm_squared();
        if d2 <= reach2 {
            (-d2 * inv2h2).exp()
        } else {
            T::zero()
        }
    });
    let norm = T::from_count(n - 1) * (T::lit(2.0) * T::PI()).powf(T::lit(1.5)) * h * h * h;
    let e = p - T::one();
    let mean = sums.iter().map(|&s| (s / norm).powf(e)).sum::<T>() / T::from_count(n);
    Ok(mean.powf(T::one() / p))
}

/// `abar(v) = (1/N) sum_j a(v - V_j)`.
pub fn abar<T: Real>(ens: &Ensemble<T>, v: Vec3<T>, kp: &KernelParams<T>) -> Mat3<T> {
    let mut s = Mat3::zero();
    for &w in ens.velocities() {
        s = s + a_matrix(v - w, kp);
    }
    s.scale(T::one() / T::from_count(ens.len()))
}

/// `cbar(v) = -2 (gamma + 3) (1/N) sum_j max(|v - V_j|, eps)^gamma`.
pub fn cbar<T: Real>(ens: &Ensemble<T>, v: Vec3<T>, kp: &KernelParams<T>) -> T {
    let sum: T = ens.velocities().iter().map(|&w| kp.radial((v - w).norm_squared())).sum();
    T::lit(-2.0) * (kp.gamma() + T::lit(3.0)) * sum / T::from_count(ens.len())
}

/// `min_v lambda_min(abar(v)) / (1 + |v|)^gamma` over the probes: the
/// largest ellipticity constant consistent with them.
pub fn ellipticity_floor<T: Real>(ens: &Ensemble<T>, kp: &KernelParams<T>, probes: &[Vec3<T>]) -> Result<T> {
    if probes.is_empty() {
        return Err(Error::param("probes", "need at least one probe"));
    }
    Ok(probes
        .iter()
        .map(|&v| abar(ens, v, kp).min_eigenvalue() / (T::one() + v.norm()).powf(kp.gamma()))
        .fold(T::infinity(), T::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample_initial, InitialSpec};
    use crate::linalg::rotation;

    fn kp(gamma: f64, eps: f64) -> KernelParams<f64> {
        KernelParams::new(gamma, eps).unwrap()
    }

    fn gaussian(n: usize, seed: u64) -> Ensemble<f64> {
        sample_initial(&InitialSpec::standard_gaussian(), n, seed).unwrap()
    }

    #[test]
    fn j_gamma_examples() {
        let two = Ensemble::new(vec![Vec3::zero(), Vec3::new(1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(j_gamma_hat(&two, &kp(-1.0, 1e-8)), 1.0);
        let same = Ensemble::new(vec![Vec3::new(0.3, 0.1, -2.0); 9]).unwrap();
        assert!((j_gamma_hat(&same, &kp(-1.0, 1e-2)) - 100.0).abs() < 1e-10);
        let g = gaussian(500, 1);
        assert_eq!(j_gamma_hat(&g, &kp(0.0, 1e-4)), 1.0);
        let shifted = g.shifted(Vec3::new(0.25, -0.5, 0.125));
        let (a, b) = (j_gamma_hat(&g, &kp(-1.5, 1e-4)), j_gamma_hat(&shifted, &kp(-1.5, 1e-4)));
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn grid_probes_cover_box() {
        let g = gaussian(100, 2);
        let probes = grid_probes(&g, 3);
        assert_eq!(probes.len(), 27);
        let jp = j_gamma_probes(&g, &kp(-1.0, 1e-4), &probes).unwrap();
        assert!(jp.is_finite() && jp > 0.0);
        assert!(j_gamma_probes(&g, &kp(-1.0, 1e-4), &[]).is_err());
    }

    #[test]
    fn entropy_of_gaussians() {
        let g = gaussian(10_000, 3);
        let h = entropy_hat(&g, 4).unwrap();
        assert!(!h.degenerate);
        let exact = -1.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((h.value - exact).abs() < 0.15, "{} vs {exact}", h.value);
        let s = 2.5;
        let scaled = g.mapped(|v| v.scale(s)).unwrap();
        let hs = entropy_hat(&scaled, 4).unwrap().value;
        assert!((hs - h.value + 3.0 * s.ln()).abs() < 0.2);
    }

    #[test]
    fn entropy_of_atoms_is_degenerate() {
        let mut v = vec![Vec3::zero(); 10];
        v.extend(vec![Vec3::new(1.0, 2.0, 3.0); 10]);
        let h = entropy_hat(&Ensemble::new(v).unwrap(), 4).unwrap();
        assert!(h.degenerate && h.value == f64::INFINITY);
        assert!(entropy_hat(&gaussian(4, 1), 4).is_err());
    }

    #[test]
    fn l2_norm_of_gaussian() {
        let g = gaussian(10_000, 4);
        let h = silverman_bandwidth(&g);
        let l2 = lp_norm_hat(&g, 2.0, h).unwrap();
        let exact = (4.0 * std::f64::consts::PI).powf(-0.75);
        assert!((l2 / exact - 1.0).abs() < 0.1, "{l2}");
        // Scaling the data and the bandwidth by s scales the estimate by
        // s^(-3(p-1)/p).
        let (s, p) = (0.5, 3.0);
        let base = lp_norm_hat(&g, p, h).unwrap();
        let scaled = lp_norm_hat(&g.mapped(|v| v.scale(s)).unwrap(), p, h * s).unwrap();
        let expected = base * s.powf(-3.0 * (p - 1.0) / p);
        assert!((scaled / expected - 1.0).abs() < 1e-9);
        assert!(lp_norm_hat(&g, 1.0, h).is_err());
        assert!(lp_norm_hat(&g, 2.0, 0.0).is_err());
    }

    #[test]
    fn abar_and_cbar_examples() {
        let atom = Ensemble::new(vec![Vec3::zero(); 2]).unwrap();
        let k = kp(-1.0, 1e-8);
        let a = abar(&atom, Vec3::new(1.0, 0.0, 0.0), &k);
        assert!(a.max_abs_diff(&Mat3::from_diag([0.0, 1.0, 1.0])) < 1e-15);
        assert_eq!(cbar(&atom, Vec3::new(1.0, 0.0, 0.0), &k), -4.0);
        let ring = Ensemble::new(vec![Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, -2.0, 0.0)]).unwrap();
        assert_eq!(cbar(&ring, Vec3::zero(), &k), -2.0);
        assert_eq!(ellipticity_floor(&atom, &k, &[Vec3::zero()]).unwrap(), 0.0);
        // The prefactor vanishes as gamma -> -3 (gamma = -3 itself is rejected).
        let steep = kp(-3.0 + 1e-9, 1e-8);
        let c = cbar(&atom, Vec3::new(1.0, 0.0, 0.0), &steep);
        assert!(c < 0.0 && c > -3e-9, "{c}");
    }

    #[test]
    fn ellipticity_is_rotation_invariant() {
        let g = gaussian(300, 6);
        let k = kp(-1.0, 1e-6);
        let probes = [Vec3::zero(), Vec3::new(0.5, -1.0, 0.2), Vec3::new(2.0, 1.0, 0.0)];
        let r = rotation(Vec3::new(1.0, 2.0, -0.5), 0.83);
        let rg = g.mapped(|v| r.mul_vec(v)).unwrap();
        let rp: Vec<_> = probes.iter().map(|&v| r.mul_vec(v)).collect();
        let c0 = ellipticity_floor(&g, &k, &probes).unwrap();
        let c1 = ellipticity_floor(&rg, &k, &rp).unwrap();
        assert!((c0 - c1).abs() < 1e-10);
        for v in probes {
            assert!(abar(&g, v, &k).min_eigenvalue() >= -1e-12);
        }
    }
}
