//! Fast invariant suite: kernel identities, exactness of the transport
//! solver, conservation in a drift-only step, agreement of the fused pair
//! sums with literal kernel evaluation, and closed-form spot checks.
//!
//! Runs in well under a second per check and is what `landau validate`
//! executes.

use std::fmt;

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{reference_sums, single_sums, step_routed, NoiseMode, Route};
use crate::ensemble::{sample_initial, InitialSpec};
use crate::experiments::{admissible_exponents, lp_blowup_bound, maxwell_covariance_oracle};
use crate::kernel::{
    a_matrix, b_drift, drift_lipschitz_bound, sigma, sigma_lipschitz_bound, trace_a, KernelFault, KernelParams,
};
use crate::linalg::{Mat3, Vec3};
use crate::noise::NoiseStream;
use crate::transport::{w2_bruteforce, w2_exact};

/// Exponents sampled by the kernel checks.
pub const KERNEL_GAMMAS: [f64; 4] = [-0.5, -1.0, -2.0, -2.9];
/// Distance floor used throughout the suite.
pub const EPS: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let status = if c.passed { "ok" } else { "FAIL" };
            writeln!(f, "{:<width$}  {:<4}  {}", c.name, status, c.detail)?;
        }
        Ok(())
    }
}

/// Random relative velocities with uniform direction and `|z|` log-uniform
/// on `[lo, hi]`.
pub struct KernelSampler {
    rng: ChaCha8Rng,
    noise: NoiseStream,
    count: u64,
}

impl KernelSampler {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), noise: NoiseStream::new(seed), count: 0 }
    }

    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn direction(&mut self) -> Vec3<f64> {
        loop {
            let g: Vec3<f64> = self.noise.gaussian(u64::MAX, self.count);
            self.count += 1;
            let r = g.norm();
            if r > 1e-8 {
                return g.scale(1.0 / r);
            }
        }
    }

    pub fn vector(&mut self, lo: f64, hi: f64) -> Vec3<f64> {
        let r = (lo.ln() + (hi / lo).ln() * self.uniform()).exp();
        self.direction().scale(r)
    }

    pub fn gamma(&mut self) -> f64 {
        KERNEL_GAMMAS[(self.rng.next_u64() % KERNEL_GAMMAS.len() as u64) as usize]
    }
}

/// Worst deviations of the kernel identities over `samples` random `(z, gamma)`
/// with `|z|` in `[EPS, 10]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KernelDeviations {
    /// `max |sigma sigma^T - a|_F`.
    pub factorization: f64,
    /// `max |a z| / (|a|_F |z|)`.
    pub null_direction: f64,
    /// `min lambda_min(a)`.
    pub min_eigenvalue: f64,
    /// `max |b(z) + b(-z)| + |a(z) - a(-z)|_F`.
    pub parity: f64,
    /// `max |tr a - 2 w |z|^2| / (1 + tr a)`.
    pub trace: f64,
}

pub fn kernel_deviations(samples: usize, seed: u64, fault: Option<KernelFault>) -> KernelDeviations {
    let mut rng = KernelSampler::new(seed);
    let mut dev = KernelDeviations { min_eigenvalue: f64::INFINITY, ..Default::default() };
    for _ in 0..samples {
        let gamma = rng.gamma();
        let mut kp = KernelParams::new(gamma, EPS).expect("fixed exponents are valid");
        if let Some(f) = fault {
            kp = kp.with_fault(f);
        }
        let z = rng.vector(EPS, 10.0);
        let a = a_matrix(z, &kp);
        let s = sigma(z, &kp);
        dev.factorization = dev.factorization.max((s * s.transpose() - a).frobenius_norm());
        dev.null_direction = dev.null_direction.max(a.mul_vec(z).norm() / (a.frobenius_norm() * z.norm()));
        dev.min_eigenvalue = dev.min_eigenvalue.min(a.min_eigenvalue());
        let odd = (b_drift(z, &kp) + b_drift(-z, &kp)).norm() + (a - a_matrix(-z, &kp)).frobenius_norm();
        dev.parity = dev.parity.max(odd);
        let tr = trace_a(z, &kp);
        let want = 2.0 * kp.radial(z.norm_squared()) * z.norm_squared();
        dev.trace = dev.trace.max((tr - want).abs() / (1.0 + tr));
    }
    dev
}

/// Counts violations of the Lipschitz-type bounds on `sigma` and `b` over
/// `samples` random pairs `(z, z~)` with norms in `[EPS, 10]`.
pub fn lipschitz_violations(samples: usize, seed: u64) -> usize {
    let mut rng = KernelSampler::new(seed);
    let mut violations = 0;
    for _ in 0..samples {
        let gamma = rng.gamma();
        let kp = KernelParams::new(gamma, EPS).expect("fixed exponents are valid");
        let z = rng.vector(EPS, 10.0);
        // Half the partners are close to z, half are independent.
        let zt = if rng.uniform() < 0.5 { z + rng.vector(1e-6, 1.0).scale(z.norm()) } else { rng.vector(EPS, 10.0) };
        if zt.norm() < EPS {
            continue;
        }
        let ds = (sigma(z, &kp) - sigma(zt, &kp)).frobenius_norm();
        let db = (b_drift(z, &kp) - b_drift(zt, &kp)).norm();
        if ds > sigma_lipschitz_bound(z, zt, gamma) || db > drift_lipschitz_bound(z, zt, gamma) {
            violations += 1;
        }
    }
    violations
}

fn gaussian_cloud(noise: &NoiseStream, stream: u64, n: usize) -> Vec<Vec3<f64>> {
    (0..n).map(|k| noise.gaussian(stream, k as u64)).collect()
}

/// Number of instances (out of `instances` per size `2..=7`) where the exact
/// solver and the brute force disagree in cost.
pub fn transport_mismatches(instances: usize, seed: u64) -> usize {
    let noise = NoiseStream::new(seed);
    let mut bad = 0;
    for n in 2..=7 {
        for k in 0..instances as u64 {
            let a = gaussian_cloud(&noise, 2 * (k + 1000 * n as u64), n);
            let b = gaussian_cloud(&noise, 2 * (k + 1000 * n as u64) + 1, n);
            let exact = w2_exact(&a, &b).expect("sizes match");
            let brute = w2_bruteforce(&a, &b).expect("sizes match");
            if exact.cost() != brute.cost() {
                bad += 1;
            }
        }
    }
    bad
}

/// Largest symmetry defect and triangle-inequality excess of `W2` over
/// random triples of 16-point clouds.
pub fn metric_defects(instances: usize, seed: u64) -> (f64, f64) {
    let noise = NoiseStream::new(seed);
    let (mut sym, mut tri) = (0.0f64, f64::NEG_INFINITY);
    for k in 0..instances as u64 {
        let [a, b, c] = [0, 1, 2].map(|j| gaussian_cloud(&noise, 3 * k + j, 16));
        let w = |x: &[Vec3<f64>], y: &[Vec3<f64>]| w2_exact(x, y).expect("sizes match").cost().sqrt();
        let (ab, ba, bc, ac) = (w(&a, &b), w(&b, &a), w(&b, &c), w(&a, &c));
        sym = sym.max((ab - ba).abs());
        tri = tri.max(ac - ab - bc);
    }
    (sym, tri)
}

/// `|mean(after) - mean(before)|` for one drift-only step of a random
/// ensemble, through the same routing the simulator uses.
pub fn drift_only_momentum_drift(kp: &KernelParams<f64>, n: usize, seed: u64) -> f64 {
    let ens = sample_initial(&InitialSpec::standard_gaussian(), n, seed).expect("valid spec");
    let noise = NoiseStream::new(seed);
    let out = step_routed(&ens, kp, 0.01, &noise, 0, NoiseMode::Off, Route::for_kernel(kp)).expect("finite step");
    (out.ensemble.mean() - ens.mean()).norm()
}

/// Largest relative difference between the fused pair sums and literal
/// evaluation through the kernel functions.
pub fn fused_sum_deviation(kp: &KernelParams<f64>, n: usize, seed: u64) -> f64 {
    let ens = sample_initial(&InitialSpec::standard_gaussian(), n, seed).expect("valid spec");
    let v = ens.velocities();
    let route = if kp.is_maxwell() { Route::Maxwell } else { Route::Fused };
    let fast = single_sums(v, kp, true, route);
    let mut worst = 0.0f64;
    for (i, f) in fast.iter().enumerate() {
        let r = reference_sums(v, i, kp, true);
        let scale = 1.0 + r.jsum + r.cov.frobenius_norm();
        let d = (f.drift - r.drift).norm().max(f.cov.max_abs_diff(&r.cov)).max((f.jsum - r.jsum).abs());
        worst = worst.max(d / scale);
    }
    worst
}

/// Runs the whole suite; `fault` injects a kernel defect for testing the
/// suite itself.
pub fn validate(fault: Option<KernelFault>) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name, passed, detail: String| checks.push(Check { name, passed, detail });

    let dev = kernel_deviations(10_000, 11, fault);
    push(
        "kernel.factorization",
        dev.factorization <= 1e-12,
        format!("max |sigma sigma^T - a|_F = {:.2e}", dev.factorization),
    );
    push(
        "kernel.null_direction",
        dev.null_direction <= 1e-12,
        format!("max |a z| / (|a| |z|) = {:.2e}", dev.null_direction),
    );
    push("kernel.psd", dev.min_eigenvalue >= -1e-12, format!("min eigenvalue = {:.2e}", dev.min_eigenvalue));
    push("kernel.parity", dev.parity <= 1e-12, format!("max |b(z) + b(-z)| + |a(z) - a(-z)| = {:.2e}", dev.parity));
    push("kernel.trace", dev.trace <= 1e-13, format!("max relative error of tr a = {:.2e}", dev.trace));
    let lip = lipschitz_violations(20_000, 12);
    push("kernel.lipschitz", lip == 0, format!("{lip} violations in 20000 pairs"));

    let bad = transport_mismatches(20, 13);
    push("transport.bruteforce", bad == 0, format!("{bad} cost mismatches in 120 instances"));
    let (sym, tri) = metric_defects(100, 14);
    push("transport.metric", sym <= 1e-12 && tri <= 1e-9, format!("symmetry {sym:.2e}, triangle excess {tri:.2e}"));

    let mut kp = KernelParams::new(-1.0, EPS).expect("valid kernel");
    if let Some(f) = fault {
        kp = kp.with_fault(f);
    }
    let drift = drift_only_momentum_drift(&kp, 400, 15);
    push("dynamics.momentum", drift <= 1e-12, format!("drift-only step moved the mean by {drift:.2e}"));
    let mut worst = 0.0f64;
    for gamma in [0.0, -0.5, -1.0, -2.5] {
        let kp = KernelParams::new(gamma, EPS).expect("valid kernel");
        worst = worst.max(fused_sum_deviation(&kp, 120, 16));
    }
    push("dynamics.fused_sums", worst <= 1e-12, format!("max relative deviation {worst:.2e}"));

    let s0 = Mat3::from_diag([2.0, 1.0, 1.0]);
    let e3 = (-3.0f64).exp();
    let want = Mat3::from_diag([4.0 / 3.0 + 2.0 / 3.0 * e3, 4.0 / 3.0 - e3 / 3.0, 4.0 / 3.0 - e3 / 3.0]);
    let got = maxwell_covariance_oracle(&s0, 0.5).expect("SPD input");
    let d = got.max_abs_diff(&want);
    push("oracle.maxwell", d <= 1e-14 && (got.trace() - 4.0).abs() <= 1e-14, format!("deviation {d:.2e}"));
    let q = admissible_exponents(1.0 - 5f64.sqrt()).ok().and_then(|e| e.q_min).unwrap_or(f64::NAN);
    let range = admissible_exponents(-1.0).and_then(|e| e.p_range(2.0)).unwrap_or((f64::NAN, f64::NAN));
    let ok = (q - 2.0).abs() <= 1e-12 && (range.0 - 1.5).abs() <= 1e-12 && (range.1 - 1.8).abs() <= 1e-12;
    push("oracle.exponents", ok, format!("q_min = {q:.15}, p-range = ({:.15}, {:.15})", range.0, range.1));
    let bound = lp_blowup_bound(1.0, 2.0, 1.0, std::f64::consts::PI / 8.0).map_or(f64::NAN, |b| b.bound.powi(2));
    let want = (3.0 * std::f64::consts::PI / 8.0).tan();
    push("oracle.lp_bound", (bound - want).abs() <= 1e-12, format!("bound^p = {bound:.15}"));

    ValidationReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_suite_passes() {
        let report = validate(None);
        assert!(report.passed(), "{report}");
        assert!(report.checks.iter().filter(|c| c.name.starts_with("kernel.")).count() >= 4);
    }

    #[test]
    fn injected_fault_trips_momentum() {
        let report = validate(Some(KernelFault::DriftSignFlip));
        let failed: Vec<_> = report.failures().map(|c| c.name).collect();
        assert!(failed.contains(&"dynamics.momentum"), "{report}");
    }
}
