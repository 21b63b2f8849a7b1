//! Experiment harnesses and closed-form oracles: the covariance ODE at
//! `gamma = 0`, the Gronwall-type stability fit, exponent arithmetic for the
//! moment and `L^p` estimates, and conservation summaries.

use rayon::prelude::*;

use crate::dynamics::{run_coupled, CoupledConfig, CoupledTimeSeries, TimeSeries};
use crate::error::{Error, Result};
use crate::linalg::Mat3;
use crate::scalar::Real;

/// Covariance at time `t` of any zero-mean solution for Maxwell molecules:
///
/// `Sigma(t) = (tr Sigma0 / 3) I + exp(-6t) (Sigma0 - (tr Sigma0 / 3) I)`,
///
/// the solution of `dSigma/dt = 2 tr(Sigma) I - 6 Sigma`.
pub fn maxwell_covariance_oracle<T: Real>(sigma0: &Mat3<T>, t: T) -> Result<Mat3<T>> {
    if !sigma0.is_symmetric() || sigma0.cholesky().is_none() {
        return Err(Error::NotSpd { what: "sigma0" });
    }
    if !(t >= T::zero()) || !t.is_finite() {
        return Err(Error::param("t", format!("{t} must be finite and non-negative")));
    }
    let iso = Mat3::identity().scale(sigma0.trace() / T::lit(3.0));
    Ok(iso + (*sigma0 - iso).scale((T::lit(-6.0) * t).exp()))
}

/// Summary of the coupled stability experiment over several seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport<T> {
    pub seeds: Vec<u64>,
    /// Least-squares slope through the origin of `log W2^2(t) - log W2^2(0)`
    /// against `X(t) = int_0^t (J_A + J_B) ds`, per seed. `None` when the
    /// regression is degenerate or the seed is trivial.
    pub slopes: Vec<Option<T>>,
    /// Median of the finite slopes.
    pub c_hat: Option<T>,
    /// Largest finite slope.
    pub c_max: Option<T>,
    /// `max_s |C_s - median| / |median|`.
    pub relative_spread: Option<T>,
    /// `(t, W2^2)` per seed.
    pub trajectories: Vec<Vec<(T, T)>>,
    /// `W2^2 <= pair MSD` at every record of every seed.
    pub dominance_holds: bool,
    /// Smallest slack `s` with `log W2^2(t) <= log W2^2(0) + c_max X(t) + s`
    /// over every record of every seed.
    pub envelope_slack: Option<T>,
    pub envelope_holds: bool,
    /// Median over seeds of `W2^2(t_end) / W2^2(0)`.
    pub growth_median: Option<T>,
    /// Every seed started from `W2^2(0) = 0`.
    pub trivial: bool,
    /// Some seed had `sum X^2 = 0` (e.g. a single record).
    pub degenerate: bool,
    /// Some seed blew up.
    pub blow_up: bool,
}

fn median<T: Real>(v: &[T]) -> Option<T> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { (s[m - 1] + s[m]) / T::lit(2.0) })
}

/// Fit of one seed: `(slope, points)` where points are `(X, y)`.
fn fit_seed<T: Real>(xs: &[T], w2: &[T]) -> (Option<T>, Vec<(T, T)>) {
    let w0 = w2[0];
    if !(w0 > T::zero()) {
        return (None, Vec::new());
    }
    let pts: Vec<(T, T)> = xs
        .iter()
        .zip(w2)
        .skip(1)
        .filter(|(x, w)| **w > T::zero() && x.is_finite() && w.is_finite())
        .map(|(&x, &w)| (x, (w / w0).ln()))
        .collect();
    let sxx: T = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: T = pts.iter().map(|p| p.0 * p.1).sum();
    if sxx > T::zero() {
        (Some(sxy / sxx), pts)
    } else {
        (None, pts)
    }
}

/// Runs [`run_coupled`] once per seed and fits the exponential growth rate
/// of `W2^2` in the variable `X(t) = int (J_A + J_B) ds`.
///
/// For seed `s` the first ensemble and the noise use seed `s`; the second
/// ensemble uses `seed_b + s` when `seed_b` is set and common random
/// numbers otherwise. `slack` is the additive allowance in the envelope
/// check.
pub fn stability_experiment<T: Real>(config: &CoupledConfig<T>, seeds: &[u64], slack: T) -> Result<StabilityReport<T>> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(Error::param("seeds", "need at least one seed"));
    }
    let runs: Vec<_> = seeds.par_iter().map(|&s| run_coupled(&config.for_seed(s))).collect::<Result<_>>()?;
    summarize_stability(&runs, seeds, slack)
}

/// The summary behind [`stability_experiment`], from finished runs given in
/// seed order.
pub fn summarize_stability<T: Real>(
    runs: &[CoupledTimeSeries<T>],
    seeds: &[u64],
    slack: T,
) -> Result<StabilityReport<T>> {
    if runs.is_empty() || runs.len() != seeds.len() {
        return Err(Error::SizeMismatch { left: runs.len(), right: seeds.len() });
    }
    let mut slopes = Vec::new();
    let mut trajectories = Vec::new();
    let mut all_points = Vec::new();
    let mut growth = Vec::new();
    let mut dominance_holds = true;
    let mut trivial = true;
    let mut degenerate = false;
    let mut blow_up = false;
    for series in runs {
        blow_up |= series.blow_up.is_some();
        let recs: Vec<_> = series.records.iter().filter(|r| !r.flags.blow_up).collect();
        dominance_holds &= recs.iter().all(|r| r.w2sq <= r.pair_msd);
        trajectories.push(recs.iter().map(|r| (r.t, r.w2sq)).collect::<Vec<_>>());
        let xs: Vec<T> = recs.iter().map(|r| r.jint).collect();
        let w2: Vec<T> = recs.iter().map(|r| r.w2sq).collect();
        if w2.first().is_some_and(|&w| w > T::zero()) {
            trivial = false;
            growth.push(w2[w2.len() - 1] / w2[0]);
        }
        let (slope, pts) = fit_seed(&xs, &w2);
        if slope.is_none() && w2.first().is_some_and(|&w| w > T::zero()) {
            degenerate = true;
        }
        slopes.push(slope);
        all_points.push(pts);
    }

    let finite: Vec<T> = slopes.iter().flatten().copied().filter(|c| c.is_finite()).collect();
    let c_hat = median(&finite);
    let c_max = finite.iter().copied().reduce(T::max);
    let relative_spread = c_hat.map(|m| finite.iter().map(|&c| (c - m).abs()).fold(T::zero(), T::max) / m.abs());
    let envelope_slack = c_max
        .map(|c| all_points.iter().flatten().map(|&(x, y)| y - c * x).fold(T::neg_infinity(), T::max).max(T::zero()));
    let envelope_holds = envelope_slack.map_or(trivial, |s| s <= slack);
    Ok(StabilityReport {
        seeds: seeds.to_vec(),
        slopes,
        c_hat,
        c_max,
        relative_spread,
        trajectories,
        dominance_holds,
        envelope_slack,
        envelope_holds,
        growth_median: median(&growth),
        trivial,
        degenerate,
        blow_up,
    })
}

/// Exponents of the `L^p` propagation estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exponents<T> {
    pub gamma: T,
    /// `gamma^2 / (2 + gamma)`, the moment order needed for `gamma` in
    /// `(-2, 0)`; absent for very soft potentials.
    pub q_min: Option<T>,
    /// `3 / (3 + gamma)`.
    pub p_low: T,
}

impl<T: Real> Exponents<T> {
    /// `(3q - 3 gamma) / (q - 3 gamma)` for a moment order `q > q_min`.
    pub fn p_high(&self, q: T) -> Result<T> {
        let q_min = self.q_min.ok_or_else(|| Error::param("q", "no upper exponent for gamma <= -2"))?;
        if !(q > q_min) {
            return Err(Error::param("q", format!("{q} must exceed q_min = {q_min}")));
        }
        let g3 = T::lit(3.0) * self.gamma;
        Ok((T::lit(3.0) * q - g3) / (q - g3))
    }

    /// `(p_low, p_high(q))`.
    pub fn p_range(&self, q: T) -> Result<(T, T)> {
        Ok((self.p_low, self.p_high(q)?))
    }
}

pub fn admissible_exponents<T: Real>(gamma: T) -> Result<Exponents<T>> {
    if !(gamma > T::lit(-3.0) && gamma < T::zero()) {
        return Err(Error::param("gamma", format!("{gamma} is outside (-3, 0)")));
    }
    let q_min = (gamma > T::lit(-2.0)).then(|| gamma * gamma / (T::lit(2.0) + gamma));
    Ok(Exponents { gamma, q_min, p_low: T::lit(3.0) / (T::lit(3.0) + gamma) })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlowupBound<T> {
    /// `tan(arctan(lp0^p) + c t)^(1/p)`.
    pub bound: T,
    /// `(pi/2 - arctan(lp0^p)) / c`.
    pub t_star: T,
}

/// A priori bound on `||f_t||_{L^p}` from `y' <= c (1 + y^2)` with
/// `y = ||f_t||_p^p`, valid up to the blow-up time `t_star`.
pub fn lp_blowup_bound<T: Real>(lp0: T, p: T, c: T, t: T) -> Result<BlowupBound<T>> {
    if !(lp0 > T::zero()) || !lp0.is_finite() {
        return Err(Error::param("lp0", "must be positive and finite"));
    }
    if !(p > T::one()) || !(c > T::zero()) || !(t >= T::zero()) {
        return Err(Error::param("p, c, t", "need p > 1, c > 0, t >= 0"));
    }
    let a0 = lp0.powf(p).atan();
    let t_star = (T::FRAC_PI_2() - a0) / c;
    if t >= t_star {
        return Err(Error::param("t", format!("{t} is past the blow-up time {t_star}")));
    }
    Ok(BlowupBound { bound: (a0 + c * t).tan().powf(T::one() / p), t_star })
}

/// Blow-up rate fitted to an observed `L^p` series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlowupFit<T> {
    /// Smallest `c` for which every record obeys the tangent bound.
    pub c_fit: T,
    /// `(pi/2 - arctan(lp0^p)) / c_fit`; infinite when `c_fit <= 0`.
    pub t_star: T,
}

/// Fits the tangent bound to `(t, ||f_t||_p)` records: `c_fit` is the
/// smallest rate with `arctan(lp(t)^p) <= arctan(lp0^p) + c t` at every
/// finite record.
pub fn fit_blowup_rate<T: Real>(series: &TimeSeries<T>, p: T) -> Result<BlowupFit<T>> {
    let first = series.records.first().ok_or_else(|| Error::param("series", "is empty"))?;
    if !(first.lp_norm > T::zero()) || !first.lp_norm.is_finite() {
        return Err(Error::param("series", "initial L^p norm must be positive and finite"));
    }
    let a0 = first.lp_norm.powf(p).atan();
    let c_fit = series
        .records
        .iter()
        .skip(1)
        .filter(|r| r.t > T::zero() && r.lp_norm.is_finite())
        .map(|r| (r.lp_norm.powf(p).atan() - a0) / r.t)
        .fold(T::zero(), T::max);
    let t_star = if c_fit > T::zero() { (T::FRAC_PI_2() - a0) / c_fit } else { T::infinity() };
    Ok(BlowupFit { c_fit, t_star })
}

/// The Holder constant in `J_gamma(f) <= ||f||_1 + C ||f||_p`:
/// `C = (4 pi / (3 + gamma p'))^(1/p')` with `p' = p / (p - 1)`.
pub fn holder_constant<T: Real>(gamma: T, p: T) -> Result<T> {
    if !(p > T::one()) {
        return Err(Error::param("p", "must exceed 1"));
    }
    let q = p / (p - T::one());
    let d = T::lit(3.0) + gamma * q;
    if !(d > T::zero()) {
        return Err(Error::param("p", format!("|x|^gamma is not L^p' integrable near 0 for p = {p}")));
    }
    Ok((T::lit(4.0) * T::PI() / d).powf(T::one() / q))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentCheck<T> {
    pub passed: bool,
    /// `sup_t m_k(t)`.
    pub max_moment: T,
    /// `budget * m_k(0) + budget`.
    pub limit: T,
}

/// Passes iff `sup_t m_k(t) <= budget m_k(0) + budget` and the run did not
/// blow up. Records carry `k = 2` and `k = 4`.
pub fn moment_propagation_check<T: Real>(series: &TimeSeries<T>, k: T, budget: T) -> Result<MomentCheck<T>> {
    let pick = |r: &crate::dynamics::Record<T>| {
        if k == T::lit(2.0) {
            Ok(r.m2)
        } else if k == T::lit(4.0) {
            Ok(r.m4)
        } else {
            Err(Error::param("k", "records carry moments of order 2 and 4 only"))
        }
    };
    let first = series.records.first().ok_or_else(|| Error::param("series", "is empty"))?;
    let limit = budget * pick(first)? + budget;
    let mut max_moment = T::neg_infinity();
    let mut finite = series.blow_up.is_none();
    for r in &series.records {
        let m = pick(r)?;
        if m.is_finite() {
            max_moment = max_moment.max(m);
        } else {
            finite = false;
            max_moment = T::infinity();
        }
    }
    Ok(MomentCheck { passed: finite && max_moment <= limit, max_moment, limit })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConservationReport<T> {
    /// `max_t |mean(t) - mean(0)|`.
    pub momentum_drift: T,
    /// `max_t |m2(t) - m2(0)| / m2(0)`.
    pub energy_drift: T,
    /// Records whose entropy exceeds the previous one by more than `band`.
    pub entropy_violations: usize,
}

pub fn conservation_report<T: Real>(series: &TimeSeries<T>, band: T) -> ConservationReport<T> {
    let recs: Vec<_> = series.records.iter().filter(|r| !r.flags.blow_up).collect();
    let Some(first) = recs.first() else {
        return ConservationReport { momentum_drift: T::zero(), energy_drift: T::zero(), entropy_violations: 0 };
    };
    let momentum_drift = recs.iter().map(|r| (r.mean - first.mean).norm()).fold(T::zero(), T::max);
    let energy_drift = recs.iter().map(|r| (r.m2 - first.m2).abs() / first.m2).fold(T::zero(), T::max);
    let entropy_violations = recs.windows(2).filter(|w| w[1].entropy > w[0].entropy + band).count();
    ConservationReport { momentum_drift, energy_drift, entropy_violations }
}
