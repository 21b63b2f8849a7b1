//! Orchestration of whole runs: sampling, stepping and diagnostics.

use super::{step_coupled_routed, step_routed, BlowUp, NoiseMode, Route};
use crate::ensemble::{
    entropy_hat, grid_probes, j_gamma_hat, j_gamma_probes, lp_norm_hat, sample_initial_stream, silverman_bandwidth,
    Ensemble, InitialSpec,
};
use crate::error::{Error, Result};
use crate::kernel::KernelParams;
use crate::linalg::Vec3;
use crate::noise::NoiseStream;
use crate::scalar::Real;
use crate::transport::{plan_cost, AssignmentSolver, CouplingPlan};

/// Records with `dt * J_gamma` above this are flagged as under-resolved.
pub const STIFF_THRESHOLD: f64 = 0.1;

/// Bandwidth of the kernel density estimate behind the `L^p` diagnostic.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Bandwidth<T> {
    #[default]
    Silverman,
    Fixed(T),
}

/// Where the supremum in `J_gamma` is probed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum JSup {
    #[default]
    Particles,
    /// A `per_axis^3` lattice over the bounding box of the ensemble.
    Grid { per_axis: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorSettings<T> {
    pub entropy_neighbors: usize,
    pub lp_exponent: T,
    pub bandwidth: Bandwidth<T>,
    pub j_sup: JSup,
}

impl<T: Real> Default for EstimatorSettings<T> {
    fn default() -> Self {
        Self { entropy_neighbors: 4, lp_exponent: T::lit(2.0), bandwidth: Bandwidth::Silverman, j_sup: JSup::Particles }
    }
}

impl<T: Real> EstimatorSettings<T> {
    fn validate(&self, n: usize) -> Result<()> {
        if self.entropy_neighbors == 0 || self.entropy_neighbors >= n {
            return Err(Error::param("k_neighbors", format!("must lie in 1..{n}")));
        }
        if !(self.lp_exponent > T::one()) || !self.lp_exponent.is_finite() {
            return Err(Error::param("lp_exponent", "must exceed 1"));
        }
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h > T::zero()) || !h.is_finite() {
                return Err(Error::param("bandwidth", "must be positive"));
            }
        }
        if let JSup::Grid { per_axis: 0 } = self.j_sup {
            return Err(Error::param("per_axis", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig<T> {
    pub kernel: KernelParams<T>,
    pub n: usize,
    pub dt: T,
    pub t_end: T,
    pub seed: u64,
    pub initial: InitialSpec<T>,
    /// Diagnostics are recorded every `diag_every` steps.
    pub diag_every: usize,
    pub noise: NoiseMode,
    pub estimators: EstimatorSettings<T>,
}

impl<T: Real> SimConfig<T> {
    /// Defaults: standard Gaussian initial law, aggregated noise, a record
    /// every step.
    pub fn new(kernel: KernelParams<T>, n: usize, dt: T, t_end: T, seed: u64) -> Self {
        Self {
            kernel,
            n,
            dt,
            t_end,
            seed,
            initial: InitialSpec::standard_gaussian(),
            diag_every: 1,
            noise: NoiseMode::default(),
            estimators: EstimatorSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::param("n", "need at least 2 particles"));
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::param("dt", format!("{} must be positive", self.dt)));
        }
        if !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return Err(Error::param("t_end", format!("{} must be at least dt", self.t_end)));
        }
        if self.diag_every == 0 {
            return Err(Error::param("diag_every", "must be at least 1"));
        }
        self.noise.validate()?;
        self.initial.validate()?;
        self.estimators.validate(self.n)
    }

    /// `floor(t_end / dt)`, tolerant to the rounding of the quotient.
    pub fn n_steps(&self) -> u64 {
        let q = (self.t_end / self.dt).to_f64_lossy();
        (q * (1.0 + 4.0 * f64::EPSILON)).floor() as u64
    }

    /// Number of records of a run that does not blow up.
    pub fn n_records(&self) -> usize {
        1 + (self.n_steps() / self.diag_every as u64) as usize
    }

    fn time(&self, k: u64) -> T {
        T::lit(k as f64) * self.dt
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RecordFlags {
    /// The step into this record produced a non-finite velocity.
    pub blow_up: bool,
    /// The entropy estimator found coincident particles.
    pub entropy_degenerate: bool,
    /// `dt * J_gamma` exceeds [`STIFF_THRESHOLD`].
    pub stiff: bool,
}

impl RecordFlags {
    pub fn any(&self) -> bool {
        self.blow_up || self.entropy_degenerate || self.stiff
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.blow_up {
            out.push("blowup");
        }
        if self.entropy_degenerate {
            out.push("entropy_degenerate");
        }
        if self.stiff {
            out.push("stiff");
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record<T> {
    pub t: T,
    pub m2: T,
    pub m4: T,
    pub j_gamma: T,
    pub entropy: T,
    pub lp_norm: T,
    pub mean: Vec3<T>,
    pub flags: RecordFlags,
}

/// Diagnostics of one run. Times strictly increase from 0. A blown-up run
/// ends with a record flagged `blow_up` whose diagnostics are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries<T> {
    pub records: Vec<Record<T>>,
    pub blow_up: Option<BlowUp>,
    pub final_ensemble: Option<Ensemble<T>>,
}

impl<T: Real> TimeSeries<T> {
    pub fn is_flagged(&self) -> bool {
        self.blow_up.is_some() || self.records.iter().any(|r| r.flags.any())
    }
}

fn diagnostics<T: Real>(cfg: &SimConfig<T>, ens: &Ensemble<T>, t: T, j_particles: Option<T>) -> Result<Record<T>> {
    let est = &cfg.estimators;
    let j_gamma = match est.j_sup {
        JSup::Particles => j_particles.unwrap_or_else(|| j_gamma_hat(ens, &cfg.kernel)),
        JSup::Grid { per_axis } => j_gamma_probes(ens, &cfg.kernel, &grid_probes(ens, per_axis))?,
    };
    let entropy = entropy_hat(ens, est.entropy_neighbors)?;
    let h = match est.bandwidth {
        Bandwidth::Silverman => silverman_bandwidth(ens),
        Bandwidth::Fixed(h) => h,
    };
    // A collapsed ensemble has zero Silverman bandwidth; report infinity.
    let lp_norm = if h > T::zero() { lp_norm_hat(ens, est.lp_exponent, h)? } else { T::infinity() };
    let stiff = (cfg.dt * j_gamma).to_f64_lossy() > STIFF_THRESHOLD;
    Ok(Record {
        t,
        m2: ens.moment(T::lit(2.0)),
        m4: ens.moment(T::lit(4.0)),
        j_gamma,
        entropy: entropy.value,
        lp_norm,
        mean: ens.mean(),
        flags: RecordFlags { blow_up: false, entropy_degenerate: entropy.degenerate, stiff },
    })
}

fn blow_up_record<T: Real>(t: T) -> Record<T> {
    let nan = T::nan();
    Record {
        t,
        m2: nan,
        m4: nan,
        j_gamma: nan,
        entropy: nan,
        lp_norm: nan,
        mean: Vec3::new(nan, nan, nan),
        flags: RecordFlags { blow_up: true, ..RecordFlags::default() },
    }
}

/// Samples the initial ensemble and steps it to `t_end`, recording
/// diagnostics every `diag_every` steps. Fully determined by the config.
pub fn run<T: Real>(cfg: &SimConfig<T>) -> Result<TimeSeries<T>> {
    cfg.validate()?;
    let ens = sample_initial_stream(&cfg.initial, cfg.n, cfg.seed, 0)?;
    run_from(cfg, ens)
}

/// As [`run`], from a given initial ensemble.
pub fn run_from<T: Real>(cfg: &SimConfig<T>, mut ens: Ensemble<T>) -> Result<TimeSeries<T>> {
    cfg.validate()?;
    let noise = NoiseStream::new(cfg.seed);
    let route = Route::for_kernel(&cfg.kernel);
    let n_steps = cfg.n_steps();
    let mut records = Vec::with_capacity(cfg.n_records());
    let mut warned = false;
    for k in 0..=n_steps {
        let due = k % cfg.diag_every as u64 == 0;
        if k == n_steps {
            if due {
                records.push(diagnostics(cfg, &ens, cfg.time(k), None)?);
            }
            break;
        }
        match step_routed(&ens, &cfg.kernel, cfg.dt, &noise, k, cfg.noise, route) {
            Ok(out) => {
                if due {
                    let r = diagnostics(cfg, &ens, cfg.time(k), Some(out.j_gamma))?;
                    if r.flags.stiff && !warned {
                        log::warn!("dt * J_gamma = {} at t = {}: time step too coarse", cfg.dt * r.j_gamma, r.t);
                        warned = true;
                    }
                    records.push(r);
                }
                ens = out.ensemble;
            }
            Err(b) => {
                if due {
                    records.push(diagnostics(cfg, &ens, cfg.time(k), None)?);
                }
                records.push(blow_up_record(cfg.time(k + 1)));
                log::warn!("{b}; run aborted at t = {}", cfg.time(k + 1));
                return Ok(TimeSeries { records, blow_up: Some(b), final_ensemble: None });
            }
        }
    }
    Ok(TimeSeries { records, blow_up: None, final_ensemble: Some(ens) })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledConfig<T> {
    /// Kernel, sizes, times, seed, first initial law and noise settings.
    pub base: SimConfig<T>,
    pub initial_b: InitialSpec<T>,
    /// Seed for sampling the second ensemble. `None` reuses the first seed,
    /// so both initial ensembles are driven by common random numbers.
    pub seed_b: Option<u64>,
    /// The optimal plan is recomputed every `recouple_every` steps.
    pub recouple_every: usize,
}

impl<T: Real> CoupledConfig<T> {
    pub fn new(base: SimConfig<T>, initial_b: InitialSpec<T>, recouple_every: usize) -> Self {
        Self { base, initial_b, seed_b: None, recouple_every }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.initial_b.validate()?;
        if self.recouple_every == 0 {
            return Err(Error::param("recouple_every", "must be at least 1"));
        }
        Ok(())
    }

    /// The same experiment under seed `s`: the first ensemble and the noise
    /// use `s`, the second ensemble `seed_b + s` when `seed_b` is set.
    pub fn for_seed(&self, s: u64) -> Self {
        let mut c = self.clone();
        c.base.seed = s;
        c.seed_b = self.seed_b.map(|b| b.wrapping_add(s));
        c
    }

    /// Both initial ensembles.
    pub fn sample(&self) -> Result<(Ensemble<T>, Ensemble<T>)> {
        let c = &self.base;
        let a = sample_initial_stream(&c.initial, c.n, c.seed, 0)?;
        let b = sample_initial_stream(&self.initial_b, c.n, self.seed_b.unwrap_or(c.seed), 0)?;
        Ok((a, b))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledRecord<T> {
    pub t: T,
    /// Exact `W_2^2` between the two ensembles at `t`.
    pub w2sq: T,
    /// `(1/N) sum_i |A_i - B_pi(i)|^2` under the plan driving the dynamics.
    pub pair_msd: T,
    pub j_a: T,
    pub j_b: T,
    /// Left Riemann sum of `J_A + J_B` over `[0, t]`.
    pub jint: T,
    pub flags: RecordFlags,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledTimeSeries<T> {
    pub records: Vec<CoupledRecord<T>>,
    pub blow_up: Option<BlowUp>,
    pub final_ensembles: Option<(Ensemble<T>, Ensemble<T>)>,
}

impl<T: Real> CoupledTimeSeries<T> {
    pub fn is_flagged(&self) -> bool {
        self.blow_up.is_some() || self.records.iter().any(|r| r.flags.any())
    }
}

/// Runs the coupled pair, re-solving the optimal assignment every
/// `recouple_every` steps.
pub fn run_coupled<T: Real>(cfg: &CoupledConfig<T>) -> Result<CoupledTimeSeries<T>> {
    cfg.validate()?;
    let (a, b) = cfg.sample()?;
    run_coupled_from(cfg, a, b)
}

/// As [`run_coupled`], from given initial ensembles.
pub fn run_coupled_from<T: Real>(
    cfg: &CoupledConfig<T>,
    mut a: Ensemble<T>,
    mut b: Ensemble<T>,
) -> Result<CoupledTimeSeries<T>> {
    cfg.validate()?;
    let c = &cfg.base;
    if a.len() != b.len() {
        return Err(Error::SizeMismatch { left: a.len(), right: b.len() });
    }
    let noise = NoiseStream::new(c.seed);
    let route = Route::for_kernel(&c.kernel);
    let n_steps = c.n_steps();
    let mut solver = AssignmentSolver::new();
    let mut plan = solver.solve(&a, &b)?;
    let mut fresh = true;
    let mut jint = T::zero();
    let mut out = Vec::with_capacity(c.n_records());
    for k in 0..=n_steps {
        if k > 0 && k % cfg.recouple_every as u64 == 0 {
            plan = solver.solve(&a, &b)?;
            fresh = true;
        }
        let due = k % c.diag_every as u64 == 0;
        if k == n_steps {
            if due {
                let (ja, jb) = (j_gamma_hat(&a, &c.kernel), j_gamma_hat(&b, &c.kernel));
                out.push(coupled_record(c, &mut solver, k, &a, &b, &plan, fresh, ja, jb, jint)?);
            }
            break;
        }
        match step_coupled_routed(&a, &b, plan.permutation(), &c.kernel, c.dt, &noise, k, c.noise, route) {
            Ok(o) => {
                if due {
                    out.push(coupled_record(c, &mut solver, k, &a, &b, &plan, fresh, o.j_a, o.j_b, jint)?);
                }
                jint = jint + c.dt * (o.j_a + o.j_b);
                a = o.a;
                b = o.b;
                fresh = false;
            }
            Err(e) => {
                if due {
                    let (ja, jb) = (j_gamma_hat(&a, &c.kernel), j_gamma_hat(&b, &c.kernel));
                    out.push(coupled_record(c, &mut solver, k, &a, &b, &plan, fresh, ja, jb, jint)?);
                }
                let nan = T::nan();
                out.push(CoupledRecord {
                    t: c.time(k + 1),
                    w2sq: nan,
                    pair_msd: nan,
                    j_a: nan,
                    j_b: nan,
                    jint: nan,
                    flags: RecordFlags { blow_up: true, ..RecordFlags::default() },
                });
                log::warn!("{e}; coupled run aborted at t = {}", c.time(k + 1));
                return Ok(CoupledTimeSeries { records: out, blow_up: Some(e), final_ensembles: None });
            }
        }
    }
    Ok(CoupledTimeSeries { records: out, blow_up: None, final_ensembles: Some((a, b)) })
}

#[allow(clippy::too_many_arguments)]
fn coupled_record<T: Real>(
    c: &SimConfig<T>,
    solver: &mut AssignmentSolver<T>,
    k: u64,
    a: &Ensemble<T>,
    b: &Ensemble<T>,
    plan: &CouplingPlan<T>,
    fresh: bool,
    ja: T,
    jb: T,
    jint: T,
) -> Result<CoupledRecord<T>> {
    let pair_msd = plan_cost(plan, a, b)?;
    let w2sq = if fresh { pair_msd } else { solver.solve(a, b)?.cost() };
    let stiff = (c.dt * ja.max(jb)).to_f64_lossy() > STIFF_THRESHOLD;
    Ok(CoupledRecord {
        t: c.time(k),
        w2sq,
        pair_msd,
        j_a: ja,
        j_b: jb,
        jint,
        flags: RecordFlags { stiff, ..RecordFlags::default() },
    })
}
