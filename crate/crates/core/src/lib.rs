//! Stochastic particle simulation of the spatially homogeneous Landau
//! equation with soft potentials.
//!
//! Two N-particle ensembles evolve by an interacting SDE whose pair
//! interaction is the Landau kernel; optimal transport between them gives
//! an empirical Wasserstein-2 distance whose growth is compared against a
//! Gronwall-type estimate driven by `J_gamma(f) = sup_v int |v - w|^gamma f(w) dw`.
//!
//! Everything is generic over the scalar ([`Real`] is implemented for
//! `f32` and `f64`); the `D*` and `F*` aliases below fix the precision.
//!
//! ```
//! use landau_core::{run, DSimConfig, KernelParams};
//!
//! let kernel = KernelParams::new(-1.0, 1e-3).unwrap();
//! let config = DSimConfig::new(kernel, 64, 0.01, 0.05, 7);
//! let series = run(&config).unwrap();
//! assert_eq!(series.records.len(), 6);
//! ```

// `!(x > 0)` is the NaN-rejecting form; index loops mirror the matrix algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod kernel;
pub mod linalg;
pub mod noise;
mod pairs;
pub mod scalar;
pub mod transport;
pub mod validation;

pub use dynamics::{
    run, run_coupled, run_coupled_from, run_from, step, step_coupled, CoupledConfig, CoupledRecord, CoupledTimeSeries,
    NoiseMode, Record, SimConfig, TimeSeries,
};
pub use ensemble::{sample_initial, Ensemble, InitialSpec};
pub use error::{Error, Result};
pub use kernel::{a_matrix, b_drift, sigma, KernelFault, KernelParams};
pub use linalg::{Mat3, Vec3};
pub use noise::NoiseStream;
pub use scalar::Real;
pub use transport::{plan_cost, w2_bruteforce, w2_exact, AssignmentSolver, CouplingPlan};

pub type DVec3 = Vec3<f64>;
pub type FVec3 = Vec3<f32>;
pub type DMat3 = Mat3<f64>;
pub type FMat3 = Mat3<f32>;
pub type DEnsemble = Ensemble<f64>;
pub type FEnsemble = Ensemble<f32>;
pub type DKernelParams = KernelParams<f64>;
pub type FKernelParams = KernelParams<f32>;
pub type DSimConfig = SimConfig<f64>;
pub type FSimConfig = SimConfig<f32>;
pub type DCoupledConfig = CoupledConfig<f64>;
pub type FCoupledConfig = CoupledConfig<f32>;
pub type DCouplingPlan = CouplingPlan<f64>;
pub type FCouplingPlan = CouplingPlan<f32>;
