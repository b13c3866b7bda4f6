//! Magic Formula tire parameter and uncertainty estimation.
//!
//! The crate turns vehicle telemetry into per-axle (slip, force coefficient)
//! datasets, fits the Magic Formula Simple model with a bounded Nelder-Mead
//! least-squares fit or with stochastic variational inference, and quantifies
//! per-coefficient identifiability with Sobol indices and an excitation study.

pub mod dataset;
pub mod error;
pub mod exec;
pub mod fitting;
pub mod io;
pub mod preprocess;
pub mod rng;
pub mod sensitivity;
pub mod simulation;
pub mod study;
pub mod tire_model;
pub mod vehicle_dynamics;

pub use dataset::{Axle, AxleDataset, Direction, Sample, Shifts};
pub use error::{Error, Result};
pub use exec::Execution;
pub use fitting::{fit_nelder_mead, fit_svi, posterior_samples, FitMethod, FitResult, NelderMeadConfig, SviConfig};
pub use tire_model::{ParamBounds, TireParams};
pub use vehicle_dynamics::VehicleParams;
