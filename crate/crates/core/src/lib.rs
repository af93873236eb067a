//! Continuous-time surrogate dynamics learned by flow matching on spline
//! interpolants of irregularly sampled trajectories.
//!
//! Pipeline: [`timegrid`] holds normalized sample times, [`stencil`] estimates
//! knot derivatives, [`spline`] builds per-trajectory paths, [`interpolant`]
//! draws training triples, [`vector_field`] is the learned model,
//! [`trainer`] fits it, [`odeint`] rolls it out and [`metrics`] scores it.
//! [`systems`] generates the reference datasets.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod interpolant;
pub mod metrics;
pub mod odeint;
pub mod rng;
pub mod spline;
pub mod stencil;
pub mod systems;
pub mod timegrid;
pub mod trainer;
pub mod vector_field;

pub use error::{CfoError, Result};
pub use odeint::{Method, SolverConfig};
pub use spline::{NoiseSchedule, Spline, SplineKind, TemporalSpline};
pub use systems::TrajectorySet;
pub use timegrid::TimeGrid;
pub use vector_field::{MlpConfig, VectorField};
pub use trainer::{train_ar, train_cfo, TrainConfig, TrainOutcome};
