//! Moving-horizon state estimation for nonlinear discrete-time systems.
//!
//! The crate is organized around a sliding-window least-squares estimator:
//!
//! - [`model`] — plant dynamics/output maps, domain boxes, trajectory rollout;
//! - [`dual`] — forward-mode dual-number differentiation of anything built
//!   from the model maps;
//! - [`cost`] — the two window costs (discounted quadratic and max-form with
//!   class-KL weights) and their gradients;
//! - [`optimize`] — projected gradient descent with exact line search, the
//!   relaxed stopping schedule, multi-start smoothing for the max-form cost,
//!   and a sampling convexity falsifier;
//! - [`mhe`] — the estimator loop (window assembly, prediction recursion,
//!   per-step solve) and runtime error-bound monitors;
//! - [`certify`] — Lyapunov dissipation checks, KL-function synthesis,
//!   window-length and cost-weight selection rules, certificate search;
//! - [`systems`] — the two built-in benchmark systems, scenario definitions,
//!   and seeded noise generation.
//!
//! The crate is `no_std` (with `alloc`); all routines are deterministic given
//! their seeds.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod certify;
pub mod cost;
pub mod dual;
pub mod mhe;
pub mod model;
pub mod optimize;
pub mod rng;
pub mod systems;

pub use cost::{DecisionLayout, DecisionVector, KlFunction, MaxFormCost, QuadraticCost, Window};
pub use dual::{gradient, Dual, Real};
pub use mhe::{BoundReport, BoundRow, CostSpec, Estimator, EstimatorConfig, StepRecord};
pub use model::{AxisBox, Dims, Plant, SystemModel, Trajectory};
pub use optimize::{OptimReport, StopMode, StopRule};
