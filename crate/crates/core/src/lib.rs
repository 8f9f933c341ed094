//! Non-autonomous dissipative systems driven by a rotation on the torus:
//! cocycles, pullback attractors, almost-periodic sections and averaging.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attractor;
pub mod averaging;
pub mod base_flow;
pub mod bounds;
pub mod cli;
pub mod error;
pub mod integrator;
pub mod system;

pub use base_flow::{BaseFlow, BasePoint, TorusGrid};
pub use error::{Error, Result};
pub use integrator::{integrate, integrate_final, Dynamics, IntegratorConfig, Method, Trajectory};
pub use system::{State, SystemModel};
