//! Multiclass nonlocal traffic flow.
//!
//! Each class `i` has a density `rho_i` transported with speed
//! `v_i(t, x, eta_i1 * rho_1, ..., eta_in * rho_n)`, where `eta_ij` are
//! asymmetric look-ahead kernels. Two solvers are provided: a Lax-Friedrichs
//! finite-volume scheme ([`fv`]) and a Lagrangian solver built on
//! characteristics and a fixed-point iteration ([`lagrangian`]).

pub mod diagnostics;
pub mod error;
pub mod fv;
pub mod kernels;
pub mod lagrangian;
pub mod mesh;
pub mod model;
pub mod scenario;
pub mod speed_laws;

pub use error::{Error, Result};
pub use kernels::{Kernel, KernelMatrix, KernelSpec};
pub use mesh::{DensityField, DensityTrajectory, Grid1D};
pub use model::Model;
pub use speed_laws::{SpeedLaw, SpeedLawSpec};
