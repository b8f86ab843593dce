//! Loosely coupled Robin-Robin splitting for the parabolic-parabolic
//! interface problem on the unit square.
//!
//! The unit square is split by a straight interface into a lower ("fluid")
//! and an upper ("solid") subdomain. Each subdomain carries a heat equation;
//! the two are coupled through continuity of the solution and of the
//! diffusive flux. The crate provides:
//!
//! - [`mesh`]: structured, interface-conforming triangulations.
//! - [`linalg`]: CSR matrices, Jacobi-preconditioned CG and a dense
//!   symmetric-indefinite LDLᵀ oracle.
//! - [`fem`]: P1/P2 Lagrange spaces, form assembly and error norms.
//! - [`exact`]: manufactured solutions.
//! - [`splitting`]: the Robin-Robin time stepper with residual injection.
//! - [`monolithic`]: a fully coupled backward-Euler reference solver.
//! - [`metrics`]: difference operators, energy functionals and error reports.
//! - [`harness`]: configuration, convergence sweeps and table output.

pub mod error;
pub mod exact;
pub mod fem;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod metrics;
pub mod monolithic;
pub mod quadrature;
pub mod splitting;

pub use error::{Error, Result};
