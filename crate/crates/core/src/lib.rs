//! Hybridizable discontinuous Galerkin solver for Dirichlet boundary control
//! of the convection-diffusion equation
//!
//! ```text
//!   min  1/2 |y - y_d|^2 + gamma/2 |u|^2_Gamma
//!   s.t. -Laplace(y) + beta . grad(y) = f in Omega,  y = u on Gamma
//! ```
//!
//! on the square `[0, L]^2`. Fluxes are approximated with degree `k`
//! polynomials, scalars and face traces with degree `k + 1`. The element
//! unknowns are eliminated locally, leaving a sparse system in the interior
//! traces of state and adjoint and the boundary control.

pub mod analysis;
pub mod error;
pub mod fespace;
pub mod hdg;
pub mod mesh;
pub mod problems;
pub mod system;

pub use error::{Error, Result};
pub use mesh::Mesh;
pub use problems::{builtin_problem, ProblemSpec};
pub use system::{solve_control_problem, SolutionFields};
