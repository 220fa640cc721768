//! Free-knot piecewise-linear fitting by block Newton methods.
//!
//! This crate fits shallow ReLU networks in one dimension — equivalently,
//! free-knot piecewise-linear splines — to target functions (weighted least
//! squares) and to diffusion-reaction two-point boundary-value problems
//! (Ritz energy minimization with a right-boundary penalty). Optimization
//! runs a 2x2 block Newton outer iteration over the linear coefficients and
//! the breakpoints: nonlinear Gauss-Seidel, linear Gauss-Seidel, or Jacobi,
//! each with exact Newton inner solves, plus the reduced variant that skips
//! or redistributes degenerate neurons.
//!
//! Module map:
//! - [`model`]: the piecewise-linear network and its mesh quantities.
//! - [`problems`]: problem definitions, coefficient functions, the built-in
//!   experiment catalog, and an arithmetic expression parser.
//! - [`quadrature`]: breakpoint-aware adaptive Gauss-Legendre integration.
//! - [`assembly`]: objective, block gradients, and exact Hessian blocks.
//! - [`solver`]: the block Newton iterations with neuron classification,
//!   reduced directions, and redistribution.
//! - [`analysis`]: numerical certificates (SPD checks, convergence
//!   conditions, fixed-point Jacobians, contraction factors, error norms).
//! - [`fdcheck`]: finite-difference validation of gradients and Hessians.
//!
//! Everything is generic over the floating-point scalar via
//! [`scalar::Scalar`]; `f64` aliases for the main types are exported below.

pub mod analysis;
pub mod assembly;
pub mod fdcheck;
pub mod linalg;
pub mod model;
pub mod problems;
pub mod quadrature;
pub mod scalar;
pub mod solver;

pub use scalar::Scalar;

/// `f64` instantiations of the core types.
pub type Interval64 = model::Interval<f64>;
pub type Network64 = model::Network<f64>;
pub type MeshQuantities64 = model::MeshQuantities<f64>;
pub type Problem64 = problems::Problem<f64>;
pub type CoefficientFunction64 = problems::CoefficientFunction<f64>;
pub type QuadratureSpec64 = quadrature::QuadratureSpec<f64>;
pub type AssembledSystem64 = assembly::AssembledSystem<f64>;
pub type SolverConfig64 = solver::SolverConfig<f64>;
pub type Matrix64 = linalg::Matrix<f64>;
