//! Symplectic capacities, generalized systoles and the systolic S¹-index of
//! convex bodies in ℝ²ⁿ.
//!
//! The first capacity `c₁` of a convex body `K` is computed as the minimum of
//! the Clarke dual action functional over Fourier-truncated zero-mean loops.
//! Closed-form capacity sequences of ellipsoids and polydiscs give the
//! systolic S¹-index as the length of the plateau `c_i = c₁`.
//!
//! Coordinates are always in block order `(x₁, …, xₙ, y₁, …, yₙ)` and the
//! complex structure acts on every symplectic plane `(x_j, y_j)` as
//! `(x, y) ↦ (−y, x)`.

pub mod capacities;
pub mod cli;
pub mod corpus;
pub mod dual_solver;
pub mod error;
pub mod geometry;
pub mod john;
mod linalg;
pub mod loops;
pub mod output;
pub mod svg;
pub mod zoll;

pub use capacities::{CapacitySequence, IndexBoundFlavor, IndexReport, Provenance};
pub use dual_solver::{RunResult, SolveConfig, SystoleResult};
pub use error::{Error, Result};
pub use geometry::{Body, BodyKind, BodySpec, Ellipsoid};
pub use loops::{FourierLoop, TimeLoop};
