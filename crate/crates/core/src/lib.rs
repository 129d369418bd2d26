//! Physics-informed neural networks with densely multiplied hidden layers.
//!
//! The crate is organised bottom-up:
//!
//! - [`tape`]: reverse-mode differentiation over dense tensors.
//! - [`arch`]: the five network architectures, including forward propagation
//!   of first and second input derivatives built from taped primitives.
//! - [`sampling`]: Latin hypercube collocation, initial and boundary points.
//! - [`problems`]: the Allen–Cahn, Helmholtz, Burgers and convection benchmarks.
//! - [`reference`] and [`eval`]: ground-truth solutions and relative L2 error.
//! - [`train`]: full-batch Adam training producing a [`train::RunHistory`].
//! - [`hessian`]: largest Hessian eigenvalue via power iteration.
//! - [`config`]: JSON experiment files expanding into training runs.

pub mod arch;
pub mod config;
pub mod eval;
pub mod hessian;
pub mod problems;
pub mod reference;
pub mod sampling;
pub mod tape;
pub mod train;

pub use arch::{ArchitectureKind, NetworkConfig, NetworkParams};
pub use problems::{ProblemKind, ProblemSpec};
pub use tape::{GradMap, Tape, Tensor, Var};

/// Shortest round-trip decimal form of a float, switching to exponent
/// notation outside `1e-4 ≤ |v| < 1e16` so CSV cells stay short.
#[derive(Clone, Copy, Debug)]
pub struct Compact(pub f64);

impl std::fmt::Display for Compact {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let a = self.0.abs();
        if a == 0.0 || !a.is_finite() || (1e-4..1e16).contains(&a) {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{:e}", self.0)
        }
    }
}
