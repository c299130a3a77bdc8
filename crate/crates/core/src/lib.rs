//! Convex extension of functions off a linear subspace under an integral
//! constraint, computed on tensor grids.
//!
//! Given a jointly convex weight `phi(t, x)` and a convex `psi(x)` with
//! `log int e^{psi - phi(0, .)} = 0`, [`extension::extend_convex`] builds a
//! jointly convex `Psi(t, x)` with `Psi(0, .)` close to `psi` and
//! `log int e^{Psi(t, .) - phi(t, .)} <= 0` at every t-node. The building
//! blocks are exposed individually:
//!
//! - [`grid`]: box grids, sampled extended-real functions, interpolation.
//! - [`convexity`]: seeded midpoint-convexity diagnostics.
//! - [`transforms`]: discrete Legendre-Fenchel transforms and envelopes.
//! - [`integrals`]: log-domain trapezoid quadrature and marginals.
//! - [`extension`]: base cases, mixtures, soft Legendre smoothing and the
//!   Hölder contraction loop.
//! - [`extremal`]: the largest convex function satisfying the constraint.
//! - [`io`]: JSON and CSV encodings.

pub mod convexity;
pub mod error;
pub mod extension;
pub mod extremal;
pub mod grid;
pub mod integrals;
pub mod io;
pub mod transforms;

/// Version of this library.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use convexity::{check_midpoint_convexity, joint_check, ConvexityReport, Witness};
pub use error::{Error, Result};
pub use grid::{Axis, GridFunction, GridSpec, ProductGridFunction};
pub use transforms::AffineFunction;
