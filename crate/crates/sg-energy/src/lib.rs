//! Harmonic structures and energy-measure statistics on level-l Sierpinski gaskets.
//!
//! The level-l gasket SG_l is the self-similar set generated by l(l+1)/2
//! contractions of an equilateral triangle; each contraction carries the
//! triangle onto one upward cell of the level-1 subdivision. This crate
//! derives the associated harmonic structure exactly (renormalization factor,
//! boundary extension matrices), evaluates energy measures of harmonic
//! functions on cells addressed by words over the contraction alphabet, and
//! studies how the induced coefficient triples distribute over deep words:
//! enumeration, weighted histograms in polar coordinates, and Monte Carlo
//! sampling of infinite words.
//!
//! Layout:
//! - [`geometry`]: cell/vertex combinatorics of the level-1 subdivision
//! - [`exact`]: arbitrary-precision rational helpers (fraction-free elimination)
//! - [`harmonic`]: exact harmonic structure (renormalization, extension maps)
//! - [`float_backend`]: f64 fallback for levels beyond the exact cap
//! - [`energy`]: energy model, per-word coefficients, polar coordinates
//! - [`verify`]: self-contained checks with machine-readable reports
//! - [`distribution`]: word enumeration, histograms, Monte Carlo convergence
//! - [`cli`]: command-line front end (also used by the `sg-energy` binary)

// Negated float comparisons are deliberate: `!(x > 0.0)` treats NaN as a
// failure, which the suggested `x <= 0.0` would not. Indexed loops over the
// fixed 3-dimensional kernels keep row/column roles visible.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod distribution;
pub mod energy;
pub mod error;
pub mod exact;
pub mod float_backend;
pub mod geometry;
pub mod harmonic;
pub mod mat3;
pub mod verify;

pub use energy::{BVector, EnergyModel, PolarPoint, Word};
pub use error::SgError;
pub use geometry::SelfSimilarStructure;
pub use harmonic::HarmonicStructure;

/// Crate version, embedded in every output file's metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
