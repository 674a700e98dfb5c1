//! Numerical laboratory for weighted Bergman kernels, curvature measures and
//! zeros of random polynomials on the projective line.
//!
//! The model space is ℙ¹ with the Fubini–Study form normalized to total mass 1,
//! realized as the affine chart ℂ plus an explicit atom at ∞. Hermitian metrics
//! on O(p) are encoded by weight functions W on the chart with logarithmic
//! growth; the square-integrable section space is the span of the integrable
//! monomials with inner product
//!
//! ```text
//! ⟨z^j, z^k⟩ = ∫_ℂ z^j conj(z)^k e^{−2W(z)} ω_FS(z)
//! ```
//!
//! On top of this the crate builds: Gram matrices and orthonormal bases
//! ([`bergman::gram_matrix`]), the Bergman kernel function P_p and its induced
//! current ([`bergman::bergman_kernel`], [`bergman::fubini_study_current`]),
//! sphere/Gaussian random sections and their zero sets ([`zeros`]), and the
//! semiclassical convergence statistics and explicit kernel-ratio envelopes
//! ([`asymptotics`]).
//!
//! See the `examples/` directory for one runnable example per capability, and
//! the `projline` binary for the batch experiment runner.

pub mod asymptotics;
pub mod bergman;
pub mod config;
pub mod error;
pub mod geometry;
pub mod runner;
pub mod weights;
pub mod zeros;

pub use error::{Error, Result};
pub use geometry::{Chart, Grid, GridMeasure, TestFunction};

/// Artifact version embedded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
