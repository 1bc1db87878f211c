//! Numerical homogenization of pulsating standing waves in periodic
//! Allen-Cahn media.
//!
//! The library computes minimizers of the cylinder Lagrangian
//! T_e(U) = ∫ (1/2)⟨a(x) D_e U, D_e U⟩ + W(U) over [-L,L]×T^k with
//! D_e = e ∂_s + D_x, and derives from them the effective surface tension
//! φ(e), its gradient and Hessian (via corrector equations), the mobility
//! M(e) = ∫(∂_s U)², and the Einstein-relation cross check. A 2D laminar
//! family reproduces the energy-gap / non-differentiability pathologies, and
//! a sharp-interface driver validates the ε→0 front law against the
//! homogenized graph flow h_t = tr(G(Dh) D²h).

pub mod config;
pub mod cylinder;
pub mod effective;
pub mod error;
pub mod frontsim;
pub mod laminar2d;
pub mod media;
pub mod wave;

pub use error::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// σ₀ = ∫_{-1}^{1} √(2W) du = 2√2/3 for the quartic well: the surface
/// tension of the homogeneous medium.
pub const SIGMA0: f64 = 0.9428090415820634;
