//! Numerical laboratory for the single-mode quantum diffusion channel
//!
//! ```text
//! dρ/dt = −κ (a†a ρ − a† ρ a − a ρ a† + ρ a a†)
//! ```
//!
//! Density operators are evolved through the channel by several independent
//! routes that are expected to agree:
//!
//! * the Kraus operator sum ([`channel::kraus_evolve`]),
//! * the coherent-state P-function integral ([`channel::evolve_via_p_integral`]),
//! * the analytically continued Gaussian β-integral
//!   ([`channel::evolve_via_husimi_integral`]),
//! * closed-form outputs for coherent, number and squeezed-vacuum inputs,
//!
//! and all of them are checked against a direct RK4 integration of the master
//! equation ([`oracle`]) and the classical diffusion of the P-function
//! ([`phase_space`]).
//!
//! Everything is realized on a truncated Fock basis ([`fock::FockCutoff`]).

pub mod channel;
pub mod error;
pub mod fock;
pub mod oracle;
pub mod phase_space;
pub mod special;

pub use error::{Error, Result};

/// Crate version, recorded in scenario reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Complex scalar used throughout.
pub use num_complex::Complex64;

/// Dense complex matrix on the truncated Fock basis.
pub type CMatrix = nalgebra::DMatrix<Complex64>;

/// Dense complex vector on the truncated Fock basis.
pub type CVector = nalgebra::DVector<Complex64>;
