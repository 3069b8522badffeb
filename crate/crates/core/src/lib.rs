//! Robust hybrid transceiver design for multi-hop amplify-and-forward MIMO
//! relay chains.
//!
//! The crate is organized bottom-up:
//!
//! - [`matdecomp`]: deterministic complex-matrix decompositions (ordered SVD,
//!   Hermitian roots, Cholesky, GMD, DFT, phase projection, Procrustes,
//!   water-filling) that everything else builds on.
//! - [`channel`]: mmWave / Rayleigh channel generators, the exponential
//!   error-correlation model and true-channel realization.
//! - [`sysmodel`]: evaluation of a candidate design on a channel set
//!   (covariance recursion, MSE matrix, WMMSE equalizer, feedback matrix,
//!   spectral efficiency).
//! - [`structopt`]: the optimal-structure per-hop digital designs and the
//!   source/inner rotations.
//! - [`analogdesign`]: unit-modulus analog beamformer optimization
//!   (alternating minimization and the one-shot alignment design).
//! - [`designer`]: end-to-end hybrid design plus the full-digital, OMP and
//!   non-robust baselines.
//! - [`sim`]: seeded Monte-Carlo experiment harness with CSV output.

pub mod analogdesign;
pub mod channel;
pub mod designer;
mod error;
pub mod matdecomp;
pub mod rng;
pub mod sim;
pub mod structopt;
pub mod sysmodel;

pub use error::{Error, Result};
pub use matdecomp::{CMat, CVec, C64};
