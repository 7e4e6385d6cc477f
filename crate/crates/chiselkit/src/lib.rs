//! chiselkit — null-pattern detection in dense multiway arrays.
//!
//! A *chisel* is a small m×ℓ matrix `C`; together with per-axis eigenvalue
//! lists δ it cuts a *null pattern* Δ(C, δ) out of the block tuples of an
//! order-ℓ array: exactly the tuples whose eigenvalue combinations vanish
//! under every row of `C`. Tensors exhibiting such a pattern admit
//! *C-derivations* — operator tuples (D₁, …, D_ℓ) lying in the nullspace of
//! a linear system built from the tensor — and, conversely, the generalized
//! eigenspaces of any C-derivation recover the pattern. This crate implements
//! both directions:
//!
//! * [`derivation`] assembles the linear system for a tensor and chisel,
//!   extracts its smallest singular pairs, and proposes a derivation tuple;
//! * [`spectral`] clusters the eigenvalues of each operator, computes
//!   invariant-subspace bases without forming Jordan forms, orders the
//!   blocks canonically, and unscrambles the tensor;
//! * [`synthesis`] builds seeded pattern tensors, scrambles them through
//!   random basis changes, and adds calibrated noise, so the whole pipeline
//!   can be validated end to end;
//! * [`multiarray`], [`chisel`], and [`pattern`] supply the supporting
//!   types: dense arrays with multilinear evaluation, chisel normalization
//!   and classification, and pattern enumeration/conformance reports.
//!
//! ```
//! use chiselkit::chisel::Chisel;
//! use chiselkit::pattern::{delta_pattern, DeltaSpec};
//!
//! // One row, coefficients (1, 1, -1): a tuple (i, j, k) is on-pattern
//! // exactly when delta1(i) + delta2(j) - delta3(k) = 0.
//! let c = Chisel::from_rows(vec![vec![1.0, 1.0, -1.0]]).unwrap();
//! let delta = DeltaSpec::from_real(vec![
//!     vec![0.5, 1.0],
//!     vec![0.5, 1.0, 2.0],
//!     vec![1.0, 1.5, 2.0, 2.5],
//! ]).unwrap();
//! let pattern = delta_pattern(&c, &delta, 0.0).unwrap();
//! assert_eq!(pattern.len(), 5);
//! ```

pub mod chisel;
pub mod derivation;
pub mod error;
pub mod jsonfmt;
pub(crate) mod linalg;
pub mod multiarray;
pub mod pattern;
pub mod spectral;
pub mod synthesis;

pub use error::{Error, Result};

/// Complex scalar used throughout the crate.
pub type C64 = nalgebra::Complex<f64>;
