//! Convergence analysis for multiple subdivision schemes, where both the
//! mask and the dilation matrix may change from level to level.
//!
//! The pipeline builds a finite invariant index set `Omega`, assembles the
//! transition matrices `T_{d,j,Omega}`, restricts them to the zero-sum
//! subspace and brackets the joint spectral radius of the restrictions.
//! A scheme set converges iff that radius is below one.
//!
//! Masks, sequences and transition matrices are generic over [`Scalar`]
//! (exact rationals, `f64`, `f32`); the spectral radius code is generic over
//! [`JsrFloat`]. The aliases below fix the common choices.
//!
//! ```
//! use msubdiv::{format::parse_scheme, analysis::{analyze_convergence, Budget, Verdict}};
//!
//! let text = r#"{"dimension": 1, "operators": [{
//!     "label": "1", "dilation": [[2]],
//!     "mask": [{"point": [0], "value": "1/2"}, {"point": [1], "value": 1},
//!              {"point": [2], "value": "1/2"}]}]}"#;
//! let scheme = parse_scheme(text).unwrap();
//! let report = analyze_convergence(&scheme, &Budget::default()).unwrap();
//! assert_eq!(report.verdict, Verdict::Convergent);
//! ```

pub mod analysis;
pub mod error;
pub mod format;
pub mod jsr;
pub mod lattice;
pub mod matrix;
pub mod omega;
pub mod scalar;
pub mod scheme;
pub mod transition;

pub use error::{Error, Result};
pub use lattice::{IntMatrix, LatticeSet, Point};
pub use matrix::Matrix;
pub use scalar::{JsrFloat, Scalar};

/// Exact rational scalar used by parsing and the certified pipeline.
pub type Rational = num_rational::BigRational;

pub type ExactMask = scheme::Mask<Rational>;
pub type ExactOp = scheme::SubdivisionOp<Rational>;
pub type ExactScheme = scheme::SchemeSet<Rational>;
pub type ExactSequence = scheme::BoundedSequence<Rational>;
pub type ExactTransition = transition::TransitionMatrix<Rational>;
pub type ExactRestricted = transition::RestrictedFamily<Rational>;

pub type FloatScheme = scheme::SchemeSet<f64>;
pub type Family = jsr::MatrixFamily<f64>;
