//! Generalized frames over ℝ and ℂ: frame algebra, a fixed-point scheme that
//! turns a frame into a unit-norm tight frame while preserving each element's
//! fast matrix-vector structure, random frame ensembles, and
//! perfect-reconstruction filter bank pipelines built on top of them.

pub mod ensembles;
pub mod experiments;
pub mod filterbank;
pub mod formats;
pub mod frame;
pub mod linalg;
pub mod operators;
pub mod reference;
pub mod scalar;
pub mod tyler;

pub use frame::GFrame;
pub use linalg::{HermitianPd, LinalgError};
pub use operators::StructuredOperator;
pub use scalar::{Field, Scalar};
pub use tyler::{tighten, TightenOptions, TightenResult, TightenStatus};
