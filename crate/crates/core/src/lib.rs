//! Generalized Fourier coefficients of eigenfunctions restricted to flat subtori,
//! their defect measures on `Σ^A` and geodesic recurrence on flat tori.

// `!(x > 0.0)` rejects NaN along with nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod measures;
pub mod numerics;
pub mod quantization;
pub mod states;
pub mod trig;

pub use error::{Error, Result};
pub use geometry::{BaseElement, FlatSubmanifold, PhasePoint, SigmaASet, TorusManifold};
pub use num_complex::Complex64;
