//! Classical and reaction-diffusion Wasserstein barycenters of unnormalized
//! density fields on box domains.
//!
//! The mean-field-control saddle-point formulation is discretized with
//! tensor-product space-time finite elements: continuous degree-`k` spaces
//! for the multipliers, discontinuous degree-`k-1` spaces collocated at the
//! Gauss-Legendre quadrature points for the physical variables. The discrete
//! problem is solved by the primal-dual hybrid gradient iteration with a
//! per-species Gauss-Seidel elliptic ascent (step 1), extrapolation (step 2),
//! and pointwise proximal descent (step 3).
//!
//! With the `parallel` feature (default) the pointwise solves and tensor
//! kernels run on rayon; without it the crate is fully sequential. Results
//! are bit-identical either way.

pub mod brent;
pub mod config;
pub mod density;
pub mod elliptic;
pub mod error;
pub mod fields;
pub mod mesh;
pub mod model;
pub mod pdhg;
pub mod quadrature;
pub mod report;
pub mod run;
pub mod tensor;
pub mod vtk;

pub use error::{Error, Result};
