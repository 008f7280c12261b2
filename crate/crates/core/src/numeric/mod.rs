//! Linear algebra and transform primitives shared by the analysis modules.
//!
//! Transform convention, used everywhere in the crate: the forward transform
//! carries the negative exponent, `X[s] = sum_t x[t] exp(-2 pi i s t / n)`, and
//! frequencies are angular, `w_s = 2 pi s / n`.

mod complex;
mod dft;
mod eig;
mod ols;

pub use complex::{ComplexMatrix, HERMITIAN_TOL};
pub use dft::{dft, idft, DftPlan, Sign};
pub use eig::{hermitian_eig, HermitianEigen};
pub use ols::{ols_fit, ols_fit_pruned, OlsFit, RANK_TOL};

pub use num_complex::Complex64;
