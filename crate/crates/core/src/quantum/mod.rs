//! Exact two-qubit state algebra for time-bin qubits.
//!
//! Qubit labels are the early (`|0⟩`) and late (`|1⟩`) time bins of the
//! signal and idler photons; the computational basis is ordered
//! `|00⟩, |01⟩, |10⟩, |11⟩` with the signal qubit first.

mod density;
mod measure;
mod metrics;

use nalgebra::Matrix4;
use num_complex::Complex64;
use thiserror::Error;

pub use density::{DensityMatrix2Q, MatrixJson, PureState2Q};
pub use measure::{born_probability, measurement_operator, Basis, Projector1Q};
pub use metrics::{
    bell_phi_plus, chsh_bounds, concurrence, fidelity_to_pure, time_bin_state, wootters_lambdas,
};

/// Row-major 4×4 complex matrix on the two-qubit space.
pub type Complex4x4 = Matrix4<Complex64>;

/// Largest tolerated entrywise `|ρ − ρ†|`.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Largest tolerated `|tr ρ − 1|` and `|‖ψ‖ − 1|`.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Eigenvalues down to `-POSITIVITY_TOL` are accepted and treated as zero.
pub const POSITIVITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not Hermitian (max |rho - rho^dagger| = {0:e})")]
    NotHermitian(f64),
    #[error("trace {0} differs from 1")]
    BadTrace(f64),
    #[error("matrix is not positive (smallest eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("state vector norm {0} differs from 1")]
    BadNorm(f64),
    #[error("{name} = {value} outside [{min}, {max}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
}

/// `σ_y ⊗ σ_y`, which is real.
pub(crate) fn sigma_yy() -> Complex4x4 {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    Complex4x4::new(
        zero, zero, zero, -one, //
        zero, zero, one, zero, //
        zero, one, zero, zero, //
        -one, zero, zero, zero,
    )
}
