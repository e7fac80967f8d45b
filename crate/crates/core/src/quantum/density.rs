use nalgebra::{Matrix2, SymmetricEigen, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Complex4x4, StateError, HERMITICITY_TOL, NORMALIZATION_TOL, POSITIVITY_TOL};

/// Validated two-qubit density matrix.
///
/// Construction symmetrizes the input to exact Hermiticity once the
/// tolerance check has passed. Slightly negative eigenvalues (down to
/// `-POSITIVITY_TOL`) are kept in the stored matrix and clamped to zero by
/// every routine that consumes the spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct DensityMatrix2Q {
    matrix: Complex4x4,
}

impl DensityMatrix2Q {
    pub fn new(matrix: Complex4x4) -> Result<Self, StateError> {
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(StateError::NonFinite);
        }
        let adjoint = matrix.adjoint();
        let deviation = (matrix - adjoint)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if deviation > HERMITICITY_TOL {
            return Err(StateError::NotHermitian(deviation));
        }
        let matrix = (matrix + adjoint).unscale(2.0);
        let trace = matrix.trace().re;
        if (trace - 1.0).abs() > NORMALIZATION_TOL {
            return Err(StateError::BadTrace(trace));
        }
        let min_eig = SymmetricEigen::new(matrix).eigenvalues.min();
        if min_eig < -POSITIVITY_TOL {
            return Err(StateError::NotPositive(min_eig));
        }
        Ok(Self { matrix })
    }

    /// Divides by the trace before validating, for data that is only
    /// normalized to the precision it was reported with.
    pub fn from_unnormalized(matrix: Complex4x4) -> Result<Self, StateError> {
        let trace = matrix.trace().re;
        if !(trace.is_finite() && trace > 0.0) {
            return Err(StateError::BadTrace(trace));
        }
        Self::new(matrix.unscale(trace))
    }

    pub fn maximally_mixed() -> Self {
        Self {
            matrix: Complex4x4::identity().unscale(4.0),
        }
    }

    pub fn from_pure(psi: &PureState2Q) -> Self {
        let a = psi.amplitudes();
        Self {
            matrix: a * a.adjoint(),
        }
    }

    pub fn matrix(&self) -> &Complex4x4 {
        &self.matrix
    }

    pub fn into_matrix(self) -> Complex4x4 {
        self.matrix
    }

    /// Eigenvalues (clamped at zero) and eigenvectors as columns.
    pub fn eigen(&self) -> (Vector4<f64>, Complex4x4) {
        let eig = SymmetricEigen::new(self.matrix);
        (eig.eigenvalues.map(|l| l.max(0.0)), eig.eigenvectors)
    }

    pub fn purity(&self) -> f64 {
        (self.matrix * self.matrix).trace().re
    }

    /// Exchanges the signal and idler qubits.
    pub fn swap_qubits(&self) -> Self {
        const PERM: [usize; 4] = [0, 2, 1, 3];
        let matrix = Complex4x4::from_fn(|r, c| self.matrix[(PERM[r], PERM[c])]);
        Self { matrix }
    }

    /// Applies `U ⊗ V` to both sides, `(U⊗V) ρ (U⊗V)†`.
    pub fn transform_local(&self, u: &Matrix2<Complex64>, v: &Matrix2<Complex64>) -> Self {
        let uv: Complex4x4 = u.kronecker(v);
        let matrix = uv * self.matrix * uv.adjoint();
        Self {
            matrix: (matrix + matrix.adjoint()).unscale(2.0),
        }
    }

    /// Entrywise absolute values, the form tomography results are usually
    /// tabulated in.
    pub fn abs_entries(&self) -> [[f64; 4]; 4] {
        std::array::from_fn(|r| std::array::from_fn(|c| self.matrix[(r, c)].norm()))
    }
}

impl TryFrom<Complex4x4> for DensityMatrix2Q {
    type Error = StateError;

    fn try_from(m: Complex4x4) -> Result<Self, StateError> {
        Self::new(m)
    }
}

/// JSON layout of a complex 4×4 matrix: separate real and imaginary
/// row-major arrays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub re: [[f64; 4]; 4],
    pub im: [[f64; 4]; 4],
}

impl From<&Complex4x4> for MatrixJson {
    fn from(m: &Complex4x4) -> Self {
        Self {
            re: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)].re)),
            im: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)].im)),
        }
    }
}

impl From<MatrixJson> for Complex4x4 {
    fn from(j: MatrixJson) -> Self {
        Complex4x4::from_fn(|r, c| Complex64::new(j.re[r][c], j.im[r][c]))
    }
}

impl From<DensityMatrix2Q> for MatrixJson {
    fn from(rho: DensityMatrix2Q) -> Self {
        MatrixJson::from(&rho.matrix)
    }
}

impl TryFrom<MatrixJson> for DensityMatrix2Q {
    type Error = StateError;

    fn try_from(j: MatrixJson) -> Result<Self, StateError> {
        Self::new(j.into())
    }
}

/// Normalized pure state in the `|00⟩, |01⟩, |10⟩, |11⟩` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState2Q {
    amplitudes: Vector4<Complex64>,
}

impl PureState2Q {
    pub fn new(amplitudes: Vector4<Complex64>) -> Result<Self, StateError> {
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(StateError::NonFinite);
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORMALIZATION_TOL {
            return Err(StateError::BadNorm(norm));
        }
        Ok(Self { amplitudes })
    }

    /// Rescales any nonzero vector to unit norm.
    pub fn normalized(amplitudes: Vector4<Complex64>) -> Result<Self, StateError> {
        let norm = amplitudes.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(StateError::BadNorm(norm));
        }
        Self::new(amplitudes.unscale(norm))
    }

    /// Product state `|a⟩ ⊗ |b⟩` of two single-qubit vectors.
    pub fn product(
        a: &nalgebra::Vector2<Complex64>,
        b: &nalgebra::Vector2<Complex64>,
    ) -> Result<Self, StateError> {
        Self::normalized(a.kronecker(b))
    }

    pub fn amplitudes(&self) -> &Vector4<Complex64> {
        &self.amplitudes
    }
}
