use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Complex4x4, DensityMatrix2Q};

/// Single-qubit analysis basis used in time-bin tomography.
///
/// `Z0`/`Z1` are the early and late bins; `X+` and `Y+` are the equal
/// superpositions with relative phase 0 and π/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    #[serde(rename = "Z0")]
    Z0,
    #[serde(rename = "Z1")]
    Z1,
    #[serde(rename = "X+")]
    XPlus,
    #[serde(rename = "Y+")]
    YPlus,
}

impl Basis {
    pub const ALL: [Basis; 4] = [Basis::Z0, Basis::Z1, Basis::XPlus, Basis::YPlus];

    pub fn label(self) -> &'static str {
        match self {
            Basis::Z0 => "Z0",
            Basis::Z1 => "Z1",
            Basis::XPlus => "X+",
            Basis::YPlus => "Y+",
        }
    }

    /// Unit ket of the basis state.
    pub fn ket(self) -> Vector2<Complex64> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Basis::Z0 => Vector2::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
            Basis::Z1 => Vector2::new(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)),
            Basis::XPlus => Vector2::new(Complex64::new(h, 0.0), Complex64::new(h, 0.0)),
            Basis::YPlus => Vector2::new(Complex64::new(h, 0.0), Complex64::new(0.0, h)),
        }
    }

    pub fn projector(self) -> Projector1Q {
        Projector1Q::new(self)
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Basis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Basis::ALL
            .into_iter()
            .find(|b| b.label() == s)
            .ok_or_else(|| format!("unknown basis label `{s}` (expected Z0, Z1, X+ or Y+)"))
    }
}

/// Rank-one projector `|b⟩⟨b|` onto one of the four analysis states.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector1Q {
    basis: Basis,
    matrix: Matrix2<Complex64>,
}

impl Projector1Q {
    pub fn new(basis: Basis) -> Self {
        let k = basis.ket();
        Self {
            basis,
            matrix: k * k.adjoint(),
        }
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn matrix(&self) -> &Matrix2<Complex64> {
        &self.matrix
    }
}

/// Joint projector `Π_s ⊗ Π_i` for a signal/idler basis pair.
pub fn measurement_operator(signal: &Projector1Q, idler: &Projector1Q) -> Complex4x4 {
    signal.matrix.kronecker(&idler.matrix)
}

/// `tr(ρ M)` for a Hermitian operator `M`.
pub fn born_probability(rho: &DensityMatrix2Q, op: &Complex4x4) -> f64 {
    (rho.matrix() * op).trace().re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{bell_phi_plus, HERMITICITY_TOL};

    #[test]
    fn projectors_are_idempotent_rank_one() {
        for b in Basis::ALL {
            let p = b.projector();
            let m = p.matrix();
            assert!((m * m - m).norm() < 1e-12, "{b}");
            assert!((m.trace().re - 1.0).abs() < 1e-12);
            // rank one: determinant vanishes for a 2x2 trace-one projector
            assert!(m.determinant().norm() < 1e-12);
        }
    }

    #[test]
    fn z0_z0_is_first_diagonal_unit() {
        let op = measurement_operator(&Basis::Z0.projector(), &Basis::Z0.projector());
        let mut expected = Complex4x4::zeros();
        expected[(0, 0)] = Complex64::new(1.0, 0.0);
        assert_eq!(op, expected);
    }

    #[test]
    fn joint_operators_are_hermitian_idempotent() {
        for s in Basis::ALL {
            for i in Basis::ALL {
                let op = measurement_operator(&s.projector(), &i.projector());
                assert!((op - op.adjoint()).norm() < HERMITICITY_TOL);
                assert!((op * op - op).norm() < 1e-12);
                assert!((op.trace().re - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bell_state_probabilities() {
        let rho = DensityMatrix2Q::from_pure(&bell_phi_plus());
        let xx = measurement_operator(&Basis::XPlus.projector(), &Basis::XPlus.projector());
        assert!((born_probability(&rho, &xx) - 0.5).abs() < 1e-12);
        let z01 = measurement_operator(&Basis::Z0.projector(), &Basis::Z1.projector());
        assert!(born_probability(&rho, &z01).abs() < 1e-15);
        let yy = measurement_operator(&Basis::YPlus.projector(), &Basis::YPlus.projector());
        assert!(born_probability(&rho, &yy).abs() < 1e-12);
    }

    #[test]
    fn labels_round_trip() {
        for b in Basis::ALL {
            assert_eq!(b.label().parse::<Basis>().unwrap(), b);
            let json = serde_json::to_string(&b).unwrap();
            assert_eq!(json, format!("\"{}\"", b.label()));
        }
        assert!("X-".parse::<Basis>().is_err());
    }
}
