use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use nalgebra::Vector4;
use num_complex::Complex64;

use super::{sigma_yy, Complex4x4, DensityMatrix2Q, PureState2Q, StateError};

/// `(|00⟩ + |11⟩)/√2`.
pub fn bell_phi_plus() -> PureState2Q {
    time_bin_state(0.0)
}

/// `(|00⟩ + e^{iφ_p}|11⟩)/√2`, the pair state produced by a pump
/// interferometer with phase `phi_p`.
pub fn time_bin_state(phi_p: f64) -> PureState2Q {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let late = Complex64::from_polar(FRAC_1_SQRT_2, phi_p);
    PureState2Q::normalized(Vector4::new(h, zero, zero, late))
        .expect("time-bin state has unit norm")
}

/// Decreasing square roots of the spectrum of `ρ (σy⊗σy) ρ* (σy⊗σy)`.
///
/// With `ρ = W W†` the same numbers are the singular values of the
/// complex-symmetric matrix `Wᵀ (σy⊗σy) W`, which avoids taking square
/// roots of eigenvalues that rounding has pushed to ±1e-17.
pub fn wootters_lambdas(rho: &DensityMatrix2Q) -> [f64; 4] {
    let (eigvals, eigvecs) = rho.eigen();
    let w = Complex4x4::from_fn(|r, c| eigvecs[(r, c)] * eigvals[c].sqrt());
    let tau = w.transpose() * sigma_yy() * w;
    let mut s: Vec<f64> = tau.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    [s[0], s[1], s[2], s[3]]
}

/// Wootters concurrence, in `[0, 1]`.
pub fn concurrence(rho: &DensityMatrix2Q) -> f64 {
    let l = wootters_lambdas(rho);
    (l[0] - l[1] - l[2] - l[3]).clamp(0.0, 1.0)
}

/// `⟨ψ|ρ|ψ⟩`, clamped to `[0, 1]`.
pub fn fidelity_to_pure(rho: &DensityMatrix2Q, psi: &PureState2Q) -> f64 {
    let a = psi.amplitudes();
    let f = (a.adjoint() * rho.matrix() * a)[(0, 0)].re;
    f.clamp(0.0, 1.0)
}

/// Range of the maximal CHSH value compatible with a concurrence `c`:
/// `(2√2·c, 2√(1 + c²))`.
pub fn chsh_bounds(c: f64) -> Result<(f64, f64), StateError> {
    if !(0.0..=1.0).contains(&c) {
        return Err(StateError::OutOfRange {
            name: "concurrence",
            value: c,
            min: 0.0,
            max: 1.0,
        });
    }
    Ok((2.0 * SQRT_2 * c, 2.0 * (1.0 + c * c).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn werner(p: f64) -> DensityMatrix2Q {
        let bell = DensityMatrix2Q::from_pure(&bell_phi_plus());
        let m = bell.matrix().scale(p) + Complex4x4::identity().scale((1.0 - p) / 4.0);
        DensityMatrix2Q::new(m).unwrap()
    }

    #[test]
    fn bell_amplitudes() {
        let a = *bell_phi_plus().amplitudes();
        assert!((a[0].re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((a[3].re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(a[1], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn time_bin_phase_pi_flips_sign() {
        let a = *time_bin_state(PI).amplitudes();
        assert!((a[3].re + FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(a[3].im.abs() < 1e-15);
    }

    #[test]
    fn bell_is_maximally_entangled() {
        let rho = DensityMatrix2Q::from_pure(&bell_phi_plus());
        assert!((concurrence(&rho) - 1.0).abs() < 1e-12);
        assert!((fidelity_to_pure(&rho, &bell_phi_plus()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn time_bin_concurrence_independent_of_phase() {
        for k in 0..16 {
            let phi = k as f64 * 0.41 - 3.0;
            let rho = DensityMatrix2Q::from_pure(&time_bin_state(phi));
            assert!((concurrence(&rho) - 1.0).abs() < 1e-12, "phi={phi}");
        }
    }

    #[test]
    fn mixed_and_werner_values() {
        assert_eq!(concurrence(&DensityMatrix2Q::maximally_mixed()), 0.0);
        // closed form max(0, (3p - 1)/2)
        assert!((concurrence(&werner(0.8)) - 0.7).abs() < 1e-12);
        assert_eq!(concurrence(&werner(0.3)), 0.0);
        let f = fidelity_to_pure(&DensityMatrix2Q::maximally_mixed(), &time_bin_state(1.3));
        assert!((f - 0.25).abs() < 1e-15);
    }

    #[test]
    fn chsh_endpoints() {
        let (lo, hi) = chsh_bounds(1.0).unwrap();
        assert!((lo - 2.0 * SQRT_2).abs() < 1e-15);
        assert!((hi - 2.0 * SQRT_2).abs() < 1e-15);
        assert_eq!(chsh_bounds(0.0).unwrap(), (0.0, 2.0));
        let (lo, hi) = chsh_bounds(0.889).unwrap();
        assert!((lo - 2.514).abs() < 1e-3 && (hi - 2.676).abs() < 1e-3);
        assert!(chsh_bounds(1.2).is_err());
        assert!(chsh_bounds(-0.1).is_err());
        assert!(chsh_bounds(f64::NAN).is_err());
    }
}
