use nalgebra::{Matrix2, SMatrix, SVector, SymmetricEigen};
use num_complex::Complex64;

use super::MeasurementRecord;
use crate::quantum::{Basis, Complex4x4, DensityMatrix2Q};

fn pauli(k: usize) -> Matrix2<Complex64> {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    match k {
        0 => Matrix2::identity(),
        1 => Matrix2::new(c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)),
        2 => Matrix2::new(c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)),
        _ => Matrix2::new(c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)),
    }
}

/// Real 16×16 map from Pauli-product coefficients `r_ab` of
/// `σ = Σ r_ab σ_a⊗σ_b / 4` to `tr(σ M_k)` for the given basis pairs.
fn design(pairs: &[(Basis, Basis)]) -> SMatrix<f64, 16, 16> {
    let mut a = SMatrix::<f64, 16, 16>::zeros();
    let paulis: Vec<_> = (0..4).map(pauli).collect();
    for (k, (s, i)) in pairs.iter().enumerate() {
        let ps = s.projector();
        let pi = i.projector();
        for x in 0..4 {
            let ts = (paulis[x] * ps.matrix()).trace().re;
            for y in 0..4 {
                let ti = (paulis[y] * pi.matrix()).trace().re;
                a[(k, 4 * x + y)] = ts * ti / 4.0;
            }
        }
    }
    a
}

/// Solves `tr(σ M_k) = v_k` for a Hermitian `σ` with unit trace after
/// rescaling. Returns `None` when the operators are not informationally
/// complete or the solution has non-positive trace.
pub fn linear_inversion_from_values(values: &[((Basis, Basis), f64)]) -> Option<Complex4x4> {
    if values.len() != 16 {
        return None;
    }
    let pairs: Vec<(Basis, Basis)> = values.iter().map(|v| v.0).collect();
    let a = design(&pairs);
    let b = SVector::<f64, 16>::from_iterator(values.iter().map(|v| v.1));
    let lu = a.lu();
    if lu.determinant().abs() < 1e-12 {
        return None;
    }
    let r = lu.solve(&b)?;
    let mut sigma = Complex4x4::zeros();
    for x in 0..4 {
        for y in 0..4 {
            sigma += pauli(x).kronecker(&pauli(y)) * Complex64::new(r[4 * x + y] / 4.0, 0.0);
        }
    }
    let trace = sigma.trace().re;
    if !(trace.is_finite() && trace > 0.0) {
        return None;
    }
    Some(sigma.unscale(trace))
}

/// Unit-trace Hermitian estimate from the count rates `n_k / weight_k`;
/// may have negative eigenvalues.
pub fn linear_inversion(record: &MeasurementRecord) -> Option<Complex4x4> {
    let values: Vec<_> = record
        .entries()
        .iter()
        .map(|e| ((e.signal, e.idler), e.count as f64 / e.weight()))
        .collect();
    linear_inversion_from_values(&values)
}

/// Closest density matrix in Frobenius norm to a unit-trace Hermitian
/// matrix: negative eigenvalues are zeroed and their weight spread over
/// the remaining ones.
pub fn project_to_physical(matrix: &Complex4x4) -> DensityMatrix2Q {
    let h = (matrix + matrix.adjoint()).unscale(2.0);
    let trace = h.trace().re;
    let h = if trace > 0.0 { h.unscale(trace) } else { h };
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut lam: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut deficit = 0.0;
    let mut i = 3;
    loop {
        if lam[i] + deficit / (i as f64 + 1.0) >= 0.0 {
            break;
        }
        deficit += lam[i];
        lam[i] = 0.0;
        if i == 0 {
            break;
        }
        i -= 1;
    }
    for l in lam.iter_mut().take(i + 1) {
        *l += deficit / (i as f64 + 1.0);
    }
    let mut out = Complex4x4::zeros();
    for (j, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        out += v * v.adjoint() * Complex64::new(lam[j].max(0.0), 0.0);
    }
    DensityMatrix2Q::from_unnormalized((out + out.adjoint()).unscale(2.0))
        .unwrap_or_else(|_| DensityMatrix2Q::maximally_mixed())
}

/// Lower-triangular `T` with `T†T = ρ`, for a full-rank `ρ`.
pub(crate) fn lower_factor(rho: &Complex4x4) -> Option<Complex4x4> {
    let j = Complex4x4::from_fn(|r, c| {
        if r + c == 3 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let flipped = j * rho * j;
    let l = flipped.cholesky()?.l();
    Some((j * l * j).adjoint())
}
