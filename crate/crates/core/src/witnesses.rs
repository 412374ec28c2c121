//! Reference coefficient matrices and unitaries for the four-qubit plaquette.
//!
//! Register `k` holds qubit `k`; matrices are indexed from level 1.

use nalgebra::DMatrix;

use crate::fockspace::{SymmetricCoeffs, C64, ONE, ZERO};

fn real(rows: &[[f64; 4]; 4]) -> SymmetricCoeffs {
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    SymmetricCoeffs::from_real_rows(&refs).expect("witness matrices are symmetric")
}

/// `|1100⟩`.
pub fn pair_12_coeffs() -> SymmetricCoeffs {
    real(&[
        [0.0, 0.5, 0.0, 0.0],
        [0.5, 0.0, 0.0, 0.0],
        [0.0; 4],
        [0.0; 4],
    ])
}

/// `(|1001⟩ + |0110⟩ − |0011⟩ − |1100⟩)/2`, the product of singlets on
/// (1,3) and (2,4).
pub fn phi_minus_coeffs() -> SymmetricCoeffs {
    let q = 0.25;
    real(&[
        [0.0, -q, 0.0, q],
        [-q, 0.0, q, 0.0],
        [0.0, q, 0.0, -q],
        [q, 0.0, -q, 0.0],
    ])
}

/// The symmetric resonating-valence-bond plaquette state.
pub fn phi_plus_coeffs() -> SymmetricCoeffs {
    let s = 1.0 / (4.0 * 3f64.sqrt());
    real(&[
        [0.0, s, -2.0 * s, s],
        [s, 0.0, s, -2.0 * s],
        [-2.0 * s, s, 0.0, s],
        [s, -2.0 * s, s, 0.0],
    ])
}

/// `√(2/3)|2000⟩ + √(1/3)|0110⟩`, Raman-equivalent to [`phi_plus_coeffs`].
pub fn double_plus_pair_coeffs() -> SymmetricCoeffs {
    let a = 1.0 / 3f64.sqrt();
    let b = 0.5 * a;
    real(&[
        [a, 0.0, 0.0, 0.0],
        [0.0, 0.0, b, 0.0],
        [0.0, b, 0.0, 0.0],
        [0.0; 4],
    ])
}

/// `(|1010⟩ + |0101⟩)/√2`.
pub fn box_coeffs() -> SymmetricCoeffs {
    let h = 0.5 / 2f64.sqrt();
    real(&[
        [0.0, 0.0, h, 0.0],
        [0.0, 0.0, 0.0, h],
        [h, 0.0, 0.0, 0.0],
        [0.0, h, 0.0, 0.0],
    ])
}

/// `(|2000⟩ + |0101⟩)/√2`.
pub fn double_box_coeffs() -> SymmetricCoeffs {
    let h = 0.5 / 2f64.sqrt();
    real(&[
        [0.5, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, h],
        [0.0; 4],
        [0.0, h, 0.0, 0.0],
    ])
}

/// Unitary with `Uᵀ c U` taking [`pair_12_coeffs`] to [`phi_minus_coeffs`].
pub fn u_phi_minus() -> DMatrix<C64> {
    let h = C64::new(0.5f64.sqrt(), 0.0);
    DMatrix::from_row_slice(
        4,
        4,
        &[
            -ONE, ZERO, ONE, ZERO, ZERO, ONE, ZERO, -ONE, ONE, ZERO, ONE, ZERO, ZERO, ONE, ZERO,
            ONE,
        ],
    ) * h
}

/// Unitary with `Uᵀ c U` taking [`double_plus_pair_coeffs`] to
/// [`phi_plus_coeffs`].
pub fn u_phi_plus() -> DMatrix<C64> {
    let i = C64::new(0.0, 1.0);
    DMatrix::from_row_slice(
        4,
        4,
        &[
            i, -i, i, -i, -i, ONE, i, -ONE, i, ONE, -i, -ONE, ONE, ONE, ONE, ONE,
        ],
    ) * C64::new(0.5, 0.0)
}

/// Two-step real rotation on the single-excitation subspace of levels
/// (2, 3, 4) that maps `(1,1,1)/√3` to `(1,0,0)`, as an amplitude map.
pub fn spinon_rotation() -> DMatrix<f64> {
    let (a, b) = ((1.0f64 / 3.0).sqrt(), (2.0f64 / 3.0).sqrt());
    let h = 0.5f64.sqrt();
    let first = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, h, h, 0.0, -h, h]);
    let second = DMatrix::from_row_slice(3, 3, &[a, b, 0.0, -b, a, 0.0, 0.0, 0.0, 1.0]);
    second * first
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn witnesses_are_consistent() {
        for (c, t, u) in [
            (pair_12_coeffs(), phi_minus_coeffs(), u_phi_minus()),
            (double_plus_pair_coeffs(), phi_plus_coeffs(), u_phi_plus()),
        ] {
            assert!((u.adjoint() * &u - DMatrix::<C64>::identity(4, 4)).norm() < 1e-15);
            assert!((u.transpose() * c.matrix() * &u - t.matrix()).norm() < 1e-15);
        }
        for c in [
            pair_12_coeffs(),
            phi_minus_coeffs(),
            phi_plus_coeffs(),
            double_plus_pair_coeffs(),
            box_coeffs(),
            double_box_coeffs(),
        ] {
            assert!((c.state_norm_sqr() - 1.0).abs() < 1e-15);
        }
        let t = spinon_rotation();
        let v = t * nalgebra::DVector::from_element(3, 1.0 / 3f64.sqrt());
        assert!((v[0] - 1.0).abs() < 1e-15 && v[1].abs() < 1e-15 && v[2].abs() < 1e-15);
    }
}
