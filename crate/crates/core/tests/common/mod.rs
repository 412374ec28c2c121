#![allow(dead_code)]

use nalgebra::DMatrix;
use plaquette_sim::fockspace::{SymmetricCoeffs, C64};
use rand::Rng;

pub fn random_complex<R: Rng>(rng: &mut R, n: usize) -> DMatrix<C64> {
    DMatrix::from_fn(n, n, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

pub fn random_unitary<R: Rng>(rng: &mut R, n: usize) -> DMatrix<C64> {
    random_complex(rng, n).qr().q()
}

pub fn random_symmetric<R: Rng>(rng: &mut R, n: usize) -> DMatrix<C64> {
    let b = random_complex(rng, n);
    &b + b.transpose()
}

/// `V diag(σ) Vᵀ` with repeated values, including zeros.
pub fn degenerate_symmetric<R: Rng>(rng: &mut R, n: usize) -> DMatrix<C64> {
    let v = random_unitary(rng, n);
    let a = rng.random_range(0.1..1.0);
    let b = rng.random_range(0.1..1.0);
    let pattern = rng.random_range(0..3);
    let sigma: Vec<f64> = (0..n)
        .map(|k| match pattern {
            0 => a,
            1 => {
                if k < n / 2 {
                    a
                } else {
                    0.0
                }
            }
            _ => {
                if k % 2 == 0 {
                    a
                } else {
                    b
                }
            }
        })
        .collect();
    let mut scaled = v.clone();
    for k in 0..n {
        for i in 0..n {
            scaled[(i, k)] *= C64::new(sigma[k], 0.0);
        }
    }
    scaled * v.transpose()
}

pub fn coeffs(m: DMatrix<C64>) -> SymmetricCoeffs {
    SymmetricCoeffs::new(m)
        .expect("symmetric")
        .normalized()
        .expect("nonzero")
}

/// Squared singular values, descending; equal to the eigenvalues of `c c̄`.
pub fn oracle_spectrum(c: &SymmetricCoeffs) -> Vec<f64> {
    let mut s: Vec<f64> = c
        .matrix()
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .map(|x| x * x)
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn oracle_reachable(a: &SymmetricCoeffs, b: &SymmetricCoeffs, tol: f64) -> bool {
    let (x, y) = (oracle_spectrum(a), oracle_spectrum(b));
    x.len() == y.len() && x.iter().zip(&y).all(|(p, q)| (p - q).abs() <= tol)
}
