//! Random test and model instances: Haar unitaries, Ginibre density
//! matrices, Hermitian and anti-Hermitian generators.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::matrix::ComplexMatrix;
use super::typed::{DensityMatrix, UnitaryMatrix};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Complex Ginibre matrix with unit-variance entries.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Haar-distributed unitary (QR of a Ginibre matrix with phase fix).
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> UnitaryMatrix {
    let qr = ginibre(n, n, rng).to_nalgebra().qr();
    let q = qr.q();
    let r = qr.r();
    let mut m = ComplexMatrix::from_nalgebra(&q);
    let phases: Vec<Complex64> = (0..n)
        .map(|i| {
            let d = r[(i, i)];
            if d.norm() > 0.0 {
                d / d.norm()
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
        .collect();
    m = m.matmul(&ComplexMatrix::from_diagonal(&phases));
    UnitaryMatrix::trusted(m)
}

/// Full-rank random density matrix `G G* / tr(G G*)`.
pub fn random_density<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DensityMatrix {
    let g = ginibre(n, n, rng);
    let w = g.matmul(&g.dagger());
    let tr = w.trace().re;
    DensityMatrix::trusted(w.scale_real(1.0 / tr).hermitian_part())
}

/// Random normalized state vector.
pub fn random_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..n).map(|_| gaussian(rng)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

/// Random Hermitian matrix (GUE-like).
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    ginibre(n, n, rng).hermitian_part()
}

/// Random anti-Hermitian matrix with operator norm exactly one.
pub fn random_anti_hermitian_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    let h = random_hermitian(n, rng);
    let norm = h.operator_norm();
    h.scale(Complex64::new(0.0, 1.0 / norm))
}
