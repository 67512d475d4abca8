//! Kraus families extracted from an interaction unitary on `C^N ⊗ C^M`.
//!
//! Basis convention: the field factor comes first, so the composite index
//! of `(alpha, i)` is `alpha * M + i`, and field slot 0 is the vacuum.

use num_complex::Complex64;

use crate::error::{EthError, Result};
use crate::matcore::{ComplexMatrix, DensityMatrix, Tolerances, UnitaryMatrix};

/// The operators `L[alpha][l]` with
/// `<u, L[alpha][l] v> = <phi_alpha ⊗ u, U phi_l ⊗ v>`.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausFamily {
    field_dim: usize,
    atom_dim: usize,
    // row-major in (alpha, l)
    operators: Vec<ComplexMatrix>,
}

impl KrausFamily {
    /// Wraps operators without checking the sum rule. `operators` is indexed
    /// `[alpha * field_dim + l]`.
    pub fn from_operators(field_dim: usize, atom_dim: usize, operators: Vec<ComplexMatrix>) -> Result<Self> {
        if operators.len() != field_dim * field_dim {
            return Err(EthError::DimensionMismatch(format!(
                "expected {} Kraus operators, got {}",
                field_dim * field_dim,
                operators.len()
            )));
        }
        if let Some(bad) = operators
            .iter()
            .find(|op| op.rows() != atom_dim || op.cols() != atom_dim)
        {
            return Err(EthError::DimensionMismatch(format!(
                "Kraus operator of shape {}x{} on an atom of dimension {atom_dim}",
                bad.rows(),
                bad.cols()
            )));
        }
        Ok(Self {
            field_dim,
            atom_dim,
            operators,
        })
    }

    pub fn field_dim(&self) -> usize {
        self.field_dim
    }

    pub fn atom_dim(&self) -> usize {
        self.atom_dim
    }

    /// `L[alpha][l]`, both indices 0-based.
    pub fn operator(&self, alpha: usize, l: usize) -> &ComplexMatrix {
        &self.operators[alpha * self.field_dim + l]
    }

    /// The family `{L[alpha][l]}_alpha` for incoming field index `l`.
    pub fn column(&self, l: usize) -> impl Iterator<Item = &ComplexMatrix> {
        (0..self.field_dim).map(move |alpha| self.operator(alpha, l))
    }

    fn check_field_index(&self, l: usize) -> Result<()> {
        if l >= self.field_dim {
            return Err(EthError::IndexOutOfRange {
                what: "field",
                index: l,
                bound: self.field_dim,
            });
        }
        Ok(())
    }

    /// Per incoming index `l`, `||sum_alpha L*L - 1||_op`.
    pub fn verify_sum_rule(&self) -> Vec<f64> {
        let id = ComplexMatrix::identity(self.atom_dim);
        (0..self.field_dim)
            .map(|l| {
                let sum = self
                    .column(l)
                    .fold(ComplexMatrix::zeros(self.atom_dim, self.atom_dim), |acc, op| {
                        &acc + &op.dagger().matmul(op)
                    });
                (&sum - &id).operator_norm()
            })
            .collect()
    }

    /// `sum_alpha V L[alpha][l] rho L[alpha][l]* V*`, unchecked output.
    pub(crate) fn apply_raw(&self, l: usize, v: &UnitaryMatrix, rho: &ComplexMatrix) -> ComplexMatrix {
        let m = self.atom_dim;
        let inner = self
            .column(l)
            .fold(ComplexMatrix::zeros(m, m), |acc, op| &acc + &rho.conjugate_by(op));
        inner.conjugate_by(v.matrix())
    }

    /// One step of the channel for incoming field index `l` followed by the
    /// free atom propagator `v`.
    pub fn apply_single(
        &self,
        l: usize,
        v: &UnitaryMatrix,
        rho: &DensityMatrix,
        tol: &Tolerances,
    ) -> Result<DensityMatrix> {
        self.check_field_index(l)?;
        if v.dim() != self.atom_dim || rho.dim() != self.atom_dim {
            return Err(EthError::DimensionMismatch(format!(
                "atom dimension {} but propagator is {} and state is {}",
                self.atom_dim,
                v.dim(),
                rho.dim()
            )));
        }
        DensityMatrix::checked_hermitian_unit_trace(self.apply_raw(l, v, rho.matrix()), tol)
    }
}

/// Reads off `L[alpha][l][i, j] = U[(alpha, i), (l, j)]` and checks the sum
/// rule.
pub fn kraus_from_unitary(
    u: &UnitaryMatrix,
    field_dim: usize,
    atom_dim: usize,
    tol: &Tolerances,
) -> Result<KrausFamily> {
    if field_dim == 0 || atom_dim == 0 || u.dim() != field_dim * atom_dim {
        return Err(EthError::DimensionMismatch(format!(
            "unitary of dimension {} does not factor as {field_dim} x {atom_dim}",
            u.dim()
        )));
    }
    let um = u.matrix();
    let mut operators = Vec::with_capacity(field_dim * field_dim);
    for alpha in 0..field_dim {
        for l in 0..field_dim {
            operators.push(ComplexMatrix::from_fn(atom_dim, atom_dim, |i, j| {
                um.get(alpha * atom_dim + i, l * atom_dim + j)
            }));
        }
    }
    let family = KrausFamily {
        field_dim,
        atom_dim,
        operators,
    };
    let worst = family.verify_sum_rule().into_iter().fold(0.0, f64::max);
    if worst > tol.unitarity {
        return Err(EthError::invariant(
            "kraus sum rule",
            format!("residual {worst:.3e} exceeds {:.1e}", tol.unitarity),
        ));
    }
    Ok(family)
}

/// Partial trace over the leading factor of a `(a*b) x (a*b)` operator.
pub fn partial_trace_first(rho: &ComplexMatrix, a: usize, b: usize) -> ComplexMatrix {
    assert_eq!(rho.rows(), a * b);
    ComplexMatrix::from_fn(b, b, |i, j| {
        (0..a).map(|s| rho.get(s * b + i, s * b + j)).sum::<Complex64>()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::random::{haar_unitary, random_density};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn identity_interaction_gives_delta_family() {
        let k = kraus_from_unitary(&UnitaryMatrix::identity(4), 2, 2, &tol()).unwrap();
        for alpha in 0..2 {
            for l in 0..2 {
                let want = if alpha == l {
                    ComplexMatrix::identity(2)
                } else {
                    ComplexMatrix::zeros(2, 2)
                };
                assert_eq!(k.operator(alpha, l), &want);
            }
        }
        assert!(k.verify_sum_rule().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn field_only_unitary_gives_scalar_family() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = haar_unitary(3, &mut rng);
        let u = t.kron(&UnitaryMatrix::identity(2)).unwrap();
        let k = kraus_from_unitary(&u, 3, 2, &tol()).unwrap();
        for alpha in 0..3 {
            for l in 0..3 {
                let want = ComplexMatrix::identity(2).scale(t.matrix().get(alpha, l));
                assert!(k.operator(alpha, l).max_abs_diff(&want) < 1e-15);
            }
        }
    }

    #[test]
    fn zeroed_operator_breaks_only_its_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u = haar_unitary(4, &mut rng);
        let k = kraus_from_unitary(&u, 2, 2, &tol()).unwrap();
        let mut ops: Vec<ComplexMatrix> = (0..2)
            .flat_map(|a| (0..2).map(move |l| (a, l)))
            .map(|(a, l)| k.operator(a, l).clone())
            .collect();
        let removed = ops[1].clone(); // alpha = 0, l = 1
        ops[1] = ComplexMatrix::zeros(2, 2);
        let broken = KrausFamily::from_operators(2, 2, ops).unwrap();
        let r = broken.verify_sum_rule();
        assert!(r[0] < 1e-12);
        let expected = removed.dagger().matmul(&removed).operator_norm();
        assert!((r[1] - expected).abs() < 1e-12);
        assert!(r[1] > 0.0);
    }

    #[test]
    fn rejects_dimension_mismatch_and_bad_index() {
        assert!(kraus_from_unitary(&UnitaryMatrix::identity(6), 2, 2, &tol()).is_err());
        let k = kraus_from_unitary(&UnitaryMatrix::identity(4), 2, 2, &tol()).unwrap();
        let rho = DensityMatrix::maximally_mixed(2);
        assert!(matches!(
            k.apply_single(2, &UnitaryMatrix::identity(2), &rho, &tol()),
            Err(EthError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn identity_channel_is_free_evolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let k = kraus_from_unitary(&UnitaryMatrix::identity(6), 2, 3, &tol()).unwrap();
        let v = haar_unitary(3, &mut rng);
        let rho = random_density(3, &mut rng);
        for l in 0..2 {
            let out = k.apply_single(l, &v, &rho, &tol()).unwrap();
            assert!(out.matrix().max_abs_diff(rho.conjugate_by(&v).matrix()) < 1e-14);
        }
    }
}
