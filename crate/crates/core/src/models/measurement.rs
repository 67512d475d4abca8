//! Interactions of measurement type, `U = Σ_m T^(m) ⊗ Q_m`, and the metric
//! `g^{lm} = <T^(m) φ_k, T^(l) φ_k>` that drives their one-step evolution.

use num_complex::Complex64;

use crate::error::{EthError, Result};
use crate::matcore::{
    raw_hermitian_eigen, unitarity_residual, ComplexMatrix, DensityMatrix, OrthogonalProjection, Tolerances,
    UnitaryMatrix,
};

/// Field unitaries `T^(m)` paired with a partition of unity `Q_m` of the
/// atom, plus the free atom propagator `V`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementModel {
    field_dim: usize,
    atom_dim: usize,
    field_unitaries: Vec<UnitaryMatrix>,
    partition: Vec<OrthogonalProjection>,
    propagator: UnitaryMatrix,
}

impl MeasurementModel {
    pub fn new(
        field_unitaries: Vec<UnitaryMatrix>,
        partition: Vec<OrthogonalProjection>,
        propagator: UnitaryMatrix,
        tol: &Tolerances,
    ) -> Result<Self> {
        let levels = partition.len();
        if levels == 0 || field_unitaries.len() != levels {
            return Err(EthError::DimensionMismatch(format!(
                "{} field unitaries for {levels} partition elements",
                field_unitaries.len()
            )));
        }
        let field_dim = field_unitaries[0].dim();
        let atom_dim = propagator.dim();
        if field_unitaries.iter().any(|t| t.dim() != field_dim) {
            return Err(EthError::DimensionMismatch(
                "field unitaries have differing dimensions".into(),
            ));
        }
        if let Some(q) = partition.iter().find(|q| q.dim() != atom_dim) {
            return Err(EthError::DimensionMismatch(format!(
                "partition element on C^{} for an atom of dimension {atom_dim}",
                q.dim()
            )));
        }
        if levels > atom_dim {
            return Err(EthError::InvalidParameter(format!(
                "{levels} partition elements exceed the atom dimension {atom_dim}"
            )));
        }
        let residual = partition_residual(&partition);
        if residual > tol.unitarity {
            return Err(EthError::invariant(
                "partition of unity",
                format!("residual {residual:.3e} exceeds {:.1e}", tol.unitarity),
            ));
        }
        Ok(Self {
            field_dim,
            atom_dim,
            field_unitaries,
            partition,
            propagator,
        })
    }

    pub fn field_dim(&self) -> usize {
        self.field_dim
    }

    pub fn atom_dim(&self) -> usize {
        self.atom_dim
    }

    /// `L`, the number of partition elements.
    pub fn levels(&self) -> usize {
        self.partition.len()
    }

    pub fn field_unitaries(&self) -> &[UnitaryMatrix] {
        &self.field_unitaries
    }

    pub fn partition(&self) -> &[OrthogonalProjection] {
        &self.partition
    }

    pub fn propagator(&self) -> &UnitaryMatrix {
        &self.propagator
    }

    pub fn with_propagator(&self, propagator: UnitaryMatrix) -> Result<Self> {
        if propagator.dim() != self.atom_dim {
            return Err(EthError::DimensionMismatch(format!(
                "propagator of dimension {} for an atom of dimension {}",
                propagator.dim(),
                self.atom_dim
            )));
        }
        Ok(Self {
            propagator,
            ..self.clone()
        })
    }

    fn check_field_index(&self, k: usize) -> Result<()> {
        if k >= self.field_dim {
            return Err(EthError::IndexOutOfRange {
                what: "field",
                index: k,
                bound: self.field_dim,
            });
        }
        Ok(())
    }
}

/// `max(||Q_m Q_l - δ_ml Q_m||, ||Σ Q_m - 1||)`.
pub fn partition_residual(partition: &[OrthogonalProjection]) -> f64 {
    let dim = partition[0].dim();
    let mut worst: f64 = 0.0;
    for (m, qm) in partition.iter().enumerate() {
        for ql in &partition[m + 1..] {
            worst = worst.max(qm.matrix().matmul(ql.matrix()).operator_norm());
        }
    }
    let sum = partition
        .iter()
        .fold(ComplexMatrix::zeros(dim, dim), |acc, q| &acc + q.matrix());
    worst.max((&sum - &ComplexMatrix::identity(dim)).operator_norm())
}

/// Partition of `C^dim` into consecutive coordinate blocks of the given sizes.
pub fn coordinate_partition(dim: usize, block_sizes: &[usize]) -> Result<Vec<OrthogonalProjection>> {
    if block_sizes.iter().sum::<usize>() != dim || block_sizes.contains(&0) {
        return Err(EthError::InvalidParameter(format!(
            "block sizes {block_sizes:?} do not partition C^{dim}"
        )));
    }
    let mut start = 0;
    Ok(block_sizes
        .iter()
        .map(|&size| {
            let idx: Vec<usize> = (start..start + size).collect();
            start += size;
            OrthogonalProjection::coordinate(dim, &idx)
        })
        .collect())
}

/// Splits `dim` into `levels` near-equal block sizes.
pub fn even_blocks(dim: usize, levels: usize) -> Vec<usize> {
    (0..levels)
        .map(|i| dim / levels + usize::from(i < dim % levels))
        .collect()
}

/// `U = Σ_m T^(m) ⊗ Q_m` on `C^N ⊗ C^M` (field first).
pub fn build_measurement_unitary(model: &MeasurementModel, tol: &Tolerances) -> Result<UnitaryMatrix> {
    let dim = model.field_dim * model.atom_dim;
    let mut u = ComplexMatrix::zeros(dim, dim);
    for (t, q) in model.field_unitaries.iter().zip(&model.partition) {
        u = &u + &t.matrix().kron(q.matrix())?;
    }
    let residual = unitarity_residual(&u);
    if residual > tol.unitarity {
        return Err(EthError::invariant(
            "measurement unitary",
            format!("||U*U - 1|| = {residual:.3e}"),
        ));
    }
    Ok(UnitaryMatrix::trusted(u))
}

/// The Gram matrix `G(j)` of the vectors `T^(l) φ_{k_j}`, with its
/// eigenvalues `γ_r` (descending) and a unitary diagonalizer `D` whose
/// column `r` is the eigenvector for `γ_r`.
#[derive(Clone, Debug, PartialEq)]
pub struct GMatrix {
    field_index: usize,
    entries: ComplexMatrix,
    eigenvalues: Vec<f64>,
    diagonalizer: UnitaryMatrix,
}

impl GMatrix {
    /// Validates a Hermitian, positive semidefinite, unit-diagonal matrix and
    /// attaches its eigendecomposition.
    pub fn from_entries(field_index: usize, entries: ComplexMatrix, tol: &Tolerances) -> Result<Self> {
        let residual = entries.hermiticity_residual();
        if residual > tol.hermiticity {
            return Err(EthError::invariant(
                "G hermiticity",
                format!("||G - G*|| = {residual:.3e}"),
            ));
        }
        let diag_err = entries
            .diagonal()
            .iter()
            .map(|g| (g - Complex64::new(1.0, 0.0)).norm())
            .fold(0.0, f64::max);
        if diag_err > tol.trace {
            return Err(EthError::invariant(
                "G unit diagonal",
                format!("diagonal deviates from 1 by {diag_err:.3e}"),
            ));
        }
        let (eigenvalues, vectors) = raw_hermitian_eigen(&entries)?;
        let min = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -tol.trace {
            return Err(EthError::invariant(
                "G positivity",
                format!("smallest eigenvalue {min:.3e}"),
            ));
        }
        let l = entries.rows();
        let total: f64 = eigenvalues.iter().sum();
        if (total - l as f64).abs() > tol.trace {
            return Err(EthError::invariant(
                "G eigenvalue sum",
                format!("eigenvalues sum to {total}, expected {l}"),
            ));
        }
        let d = ComplexMatrix::from_fn(l, l, |row, col| vectors[col][row]);
        Ok(Self {
            field_index,
            entries: entries.hermitian_part(),
            eigenvalues,
            diagonalizer: UnitaryMatrix::trusted(d),
        })
    }

    pub fn field_index(&self) -> usize {
        self.field_index
    }

    /// `g^{lm}` at `(l, m)`.
    pub fn entries(&self) -> &ComplexMatrix {
        &self.entries
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn diagonalizer(&self) -> &UnitaryMatrix {
        &self.diagonalizer
    }

    pub fn levels(&self) -> usize {
        self.entries.rows()
    }

    /// Number of eigenvalues at or below `threshold`.
    pub fn null_count(&self, threshold: f64) -> usize {
        self.eigenvalues.iter().filter(|&&g| g <= threshold).count()
    }
}

/// `G(j)` for the field index `k = k_j`.
pub fn g_matrix_at(model: &MeasurementModel, k: usize, tol: &Tolerances) -> Result<GMatrix> {
    model.check_field_index(k)?;
    let images: Vec<Vec<Complex64>> = model.field_unitaries.iter().map(|t| t.matrix().column(k)).collect();
    let l = model.levels();
    let entries = ComplexMatrix::from_fn(l, l, |a, b| {
        images[b].iter().zip(&images[a]).map(|(x, y)| x.conj() * y).sum()
    });
    let g = GMatrix::from_entries(k, entries, tol)?;
    if l > model.field_dim {
        let needed = l - model.field_dim;
        if g.null_count(tol.hermiticity) < needed {
            return Err(EthError::invariant(
                "G rank",
                format!("expected at least {needed} vanishing eigenvalues"),
            ));
        }
    }
    Ok(g)
}

/// `Σ_{l,m} g^{lm} V Q_l Ω Q_m V*`.
pub fn step_double_sum(model: &MeasurementModel, g: &GMatrix, omega: &DensityMatrix) -> ComplexMatrix {
    let m = model.atom_dim;
    let rho = omega.matrix();
    let mut acc = ComplexMatrix::zeros(m, m);
    for (a, qa) in model.partition.iter().enumerate() {
        let left = qa.matrix().matmul(rho);
        for (b, qb) in model.partition.iter().enumerate() {
            let coeff = g.entries.get(a, b);
            if coeff == Complex64::new(0.0, 0.0) {
                continue;
            }
            acc = &acc + &left.matmul(qb.matrix()).scale(coeff);
        }
    }
    acc.conjugate_by(model.propagator.matrix())
}

/// `Σ_r γ_r V K_r Ω K_r* V*` with `K_r = Σ_m D[m, r] Q_m`.
pub fn step_diagonal_form(model: &MeasurementModel, g: &GMatrix, omega: &DensityMatrix) -> ComplexMatrix {
    let m = model.atom_dim;
    let d = g.diagonalizer.matrix();
    let mut acc = ComplexMatrix::zeros(m, m);
    for (r, gamma) in g.eigenvalues.iter().enumerate() {
        let kr = model
            .partition
            .iter()
            .enumerate()
            .fold(ComplexMatrix::zeros(m, m), |k, (idx, q)| {
                &k + &q.matrix().scale(d.get(idx, r))
            });
        acc = &acc + &omega.matrix().conjugate_by(&kr).scale_real(*gamma);
    }
    acc.conjugate_by(model.propagator.matrix())
}

/// Both metric-based forms of one pre-collapse step.
#[derive(Clone, Debug)]
pub struct StepViaG {
    pub g: GMatrix,
    pub double_sum: DensityMatrix,
    pub diagonal_form: DensityMatrix,
    /// `||double_sum - diagonal_form||_op`.
    pub agreement: f64,
}

/// Ω̂_n from Ω_{n-1} via the metric of field index `k`, computed as the
/// double sum and in diagonalized Kraus form.
pub fn step_via_g(model: &MeasurementModel, omega: &DensityMatrix, k: usize, tol: &Tolerances) -> Result<StepViaG> {
    let g = g_matrix_at(model, k, tol)?;
    step_with_metric(model, g, omega, tol)
}

pub(crate) fn step_with_metric(
    model: &MeasurementModel,
    g: GMatrix,
    omega: &DensityMatrix,
    tol: &Tolerances,
) -> Result<StepViaG> {
    if omega.dim() != model.atom_dim {
        return Err(EthError::DimensionMismatch(format!(
            "state of dimension {} for an atom of dimension {}",
            omega.dim(),
            model.atom_dim
        )));
    }
    let a = step_double_sum(model, &g, omega);
    let b = step_diagonal_form(model, &g, omega);
    let agreement = (&a - &b).operator_norm();
    if agreement > 1e-10 {
        return Err(EthError::invariant(
            "metric step agreement",
            format!("double sum and diagonal form differ by {agreement:.3e}"),
        ));
    }
    Ok(StepViaG {
        double_sum: DensityMatrix::checked_hermitian_unit_trace(a, tol)?,
        diagonal_form: DensityMatrix::checked_hermitian_unit_trace(b, tol)?,
        agreement,
        g,
    })
}

/// `W` composed with the transposition of basis vectors 0 and `m`, so that
/// the result maps `φ_0` to column `m` of `W`.
pub fn unitary_with_first_column(w: &UnitaryMatrix, m: usize) -> UnitaryMatrix {
    let n = w.dim();
    let swap = ComplexMatrix::from_fn(n, n, |i, j| {
        let image = if j == 0 {
            m
        } else if j == m {
            0
        } else {
            j
        };
        if i == image {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    UnitaryMatrix::trusted(w.matrix().matmul(&swap))
}
