//! Field slices drawn independently from a mixed reference state
//! `Σ_k p_k P_k / tr(P_k)`.

use num_complex::Complex64;
use rand::{Rng, RngCore};

use super::measurement::{step_with_metric, GMatrix, MeasurementModel};
use crate::error::{EthError, Result};
use crate::evolve::PreCollapseDynamics;
use crate::matcore::{ComplexMatrix, DensityMatrix, OrthogonalProjection, Tolerances};

#[derive(Clone, Debug, PartialEq)]
pub struct ThermalEnvironment {
    projections: Vec<OrthogonalProjection>,
    weights: Vec<f64>,
}

impl ThermalEnvironment {
    pub fn new(projections: Vec<OrthogonalProjection>, weights: Vec<f64>, tol: &Tolerances) -> Result<Self> {
        if projections.is_empty() || projections.len() != weights.len() {
            return Err(EthError::DimensionMismatch(format!(
                "{} projections with {} weights",
                projections.len(),
                weights.len()
            )));
        }
        let n = projections[0].dim();
        if projections.iter().any(|p| p.dim() != n || p.rank() == 0) {
            return Err(EthError::InvalidParameter(
                "projections must be nonzero and share one dimension".into(),
            ));
        }
        if weights.iter().any(|&p| p.is_nan() || p <= 0.0) || weights.windows(2).any(|w| w[0] <= w[1]) {
            return Err(EthError::InvalidParameter(format!(
                "weights {weights:?} must be positive and strictly descending"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > tol.trace {
            return Err(EthError::InvalidParameter(format!("weights sum to {total}")));
        }
        for (k, pk) in projections.iter().enumerate() {
            for pl in &projections[k + 1..] {
                let overlap = pk.matrix().matmul(pl.matrix()).operator_norm();
                if overlap > tol.unitarity {
                    return Err(EthError::InvalidParameter(format!(
                        "projections {} and a later one overlap ({overlap:.3e})",
                        k + 1
                    )));
                }
            }
        }
        Ok(Self { projections, weights })
    }

    pub fn field_dim(&self) -> usize {
        self.projections[0].dim()
    }

    pub fn projections(&self) -> &[OrthogonalProjection] {
        &self.projections
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ_k p_k P_k / tr(P_k)`.
    pub fn reference_state(&self) -> DensityMatrix {
        let n = self.field_dim();
        DensityMatrix::trusted(
            self.projections
                .iter()
                .zip(&self.weights)
                .fold(ComplexMatrix::zeros(n, n), |acc, (p, w)| {
                    &acc + &p.matrix().scale_real(w / p.rank() as f64)
                }),
        )
    }

    /// Index `k` with probability `p_k`, from one uniform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, p) in self.weights.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        self.weights.len() - 1
    }
}

/// `g^{lm} = tr(T^(l) P_k T^(m)*) / tr(P_k)`.
pub fn thermal_g_matrix(
    model: &MeasurementModel,
    env: &ThermalEnvironment,
    k: usize,
    tol: &Tolerances,
) -> Result<GMatrix> {
    if env.field_dim() != model.field_dim() {
        return Err(EthError::DimensionMismatch(format!(
            "environment on C^{} for a field of dimension {}",
            env.field_dim(),
            model.field_dim()
        )));
    }
    let p = env.projections.get(k).ok_or(EthError::IndexOutOfRange {
        what: "thermal projection",
        index: k,
        bound: env.projections.len(),
    })?;
    let rank = p.rank() as f64;
    let ts = model.field_unitaries();
    let l = ts.len();
    let left: Vec<ComplexMatrix> = ts.iter().map(|t| t.matrix().matmul(p.matrix())).collect();
    let entries = ComplexMatrix::from_fn(l, l, |a, b| {
        left[a].matmul(&ts[b].matrix().dagger()).trace() / Complex64::new(rank, 0.0)
    });
    GMatrix::from_entries(k, entries, tol)
}

/// Draws `k_n` from the environment and evolves `omega` with the metric of
/// `P_{k_n}`.
pub fn thermal_step<R: Rng + ?Sized>(
    env: &ThermalEnvironment,
    model: &MeasurementModel,
    omega: &DensityMatrix,
    rng: &mut R,
    tol: &Tolerances,
) -> Result<(usize, DensityMatrix)> {
    let k = env.sample(rng);
    let g = thermal_g_matrix(model, env, k, tol)?;
    let out = step_with_metric(model, g, omega, tol)?;
    Ok((k, out.double_sum))
}

/// A measurement model driven by independently sampled thermal slices.
#[derive(Clone, Debug)]
pub struct ThermalChain {
    pub model: MeasurementModel,
    pub env: ThermalEnvironment,
    metrics: Vec<GMatrix>,
}

impl ThermalChain {
    pub fn new(model: MeasurementModel, env: ThermalEnvironment, tol: &Tolerances) -> Result<Self> {
        let metrics = (0..env.projections.len())
            .map(|k| thermal_g_matrix(&model, &env, k, tol))
            .collect::<Result<_>>()?;
        Ok(Self { model, env, metrics })
    }

    pub fn metric(&self, k: usize) -> &GMatrix {
        &self.metrics[k]
    }

    /// Pre-collapse step for a given slice projection `P_k`.
    pub fn step_at(&self, omega: &DensityMatrix, k: usize, tol: &Tolerances) -> Result<DensityMatrix> {
        let g = self.metrics.get(k).ok_or(EthError::IndexOutOfRange {
            what: "thermal projection",
            index: k,
            bound: self.metrics.len(),
        })?;
        Ok(step_with_metric(&self.model, g.clone(), omega, tol)?.double_sum)
    }

    /// `Σ_k p_k` times the step for `P_k`: the slice-averaged channel.
    pub fn averaged_step(&self, omega: &DensityMatrix, tol: &Tolerances) -> Result<DensityMatrix> {
        let m = omega.dim();
        let mut acc = ComplexMatrix::zeros(m, m);
        for (k, p) in self.env.weights().iter().enumerate() {
            acc = &acc + &self.step_at(omega, k, tol)?.matrix().scale_real(*p);
        }
        DensityMatrix::checked_hermitian_unit_trace(acc, tol)
    }
}

impl PreCollapseDynamics for ThermalChain {
    fn atom_dim(&self) -> usize {
        self.model.atom_dim()
    }

    fn horizon(&self) -> Option<usize> {
        None
    }

    fn advance(
        &self,
        omega: &DensityMatrix,
        _step: usize,
        rng: &mut dyn RngCore,
        tol: &Tolerances,
    ) -> Result<(usize, DensityMatrix)> {
        let k = self.env.sample(rng);
        Ok((k, self.step_at(omega, k, tol)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::random::{haar_unitary, random_density};
    use crate::models::measurement::{coordinate_partition, g_matrix_at};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn random_model(rng: &mut ChaCha8Rng) -> MeasurementModel {
        let ts = (0..2).map(|_| haar_unitary(3, rng)).collect();
        MeasurementModel::new(
            ts,
            coordinate_partition(2, &[1, 1]).unwrap(),
            haar_unitary(2, rng),
            &tol(),
        )
        .unwrap()
    }

    #[test]
    fn single_vacuum_projection_matches_vacuum_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let model = random_model(&mut rng);
        let env = ThermalEnvironment::new(vec![OrthogonalProjection::coordinate(3, &[0])], vec![1.0], &tol()).unwrap();
        let g = thermal_g_matrix(&model, &env, 0, &tol()).unwrap();
        let want = g_matrix_at(&model, 0, &tol()).unwrap();
        assert!(g.entries().max_abs_diff(want.entries()) < 1e-14);
        let rho = random_density(2, &mut rng);
        let (k, out) = thermal_step(&env, &model, &rho, &mut rng, &tol()).unwrap();
        assert_eq!(k, 0);
        assert!((out.matrix().trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_weights_and_overlap() {
        let p0 = OrthogonalProjection::coordinate(3, &[0]);
        let p1 = OrthogonalProjection::coordinate(3, &[1, 2]);
        assert!(ThermalEnvironment::new(vec![p0.clone(), p1.clone()], vec![0.4, 0.6], &tol()).is_err());
        assert!(ThermalEnvironment::new(vec![p0.clone(), p1], vec![0.6, 0.3], &tol()).is_err());
        let p2 = OrthogonalProjection::coordinate(3, &[0, 1]);
        assert!(ThermalEnvironment::new(vec![p0, p2], vec![0.6, 0.4], &tol()).is_err());
    }

    #[test]
    fn reference_state_has_unit_trace() {
        let env = ThermalEnvironment::new(
            vec![
                OrthogonalProjection::coordinate(3, &[0]),
                OrthogonalProjection::coordinate(3, &[1, 2]),
            ],
            vec![0.7, 0.3],
            &tol(),
        )
        .unwrap();
        let rho = env.reference_state();
        assert!((rho.matrix().trace().re - 1.0).abs() < 1e-15);
        assert!((rho.matrix().get(1, 1).re - 0.15).abs() < 1e-15);
    }
}
