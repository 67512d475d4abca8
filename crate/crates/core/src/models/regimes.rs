//! Weak and strong coupling limits of measurement-type interactions.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use super::measurement::{build_measurement_unitary, unitary_with_first_column, MeasurementModel};
use crate::collapse::walk_trajectory;
use crate::error::{EthError, Result};
use crate::evolve::{FieldSequence, QuantumMarkovChain};
use crate::kraus::kraus_from_unitary;
use crate::matcore::random::{haar_unitary, random_anti_hermitian_unit};
use crate::matcore::{unitary_exp, ComplexMatrix, DensityMatrix, OrthogonalProjection, Tolerances, UnitaryMatrix};

/// Chain for a measurement model driven by a fixed field sequence.
pub fn measurement_chain(
    model: &MeasurementModel,
    field: FieldSequence,
    tol: &Tolerances,
) -> Result<QuantumMarkovChain> {
    let u = build_measurement_unitary(model, tol)?;
    let kraus = kraus_from_unitary(&u, model.field_dim(), model.atom_dim(), tol)?;
    QuantumMarkovChain::new(kraus, model.propagator().clone(), field)
}

/// `exp(ε σ)` with `σ` the anti-Hermitian part of `tau`.
pub fn perturbation_unitary(tau: &ComplexMatrix, epsilon: f64) -> Result<UnitaryMatrix> {
    let sigma = (tau - &tau.dagger()).scale_real(0.5);
    // exp(ε σ) = exp(-i ε H) with H = i σ
    let h = sigma.scale(Complex64::new(0.0, 1.0)).hermitian_part();
    unitary_exp(&h, epsilon)
}

/// `T^(m) = exp(ε σ^(m))` for perturbations of operator norm at most 1.
pub fn weak_coupling_family(
    partition: Vec<OrthogonalProjection>,
    propagator: UnitaryMatrix,
    epsilon: f64,
    perturbations: &[ComplexMatrix],
    tol: &Tolerances,
) -> Result<MeasurementModel> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(EthError::InvalidParameter(format!(
            "coupling strength must lie in [0, 1), got {epsilon}"
        )));
    }
    if let Some(tau) = perturbations.iter().find(|t| t.operator_norm() > 1.0 + 1e-12) {
        return Err(EthError::InvalidParameter(format!(
            "perturbation has norm {:.6} > 1",
            tau.operator_norm()
        )));
    }
    let ts = perturbations
        .iter()
        .map(|tau| perturbation_unitary(tau, epsilon))
        .collect::<Result<Vec<_>>>()?;
    MeasurementModel::new(ts, partition, propagator, tol)
}

/// `levels` random anti-Hermitian perturbations on `C^n` of unit norm.
pub fn random_perturbations<R: Rng + ?Sized>(levels: usize, n: usize, rng: &mut R) -> Vec<ComplexMatrix> {
    (0..levels).map(|_| random_anti_hermitian_unit(n, rng)).collect()
}

/// `||Ω̂_1 - V Ω V*||_op` for each coupling strength, with the same
/// perturbation directions throughout.
pub fn weak_sweep(
    partition: &[OrthogonalProjection],
    propagator: &UnitaryMatrix,
    perturbations: &[ComplexMatrix],
    omega: &DensityMatrix,
    epsilons: &[f64],
    tol: &Tolerances,
) -> Result<Vec<(f64, f64)>> {
    let free = omega.conjugate_by(propagator);
    epsilons
        .iter()
        .map(|&eps| {
            let model = weak_coupling_family(partition.to_vec(), propagator.clone(), eps, perturbations, tol)?;
            let chain = measurement_chain(&model, FieldSequence::vacuum(model.field_dim(), 1), tol)?;
            let hat = chain.step(omega, 0, tol)?;
            Ok((eps, (hat.matrix() - free.matrix()).operator_norm()))
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Markov chain on `M` labels with `P(l, m) = |<ψ_l, V ψ_m>|^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalChain {
    transition: Vec<Vec<f64>>,
    distribution: Vec<f64>,
}

impl ClassicalChain {
    pub fn state_count(&self) -> usize {
        self.transition.len()
    }

    /// `transition[l][m]`, the probability of `m -> l`.
    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn distribution(&self) -> &[f64] {
        &self.distribution
    }

    pub fn with_distribution(mut self, mu: Vec<f64>) -> Result<Self> {
        let total: f64 = mu.iter().sum();
        if mu.len() != self.state_count() || mu.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-10 {
            return Err(EthError::InvalidParameter(format!(
                "{mu:?} is not a distribution on {} labels",
                self.state_count()
            )));
        }
        self.distribution = mu;
        Ok(self)
    }

    /// `μ'(l) = Σ_m P(l, m) μ(m)`.
    pub fn step(&self, mu: &[f64]) -> Vec<f64> {
        self.transition
            .iter()
            .map(|row| row.iter().zip(mu).map(|(p, q)| p * q).sum())
            .collect()
    }

    /// `[μ_0, μ_1, ..., μ_steps]`.
    pub fn evolve(&self, steps: usize) -> Vec<Vec<f64>> {
        let mut out = vec![self.distribution.clone()];
        for _ in 0..steps {
            let next = self.step(out.last().unwrap());
            out.push(next);
        }
        out
    }
}

/// The classical chain induced by `v` on an orthonormal basis, starting
/// from the uniform distribution.
pub fn classical_transition(v: &UnitaryMatrix, basis: &[Vec<Complex64>]) -> Result<ClassicalChain> {
    let m = v.dim();
    if basis.len() != m || basis.iter().any(|b| b.len() != m) {
        return Err(EthError::DimensionMismatch(format!(
            "basis of {} vectors for an atom of dimension {m}",
            basis.len()
        )));
    }
    let gram = ComplexMatrix::from_fn(m, m, |i, j| inner(&basis[i], &basis[j]));
    if gram.max_abs_diff(&ComplexMatrix::identity(m)) > 1e-10 {
        return Err(EthError::InvalidParameter("basis is not orthonormal".into()));
    }
    let images: Vec<Vec<Complex64>> = basis.iter().map(|b| v.matrix().apply(b)).collect();
    let transition = (0..m)
        .map(|l| (0..m).map(|mm| inner(&basis[l], &images[mm]).norm_sqr()).collect())
        .collect();
    Ok(ClassicalChain {
        transition,
        distribution: vec![1.0 / m as f64; m],
    })
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Rank-one partition along the standard basis with field unitaries whose
/// vacuum images are orthonormal, each then perturbed by `exp(ε σ^(m))`.
/// Needs `field_dim >= atom_dim`.
pub fn strong_coupling_model<R: Rng + ?Sized>(
    field_dim: usize,
    propagator: UnitaryMatrix,
    epsilon: f64,
    rng: &mut R,
    tol: &Tolerances,
) -> Result<MeasurementModel> {
    let m = propagator.dim();
    if field_dim < m {
        return Err(EthError::InvalidParameter(format!(
            "strong coupling needs field dimension >= {m}, got {field_dim}"
        )));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(EthError::InvalidParameter(format!(
            "deviation must lie in [0, 1), got {epsilon}"
        )));
    }
    let w = haar_unitary(field_dim, rng);
    let ts = (0..m)
        .map(|i| {
            let base = unitary_with_first_column(&w, i);
            let tau = random_anti_hermitian_unit(field_dim, rng);
            Ok(perturbation_unitary(&tau, epsilon)?.compose(&base))
        })
        .collect::<Result<Vec<_>>>()?;
    let partition = (0..m).map(|i| OrthogonalProjection::coordinate(m, &[i])).collect();
    MeasurementModel::new(ts, partition, propagator, tol)
}

/// Empirical label statistics of sampled trajectories against the classical
/// chain.
#[derive(Clone, Debug, PartialEq)]
pub struct StrongCouplingReport {
    /// `predicted[n]` is `μ_n`, for `n = 0..=steps`.
    pub predicted: Vec<Vec<f64>>,
    /// `empirical[n][l]`: fraction of trials labelled `l` after step `n`.
    pub empirical: Vec<Vec<f64>>,
    /// Fraction of trials whose post-collapse state matched no label.
    pub ambiguous: Vec<f64>,
    pub tv_distance: Vec<f64>,
    /// `transition_counts[from][to]`, pooled over consecutive labelled steps.
    pub transition_counts: Vec<Vec<u64>>,
    /// Largest `|P_emp(l, m) - P(l, m)|` over columns with at least one count.
    pub max_transition_error: f64,
    /// The same deviation in units of its binomial standard error.
    pub max_transition_sigma: f64,
    pub trials: usize,
}

/// The labels of the strong-coupling regime: `χ_m = V ψ_m`, the state a
/// collapse onto `Q_m = |ψ_m><ψ_m|` followed by the free step produces,
/// together with the classical chain they follow.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelBasis {
    images: Vec<Vec<Complex64>>,
    targets: Vec<ComplexMatrix>,
    chain: ClassicalChain,
}

impl LabelBasis {
    /// Needs a partition into `M` rank-one projections.
    pub fn for_model(model: &MeasurementModel) -> Result<Self> {
        let m = model.atom_dim();
        if model.levels() != m || model.partition().iter().any(|q| q.rank() != 1) {
            return Err(EthError::InvalidParameter(
                "label comparison needs a rank-one partition".into(),
            ));
        }
        let basis: Vec<Vec<Complex64>> = model
            .partition()
            .iter()
            .map(|q| {
                let col = (0..m)
                    .map(|j| q.matrix().column(j))
                    .max_by(|a, b| norm(a).total_cmp(&norm(b)))
                    .unwrap();
                let n = norm(&col);
                col.into_iter().map(|x| x / n).collect()
            })
            .collect();
        let v = model.propagator();
        let images: Vec<Vec<Complex64>> = basis.iter().map(|b| v.matrix().apply(b)).collect();
        let targets = images.iter().map(|c| ComplexMatrix::outer(c, c)).collect();
        Ok(Self {
            chain: classical_transition(v, &basis)?,
            images,
            targets,
        })
    }

    pub fn chain(&self) -> &ClassicalChain {
        &self.chain
    }

    pub fn images(&self) -> &[Vec<Complex64>] {
        &self.images
    }

    /// `Σ μ(m) |χ_m><χ_m|`.
    pub fn mixture(&self, mu: &[f64]) -> Result<DensityMatrix> {
        let chain = self.chain.clone().with_distribution(mu.to_vec())?;
        let m = self.targets.len();
        Ok(DensityMatrix::trusted(
            self.targets
                .iter()
                .zip(chain.distribution())
                .fold(ComplexMatrix::zeros(m, m), |acc, (t, p)| &acc + &t.scale_real(*p)),
        ))
    }

    /// `<χ_m, ρ χ_m>` for each label.
    pub fn occupation(&self, rho: &DensityMatrix) -> Vec<f64> {
        self.targets.iter().map(|t| rho.expectation(t).re).collect()
    }

    /// The label whose `|χ_m><χ_m|` lies within `threshold` of `rho` in
    /// operator norm.
    pub fn label(&self, rho: &DensityMatrix, threshold: f64) -> Option<usize> {
        let (best, dist) = self
            .targets
            .iter()
            .map(|t| (rho.matrix() - t).operator_norm())
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        (dist <= threshold).then_some(best)
    }

    /// Aggregates per-trial label sequences (one entry per step) against
    /// the chain started from `mu0`.
    pub fn tally(&self, mu0: &[f64], labels: &[Vec<Option<usize>>], steps: usize) -> Result<StrongCouplingReport> {
        let m = self.targets.len();
        let chain = self.chain.clone().with_distribution(mu0.to_vec())?;
        let predicted = chain.evolve(steps);
        let trials = labels.len();
        let mut empirical = vec![vec![0.0; m]; steps + 1];
        empirical[0] = mu0.to_vec();
        let mut ambiguous = vec![0.0; steps + 1];
        let mut transition_counts = vec![vec![0u64; m]; m];
        let weight = if trials == 0 { 0.0 } else { 1.0 / trials as f64 };
        for seq in labels {
            for (n, lab) in seq.iter().enumerate().take(steps) {
                match lab {
                    Some(l) => empirical[n + 1][*l] += weight,
                    None => ambiguous[n + 1] += weight,
                }
                if n > 0 {
                    if let (Some(from), Some(to)) = (seq[n - 1], lab) {
                        transition_counts[from][*to] += 1;
                    }
                }
            }
        }
        let tv_distance = empirical
            .iter()
            .zip(&predicted)
            .map(|(e, p)| 0.5 * e.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .collect();
        let mut max_transition_error: f64 = 0.0;
        let mut max_transition_sigma: f64 = 0.0;
        for (from, row) in transition_counts.iter().enumerate() {
            let total: u64 = row.iter().sum();
            if total == 0 {
                continue;
            }
            for (to, c) in row.iter().enumerate() {
                let p = chain.transition()[to][from];
                let err = (*c as f64 / total as f64 - p).abs();
                max_transition_error = max_transition_error.max(err);
                let sigma = (p * (1.0 - p) / total as f64).sqrt().max(1.0 / total as f64);
                max_transition_sigma = max_transition_sigma.max(err / sigma);
            }
        }
        Ok(StrongCouplingReport {
            predicted,
            empirical,
            ambiguous,
            tv_distance,
            transition_counts,
            max_transition_error,
            max_transition_sigma,
            trials,
        })
    }
}

/// Samples `trials` trajectories of the model from `Σ μ_0(m) |χ_m><χ_m|`
/// and labels each post-collapse state within operator-norm distance
/// `threshold` of some `|χ_m><χ_m|`.
pub fn strong_coupling_compare(
    model: &MeasurementModel,
    mu0: &[f64],
    steps: usize,
    trials: usize,
    seed: u64,
    threshold: f64,
    tol: &Tolerances,
) -> Result<StrongCouplingReport> {
    let labels = LabelBasis::for_model(model)?;
    let omega0 = labels.mixture(mu0)?;
    let dynamics = measurement_chain(model, FieldSequence::vacuum(model.field_dim(), steps), tol)?;
    let sequences: Vec<Vec<Option<usize>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut seq = Vec::with_capacity(steps);
            walk_trajectory(&dynamics, &omega0, steps, seed, t as u64, tol, |s| {
                seq.push(labels.label(&s.post_collapse, threshold));
                std::ops::ControlFlow::Continue(())
            })?;
            Ok(seq)
        })
        .collect::<Result<_>>()?;
    labels.tally(mu0, &sequences, steps)
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// The standard basis of `C^m` as vectors.
pub fn basis_vectors(m: usize) -> Vec<Vec<Complex64>> {
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0))
                .collect()
        })
        .collect()
}
