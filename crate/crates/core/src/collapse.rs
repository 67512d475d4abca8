//! Actual events, Born sampling and stochastic trajectories.
//!
//! For a density matrix on a full matrix algebra the centralizer of the
//! state is its commutant, and the center of the centralizer is generated
//! by the spectral projections of the density matrix. The actual event of
//! a state is therefore its clustered spectral resolution; the collapse
//! replaces the state by `Π_r / tr(Π_r)` with probability `q_r tr(Π_r)`.

use std::cmp::Ordering;
use std::ops::ControlFlow;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{EthError, Result};
use crate::evolve::PreCollapseDynamics;
use crate::matcore::{hermitian_eigendecompose, ComplexMatrix, DensityMatrix, OrthogonalProjection, Tolerances};

/// A spectral branch that was removed because its Born weight vanished.
#[derive(Clone, Debug, PartialEq)]
pub struct DroppedBranch {
    pub eigenvalue: f64,
    pub rank: usize,
    pub probability: f64,
}

/// The event projections of a state with their Born probabilities.
/// Branches are ordered by descending eigenvalue.
#[derive(Clone, Debug, PartialEq)]
pub struct ActualEvent {
    eigenvalues: Vec<f64>,
    projections: Vec<OrthogonalProjection>,
    probabilities: Vec<f64>,
    dropped: Vec<DroppedBranch>,
}

impl ActualEvent {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn projections(&self) -> &[OrthogonalProjection] {
        &self.projections
    }

    pub fn born_probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Zero-weight branches removed before sampling.
    pub fn dropped(&self) -> &[DroppedBranch] {
        &self.dropped
    }

    /// Number of branches that can be sampled.
    pub fn len(&self) -> usize {
        self.projections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projections.is_empty()
    }

    /// `Π_r / tr(Π_r)`.
    pub fn collapsed_state(&self, r: usize) -> DensityMatrix {
        DensityMatrix::normalized_projection(&self.projections[r])
    }

    /// `Σ_r prob(r) Π_r / tr(Π_r)`, which equals the decomposed state.
    pub fn mixture(&self) -> ComplexMatrix {
        let dim = self.projections[0].dim();
        self.probabilities
            .iter()
            .zip(&self.projections)
            .fold(ComplexMatrix::zeros(dim, dim), |acc, (p, proj)| {
                &acc + &proj.matrix().scale_real(p / proj.rank() as f64)
            })
    }

    /// Sampling order: descending probability, then descending eigenvalue
    /// (which is the stored order), then ascending index.
    fn sampling_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.probabilities[b]
                .partial_cmp(&self.probabilities[a])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        order
    }
}

/// The actual event of `omega`: its clustered spectral projections with
/// Born weights `q_r rank(Π_r)`. Branches with weight below
/// `tol.zero_probability` are dropped and reported.
pub fn center_of_centralizer(omega: &DensityMatrix, tol: &Tolerances) -> Result<ActualEvent> {
    let sd = hermitian_eigendecompose(omega.matrix(), tol.cluster)?;
    let mut event = ActualEvent {
        eigenvalues: Vec::new(),
        projections: Vec::new(),
        probabilities: Vec::new(),
        dropped: Vec::new(),
    };
    for (q, p) in sd.eigenvalues().iter().zip(sd.projections()) {
        let prob = q * p.rank() as f64;
        if *q < -tol.trace {
            return Err(EthError::invariant(
                "positivity",
                format!("pre-collapse state has eigenvalue {q:.3e}"),
            ));
        }
        if prob < tol.zero_probability {
            event.dropped.push(DroppedBranch {
                eigenvalue: *q,
                rank: p.rank(),
                probability: prob,
            });
        } else {
            event.eigenvalues.push(*q);
            event.projections.push(p.clone());
            event.probabilities.push(prob);
        }
    }
    let total: f64 = event.probabilities.iter().sum();
    if event.is_empty() || (total - 1.0).abs() > 1e-10 {
        return Err(EthError::invariant(
            "born normalization",
            format!("Born probabilities sum to {total:.15}"),
        ));
    }
    Ok(event)
}

/// Whether `y` lies in the centralizer of `omega`, i.e. `||[y, Ω]||_op <= tol`.
pub fn in_centralizer(y: &ComplexMatrix, omega: &DensityMatrix, tol: f64) -> bool {
    y.commutator(omega.matrix()).operator_norm() <= tol
}

/// Draws a branch by inverse CDF with a single uniform draw. Returns the
/// branch index (in eigenvalue order) and its probability.
pub fn born_sample<R: Rng + ?Sized>(event: &ActualEvent, rng: &mut R) -> (usize, f64) {
    let u: f64 = rng.random();
    let total: f64 = event.probabilities.iter().sum();
    let target = u * total;
    let order = event.sampling_order();
    let mut acc = 0.0;
    for &r in &order {
        acc += event.probabilities[r];
        if target < acc {
            return (r, event.probabilities[r]);
        }
    }
    let last = order[order.len() - 1];
    (last, event.probabilities[last])
}

/// One recorded step of a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep {
    /// Time `n >= 1` reached by this step.
    pub step: usize,
    /// Field index consumed by the step.
    pub field_index: usize,
    pub pre_collapse: DensityMatrix,
    /// Number of sampleable branches.
    pub event_size: usize,
    pub branch: usize,
    pub born_probability: f64,
    pub branch_rank: usize,
    pub post_collapse: DensityMatrix,
    /// `||Σ_r prob(r) Ω^(r) - Ω̂||_op`.
    pub mixture_residual: f64,
    pub dropped: Vec<DroppedBranch>,
}

/// Restricts (evolves) the state, computes the actual event and collapses.
pub fn collapse_step<R: Rng + ?Sized>(
    pre_collapse: DensityMatrix,
    step: usize,
    field_index: usize,
    rng: &mut R,
    tol: &Tolerances,
) -> Result<TrajectoryStep> {
    let event = center_of_centralizer(&pre_collapse, tol)?;
    let (branch, born_probability) = born_sample(&event, rng);
    let mixture_residual = (&event.mixture() - pre_collapse.matrix()).operator_norm();
    Ok(TrajectoryStep {
        step,
        field_index,
        event_size: event.len(),
        branch,
        born_probability,
        branch_rank: event.projections[branch].rank(),
        post_collapse: event.collapsed_state(branch),
        pre_collapse,
        mixture_residual,
        dropped: event.dropped,
    })
}

/// A sampled history.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub master_seed: u64,
    pub index: u64,
    pub initial: DensityMatrix,
    pub steps: Vec<TrajectoryStep>,
    /// `Σ log(prob)` over the chosen branches.
    pub log_probability: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &DensityMatrix {
        self.steps.last().map_or(&self.initial, |s| &s.post_collapse)
    }

    pub fn branches(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.branch).collect()
    }
}

/// Independent stream for trajectory `index` of an ensemble seeded with
/// `master_seed`.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Outcome of a streamed trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkSummary {
    pub steps_taken: usize,
    pub log_probability: f64,
    pub final_state: DensityMatrix,
}

/// Runs up to `steps` evolve-then-collapse steps from `initial`, handing
/// each step to `visit` without retaining it. `visit` may stop the walk
/// early by returning `ControlFlow::Break`.
pub fn walk_trajectory<D, F>(
    dynamics: &D,
    initial: &DensityMatrix,
    steps: usize,
    master_seed: u64,
    index: u64,
    tol: &Tolerances,
    mut visit: F,
) -> Result<WalkSummary>
where
    D: PreCollapseDynamics + ?Sized,
    F: FnMut(&TrajectoryStep) -> ControlFlow<()>,
{
    if initial.dim() != dynamics.atom_dim() {
        return Err(EthError::DimensionMismatch(format!(
            "initial state of dimension {} for an atom of dimension {}",
            initial.dim(),
            dynamics.atom_dim()
        )));
    }
    if let Some(h) = dynamics.horizon() {
        if steps > h {
            return Err(EthError::HorizonExceeded {
                requested: steps,
                horizon: h,
            });
        }
    }
    let mut rng = trajectory_rng(master_seed, index);
    let mut omega = initial.clone();
    let mut log_probability = 0.0;
    let mut steps_taken = 0;
    for n in 0..steps {
        let (k, hat) = dynamics.advance(&omega, n, &mut rng as &mut dyn RngCore, tol)?;
        let record = collapse_step(hat, n + 1, k, &mut rng, tol)?;
        log_probability += record.born_probability.ln();
        steps_taken += 1;
        let flow = visit(&record);
        omega = record.post_collapse;
        if flow.is_break() {
            break;
        }
    }
    Ok(WalkSummary {
        steps_taken,
        log_probability,
        final_state: omega,
    })
}

/// Runs `steps` evolve-then-collapse steps from `initial`.
pub fn run_trajectory<D: PreCollapseDynamics + ?Sized>(
    dynamics: &D,
    initial: &DensityMatrix,
    steps: usize,
    master_seed: u64,
    index: u64,
    tol: &Tolerances,
) -> Result<Trajectory> {
    let mut records = Vec::with_capacity(steps);
    let summary = walk_trajectory(dynamics, initial, steps, master_seed, index, tol, |s| {
        records.push(s.clone());
        ControlFlow::Continue(())
    })?;
    Ok(Trajectory {
        master_seed,
        index,
        initial: initial.clone(),
        steps: records,
        log_probability: summary.log_probability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{FieldSequence, QuantumMarkovChain};
    use crate::kraus::kraus_from_unitary;
    use crate::matcore::random::{haar_unitary, random_density};
    use crate::matcore::{Complex64, UnitaryMatrix};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn maximally_mixed_state_has_trivial_event() {
        let ev = center_of_centralizer(&DensityMatrix::maximally_mixed(3), &tol()).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev.projections()[0].rank(), 3);
        assert!((ev.born_probabilities()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_state_event() {
        let rho = DensityMatrix::new(ComplexMatrix::from_real_diagonal(&[0.7, 0.3]), &tol()).unwrap();
        let ev = center_of_centralizer(&rho, &tol()).unwrap();
        assert_eq!(ev.len(), 2);
        assert!((ev.born_probabilities()[0] - 0.7).abs() < 1e-14);
        assert!((ev.born_probabilities()[1] - 0.3).abs() < 1e-14);
        assert!(
            ev.projections()[0]
                .matrix()
                .max_abs_diff(&ComplexMatrix::from_real_diagonal(&[1.0, 0.0]))
                < 1e-14
        );
    }

    #[test]
    fn near_degenerate_eigenvalues_merge() {
        let mut rng = trajectory_rng(5, 0);
        let w = haar_unitary(3, &mut rng);
        let tiny = 1e-3;
        let top = (1.0 - tiny + 1e-12) / 2.0;
        let diag = vec![top, top - 1e-12, tiny];
        let rho = DensityMatrix::new(
            ComplexMatrix::from_real_diagonal(&diag).conjugate_by(w.matrix()),
            &tol(),
        )
        .unwrap();
        let coarse = Tolerances { cluster: 1e-8, ..tol() };
        let ev = center_of_centralizer(&rho, &coarse).unwrap();
        assert_eq!(ev.projections()[0].rank(), 2);
        assert!((ev.born_probabilities()[0] - (diag[0] + diag[1])).abs() < 1e-12);
        for p in ev.projections() {
            assert!(p.matrix().commutator(rho.matrix()).operator_norm() < 1e-10);
        }
    }

    #[test]
    fn zero_weight_branches_are_dropped() {
        let rho = DensityMatrix::basis_state(3, 1).unwrap();
        let ev = center_of_centralizer(&rho, &tol()).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev.dropped().len(), 1);
        assert_eq!(ev.dropped()[0].rank, 2);
        let (r, p) = born_sample(&ev, &mut trajectory_rng(1, 1));
        assert_eq!((r, p), (0, 1.0));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let rho = DensityMatrix::new(ComplexMatrix::from_real_diagonal(&[0.5, 0.3, 0.2]), &tol()).unwrap();
        let ev = center_of_centralizer(&rho, &tol()).unwrap();
        let draw = |seed| {
            let mut rng = trajectory_rng(seed, 0);
            (0..200).map(|_| born_sample(&ev, &mut rng).0).collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn empirical_frequencies_follow_born_weights() {
        let rho = DensityMatrix::new(ComplexMatrix::from_real_diagonal(&[0.5, 0.3, 0.2]), &tol()).unwrap();
        let ev = center_of_centralizer(&rho, &tol()).unwrap();
        let mut rng = trajectory_rng(7, 0);
        let draws = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            counts[born_sample(&ev, &mut rng).0] += 1;
        }
        for (c, p) in counts.iter().zip([0.5, 0.3, 0.2]) {
            let sigma = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((*c as f64 / draws as f64 - p).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn pure_state_under_decoupled_dynamics_stays_pure() {
        let mut rng = trajectory_rng(9, 0);
        let v = haar_unitary(2, &mut rng);
        let k = kraus_from_unitary(&UnitaryMatrix::identity(4), 2, 2, &tol()).unwrap();
        let chain = QuantumMarkovChain::new(k, v.clone(), FieldSequence::vacuum(2, 6)).unwrap();
        let psi = [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)];
        let rho = DensityMatrix::pure(&psi).unwrap();
        let traj = run_trajectory(&chain, &rho, 6, 3, 0, &tol()).unwrap();
        let mut want = rho.clone();
        for s in &traj.steps {
            want = want.conjugate_by(&v);
            assert_eq!(s.event_size, 1);
            assert!((s.born_probability - 1.0).abs() < 1e-12);
            assert!(s.post_collapse.matrix().max_abs_diff(want.matrix()) < 1e-12);
        }
        assert!(traj.log_probability.abs() < 1e-11);
    }

    #[test]
    fn empty_trajectory() {
        let k = kraus_from_unitary(&UnitaryMatrix::identity(4), 2, 2, &tol()).unwrap();
        let chain = QuantumMarkovChain::new(k, UnitaryMatrix::identity(2), FieldSequence::vacuum(2, 3)).unwrap();
        let traj = run_trajectory(&chain, &DensityMatrix::maximally_mixed(2), 0, 1, 0, &tol()).unwrap();
        assert!(traj.steps.is_empty());
        assert_eq!(traj.log_probability, 0.0);
    }

    #[test]
    fn mixture_identity_and_commutation_on_random_steps() {
        let mut rng = trajectory_rng(10, 0);
        for _ in 0..20 {
            let u = haar_unitary(6, &mut rng);
            let v = haar_unitary(3, &mut rng);
            let k = kraus_from_unitary(&u, 2, 3, &tol()).unwrap();
            let rho = random_density(3, &mut rng);
            let hat = k.apply_single(1, &v, &rho, &tol()).unwrap();
            let ev = center_of_centralizer(&hat, &tol()).unwrap();
            for p in ev.projections() {
                assert!(p.matrix().commutator(hat.matrix()).operator_norm() < 1e-10);
            }
            let step = collapse_step(hat.clone(), 1, 1, &mut rng, &tol()).unwrap();
            assert!(step.mixture_residual < 1e-12, "{}", step.mixture_residual);
            assert_eq!(step.post_collapse.matrix().trace().re.round() as i64, 1);
        }
    }

    #[test]
    fn centralizer_membership() {
        let rho = DensityMatrix::new(ComplexMatrix::from_real_diagonal(&[0.5, 0.25, 0.25]), &tol()).unwrap();
        // block-diagonal in the degenerate eigenspace commutes with rho
        let y = ComplexMatrix::from_real_rows(&[&[2.0, 0.0, 0.0], &[0.0, 1.0, 3.0], &[0.0, -1.0, 0.5]]).unwrap();
        assert!(in_centralizer(&y, &rho, 1e-12));
        let ev = center_of_centralizer(&rho, &tol()).unwrap();
        // the event projections commute with every element of the centralizer
        for p in ev.projections() {
            assert!(p.matrix().commutator(&y).operator_norm() < 1e-12);
        }
        let z = ComplexMatrix::from_real_rows(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]]).unwrap();
        assert!(!in_centralizer(&z, &rho, 1e-12));
    }
}
