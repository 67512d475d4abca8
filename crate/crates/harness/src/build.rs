//! Turns a validated scenario into core objects.

use ethsim_core::evolve::{FieldSequence, PreCollapseDynamics, QuantumMarkovChain};
use ethsim_core::kraus::kraus_from_unitary;
use ethsim_core::matcore::random::haar_unitary;
use ethsim_core::matcore::{ComplexMatrix, DensityMatrix, OrthogonalProjection, Tolerances, UnitaryMatrix};
use ethsim_core::models::{
    build_measurement_unitary, coordinate_partition, measurement_chain, random_perturbations, strong_coupling_model,
    weak_coupling_family, DetectorParams, DetectorScenario, LabelBasis, MeasurementModel, ThermalChain,
    ThermalEnvironment,
};
use ethsim_core::{EthError, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scenario::{spec_to_matrix, FieldSpec, InitialStateSpec, ModelSpec, PropagatorSpec, Scenario};

pub enum Dynamics {
    Chain(QuantumMarkovChain),
    Thermal(ThermalChain),
}

impl Dynamics {
    pub fn as_dyn(&self) -> &dyn PreCollapseDynamics {
        match self {
            Dynamics::Chain(c) => c,
            Dynamics::Thermal(t) => t,
        }
    }

    pub fn chain(&self) -> Option<&QuantumMarkovChain> {
        match self {
            Dynamics::Chain(c) => Some(c),
            Dynamics::Thermal(_) => None,
        }
    }
}

/// Everything a command needs to run a scenario.
pub struct Built {
    pub dynamics: Dynamics,
    pub initial: DensityMatrix,
    /// The free propagator `V`.
    pub propagator: UnitaryMatrix,
    /// The interaction unitary `U`, for the dense oracle.
    pub interaction: UnitaryMatrix,
    pub model: Option<MeasurementModel>,
    pub labels: Option<LabelBasis>,
    pub detector: Option<DetectorScenario>,
    /// Partition and perturbation directions of a weak-coupling model.
    pub weak: Option<(Vec<OrthogonalProjection>, Vec<ComplexMatrix>)>,
    pub tol: Tolerances,
}

fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn propagator(s: &Scenario, tol: &Tolerances) -> Result<UnitaryMatrix> {
    match &s.propagator {
        None | Some(PropagatorSpec::Identity) => Ok(UnitaryMatrix::identity(s.atom_dim)),
        Some(PropagatorSpec::Explicit { matrix }) => UnitaryMatrix::new(spec_to_matrix(matrix)?, tol.unitarity),
        Some(PropagatorSpec::Random { seed }) => Ok(haar_unitary(s.atom_dim, &mut seeded(*seed))),
    }
}

/// The field sequence driving a chain for `horizon` steps; explicit
/// indices are followed by vacuum.
pub fn field_sequence(s: &Scenario, horizon: usize) -> Result<FieldSequence> {
    match s.field_spec() {
        FieldSpec::Vacuum => Ok(FieldSequence::vacuum(s.field_dim, horizon)),
        FieldSpec::Explicit { indices } => {
            let entries: Vec<usize> = indices.iter().map(|k| k.saturating_sub(1)).collect();
            let len = entries.len().max(horizon);
            FieldSequence::explicit(s.field_dim, entries, len)
        }
        FieldSpec::Thermal => Err(EthError::InvalidParameter(
            "a thermal field has no fixed sequence".into(),
        )),
    }
}

/// Builds the scenario's dynamics for up to `horizon` steps.
pub fn build(s: &Scenario, horizon: usize) -> Result<Built> {
    let tol = s.tolerances();
    let (n, m) = (s.field_dim, s.atom_dim);
    let mut v = propagator(s, &tol)?;
    let mut labels = None;
    let mut detector = None;
    let mut weak = None;

    let (model, interaction) = match &s.model {
        ModelSpec::Explicit { unitary } => (None, UnitaryMatrix::new(spec_to_matrix(unitary)?, tol.unitarity)?),
        ModelSpec::Measurement {
            field_unitaries,
            partition,
        } => {
            let ts = field_unitaries
                .iter()
                .map(|t| UnitaryMatrix::new(spec_to_matrix(t)?, tol.unitarity))
                .collect::<Result<Vec<_>>>()?;
            let qs = partition
                .iter()
                .map(|q| OrthogonalProjection::new(spec_to_matrix(q)?, tol.unitarity))
                .collect::<Result<Vec<_>>>()?;
            let model = MeasurementModel::new(ts, qs, v.clone(), &tol)?;
            let u = build_measurement_unitary(&model, &tol)?;
            (Some(model), u)
        }
        ModelSpec::WeakCoupling {
            epsilon,
            blocks,
            perturbation_seed,
            ..
        } => {
            let partition = coordinate_partition(m, blocks)?;
            let taus = random_perturbations(blocks.len(), n, &mut seeded(*perturbation_seed));
            let model = weak_coupling_family(partition.clone(), v.clone(), *epsilon, &taus, &tol)?;
            weak = Some((partition, taus));
            let u = build_measurement_unitary(&model, &tol)?;
            (Some(model), u)
        }
        ModelSpec::StrongCoupling { epsilon, seed } => {
            let model = strong_coupling_model(n, v.clone(), *epsilon, &mut seeded(*seed), &tol)?;
            labels = Some(LabelBasis::for_model(&model)?);
            let u = build_measurement_unitary(&model, &tol)?;
            (Some(model), u)
        }
        ModelSpec::Detector {
            weak_dim,
            weak_levels,
            delta,
            epsilon,
            seed,
            ..
        } => {
            let scenario = DetectorScenario::build(
                DetectorParams {
                    weak_dim: *weak_dim,
                    atom_dim: m,
                    weak_levels: *weak_levels,
                    delta: *delta,
                    epsilon: *epsilon,
                    seed: *seed,
                },
                &tol,
            )?;
            v = scenario.model.propagator().clone();
            let model = scenario.model.clone();
            detector = Some(scenario);
            let u = build_measurement_unitary(&model, &tol)?;
            (Some(model), u)
        }
        ModelSpec::Thermal { blocks, seed, .. } => {
            let mut rng = seeded(*seed);
            let ts = (0..blocks.len()).map(|_| haar_unitary(n, &mut rng)).collect();
            let model = MeasurementModel::new(ts, coordinate_partition(m, blocks)?, v.clone(), &tol)?;
            let u = build_measurement_unitary(&model, &tol)?;
            (Some(model), u)
        }
    };

    let dynamics = match &s.model {
        ModelSpec::Thermal { weights, ranks, .. } => {
            let mut start = 0;
            let projections = ranks
                .iter()
                .map(|&r| {
                    let idx: Vec<usize> = (start..start + r).collect();
                    start += r;
                    OrthogonalProjection::coordinate(n, &idx)
                })
                .collect();
            let env = ThermalEnvironment::new(projections, weights.clone(), &tol)?;
            Dynamics::Thermal(ThermalChain::new(model.clone().expect("thermal model"), env, &tol)?)
        }
        _ => {
            let field = field_sequence(s, horizon)?;
            match &model {
                Some(md) => Dynamics::Chain(measurement_chain(md, field, &tol)?),
                None => Dynamics::Chain(QuantumMarkovChain::new(
                    kraus_from_unitary(&interaction, n, m, &tol)?,
                    v.clone(),
                    field,
                )?),
            }
        }
    };

    let initial = match &s.initial_state {
        InitialStateSpec::Basis { index } => DensityMatrix::basis_state(m, index.saturating_sub(1))?,
        InitialStateSpec::MaximallyMixed => DensityMatrix::maximally_mixed(m),
        InitialStateSpec::Explicit { matrix } => DensityMatrix::new(spec_to_matrix(matrix)?, &tol)?,
        InitialStateSpec::LabelMixture { weights } => labels
            .as_ref()
            .ok_or_else(|| EthError::InvalidParameter("label_mixture needs the strong_coupling model".into()))?
            .mixture(weights)?,
    };

    Ok(Built {
        dynamics,
        initial,
        propagator: v,
        interaction,
        model,
        labels,
        detector,
        weak,
        tol,
    })
}
