//! Semantic checks on a parsed scenario. All problems are collected, each
//! with the path of the offending field.

use ethsim_core::matcore::{DensityMatrix, OrthogonalProjection, Tolerances, UnitaryMatrix};
use ethsim_core::models::partition_residual;

use crate::error::Issue;
use crate::scenario::{
    spec_shape, spec_to_matrix, FieldSpec, InitialStateSpec, MatrixSpec, ModelSpec, PropagatorSpec, Scenario,
    ToleranceSpec,
};

struct Checker {
    issues: Vec<Issue>,
    tol: Tolerances,
}

impl Checker {
    fn fail(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue::new(path, message));
    }

    fn require(&mut self, ok: bool, path: &str, message: impl Into<String>) {
        if !ok {
            self.fail(path, message);
        }
    }

    fn unit_interval(&mut self, x: f64, path: &str) {
        self.require((0.0..1.0).contains(&x), path, format!("must lie in [0, 1), got {x}"));
    }

    /// Shape and finiteness; returns whether the entries are usable.
    fn shape(&mut self, spec: &MatrixSpec, rows: usize, cols: usize, path: &str) -> bool {
        match spec_shape(spec) {
            None => {
                self.fail(path, "rows have different lengths");
                false
            }
            Some(shape) if shape != (rows, cols) => {
                self.fail(path, format!("expected {rows}x{cols}, got {}x{}", shape.0, shape.1));
                false
            }
            Some(_) => {
                let finite = spec.iter().flatten().flatten().all(|x| x.is_finite());
                self.require(finite, path, "entries must be finite");
                finite
            }
        }
    }

    fn unitary(&mut self, spec: &MatrixSpec, dim: usize, path: &str) -> Option<UnitaryMatrix> {
        if !self.shape(spec, dim, dim, path) {
            return None;
        }
        match spec_to_matrix(spec).and_then(|m| UnitaryMatrix::new(m, self.tol.unitarity)) {
            Ok(u) => Some(u),
            Err(e) => {
                self.fail(path, e.to_string());
                None
            }
        }
    }

    fn projection(&mut self, spec: &MatrixSpec, dim: usize, path: &str) -> Option<OrthogonalProjection> {
        if !self.shape(spec, dim, dim, path) {
            return None;
        }
        match spec_to_matrix(spec).and_then(|m| OrthogonalProjection::new(m, self.tol.unitarity)) {
            Ok(p) => Some(p),
            Err(e) => {
                self.fail(path, e.to_string());
                None
            }
        }
    }

    fn blocks(&mut self, blocks: &[usize], dim: usize, path: &str) {
        self.require(!blocks.is_empty(), path, "needs at least one block");
        self.require(!blocks.contains(&0), path, "block sizes must be positive");
        let total: usize = blocks.iter().sum();
        self.require(
            total == dim,
            path,
            format!("block sizes sum to {total}, expected {dim}"),
        );
    }

    fn distribution(&mut self, weights: &[f64], len: usize, path: &str) {
        self.require(
            weights.len() == len,
            path,
            format!("expected {len} weights, got {}", weights.len()),
        );
        self.require(
            weights.iter().all(|w| w.is_finite() && *w >= 0.0),
            path,
            "weights must be finite and non-negative",
        );
        let total: f64 = weights.iter().sum();
        self.require(
            (total - 1.0).abs() <= self.tol.trace,
            path,
            format!("weights sum to {total}"),
        );
    }
}

pub fn validate(s: &Scenario) -> Vec<Issue> {
    let mut c = Checker {
        issues: Vec::new(),
        tol: Tolerances::default(),
    };
    if let Some(t) = &s.tolerances {
        check_tolerances(&mut c, t);
    }
    if c.issues.is_empty() {
        c.tol = s.tolerances();
    }
    let (n, m) = (s.field_dim, s.atom_dim);
    c.require(!s.name.trim().is_empty(), "name", "must not be empty");
    c.require(n >= 1, "field_dim", "must be at least 1");
    c.require(m >= 1, "atom_dim", "must be at least 1");
    c.require(s.trials >= 1, "trials", "must be at least 1");
    if n == 0 || m == 0 {
        return c.issues;
    }

    let levels = check_model(&mut c, s);
    if let (Some(given), Some(derived)) = (s.levels, levels) {
        c.require(
            given == derived,
            "levels",
            format!("the model has {derived} partition elements, not {given}"),
        );
    }

    match (&s.propagator, &s.model) {
        (Some(_), ModelSpec::Detector { .. }) => {
            c.fail("propagator", "the detector builds its own propagator; omit this field")
        }
        (Some(PropagatorSpec::Explicit { matrix }), _) => {
            c.unitary(matrix, m, "propagator.matrix");
        }
        _ => {}
    }

    match &s.initial_state {
        InitialStateSpec::Basis { index } => c.require(
            (1..=m).contains(index),
            "initial_state.index",
            format!("basis index is 1-based and must lie in 1..={m}, got {index}"),
        ),
        InitialStateSpec::MaximallyMixed => {}
        InitialStateSpec::Explicit { matrix } => {
            if c.shape(matrix, m, m, "initial_state.matrix") {
                if let Err(e) = spec_to_matrix(matrix).and_then(|x| DensityMatrix::new(x, &c.tol)) {
                    c.fail("initial_state.matrix", e.to_string());
                }
            }
        }
        InitialStateSpec::LabelMixture { weights } => {
            if matches!(s.model, ModelSpec::StrongCoupling { .. }) {
                c.distribution(weights, m, "initial_state.weights");
            } else {
                c.fail("initial_state", "label_mixture needs the strong_coupling model");
            }
        }
    }

    let thermal_model = matches!(s.model, ModelSpec::Thermal { .. });
    match s.field_spec() {
        FieldSpec::Vacuum => c.require(!thermal_model, "field", "the thermal model needs a thermal field"),
        FieldSpec::Thermal => c.require(thermal_model, "field", "a thermal field needs the thermal model"),
        FieldSpec::Explicit { indices } => {
            c.require(!thermal_model, "field", "the thermal model needs a thermal field");
            c.require(
                indices.len() >= s.steps,
                "field.indices",
                format!("{} indices for {} steps", indices.len(), s.steps),
            );
            if let Some((i, k)) = indices.iter().enumerate().find(|(_, k)| !(1..=n).contains(*k)) {
                c.fail(
                    format!("field.indices[{i}]"),
                    format!("field index is 1-based and must lie in 1..={n}, got {k}"),
                );
            }
        }
    }
    c.issues
}

fn check_tolerances(c: &mut Checker, t: &ToleranceSpec) {
    let named = [
        ("unitarity", t.unitarity),
        ("hermiticity", t.hermiticity),
        ("trace", t.trace),
        ("cluster", t.cluster),
        ("zero_probability", t.zero_probability),
    ];
    for (name, value) in named {
        if let Some(x) = value {
            c.require(
                x.is_finite() && x > 0.0,
                &format!("tolerances.{name}"),
                format!("must be positive, got {x}"),
            );
        }
    }
}

/// Checks the model block and returns its number of partition elements.
fn check_model(c: &mut Checker, s: &Scenario) -> Option<usize> {
    let (n, m) = (s.field_dim, s.atom_dim);
    match &s.model {
        ModelSpec::Explicit { unitary } => {
            c.unitary(unitary, n * m, "model.unitary");
            None
        }
        ModelSpec::Measurement {
            field_unitaries,
            partition,
        } => {
            c.require(
                !partition.is_empty(),
                "model.partition",
                "needs at least one projection",
            );
            c.require(
                field_unitaries.len() == partition.len(),
                "model.field_unitaries",
                format!(
                    "{} field unitaries for {} partition elements",
                    field_unitaries.len(),
                    partition.len()
                ),
            );
            for (i, t) in field_unitaries.iter().enumerate() {
                c.unitary(t, n, &format!("model.field_unitaries[{i}]"));
            }
            let qs: Vec<Option<OrthogonalProjection>> = partition
                .iter()
                .enumerate()
                .map(|(i, q)| c.projection(q, m, &format!("model.partition[{i}]")))
                .collect();
            if !qs.is_empty() && qs.iter().all(Option::is_some) {
                let qs: Vec<OrthogonalProjection> = qs.into_iter().flatten().collect();
                let residual = partition_residual(&qs);
                c.require(
                    residual <= c.tol.unitarity,
                    "model.partition",
                    format!("projections are not an orthogonal resolution of the identity (residual {residual:.3e})"),
                );
            }
            Some(partition.len())
        }
        ModelSpec::WeakCoupling {
            epsilon, blocks, sweep, ..
        } => {
            c.unit_interval(*epsilon, "model.epsilon");
            c.blocks(blocks, m, "model.blocks");
            if let Some(sw) = sweep {
                c.require(sw.len() >= 2, "model.sweep", "needs at least two coupling strengths");
                for (i, e) in sw.iter().enumerate() {
                    c.require(
                        *e > 0.0 && *e < 1.0,
                        &format!("model.sweep[{i}]"),
                        format!("must lie in (0, 1), got {e}"),
                    );
                }
            }
            Some(blocks.len())
        }
        ModelSpec::StrongCoupling { epsilon, .. } => {
            c.unit_interval(*epsilon, "model.epsilon");
            c.require(
                n >= m,
                "field_dim",
                format!("strong coupling needs field_dim >= atom_dim = {m}"),
            );
            Some(m)
        }
        ModelSpec::Detector {
            weak_dim,
            weak_levels,
            delta,
            epsilon,
            compare_deltas,
            ..
        } => {
            let kw = *weak_dim;
            c.require(
                kw >= 1 && 2 * kw <= m,
                "model.weak_dim",
                format!("need 1 <= weak_dim <= atom_dim - weak_dim, got {kw} with atom_dim {m}"),
            );
            c.require(
                (1..=kw.max(1)).contains(weak_levels),
                "model.weak_levels",
                format!("need 1 <= weak_levels <= weak_dim, got {weak_levels}"),
            );
            c.unit_interval(*delta, "model.delta");
            c.unit_interval(*epsilon, "model.epsilon");
            if m > kw {
                c.require(
                    n == m - kw + 1,
                    "field_dim",
                    format!(
                        "the detector field has dimension atom_dim - weak_dim + 1 = {}",
                        m - kw + 1
                    ),
                );
            }
            for (i, d) in compare_deltas.iter().flatten().enumerate() {
                c.unit_interval(*d, &format!("model.compare_deltas[{i}]"));
            }
            Some(weak_levels + m.saturating_sub(kw))
        }
        ModelSpec::Thermal {
            weights, ranks, blocks, ..
        } => {
            c.require(!weights.is_empty(), "model.weights", "needs at least one weight");
            c.require(
                weights.iter().all(|w| w.is_finite() && *w > 0.0),
                "model.weights",
                "weights must be positive",
            );
            c.require(
                weights.windows(2).all(|w| w[0] > w[1]),
                "model.weights",
                "weights must be strictly decreasing",
            );
            let total: f64 = weights.iter().sum();
            c.require(
                (total - 1.0).abs() <= c.tol.trace,
                "model.weights",
                format!("weights sum to {total}"),
            );
            c.require(
                ranks.len() == weights.len(),
                "model.ranks",
                format!("{} ranks for {} weights", ranks.len(), weights.len()),
            );
            c.require(!ranks.contains(&0), "model.ranks", "ranks must be positive");
            let used: usize = ranks.iter().sum();
            c.require(
                used <= n,
                "model.ranks",
                format!("ranks sum to {used}, more than field_dim {n}"),
            );
            c.blocks(blocks, m, "model.blocks");
            Some(blocks.len())
        }
    }
}
