//! Scenario files: the JSON description of one experiment.
//!
//! Complex matrices are written row-major as nested `[re, im]` pairs. Every
//! index a user writes (basis states, field indices) is 1-based.

use std::fmt;
use std::path::Path;

use ethsim_core::matcore::{Complex64, ComplexMatrix, Tolerances};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Issue};

/// Row-major complex matrix, each entry `[re, im]`.
pub type MatrixSpec = Vec<Vec<[f64; 2]>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// `N`, dimension of one field slice.
    pub field_dim: usize,
    /// `M`, dimension of the atom.
    pub atom_dim: usize,
    /// `L`, number of partition elements; checked against the model when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
    pub model: ModelSpec,
    /// Defaults to the model's own propagator (identity, except for the detector).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagator: Option<PropagatorSpec>,
    #[serde(default)]
    pub initial_state: InitialStateSpec,
    /// Defaults to the vacuum, or to thermal sampling for the thermal model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<ToleranceSpec>,
    #[serde(default)]
    pub log: LogMode,
    /// Default output directory, overridden by `--out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// An arbitrary interaction unitary on `C^N ⊗ C^M`, field factor first.
    Explicit { unitary: MatrixSpec },
    /// `U = Σ_m T^(m) ⊗ Q_m`.
    Measurement {
        field_unitaries: Vec<MatrixSpec>,
        partition: Vec<MatrixSpec>,
    },
    /// `T^(m) = exp(ε σ^(m))` with random unit-norm directions.
    WeakCoupling {
        epsilon: f64,
        /// Sizes of the coordinate blocks of the partition.
        blocks: Vec<usize>,
        perturbation_seed: u64,
        /// Coupling strengths for the `regimes` sweep.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sweep: Option<Vec<f64>>,
    },
    /// Rank-one partition with orthonormal vacuum images, perturbed by `ε`.
    StrongCoupling { epsilon: f64, seed: u64 },
    /// Weakly coupled `h^w` inside a strongly measured detector.
    Detector {
        weak_dim: usize,
        weak_levels: usize,
        delta: f64,
        epsilon: f64,
        seed: u64,
        /// Leak strengths for the `regimes` comparison.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        compare_deltas: Option<Vec<f64>>,
    },
    /// Haar field unitaries driven by slices drawn from `Σ_k p_k P_k / rank`.
    Thermal {
        /// Strictly decreasing, summing to 1.
        weights: Vec<f64>,
        /// Ranks of the coordinate blocks `P_k`, in order.
        ranks: Vec<usize>,
        /// Sizes of the coordinate blocks of the atom partition.
        blocks: Vec<usize>,
        seed: u64,
    },
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Explicit { .. } => "explicit",
            ModelSpec::Measurement { .. } => "measurement",
            ModelSpec::WeakCoupling { .. } => "weak_coupling",
            ModelSpec::StrongCoupling { .. } => "strong_coupling",
            ModelSpec::Detector { .. } => "detector",
            ModelSpec::Thermal { .. } => "thermal",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PropagatorSpec {
    Identity,
    Explicit {
        matrix: MatrixSpec,
    },
    /// Haar-random unitary from a seeded stream.
    Random {
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialStateSpec {
    /// `|e_i><e_i|`, 1-based.
    Basis {
        index: usize,
    },
    MaximallyMixed,
    Explicit {
        matrix: MatrixSpec,
    },
    /// `Σ μ(m) |χ_m><χ_m|` over the strong-coupling labels.
    LabelMixture {
        weights: Vec<f64>,
    },
}

impl Default for InitialStateSpec {
    fn default() -> Self {
        InitialStateSpec::Basis { index: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Vacuum,
    /// Field indices `k_0, k_1, ...`, 1-based; at least `steps` of them.
    Explicit {
        indices: Vec<usize>,
    },
    Thermal,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unitarity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hermiticity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_probability: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogMode {
    #[default]
    Full,
    SummaryOnly,
}

impl fmt::Display for LogMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LogMode::Full => "full",
            LogMode::SummaryOnly => "summary_only",
        })
    }
}

impl Scenario {
    pub fn tolerances(&self) -> Tolerances {
        let mut tol = Tolerances::default();
        if let Some(t) = &self.tolerances {
            tol.unitarity = t.unitarity.unwrap_or(tol.unitarity);
            tol.hermiticity = t.hermiticity.unwrap_or(tol.hermiticity);
            tol.trace = t.trace.unwrap_or(tol.trace);
            tol.cluster = t.cluster.unwrap_or(tol.cluster);
            tol.zero_probability = t.zero_probability.unwrap_or(tol.zero_probability);
        }
        tol
    }

    pub fn field_spec(&self) -> FieldSpec {
        match (&self.field, &self.model) {
            (Some(f), _) => f.clone(),
            (None, ModelSpec::Thermal { .. }) => FieldSpec::Thermal,
            (None, _) => FieldSpec::Vacuum,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    /// Parses without semantic checks.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| {
            HarnessError::Validation(vec![Issue::new(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )])
        })
    }

    /// Parses and validates; every semantic problem is reported at once.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let s = Self::from_json(text)?;
        let issues = crate::validate::validate(&s);
        if issues.is_empty() {
            Ok(s)
        } else {
            Err(HarnessError::Validation(issues))
        }
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }
}

pub fn matrix_to_spec(m: &ComplexMatrix) -> MatrixSpec {
    (0..m.rows())
        .map(|i| m.row(i).iter().map(|z| [z.re, z.im]).collect())
        .collect()
}

/// Shape of a matrix spec, or `None` when rows are ragged.
pub fn spec_shape(spec: &MatrixSpec) -> Option<(usize, usize)> {
    let cols = spec.first().map_or(0, |r| r.len());
    spec.iter().all(|r| r.len() == cols).then_some((spec.len(), cols))
}

pub fn spec_to_matrix(spec: &MatrixSpec) -> ethsim_core::Result<ComplexMatrix> {
    let rows: Vec<Vec<Complex64>> = spec
        .iter()
        .map(|r| r.iter().map(|[re, im]| Complex64::new(*re, *im)).collect())
        .collect();
    ComplexMatrix::from_rows(&rows)
}
