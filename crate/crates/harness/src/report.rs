//! The `report.json` document.

use ethsim_core::matcore::Tolerances;
use ethsim_core::models::ClickReport;
use serde::Serialize;

use crate::runner::click_histogram;
use crate::scenario::{LogMode, MatrixSpec, Scenario};

#[derive(Clone, Debug, Serialize)]
pub struct Software {
    pub name: &'static str,
    pub version: &'static str,
}

pub fn software() -> Software {
    Software {
        name: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
    }
}

/// The index and ordering choices every number in a report depends on.
#[derive(Clone, Debug, Serialize)]
pub struct Conventions {
    /// Tensor order of the joint space.
    pub tensor_order: &'static str,
    /// Order of the interaction and free parts within one step.
    pub step_order: &'static str,
    /// Which field slice step `n` consumes.
    pub field_slice: &'static str,
    /// Base of every index written to a scenario or an output.
    pub label_base: usize,
    /// Events are clustered spectral projections of the pre-collapse state.
    pub cluster_tolerance: f64,
    /// Branches with Born weight below this are dropped before sampling.
    pub zero_probability: f64,
    /// Branch order for inverse-CDF sampling.
    pub sampling_order: &'static str,
    pub rng: &'static str,
}

pub fn conventions(tol: &Tolerances) -> Conventions {
    Conventions {
        tensor_order: "field ⊗ atom, index α·M + i",
        step_order: "interaction U, then free propagator V",
        field_slice: "step n consumes k_(n-1)",
        label_base: 1,
        cluster_tolerance: tol.cluster,
        zero_probability: tol.zero_probability,
        sampling_order: "descending probability, ties by projection index, one uniform per step",
        rng: "ChaCha8 seeded by the master seed, stream = trial index",
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EventCount {
    pub branches: usize,
    pub count: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepReport {
    pub step: usize,
    /// Trajectories contributing to this row.
    pub samples: u64,
    /// How often the actual event had each number of branches.
    pub event_sizes: Vec<EventCount>,
    pub mean_event_size: f64,
    /// Mean Uhlmann fidelity of `Ω_n` with `V^n Ω_0 V^{-n}`.
    pub mean_fidelity_to_free: f64,
    pub min_fidelity_to_free: f64,
    pub max_mixture_residual: f64,
    pub max_trace_error: f64,
    /// Largest entry of `mean(Ω_n) - E[Ω_n]`, with `E[Ω_n]` from the
    /// deterministic chain.
    pub mean_state_deviation: f64,
    pub mean_post_collapse: MatrixSpec,
}

/// One row of `tv_distance.csv`.
#[derive(Clone, Debug, Serialize)]
pub struct TvRow {
    pub step: usize,
    pub samples: u64,
    pub tv_distance: f64,
    pub ambiguous_fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StrongSection {
    pub samples: u64,
    pub label_threshold: f64,
    pub max_tv_distance: f64,
    pub tv: Vec<TvRow>,
    /// `μ_n` of the classical chain, `n = 0..=steps`.
    pub predicted: Vec<Vec<f64>>,
    pub empirical: Vec<Vec<f64>>,
    pub max_transition_error: f64,
    pub max_transition_sigma: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClickBin {
    pub from: usize,
    pub to: usize,
    pub count: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DetectorSection {
    pub samples: usize,
    pub delta: f64,
    pub horizon: usize,
    pub clicked: usize,
    pub censored: usize,
    /// Unclicked trials count as clicking after the horizon.
    pub median_click_time: Option<f64>,
    /// `1/(4δ)`.
    pub required_dwell: f64,
    pub dwell_fraction: f64,
    pub histogram: Vec<ClickBin>,
}

impl DetectorSection {
    pub fn from_report(r: &ClickReport) -> Self {
        Self {
            samples: r.records.len(),
            delta: r.delta,
            horizon: r.horizon,
            clicked: r.records.len() - r.censored,
            censored: r.censored,
            median_click_time: r.median_click_time,
            required_dwell: 1.0 / (4.0 * r.delta),
            dwell_fraction: r.dwell_fraction,
            histogram: click_histogram(&r.records, r.horizon, 20),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub software: Software,
    pub conventions: Conventions,
    pub scenario: Scenario,
    pub seed: u64,
    pub trials: usize,
    pub steps: usize,
    pub log: LogMode,
    pub max_mixture_residual: f64,
    pub per_step: Vec<StepReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strong: Option<StrongSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorSection>,
    pub wall_clock_seconds: f64,
}
