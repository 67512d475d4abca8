//! Concrete model families built on measurement-type interactions.

pub mod detector;
pub mod measurement;
pub mod regimes;
pub mod thermal;

pub use detector::{
    detector_click_experiment, summarize_clicks, ClickRecord, ClickReport, ClickSettings, ClickTracker, DetectorParams,
    DetectorScenario,
};
pub use measurement::{
    build_measurement_unitary, coordinate_partition, even_blocks, g_matrix_at, partition_residual, step_diagonal_form,
    step_double_sum, step_via_g, unitary_with_first_column, GMatrix, MeasurementModel, StepViaG,
};
pub use regimes::{
    basis_vectors, classical_transition, log_log_slope, measurement_chain, perturbation_unitary, random_perturbations,
    strong_coupling_compare, strong_coupling_model, weak_coupling_family, weak_sweep, ClassicalChain, LabelBasis,
    StrongCouplingReport,
};
pub use thermal::{thermal_g_matrix, thermal_step, ThermalChain, ThermalEnvironment};
