//! The coupling-regime experiments: weak-coupling sweep, strong-coupling
//! comparison with the classical chain, and the detector-click ensembles.

use std::path::Path;

use ethsim_core::models::{
    detector_click_experiment, log_log_slope, strong_coupling_compare, weak_sweep, ClickSettings, DetectorScenario,
};
use ethsim_core::EthError;
use serde::Serialize;

use crate::build::build;
use crate::error::{during_run, HarnessError, Result};
use crate::report::{DetectorSection, TvRow};
use crate::runner::{write_click_rows, write_tv_csv, LABEL_THRESHOLD};
use crate::scenario::{ModelSpec, Scenario};

/// Coupling strengths swept when a weak-coupling scenario names none.
pub const DEFAULT_SWEEP: [f64; 3] = [1e-1, 1e-2, 1e-3];

pub const BUNDLED_WEAK: &str = include_str!("../scenarios/weak.json");
pub const BUNDLED_STRONG: &str = include_str!("../scenarios/strong.json");
pub const BUNDLED_DETECTOR: &str = include_str!("../scenarios/detector.json");

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakSummary {
    pub scenario: String,
    pub points: Vec<SweepPoint>,
    /// Least-squares slope of `log deviation` against `log ε`.
    pub slope: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StrongSummary {
    pub scenario: String,
    pub samples: usize,
    pub max_tv_distance: f64,
    pub max_ambiguous_fraction: f64,
    pub max_transition_error: f64,
    pub max_transition_sigma: f64,
    pub tv: Vec<TvRow>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DetectorSummary {
    pub scenario: String,
    pub ensembles: Vec<DetectorSection>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RegimesSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak: Option<WeakSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strong: Option<StrongSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorSummary>,
}

pub fn weak_regime(s: &Scenario, out: &Path) -> Result<WeakSummary> {
    let ModelSpec::WeakCoupling { sweep, .. } = &s.model else {
        return Err(not_a(s, "weak_coupling"));
    };
    let built = build(s, s.steps.max(1))?;
    let (partition, taus) = built.weak.as_ref().expect("weak model");
    let eps = sweep.clone().unwrap_or_else(|| DEFAULT_SWEEP.to_vec());
    let pts = weak_sweep(partition, &built.propagator, taus, &built.initial, &eps, &built.tol).map_err(during_run)?;
    let path = out.join("weak_sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let points: Vec<SweepPoint> = pts
        .iter()
        .map(|&(epsilon, deviation)| SweepPoint { epsilon, deviation })
        .collect();
    for p in &points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    Ok(WeakSummary {
        scenario: s.name.clone(),
        slope: log_log_slope(&pts),
        points,
    })
}

pub fn strong_regime(s: &Scenario, trials: usize, seed: u64, out: &Path) -> Result<StrongSummary> {
    if !matches!(s.model, ModelSpec::StrongCoupling { .. }) {
        return Err(not_a(s, "strong_coupling"));
    }
    let built = build(s, s.steps)?;
    let model = built.model.as_ref().expect("strong model");
    let mu0 = built.labels.as_ref().expect("labels").occupation(&built.initial);
    let report =
        strong_coupling_compare(model, &mu0, s.steps, trials, seed, LABEL_THRESHOLD, &built.tol).map_err(during_run)?;
    let tv: Vec<TvRow> = (0..=s.steps)
        .map(|n| TvRow {
            step: n,
            samples: report.trials as u64,
            tv_distance: report.tv_distance[n],
            ambiguous_fraction: report.ambiguous[n],
        })
        .collect();
    write_tv_csv(&out.join("tv_distance.csv"), &tv)?;
    Ok(StrongSummary {
        scenario: s.name.clone(),
        samples: report.trials,
        max_tv_distance: report.tv_distance.iter().copied().fold(0.0, f64::max),
        max_ambiguous_fraction: report.ambiguous.iter().copied().fold(0.0, f64::max),
        max_transition_error: report.max_transition_error,
        max_transition_sigma: report.max_transition_sigma,
        tv,
    })
}

/// One click ensemble per leak strength: the scenario's `compare_deltas`,
/// or its own `delta`. The horizon is the scenario's step count.
pub fn detector_regime(s: &Scenario, trials: usize, seed: u64, out: &Path) -> Result<DetectorSummary> {
    let ModelSpec::Detector {
        delta, compare_deltas, ..
    } = &s.model
    else {
        return Err(not_a(s, "detector"));
    };
    let built = build(s, s.steps)?;
    let base = built.detector.as_ref().expect("detector").params.clone();
    let deltas = compare_deltas.clone().unwrap_or_else(|| vec![*delta]);
    let path = out.join("click_times.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut ensembles = Vec::new();
    for d in deltas {
        let mut params = base.clone();
        params.delta = d;
        let scenario = DetectorScenario::build(params, &built.tol)?;
        let report = detector_click_experiment(&scenario, &ClickSettings::new(s.steps, trials, seed), &built.tol)
            .map_err(during_run)?;
        write_click_rows(&mut w, &report)?;
        ensembles.push(DetectorSection::from_report(&report));
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    Ok(DetectorSummary {
        scenario: s.name.clone(),
        ensembles,
    })
}

fn not_a(s: &Scenario, kind: &str) -> HarnessError {
    HarnessError::Core(EthError::InvalidParameter(format!(
        "scenario `{}` has a {} model, not {kind}",
        s.name,
        s.model.kind()
    )))
}

/// Runs the regime matching the scenario's model, or all three bundled
/// regimes when no scenario is given. Writes the CSVs and `regimes.json`.
pub fn run_regimes(
    scenario: Option<&Scenario>,
    trials: Option<usize>,
    seed: Option<u64>,
    out: &Path,
) -> Result<RegimesSummary> {
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let bundled;
    let scenarios: Vec<&Scenario> = match scenario {
        Some(s) => vec![s],
        None => {
            bundled = [BUNDLED_WEAK, BUNDLED_STRONG, BUNDLED_DETECTOR]
                .iter()
                .map(|t| Scenario::parse(t))
                .collect::<Result<Vec<_>>>()?;
            bundled.iter().collect()
        }
    };
    let mut summary = RegimesSummary::default();
    for s in scenarios {
        let (t, sd) = (trials.unwrap_or(s.trials), seed.unwrap_or(s.seed));
        match s.model {
            ModelSpec::WeakCoupling { .. } => summary.weak = Some(weak_regime(s, out)?),
            ModelSpec::StrongCoupling { .. } => summary.strong = Some(strong_regime(s, t, sd, out)?),
            ModelSpec::Detector { .. } => summary.detector = Some(detector_regime(s, t, sd, out)?),
            _ => {
                return Err(HarnessError::Core(EthError::InvalidParameter(format!(
                    "no regime experiment for a {} model",
                    s.model.kind()
                ))))
            }
        }
    }
    let path = out.join("regimes.json");
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    Ok(summary)
}
