//! Independent recomputation of a scenario's deterministic quantities: the
//! Kraus chain against dense algebra on the truncated field chain, and the
//! expected-statistics sidecar.

use std::path::{Path, PathBuf};

use ethsim_core::evolve::{
    heisenberg_expectation, tensor_oracle_expectation, FieldSequence, QuantumMarkovChain, SliceObservable,
    TruncatedChainState, DEFAULT_ORACLE_CAP,
};
use ethsim_core::matcore::random::{random_density, random_hermitian};
use ethsim_core::matcore::{Complex64, ComplexMatrix, DensityMatrix};
use ethsim_core::models::ThermalChain;
use ethsim_core::EthError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::build::{Built, Dynamics};
use crate::error::{during_run, HarnessError, Result};
use crate::scenario::{matrix_to_spec, MatrixSpec, Scenario};

/// Largest discrepancy `oracle` accepts.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

/// Cap on `dim(field chain) · M` for the dense oracle: `ETHSIM_MAX_DIM` when
/// set, otherwise [`DEFAULT_ORACLE_CAP`].
pub fn max_dim() -> usize {
    std::env::var("ETHSIM_MAX_DIM")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_ORACLE_CAP)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub scenario: String,
    /// Number of steps compared, `0..=steps_checked`.
    pub steps_checked: usize,
    pub comparisons: usize,
    pub max_diff: f64,
    pub cap: usize,
}

/// Kraus-chain expectations against the dense tensor oracle, for every
/// matrix unit of the atom and a random slice-by-atom observable, up to
/// the scenario's step count or the dimension cap.
pub fn oracle_diff(s: &Scenario, built: &Built, cap: usize) -> Result<OracleReport> {
    let (n, m) = (s.field_dim, s.atom_dim);
    if n * m > cap {
        return Err(EthError::CapExceeded { dim: n * m, cap }.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let report = match &built.dynamics {
        Dynamics::Chain(chain) => chain_diff(chain, built, s.steps, cap, &mut rng)?,
        Dynamics::Thermal(chain) => thermal_diff(chain, built, cap, &mut rng)?,
    };
    Ok(OracleReport {
        scenario: s.name.clone(),
        steps_checked: report.0,
        comparisons: report.1,
        max_diff: report.2,
        cap,
    })
}

fn matrix_units(m: usize) -> impl Iterator<Item = ComplexMatrix> {
    (0..m * m).map(move |ab| {
        let (a, b) = (ab / m, ab % m);
        ComplexMatrix::from_fn(m, m, |i, j| {
            Complex64::new(if (i, j) == (a, b) { 1.0 } else { 0.0 }, 0.0)
        })
    })
}

/// One dense state per initial atom state, advanced slot by slot; at each
/// step every observable is read off it with `C` pulled back by `V^k`.
fn chain_diff(
    chain: &QuantumMarkovChain,
    built: &Built,
    steps: usize,
    cap: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, usize, f64)> {
    let (nf, m) = (chain.kraus.field_dim(), chain.kraus.atom_dim());
    let fits = |slots: usize| {
        nf.checked_pow(slots as u32)
            .and_then(|d| d.checked_mul(m))
            .is_some_and(|d| d <= cap)
    };
    // the random slice observable sits on slot k, so step k needs k + 1 slots
    let last = (0..=steps).take_while(|&k| fits(k + 1)).last().unwrap_or(0);
    let (u, v, tol) = (&built.interaction, &chain.propagator, &built.tol);
    let states = [built.initial.clone(), random_density(m, rng)];
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for omega in &states {
        let mut dense = TruncatedChainState::new(last + 1, &chain.field, omega, cap).map_err(during_run)?;
        for k in 0..=last {
            if k > 0 {
                dense.apply_interaction(u, v, k - 1).map_err(during_run)?;
            }
            let mut pairs: Vec<(SliceObservable, ComplexMatrix)> =
                matrix_units(m).map(|c| (SliceObservable::identity(), c)).collect();
            let f = SliceObservable::new(0, vec![random_hermitian(nf, rng)], nf)?;
            pairs.push((f, random_hermitian(m, rng)));
            let back = v.power(k).dagger();
            for (f, c) in &pairs {
                let a =
                    heisenberg_expectation(f, c, omega, &chain.field, &chain.kraus, v, k, tol).map_err(during_run)?;
                let b = dense
                    .expectation(f, k, &c.conjugate_by(back.matrix()))
                    .map_err(during_run)?;
                worst = worst.max((a - b).norm());
                count += 1;
            }
        }
    }
    Ok((last, count, worst))
}

/// Each slice step against the dense single-step oracle averaged over an
/// orthonormal basis of the range of `P_k`.
fn thermal_diff(chain: &ThermalChain, built: &Built, cap: usize, rng: &mut ChaCha8Rng) -> Result<(usize, usize, f64)> {
    let nf = chain.model.field_dim();
    let m = chain.model.atom_dim();
    let (u, tol) = (&built.interaction, &built.tol);
    let states = [built.initial.clone(), random_density(m, rng)];
    let v = chain.model.propagator();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (k, p) in chain.env.projections().iter().enumerate() {
        let basis: Vec<usize> = (0..nf).filter(|&i| p.matrix().get(i, i).re > 0.5).collect();
        for omega in &states {
            let fast = chain.step_at(omega, k, tol).map_err(during_run)?;
            for c in matrix_units(m) {
                let mut avg = Complex64::new(0.0, 0.0);
                for &i in &basis {
                    let field = FieldSequence::explicit(nf, vec![i], 1)?;
                    avg += tensor_oracle_expectation(&SliceObservable::identity(), &c, omega, &field, u, v, 1, cap)
                        .map_err(during_run)?;
                }
                avg /= basis.len() as f64;
                worst = worst.max((fast.expectation(&c) - avg).norm());
                count += 1;
            }
        }
    }
    Ok((1, count, worst))
}

/// `E[Ω_n]` for `n = 1..=steps`: by the mixture identity the ensemble mean
/// of post-collapse states follows the pre-collapse chain, slice-averaged
/// for thermal fields.
pub fn expected_mean_states(built: &Built, steps: usize) -> Result<Vec<DensityMatrix>> {
    let mut out = Vec::with_capacity(steps);
    let mut omega = built.initial.clone();
    for j in 0..steps {
        omega = match &built.dynamics {
            Dynamics::Chain(c) => c.step(&omega, j, &built.tol),
            Dynamics::Thermal(t) => t.averaged_step(&omega, &built.tol),
        }
        .map_err(during_run)?;
        out.push(omega.clone());
    }
    Ok(out)
}

/// Longest stretch of mean states a sidecar records.
pub const SIDECAR_STEPS: usize = 50;

/// Deterministic statistics a run of the scenario should reproduce.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    pub scenario: String,
    pub oracle_max_diff: f64,
    /// `E[Ω_n]` for `n = 1..=min(steps, SIDECAR_STEPS)`.
    pub mean_states: Vec<MatrixSpec>,
    /// Classical label distributions `μ_n`, `n = 0..=steps`, for strong coupling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_distributions: Option<Vec<Vec<f64>>>,
}

pub fn expected(s: &Scenario, built: &Built, oracle: &OracleReport) -> Result<Expected> {
    let label_distributions = match &built.labels {
        Some(labels) => {
            let mu0 = labels.occupation(&built.initial);
            Some(labels.chain().clone().with_distribution(mu0)?.evolve(s.steps))
        }
        None => None,
    };
    Ok(Expected {
        scenario: s.name.clone(),
        oracle_max_diff: oracle.max_diff,
        mean_states: expected_mean_states(built, s.steps.min(SIDECAR_STEPS))?
            .iter()
            .map(|d| matrix_to_spec(d.matrix()))
            .collect(),
        label_distributions,
    })
}

/// `scenarios/foo.json` -> `scenarios/foo.expected.json`.
pub fn sidecar_path(scenario: &Path) -> PathBuf {
    let stem = scenario
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    scenario.with_file_name(format!("{stem}.expected.json"))
}

pub fn write_expected(path: &Path, expected: &Expected) -> Result<()> {
    let text = serde_json::to_string_pretty(expected)? + "\n";
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}
