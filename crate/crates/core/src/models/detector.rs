//! Weakly coupled system inside a strongly measured detector.
//!
//! The atom space splits as `h^w ⊕ h^s` (coordinates `0..K_w` and
//! `K_w..M`). The field barely distinguishes the `J` partition elements of
//! `h^w` but sharply distinguishes the rank-one elements of `h^s`; the free
//! propagator leaks `h^w` into `h^s` at rate `δ`.

use std::ops::ControlFlow;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::measurement::{coordinate_partition, even_blocks, g_matrix_at, unitary_with_first_column, MeasurementModel};
use super::regimes::{measurement_chain, perturbation_unitary};
use crate::collapse::{walk_trajectory, TrajectoryStep};
use crate::error::{EthError, Result};
use crate::evolve::FieldSequence;
use crate::matcore::random::{haar_unitary, random_anti_hermitian_unit};
use crate::matcore::{unitary_exp, ComplexMatrix, DensityMatrix, OrthogonalProjection, Tolerances, UnitaryMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorParams {
    /// `K_w`, the dimension of the weakly coupled subspace.
    pub weak_dim: usize,
    /// `M`.
    pub atom_dim: usize,
    /// `J`, the number of partition elements inside `h^w`.
    pub weak_levels: usize,
    /// `δ`, bound on the leak part of the propagator.
    pub delta: f64,
    /// `ε`, bound on the metric deviation.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            weak_dim: 2,
            atom_dim: 4,
            weak_levels: 2,
            delta: 0.05,
            epsilon: 1e-3,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DetectorScenario {
    pub params: DetectorParams,
    pub model: MeasurementModel,
    pub weak_projector: OrthogonalProjection,
    pub strong_projector: OrthogonalProjection,
    /// `V_0 ⊕ 1`, the propagator with the leak removed.
    pub unperturbed_propagator: UnitaryMatrix,
    /// `||G(0) - G_0||_op` for the block metric `G_0`.
    pub metric_deviation: f64,
    /// `||V - V_0 ⊕ 1||_op`.
    pub leak_norm: f64,
}

impl DetectorScenario {
    pub fn build(params: DetectorParams, tol: &Tolerances) -> Result<Self> {
        let DetectorParams {
            weak_dim: kw,
            atom_dim: m,
            weak_levels: j,
            delta,
            epsilon,
            seed,
        } = params;
        let ks = m.saturating_sub(kw);
        if kw == 0 || ks < kw {
            return Err(EthError::InvalidParameter(format!(
                "need 0 < K_w <= M - K_w, got K_w = {kw}, M = {m}"
            )));
        }
        if j == 0 || j > kw {
            return Err(EthError::InvalidParameter(format!("need 1 <= J <= K_w, got J = {j}")));
        }
        if !(0.0..1.0).contains(&delta) || !(0.0..1.0).contains(&epsilon) {
            return Err(EthError::InvalidParameter(format!(
                "δ = {delta} and ε = {epsilon} must lie in [0, 1)"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let levels = j + ks;
        let field_dim = ks + 1;

        let mut blocks = even_blocks(kw, j);
        blocks.extend(std::iter::repeat_n(1, ks));
        let partition = coordinate_partition(m, &blocks)?;

        // Every w-element shares the vacuum image W φ_0; the s-elements map
        // the vacuum to the remaining, mutually orthogonal columns of W.
        let w = haar_unitary(field_dim, &mut rng);
        let eta = epsilon / (3.0 * levels as f64);
        let ts = (0..levels)
            .map(|l| {
                let base = if l < j {
                    w.clone()
                } else {
                    unitary_with_first_column(&w, l - j + 1)
                };
                let tau = random_anti_hermitian_unit(field_dim, &mut rng);
                Ok(perturbation_unitary(&tau, eta)?.compose(&base))
            })
            .collect::<Result<Vec<_>>>()?;

        let v0 = haar_unitary(kw, &mut rng);
        let unperturbed = ComplexMatrix::from_fn(m, m, |a, b| match (a < kw, b < kw) {
            (true, true) => v0.matrix().get(a, b),
            (false, false) if a == b => Complex64::new(1.0, 0.0),
            _ => Complex64::new(0.0, 0.0),
        });
        // Leak generator A = [[0, -B*], [B, 0]] with B an isometry h^w -> h^s,
        // so that ||A|| = 1 and every weak vector leaks at the same rate.
        let ws = haar_unitary(ks, &mut rng);
        let b = ComplexMatrix::from_fn(ks, kw, |a, c| ws.matrix().get(a, c));
        let a = ComplexMatrix::from_fn(m, m, |r, c| match (r < kw, c < kw) {
            (false, true) => b.get(r - kw, c),
            (true, false) => -b.get(c - kw, r).conj(),
            _ => Complex64::new(0.0, 0.0),
        });
        let h = a.scale(Complex64::new(0.0, 1.0)).hermitian_part();
        let leak = unitary_exp(&h, delta)?;
        let unperturbed = UnitaryMatrix::trusted(unperturbed);
        let v = leak.compose(&unperturbed);
        let leak_norm = (v.matrix() - unperturbed.matrix()).operator_norm();

        let model = MeasurementModel::new(ts, partition, v, tol)?;
        let g = g_matrix_at(&model, 0, tol)?;
        let g0 = ComplexMatrix::from_fn(levels, levels, |a, c| {
            if a == c || (a < j && c < j) {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let metric_deviation = (g.entries() - &g0).operator_norm();

        let weak_idx: Vec<usize> = (0..kw).collect();
        let strong_idx: Vec<usize> = (kw..m).collect();
        Ok(Self {
            params,
            model,
            weak_projector: OrthogonalProjection::coordinate(m, &weak_idx),
            strong_projector: OrthogonalProjection::coordinate(m, &strong_idx),
            unperturbed_propagator: unperturbed,
            metric_deviation,
            leak_norm,
        })
    }

    /// `|e_0><e_0|`, a pure state inside `h^w`.
    pub fn initial_state(&self) -> DensityMatrix {
        DensityMatrix::trusted(ComplexMatrix::basis_projector(self.params.atom_dim, 0))
    }

    /// Strong partition indices, as positions in the partition.
    pub fn strong_levels(&self) -> std::ops::Range<usize> {
        self.params.weak_levels..self.model.levels()
    }
}

/// Settings for the click experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ClickSettings {
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    /// Overlap with `h^s` that counts as a click.
    pub click_threshold: f64,
    /// Overlap with the clicked strong level that keeps a dwell alive.
    pub dwell_overlap: f64,
}

impl ClickSettings {
    pub fn new(horizon: usize, trials: usize, seed: u64) -> Self {
        Self {
            horizon,
            trials,
            seed,
            click_threshold: 0.5,
            dwell_overlap: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClickRecord {
    pub trial: usize,
    /// First step whose post-collapse state has `tr(Ω P_s)` above threshold.
    pub click_time: Option<usize>,
    /// Strong partition position of the clicked level.
    pub level: Option<usize>,
    /// Consecutive steps, from the click on, with overlap above the dwell
    /// threshold.
    pub dwell: usize,
    /// The dwell was still running at the horizon.
    pub dwell_censored: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClickReport {
    pub delta: f64,
    pub horizon: usize,
    pub records: Vec<ClickRecord>,
    /// Median click time over all trials, treating unclicked trials as
    /// clicking after the horizon. `None` when half or more are censored.
    pub median_click_time: Option<f64>,
    pub censored: usize,
    /// Fraction of decided dwells lasting at least `1/(4δ)` steps.
    pub dwell_fraction: f64,
}

/// Follows one trajectory step by step and records its first click and the
/// dwell that follows.
#[derive(Clone, Debug)]
pub struct ClickTracker<'a> {
    strong_projector: &'a ComplexMatrix,
    partition: &'a [OrthogonalProjection],
    strong: std::ops::Range<usize>,
    click_threshold: f64,
    dwell_overlap: f64,
    record: ClickRecord,
    done: bool,
}

impl<'a> ClickTracker<'a> {
    pub fn new(scenario: &'a DetectorScenario, settings: &ClickSettings, trial: usize) -> Self {
        Self {
            strong_projector: scenario.strong_projector.matrix(),
            partition: scenario.model.partition(),
            strong: scenario.strong_levels(),
            click_threshold: settings.click_threshold,
            dwell_overlap: settings.dwell_overlap,
            record: ClickRecord {
                trial,
                click_time: None,
                level: None,
                dwell: 0,
                dwell_censored: false,
            },
            done: false,
        }
    }

    /// Feeds the next step; `Break` once nothing more can change.
    pub fn observe(&mut self, s: &TrajectoryStep) -> ControlFlow<()> {
        if self.done {
            return ControlFlow::Break(());
        }
        let state = &s.post_collapse;
        let overlap = |l: usize| state.expectation(self.partition[l].matrix()).re;
        match self.record.level {
            None => {
                if state.expectation(self.strong_projector).re > self.click_threshold {
                    let best = self
                        .strong
                        .clone()
                        .max_by(|&a, &b| overlap(a).total_cmp(&overlap(b)).then(b.cmp(&a)))
                        .unwrap();
                    self.record.click_time = Some(s.step);
                    self.record.level = Some(best);
                    if overlap(best) >= self.dwell_overlap {
                        self.record.dwell = 1;
                    } else {
                        self.done = true;
                    }
                }
            }
            Some(level) => {
                if overlap(level) >= self.dwell_overlap {
                    self.record.dwell += 1;
                } else {
                    self.done = true;
                }
            }
        }
        if self.done {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    }

    pub fn finish(mut self) -> ClickRecord {
        self.record.dwell_censored = self.record.level.is_some() && !self.done;
        self.record
    }
}

/// Runs `trials` trajectories from `|e_0>` and records the first click and
/// the dwell that follows.
pub fn detector_click_experiment(
    scenario: &DetectorScenario,
    settings: &ClickSettings,
    tol: &Tolerances,
) -> Result<ClickReport> {
    let horizon = settings.horizon;
    let dynamics = measurement_chain(
        &scenario.model,
        FieldSequence::vacuum(scenario.model.field_dim(), horizon),
        tol,
    )?;
    let initial = scenario.initial_state();
    let records = (0..settings.trials)
        .into_par_iter()
        .map(|trial| {
            let mut tracker = ClickTracker::new(scenario, settings, trial);
            walk_trajectory(&dynamics, &initial, horizon, settings.seed, trial as u64, tol, |s| {
                tracker.observe(s)
            })?;
            Ok(tracker.finish())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_clicks(scenario.params.delta, horizon, records))
}

/// Median click time, censoring and dwell fraction of a set of records.
pub fn summarize_clicks(delta: f64, horizon: usize, records: Vec<ClickRecord>) -> ClickReport {
    let censored = records.iter().filter(|r| r.click_time.is_none()).count();
    let mut times: Vec<f64> = records
        .iter()
        .map(|r| r.click_time.map_or(f64::INFINITY, |t| t as f64))
        .collect();
    times.sort_by(f64::total_cmp);
    let median_click_time = median(&times).filter(|t| t.is_finite());

    let required = 1.0 / (4.0 * delta);
    let decided: Vec<&ClickRecord> = records
        .iter()
        .filter(|r| r.level.is_some() && (!r.dwell_censored || r.dwell as f64 >= required))
        .collect();
    let long = decided.iter().filter(|r| r.dwell as f64 >= required).count();
    let dwell_fraction = if decided.is_empty() {
        0.0
    } else {
        long as f64 / decided.len() as f64
    };
    ClickReport {
        delta,
        horizon,
        records,
        median_click_time,
        censored,
        dwell_fraction,
    }
}

fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}
