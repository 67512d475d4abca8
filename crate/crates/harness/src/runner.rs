//! Ensemble runs: trajectories are computed in parallel chunks and folded
//! in trial order by a single writer, so every output is independent of
//! the thread count.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ethsim_core::collapse::{walk_trajectory, TrajectoryStep};
use ethsim_core::matcore::{ComplexMatrix, DensityMatrix};
use ethsim_core::models::{summarize_clicks, ClickRecord, ClickSettings, ClickTracker};
use ethsim_core::EthError;
use rayon::prelude::*;
use serde::Serialize;

use crate::build::{build, Built};
use crate::error::{during_run, HarnessError, Result};
use crate::oracle::expected_mean_states;
use crate::report::{
    conventions, software, ClickBin, DetectorSection, EventCount, RunReport, StepReport, StrongSection, TvRow,
};
use crate::scenario::{matrix_to_spec, LogMode, MatrixSpec, Scenario};

/// Operator-norm distance within which a state carries a strong-coupling label.
pub const LABEL_THRESHOLD: f64 = 0.1;

/// Trials computed between two flushes of the log.
const CHUNK: usize = 256;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub seed: u64,
    pub trials: usize,
    pub out: PathBuf,
}

impl RunOptions {
    pub fn from_scenario(s: &Scenario, out: impl Into<PathBuf>) -> Self {
        Self {
            seed: s.seed,
            trials: s.trials,
            out: out.into(),
        }
    }
}

/// One line of `trajectories.jsonl`. Trial, field and branch labels are 1-based.
#[derive(Serialize)]
struct StepLine<'a> {
    trial: u64,
    step: usize,
    field_index: usize,
    event_size: usize,
    branch: usize,
    branch_rank: usize,
    born_probability: f64,
    log_probability: f64,
    mixture_residual: f64,
    dropped_branches: usize,
    pre_collapse: &'a MatrixSpec,
    post_collapse: &'a MatrixSpec,
}

struct StepSample {
    event_size: usize,
    fidelity: f64,
    mixture_residual: f64,
    trace_error: f64,
    post: ComplexMatrix,
}

struct TrialOutcome {
    log: String,
    samples: Vec<StepSample>,
    click: Option<ClickRecord>,
    labels: Option<Vec<Option<usize>>>,
}

struct StepAccumulator {
    samples: u64,
    event_sizes: Vec<u64>,
    fidelity_sum: f64,
    fidelity_min: f64,
    mixture_max: f64,
    trace_max: f64,
    post_sum: ComplexMatrix,
}

impl StepAccumulator {
    fn new(m: usize) -> Self {
        Self {
            samples: 0,
            event_sizes: vec![0; m + 1],
            fidelity_sum: 0.0,
            fidelity_min: f64::INFINITY,
            mixture_max: 0.0,
            trace_max: 0.0,
            post_sum: ComplexMatrix::zeros(m, m),
        }
    }

    fn add(&mut self, s: &StepSample) {
        self.samples += 1;
        self.event_sizes[s.event_size] += 1;
        self.fidelity_sum += s.fidelity;
        self.fidelity_min = self.fidelity_min.min(s.fidelity);
        self.mixture_max = self.mixture_max.max(s.mixture_residual);
        self.trace_max = self.trace_max.max(s.trace_error);
        self.post_sum = &self.post_sum + &s.post;
    }
}

struct Context<'a> {
    built: &'a Built,
    steps: usize,
    seed: u64,
    full_log: bool,
    /// `V^n Ω_0 V^{-n}`, `n = 1..=steps`.
    free: Vec<DensityMatrix>,
    clicks: Option<ClickSettings>,
}

fn run_trial(ctx: &Context, trial: u64) -> Result<TrialOutcome> {
    let built = ctx.built;
    let mut log = String::new();
    let mut samples = Vec::with_capacity(ctx.steps);
    let mut labels = built.labels.as_ref().map(|_| Vec::with_capacity(ctx.steps));
    let mut tracker = match (&built.detector, &ctx.clicks) {
        (Some(d), Some(settings)) => Some(ClickTracker::new(d, settings, trial as usize)),
        _ => None,
    };
    let mut failure: Option<HarnessError> = None;
    let mut log_probability = 0.0;
    let visit = |s: &TrajectoryStep| {
        let mut step = || -> Result<()> {
            log_probability += s.born_probability.ln();
            let fidelity = s.post_collapse.fidelity(&ctx.free[s.step - 1]).map_err(during_run)?;
            samples.push(StepSample {
                event_size: s.event_size,
                fidelity,
                mixture_residual: s.mixture_residual,
                trace_error: (s.pre_collapse.matrix().trace().re - 1.0).abs(),
                post: s.post_collapse.matrix().clone(),
            });
            if let (Some(seq), Some(basis)) = (labels.as_mut(), built.labels.as_ref()) {
                seq.push(basis.label(&s.post_collapse, LABEL_THRESHOLD));
            }
            if let Some(t) = tracker.as_mut() {
                let _ = t.observe(s);
            }
            if ctx.full_log {
                let line = StepLine {
                    trial: trial + 1,
                    step: s.step,
                    field_index: s.field_index + 1,
                    event_size: s.event_size,
                    branch: s.branch + 1,
                    branch_rank: s.branch_rank,
                    born_probability: s.born_probability,
                    log_probability,
                    mixture_residual: s.mixture_residual,
                    dropped_branches: s.dropped.len(),
                    pre_collapse: &matrix_to_spec(s.pre_collapse.matrix()),
                    post_collapse: &matrix_to_spec(s.post_collapse.matrix()),
                };
                log.push_str(&serde_json::to_string(&line)?);
                log.push('\n');
            }
            Ok(())
        };
        match step() {
            Ok(()) => ControlFlow::Continue(()),
            Err(e) => {
                failure = Some(e);
                ControlFlow::Break(())
            }
        }
    };
    walk_trajectory(
        built.dynamics.as_dyn(),
        &built.initial,
        ctx.steps,
        ctx.seed,
        trial,
        &built.tol,
        visit,
    )
    .map_err(during_run)?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(TrialOutcome {
        log,
        samples,
        click: tracker.map(ClickTracker::finish),
        labels,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

/// Runs the ensemble and writes `report.json`, `trajectories.jsonl` (unless
/// the scenario asks for `summary_only`) and the model's CSV summary.
pub fn run_ensemble(s: &Scenario, opts: &RunOptions) -> Result<RunReport> {
    let started = Instant::now();
    let built = build(s, s.steps)?;
    let steps = s.steps;
    let m = s.atom_dim;
    std::fs::create_dir_all(&opts.out).map_err(|e| HarnessError::io(&opts.out, e))?;

    let mut free = Vec::with_capacity(steps);
    let mut state = built.initial.clone();
    for _ in 0..steps {
        state = state.conjugate_by(&built.propagator);
        free.push(state.clone());
    }
    let clicks = built
        .detector
        .as_ref()
        .map(|_| ClickSettings::new(steps, opts.trials, opts.seed));
    let ctx = Context {
        built: &built,
        steps,
        seed: opts.seed,
        full_log: s.log == LogMode::Full,
        free,
        clicks,
    };

    let log_path = opts.out.join("trajectories.jsonl");
    let mut log = if ctx.full_log { Some(create(&log_path)?) } else { None };
    let mut acc: Vec<StepAccumulator> = (0..steps).map(|_| StepAccumulator::new(m)).collect();
    let mut click_records = Vec::new();
    let mut label_sequences = Vec::new();

    let mut start = 0;
    while start < opts.trials {
        let end = (start + CHUNK).min(opts.trials);
        let outcomes: Vec<TrialOutcome> = (start..end)
            .into_par_iter()
            .map(|t| run_trial(&ctx, t as u64))
            .collect::<Result<_>>()?;
        for o in outcomes {
            if let Some(w) = log.as_mut() {
                w.write_all(o.log.as_bytes())
                    .map_err(|e| HarnessError::io(&log_path, e))?;
            }
            for (a, sample) in acc.iter_mut().zip(&o.samples) {
                a.add(sample);
            }
            click_records.extend(o.click);
            label_sequences.extend(o.labels);
        }
        start = end;
    }
    if let Some(mut w) = log {
        w.flush().map_err(|e| HarnessError::io(&log_path, e))?;
    }

    let expected = expected_mean_states(&built, steps)?;
    let per_step: Vec<StepReport> = acc
        .iter()
        .zip(&expected)
        .enumerate()
        .map(|(j, (a, exp))| {
            let n = a.samples.max(1) as f64;
            let mean = a.post_sum.scale_real(1.0 / n);
            StepReport {
                step: j + 1,
                samples: a.samples,
                event_sizes: a
                    .event_sizes
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| **c > 0)
                    .map(|(branches, &count)| EventCount { branches, count })
                    .collect(),
                mean_event_size: a
                    .event_sizes
                    .iter()
                    .enumerate()
                    .map(|(b, &c)| b as f64 * c as f64)
                    .sum::<f64>()
                    / n,
                mean_fidelity_to_free: a.fidelity_sum / n,
                min_fidelity_to_free: a.fidelity_min,
                max_mixture_residual: a.mixture_max,
                max_trace_error: a.trace_max,
                mean_state_deviation: mean.max_abs_diff(exp.matrix()),
                mean_post_collapse: matrix_to_spec(&mean),
            }
        })
        .collect();

    let strong = match &built.labels {
        Some(basis) => {
            let mu0 = basis.occupation(&built.initial);
            let tally = basis.tally(&mu0, &label_sequences, steps)?;
            let rows: Vec<TvRow> = (0..=steps)
                .map(|n| TvRow {
                    step: n,
                    samples: tally.trials as u64,
                    tv_distance: tally.tv_distance[n],
                    ambiguous_fraction: tally.ambiguous[n],
                })
                .collect();
            write_tv_csv(&opts.out.join("tv_distance.csv"), &rows)?;
            Some(StrongSection {
                samples: tally.trials as u64,
                label_threshold: LABEL_THRESHOLD,
                max_tv_distance: rows.iter().map(|r| r.tv_distance).fold(0.0, f64::max),
                tv: rows,
                predicted: tally.predicted,
                empirical: tally.empirical,
                max_transition_error: tally.max_transition_error,
                max_transition_sigma: tally.max_transition_sigma,
            })
        }
        None => None,
    };

    let detector = match &built.detector {
        Some(d) => {
            let report = summarize_clicks(d.params.delta, steps, click_records);
            write_click_csv(&opts.out.join("click_times.csv"), &report)?;
            Some(DetectorSection::from_report(&report))
        }
        None => None,
    };

    let max_mixture_residual = acc.iter().map(|a| a.mixture_max).fold(0.0, f64::max);
    let report = RunReport {
        software: software(),
        conventions: conventions(&built.tol),
        scenario: s.clone(),
        seed: opts.seed,
        trials: opts.trials,
        steps,
        log: s.log,
        max_mixture_residual,
        per_step,
        strong,
        detector,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let path = opts.out.join("report.json");
    let text = serde_json::to_string_pretty(&report)? + "\n";
    std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    if max_mixture_residual > crate::MIXTURE_TOLERANCE {
        return Err(HarnessError::Numerical(EthError::InvariantViolation {
            invariant: "mixture identity",
            detail: format!(
                "residual {max_mixture_residual:.3e} exceeds {:.0e}",
                crate::MIXTURE_TOLERANCE
            ),
        }));
    }
    Ok(report)
}

pub fn write_tv_csv(path: &Path, rows: &[TvRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

#[derive(Serialize)]
struct ClickRow {
    delta: f64,
    trial: usize,
    click_time: Option<usize>,
    level: Option<usize>,
    dwell: usize,
    dwell_censored: bool,
}

/// One row per trial; the writer emits the header before the first row.
pub fn write_click_rows<W: Write>(w: &mut csv::Writer<W>, report: &ethsim_core::models::ClickReport) -> Result<()> {
    for r in &report.records {
        w.serialize(ClickRow {
            delta: report.delta,
            trial: r.trial + 1,
            click_time: r.click_time,
            level: r.level.map(|l| l + 1),
            dwell: r.dwell,
            dwell_censored: r.dwell_censored,
        })?;
    }
    Ok(())
}

fn write_click_csv(path: &Path, report: &ethsim_core::models::ClickReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    write_click_rows(&mut w, report)?;
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Equal-width click-time histogram over `1..=horizon`.
pub fn click_histogram(records: &[ClickRecord], horizon: usize, bins: usize) -> Vec<ClickBin> {
    let width = horizon.div_ceil(bins.max(1)).max(1);
    let mut out: Vec<ClickBin> = (0..horizon.div_ceil(width))
        .map(|b| ClickBin {
            from: b * width + 1,
            to: ((b + 1) * width).min(horizon),
            count: 0,
        })
        .collect();
    for t in records.iter().filter_map(|r| r.click_time) {
        out[(t - 1) / width].count += 1;
    }
    out
}
