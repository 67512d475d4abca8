use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ethsim::oracle::{expected, max_dim, oracle_diff, sidecar_path, write_expected, ORACLE_TOLERANCE};
use ethsim::regimes::run_regimes;
use ethsim::runner::{run_ensemble, RunOptions};
use ethsim::tree::run_tree;
use ethsim::{build, HarnessError, Result, Scenario};
use ethsim_core::histories::DEFAULT_PRUNE;

#[derive(Parser)]
#[command(name = "ethsim", version, about = "Repeated-interaction collapse simulator")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (default: the scenario's `output`, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check scenario files, reporting every problem.
    Validate {
        #[arg(long, required = true, num_args = 1..)]
        scenario: Vec<PathBuf>,
    },
    /// Sample an ensemble and write report.json, trajectories.jsonl and CSVs.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Enumerate the history tree and check its consistency.
    Tree {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long, default_value_t = DEFAULT_PRUNE)]
        prune: f64,
    },
    /// Compare the Kraus chain with the dense tensor oracle.
    Oracle {
        #[arg(long)]
        scenario: PathBuf,
        /// Regenerate the scenario's `.expected.json` sidecar.
        #[arg(long)]
        write_expected: bool,
    },
    /// Weak sweep, strong-coupling comparison and detector clicks.
    Regimes {
        /// Run only this scenario's regime (default: the bundled three).
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
    },
}

fn out_dir(given: Option<PathBuf>, s: Option<&Scenario>) -> PathBuf {
    given
        .or_else(|| s.and_then(|s| s.output.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn validate(paths: &[PathBuf]) -> Result<()> {
    let mut bad = None;
    for p in paths {
        match Scenario::load(p) {
            Ok(s) => println!("{}: ok ({}, {} model)", p.display(), s.name, s.model.kind()),
            Err(e) => {
                eprintln!("{}: {e}", p.display());
                bad = Some(e);
            }
        }
    }
    bad.map_or(Ok(()), Err)
}

fn oracle(path: &Path, write: bool) -> Result<()> {
    let s = Scenario::load(path)?;
    let built = build::build(&s, s.steps)?;
    let cap = max_dim();
    let report = oracle_diff(&s, &built, cap)?;
    println!(
        "{}: max diff {:.3e} over {} comparisons (steps 0..={}, cap {})",
        s.name, report.max_diff, report.comparisons, report.steps_checked, report.cap
    );
    if report.max_diff > ORACLE_TOLERANCE {
        return Err(HarnessError::CheckFailed {
            check: "oracle equivalence",
            detail: format!("max diff {:.3e} exceeds {ORACLE_TOLERANCE:.0e}", report.max_diff),
        });
    }
    if write {
        let target = sidecar_path(path);
        write_expected(&target, &expected(&s, &built, &report)?)?;
        println!("wrote {}", target.display());
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Validate { scenario } => validate(&scenario),
        Command::Run { common, seed, trials } => {
            let s = Scenario::load(&common.scenario)?;
            let out = out_dir(common.out, Some(&s));
            let mut opts = RunOptions::from_scenario(&s, &out);
            opts.seed = seed.unwrap_or(opts.seed);
            opts.trials = trials.unwrap_or(opts.trials);
            if opts.trials == 0 {
                return Err(HarnessError::Validation(vec![ethsim::Issue::new(
                    "--trials",
                    "must be at least 1",
                )]));
            }
            let r = run_ensemble(&s, &opts)?;
            println!(
                "{}: {} trials x {} steps, max mixture residual {:.3e}, {:.2}s -> {}",
                s.name,
                r.trials,
                r.steps,
                r.max_mixture_residual,
                r.wall_clock_seconds,
                out.display()
            );
            if let Some(st) = &r.strong {
                println!("  max TV distance {:.4} ({} samples)", st.max_tv_distance, st.samples);
            }
            if let Some(d) = &r.detector {
                println!(
                    "  median click {:?}, censored {}, dwell fraction {:.3}",
                    d.median_click_time, d.censored, d.dwell_fraction
                );
            }
            Ok(())
        }
        Command::Tree { common, depth, prune } => {
            let s = Scenario::load(&common.scenario)?;
            let out = out_dir(common.out, Some(&s));
            let doc = run_tree(&s, depth, prune, &out);
            match &doc {
                Ok(t) => println!(
                    "{}: {} nodes to depth {}, consistency violation {:.3e}, mass defect {:.3e}",
                    s.name,
                    t.nodes.len(),
                    t.depth,
                    t.consistency_violation,
                    t.mass_defect
                ),
                Err(HarnessError::CheckFailed { detail, .. }) => println!("{}: {detail}", s.name),
                Err(_) => {}
            }
            doc.map(|_| ())
        }
        Command::Oracle {
            scenario,
            write_expected,
        } => oracle(&scenario, write_expected),
        Command::Regimes {
            scenario,
            out,
            seed,
            trials,
        } => {
            let s = scenario.as_deref().map(Scenario::load).transpose()?;
            let out = out_dir(out, s.as_ref());
            let summary = run_regimes(s.as_ref(), trials, seed, &out)?;
            if let Some(w) = &summary.weak {
                println!("weak: slope {:.4} over {} strengths", w.slope, w.points.len());
            }
            if let Some(st) = &summary.strong {
                println!(
                    "strong: max TV distance {:.4} ({} samples)",
                    st.max_tv_distance, st.samples
                );
            }
            if let Some(d) = &summary.detector {
                for e in &d.ensembles {
                    println!(
                        "detector δ={}: median click {:?}, censored {}/{}, dwell fraction {:.3}",
                        e.delta, e.median_click_time, e.censored, e.samples, e.dwell_fraction
                    );
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
