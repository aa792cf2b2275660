//! Running one configured experiment or a five-fold cross-validation.

use std::thread;
use std::time::{Duration, Instant};

use gossipmf_core::sim::{
    run_centralized, run_event_sim, run_fast_sequential, Evaluation, MetricsTrace, SimStats,
};
use gossipmf_core::synthetic::{gen_synthetic, mean_center};
use gossipmf_core::{DenseTruth, FactorMatrix, SparseRatings};

use crate::config::{DatasetSpec, Engine, RunConfig};
use crate::error::{Error, Result};
use crate::movielens::{check_partition, load_folds, load_udata, FoldSpec};

/// What the reported error is measured against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    /// Full-matrix RMS against the synthetic ground truth.
    RmsFull,
    /// RMSE over a held-out test set.
    RmseTest,
    /// RMSE over the training ratings.
    RmseTrain,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::RmsFull => "rms_full",
            Metric::RmseTest => "rmse_test",
            Metric::RmseTrain => "rmse_train",
        }
    }
}

/// Result of one training run.
#[derive(Clone, Debug)]
pub struct ExperimentReport {
    /// The configuration as run (per-fold seed for cross-validation).
    pub config: RunConfig,
    pub metric: Metric,
    /// Final value of `metric`, in the original rating scale.
    pub final_rms: f64,
    /// Final training objective (on centered ratings if `mean_center`).
    pub final_objective: f64,
    pub trace: MetricsTrace,
    pub stats: SimStats,
    pub users: FactorMatrix,
    pub items: FactorMatrix,
    /// Global mean subtracted before training; predictions are
    /// `uᵀv + mean_offset`. Zero unless `mean_center` is set.
    pub mean_offset: f64,
    pub num_train: usize,
    pub num_eval: usize,
    /// Resolved update budget of the sequential engines.
    pub iteration_budget: u64,
    pub wall_clock: Duration,
}

/// Result of a five-fold cross-validation.
#[derive(Clone, Debug)]
pub struct CvReport {
    /// Configuration with the base seed.
    pub config: RunConfig,
    /// `(fold_id, report)` in fold order.
    pub folds: Vec<(usize, ExperimentReport)>,
    pub mean_rmse: f64,
}

enum Target<'a> {
    Truth(&'a DenseTruth),
    Test(&'a SparseRatings),
    Train,
}

/// Loads or generates the dataset and trains with the configured engine.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentReport> {
    match &config.dataset {
        &DatasetSpec::Synthetic { num_users, num_items, rank, missing_frac } => {
            let (theta, x) = gen_synthetic(num_users, num_items, rank, missing_frac, config.seed)?;
            train(config, &x, Target::Truth(&theta))
        }
        DatasetSpec::MovieLens { path, test, num_users, num_items } => {
            let x = load_udata(path, *num_users, *num_items)?;
            match test {
                Some(t) => {
                    let test = load_udata(t, *num_users, *num_items)?;
                    train(config, &x, Target::Test(&test))
                }
                None => train(config, &x, Target::Train),
            }
        }
        DatasetSpec::MovieLensCv { .. } => Err(Error::Config(
            "dataset movielens_cv runs through cross-validation (`gossipmf cv`)".into(),
        )),
    }
}

/// Trains on `train` and reports RMSE on `test`.
pub fn run_fold(config: &RunConfig, train_set: &SparseRatings, test: &SparseRatings) -> Result<ExperimentReport> {
    train(config, train_set, Target::Test(test))
}

/// Runs every fold of a `movielens_cv` dataset, using `seed + fold_id` as the
/// fold's seed, on up to `jobs` threads. Results do not depend on `jobs`.
pub fn cross_validate(config: &RunConfig, jobs: usize) -> Result<CvReport> {
    let DatasetSpec::MovieLensCv { dir, num_users, num_items } = &config.dataset else {
        return Err(Error::Config("cross-validation needs dataset = movielens_cv".into()));
    };
    let folds = load_folds(dir, *num_users, *num_items)?;
    check_partition(&folds)?;
    cross_validate_folds(config, &folds, jobs)
}

/// [`cross_validate`] on folds already in memory.
pub fn cross_validate_folds(config: &RunConfig, folds: &[FoldSpec], jobs: usize) -> Result<CvReport> {
    if folds.is_empty() {
        return Err(Error::Config("no folds to run".into()));
    }
    let jobs = jobs.clamp(1, folds.len());
    let run = |fold: &FoldSpec| {
        let mut cfg = config.clone();
        cfg.seed = config.seed.wrapping_add(fold.fold_id as u64);
        run_fold(&cfg, &fold.train, &fold.test).map(|r| (fold.fold_id, r))
    };
    let mut results: Vec<Result<(usize, ExperimentReport)>> = Vec::with_capacity(folds.len());
    for batch in folds.chunks(jobs) {
        thread::scope(|s| {
            let handles: Vec<_> = batch.iter().map(|f| s.spawn(move || run(f))).collect();
            for h in handles {
                results.push(h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)));
            }
        });
    }
    let folds = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mean_rmse = folds.iter().map(|(_, r)| r.final_rms).sum::<f64>() / folds.len() as f64;
    Ok(CvReport {
        config: config.clone(),
        folds,
        mean_rmse,
    })
}

fn train(config: &RunConfig, x: &SparseRatings, target: Target<'_>) -> Result<ExperimentReport> {
    let start = Instant::now();
    let (x, offset) = if config.mean_center {
        let (c, mean) = mean_center(x)?;
        (c, mean)
    } else {
        (x.clone(), 0.0)
    };
    let sim = config.sim_config(x.num_users(), x.num_items(), x.len(), offset);

    // Evaluate in the centered space; the shift cancels in every residual.
    let truth;
    let test;
    let clip = config.clip.map(|(lo, hi)| (lo - offset, hi - offset));
    let (eval, metric, num_eval) = match target {
        Target::Truth(theta) => {
            truth = theta.shifted(-offset);
            (Evaluation::Truth(&truth), Metric::RmsFull, theta.values().len())
        }
        Target::Test(t) => {
            test = t.shifted(-offset);
            (Evaluation::Holdout { test: &test, clip }, Metric::RmseTest, t.len())
        }
        Target::Train => (Evaluation::Holdout { test: &x, clip }, Metric::RmseTrain, x.len()),
    };

    let out = match config.engine {
        Engine::Event => run_event_sim(&sim, &x, eval)?,
        Engine::Sequential => run_fast_sequential(&sim, &x, eval)?,
        Engine::Centralized => run_centralized(&sim, &x, eval)?,
    };
    let last = out
        .trace
        .last()
        .copied()
        .ok_or(Error::Config("run produced no samples".into()))?;
    Ok(ExperimentReport {
        config: config.clone(),
        metric,
        final_rms: last.rms,
        final_objective: last.objective,
        trace: out.trace,
        stats: out.stats,
        users: out.users,
        items: out.items,
        mean_offset: offset,
        num_train: x.len(),
        num_eval,
        iteration_budget: sim.iteration_budget,
        wall_clock: start.elapsed(),
    })
}
