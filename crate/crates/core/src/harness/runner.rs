//! Multi-trial experiment orchestration and CSV output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::dsp::BlockDft;
use crate::error::{Error, Result};
use crate::fdkf::{BlockOutput, KalmanFilter, KalmanState};
use crate::kfasp::{KfAsp, SearchIndex};
use crate::metrics::{aggregate_trials, system_mismatch, Aggregate, Averaging, ErleTracker, TrialLog};
use crate::rir::generate_corpus;
use crate::subspace::TrainingSet;

use super::config::{Algorithm, ExperimentConfig, VariantSpec};
use super::scenario::{Scenario, ScenarioBuilder};

/// Training set named by the config: loaded from `corpus.path` when set,
/// simulated otherwise.
pub fn load_or_generate_corpus(cfg: &ExperimentConfig) -> Result<TrainingSet> {
    let set = match &cfg.corpus.path {
        Some(p) => TrainingSet::load(p)?,
        None => generate_corpus(&cfg.room, &cfg.geometry, cfg.corpus.size, cfg.frame.filter_len, cfg.corpus_seed())?,
    };
    if set.channels() != cfg.frame.channels || set.taps() != cfg.frame.filter_len || set.sample_rate() != cfg.frame.sample_rate {
        return Err(Error::Config("corpus does not match the frame configuration".into()));
    }
    if set.len() < cfg.corpus.size {
        return Err(Error::Config(format!("corpus holds {} AIRs, {} requested", set.len(), cfg.corpus.size)));
    }
    set.head(cfg.corpus.size)
}

/// All curves of one algorithm variant.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub name: String,
    pub trials: Vec<TrialLog>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub trial_seeds: Vec<u64>,
    pub variants: Vec<VariantResult>,
}

impl ExperimentResult {
    pub fn variant(&self, name: &str) -> Option<&VariantResult> {
        self.variants.iter().find(|v| v.name == name)
    }
}

enum Estimator {
    Kf(Box<KalmanFilter>),
    Asp(Box<KfAsp>),
}

impl Estimator {
    fn step(&mut self, x: &[&[f64]], y: &[f64]) -> Result<BlockOutput> {
        match self {
            Self::Kf(f) => f.step(x, y),
            Self::Asp(f) => f.step(x, y).map(|o| o.block),
        }
    }

    fn state_and_ops(&self) -> (&KalmanState, &BlockDft) {
        match self {
            Self::Kf(f) => (f.state(), f.ops()),
            Self::Asp(f) => (f.state(), f.ops()),
        }
    }
}

/// A configured experiment with its training corpus indexed.
#[derive(Debug, Clone)]
pub struct Experiment {
    builder: ScenarioBuilder,
    index: Option<Arc<SearchIndex>>,
}

impl Experiment {
    /// `corpus` may be `None` when no variant uses the subspace model.
    pub fn new(config: &ExperimentConfig, corpus: Option<TrainingSet>) -> Result<Self> {
        let builder = ScenarioBuilder::new(config)?;
        let needs_corpus = config.variants.iter().any(|v| v.algorithm == Algorithm::Kfasp);
        let index = match corpus {
            Some(set) => Some(Arc::new(SearchIndex::new(set, &BlockDft::new(config.frame)?)?)),
            None if needs_corpus => return Err(Error::Config("a KF-ASP variant needs a training corpus".into())),
            None => None,
        };
        Ok(Self { builder, index })
    }

    /// Loads or simulates the corpus as the config prescribes.
    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        let needs_corpus = config.variants.iter().any(|v| v.algorithm == Algorithm::Kfasp);
        let corpus = if needs_corpus { Some(load_or_generate_corpus(config)?) } else { None };
        Self::new(config, corpus)
    }

    pub fn config(&self) -> &ExperimentConfig {
        self.builder.config()
    }

    pub fn scenario(&self, trial: usize) -> Result<Scenario> {
        self.builder.build(trial)
    }

    /// Runs one variant on one scenario.
    pub fn run_variant(&self, scenario: &Scenario, variant: &VariantSpec) -> Result<TrialLog> {
        let cfg = self.config();
        let frame = cfg.frame;
        let params = variant.kf_params(&cfg.kf);
        let mut est = match variant.algorithm {
            Algorithm::BaselineKf => Estimator::Kf(Box::new(KalmanFilter::new(frame, params)?)),
            Algorithm::Kfasp => {
                let index = self.index.clone().ok_or_else(|| Error::Config("missing training corpus".into()))?;
                Estimator::Asp(Box::new(KfAsp::new(frame, params, variant.fusion_config(), index)?))
            }
        };
        let r = frame.frame_shift;
        let l = frame.filter_len;
        let y = scenario.mic();
        let truth: Vec<&[f64]> = scenario.ground_truth.channels.iter().map(Vec::as_slice).collect();
        let mut erle = ErleTracker::new(cfg.erle_lambda)?;
        let blocks = cfg.blocks();
        let (mut mismatch_db, mut erle_db, mut times) =
            (Vec::with_capacity(blocks), Vec::with_capacity(blocks), Vec::with_capacity(blocks));
        for tau in 0..blocks {
            let span = tau * r..(tau + 1) * r;
            let x: Vec<&[f64]> = scenario.excitation.iter().map(|c| &c[span.clone()]).collect();
            let out = est.step(&x, &y[span.clone()])?;
            erle_db.push(erle.push(&scenario.clean[span], &out.estimate)?);
            let (state, ops) = est.state_and_ops();
            let w = state.time_domain_mean(ops)?;
            let chunks: Vec<&[f64]> = w.chunks(l).collect();
            mismatch_db.push(system_mismatch(&truth, &chunks)?);
            times.push((tau + 1) as f64 * frame.block_duration());
        }
        TrialLog::new(mismatch_db, erle_db, times, scenario.seed)
    }

    /// Every variant on trial `trial`, in config order.
    pub fn run_trial(&self, trial: usize) -> Result<Vec<TrialLog>> {
        let scenario = self.scenario(trial)?;
        let logs = self.config().variants.iter().map(|v| self.run_variant(&scenario, v)).collect();
        log::info!("trial {trial} finished");
        logs
    }

    /// Runs all trials, in parallel on `threads` workers (rayon's default
    /// when `None`). Results are joined in trial order, so the output does not
    /// depend on the thread count.
    pub fn run(&self, threads: Option<usize>) -> Result<ExperimentResult> {
        let cfg = self.config();
        let trials = cfg.trials;
        let work = || -> Vec<Result<Vec<TrialLog>>> { (0..trials).into_par_iter().map(|t| self.run_trial(t)).collect() };
        let outcomes = match threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(e.to_string()))?
                .install(work),
            None => work(),
        };
        let seeds: Vec<u64> = (0..trials).map(|t| super::scenario::trial_seed(cfg.seed, t)).collect();
        let mut per_trial = Vec::with_capacity(trials);
        for (t, outcome) in outcomes.into_iter().enumerate() {
            per_trial.push(outcome.map_err(|e| Error::Trial { trial: t, seed: seeds[t], source: Box::new(e) })?);
        }
        let mut variants = Vec::with_capacity(cfg.variants.len());
        for (k, spec) in cfg.variants.iter().enumerate() {
            let logs: Vec<TrialLog> = per_trial.iter().map(|v| v[k].clone()).collect();
            let aggregate = aggregate_trials(&logs, cfg.averaging)?;
            variants.push(VariantResult { name: spec.name.clone(), trials: logs, aggregate });
        }
        Ok(ExperimentResult { config: cfg.clone(), trial_seeds: seeds, variants })
    }
}

/// Loads or simulates the corpus, then runs every trial.
pub fn run_experiment(config: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentResult> {
    let exp = Experiment::from_config(config)?;
    log::info!("corpus ready, running {} trials of {} variants", config.trials, config.variants.len());
    exp.run(threads)
}

#[derive(Serialize)]
struct CsvRow<'a> {
    variant: &'a str,
    trial_agg: &'a str,
    block: usize,
    time_s: f64,
    mismatch_db: f64,
    erle_db: f64,
}

/// Label of the aggregate rows in the `trial_agg` column.
pub fn aggregate_label(averaging: Averaging) -> &'static str {
    match averaging {
        Averaging::Db => "mean_db",
        Averaging::Linear => "mean_linear",
    }
}

/// CSV for one variant: aggregate rows, then per-trial rows if requested.
pub fn variant_csv(result: &VariantResult, averaging: Averaging, per_trial: bool) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let agg = &result.aggregate;
    let label = aggregate_label(averaging);
    for k in 0..agg.mismatch_db.len() {
        w.serialize(CsvRow {
            variant: &result.name,
            trial_agg: label,
            block: k,
            time_s: agg.block_times[k],
            mismatch_db: agg.mismatch_db[k],
            erle_db: agg.erle_db[k],
        })?;
    }
    if per_trial {
        for (t, log) in result.trials.iter().enumerate() {
            let label = format!("trial_{t}");
            for k in 0..log.len() {
                w.serialize(CsvRow {
                    variant: &result.name,
                    trial_agg: &label,
                    block: k,
                    time_s: log.block_times[k],
                    mismatch_db: log.mismatch_db[k],
                    erle_db: log.erle_db[k],
                })?;
            }
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Run manifest: the resolved config (itself a valid config file) followed by
/// the derived seeds as comments.
pub fn manifest(result: &ExperimentResult) -> Result<String> {
    let mut text = String::new();
    let cfg = &result.config;
    writeln!(text, "# kfasp {} run manifest", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(text, "# corpus seed: {}", cfg.corpus_seed()).unwrap();
    for (t, s) in result.trial_seeds.iter().enumerate() {
        writeln!(text, "# trial {t} seed: {s}").unwrap();
    }
    text.push('\n');
    text.push_str(&cfg.to_toml()?);
    Ok(text)
}

/// Writes `<variant>.csv` per variant and `manifest.toml` into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for v in &result.variants {
        let path = dir.join(format!("{}.csv", v.name));
        std::fs::write(&path, variant_csv(v, result.config.averaging, result.config.per_trial_rows)?)?;
        written.push(path);
    }
    let path = dir.join("manifest.toml");
    std::fs::write(&path, manifest(result)?)?;
    written.push(path);
    Ok(written)
}
