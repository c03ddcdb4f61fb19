//! Experiment configuration, scenario synthesis, orchestration and output.

mod analysis;
mod config;
mod corpus_stats;
mod runner;
mod scenario;
pub mod signals;

pub use analysis::{analysis_csv, analyze_subspace, run_analysis, AnalysisConfig, AnalysisRow, SubspaceModel};
pub use config::{Algorithm, CorpusConfig, ExcitationConfig, ExcitationKind, ExperimentConfig, FarEndConfig, VariantSpec, DEFAULT_CROSSFADE};
pub use corpus_stats::CorpusStats;
pub use runner::{
    aggregate_label, load_or_generate_corpus, manifest, run_experiment, variant_csv, write_outputs, Experiment, ExperimentResult,
    VariantResult,
};
pub use scenario::{mix_at_snr, overlap_save_observation, synthesize_scenario, trial_seed, Scenario, ScenarioBuilder, CONVOLUTION_TOLERANCE};
