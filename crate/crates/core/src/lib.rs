//! Kalman-filter acoustic system identification with adaptive subspace
//! models of the acoustic impulse response.

pub mod dsp;
pub mod error;
pub mod fdkf;
pub mod harness;
pub mod kfasp;
pub mod metrics;
pub mod rir;
pub mod subspace;

pub use dsp::{BlockDft, FrameConfig};
pub use error::{Error, Result};
pub use fdkf::{KalmanFilter, KalmanState, KfHyperParams};
pub use harness::{AnalysisConfig, ExperimentConfig, ExperimentResult};
pub use kfasp::{CombineMode, FusionConfig, KfAsp, SearchIndex};
pub use metrics::{system_mismatch, Aggregate, Averaging, TrialLog};
pub use rir::{AirSample, RoomSpec, SceneGeometry};
pub use subspace::{AffineSubspace, Metric, MixtureModel, TrainingSet};
