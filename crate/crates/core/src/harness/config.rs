use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::FrameConfig;
use crate::error::{Error, Result};
use crate::fdkf::KfHyperParams;
use crate::kfasp::FusionConfig;
use crate::metrics::{Averaging, DEFAULT_ERLE_LAMBDA};
use crate::rir::{Point, RoomSpec, SceneGeometry};

/// Length of the talker crossfade at the teleconference switch, in seconds.
pub const DEFAULT_CROSSFADE: f64 = 0.05;

/// Complete description of one experiment. Parsed from TOML; unknown keys are
/// rejected. SNRs accept `inf` to drop a noise component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    /// Excitation length per trial in seconds.
    pub duration: f64,
    #[serde(default)]
    pub snr_wgn: f64,
    #[serde(default = "infinite")]
    pub snr_sp: f64,
    /// Time of the far-end talker switch (teleconference only).
    #[serde(default = "default_switch_time")]
    pub switch_time: f64,
    #[serde(default = "default_erle_lambda")]
    pub erle_lambda: f64,
    #[serde(default)]
    pub averaging: Averaging,
    /// Also emit one CSV row group per trial.
    #[serde(default)]
    pub per_trial_rows: bool,
    pub frame: FrameConfig,
    pub room: RoomSpec,
    #[serde(default = "SceneGeometry::reference")]
    pub geometry: SceneGeometry,
    pub corpus: CorpusConfig,
    pub excitation: ExcitationConfig,
    #[serde(default)]
    pub kf: KfHyperParams,
    pub variants: Vec<VariantSpec>,
}

fn infinite() -> f64 {
    f64::INFINITY
}

fn default_switch_time() -> f64 {
    5.0
}

fn default_erle_lambda() -> f64 {
    DEFAULT_ERLE_LAMBDA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    /// Number of training AIRs `K`.
    pub size: usize,
    /// Load the training set from this file instead of simulating it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Seed of the training draws; defaults to the experiment seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcitationKind {
    /// Independent white Gaussian noise per loudspeaker.
    Wgn,
    /// Independent speech (WAV or synthetic) per loudspeaker.
    SpeechIndependent,
    /// Two far-end talkers rendered through a far-end room.
    Teleconference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationConfig {
    pub kind: ExcitationKind,
    /// Mono WAV files used for speech; synthetic speech when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wav: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub far_end: Option<FarEndConfig>,
}

/// Far-end room of the teleconference scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarEndConfig {
    pub room: RoomSpec,
    pub talkers: [Point; 2],
    /// One far-end microphone per playback channel.
    pub mics: Vec<Point>,
    #[serde(default = "default_crossfade")]
    pub crossfade: f64,
}

fn default_crossfade() -> f64 {
    DEFAULT_CROSSFADE
}

impl FarEndConfig {
    /// 5 x 4 x 3 m room with T60 0.4 s, a linear microphone array with 10 cm
    /// spacing and two talkers on either side of it. Responses are cut to half
    /// the echo filter length, so the playback channels are related by filters
    /// the echo canceller can represent and the echo path is not identifiable.
    pub fn reference(channels: usize, sample_rate: f64, filter_len: usize) -> Self {
        let x0 = 2.5 - 0.05 * (channels as f64 - 1.0);
        Self {
            room: RoomSpec { dimensions: [5.0, 4.0, 3.0], t60: 0.4, sample_rate, rir_len: (filter_len / 2).max(1) },
            talkers: [[1.4, 3.0, 1.5], [3.7, 2.9, 1.6]],
            mics: (0..channels).map(|b| [x0 + 0.1 * b as f64, 1.5, 1.2]).collect(),
            crossfade: DEFAULT_CROSSFADE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    BaselineKf,
    Kfasp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    /// Used as the CSV file stem; letters, digits, `-` and `_` only.
    pub name: String,
    pub algorithm: Algorithm,
    /// Overrides the initial uncertainty (`kf.p0` or `fusion.p0`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
    #[serde(default)]
    pub fusion: FusionConfig,
}

impl VariantSpec {
    pub fn baseline(name: &str) -> Self {
        Self { name: name.into(), algorithm: Algorithm::BaselineKf, p0: None, fusion: FusionConfig::default() }
    }

    pub fn kfasp(name: &str, fusion: FusionConfig) -> Self {
        Self { name: name.into(), algorithm: Algorithm::Kfasp, p0: None, fusion }
    }

    /// Hyperparameters of the underlying KF.
    pub fn kf_params(&self, base: &KfHyperParams) -> KfHyperParams {
        let p0 = match self.algorithm {
            Algorithm::BaselineKf => self.p0.unwrap_or(base.p0),
            Algorithm::Kfasp => self.p0.unwrap_or(self.fusion.p0),
        };
        KfHyperParams { p0, ..*base }
    }

    /// Fusion settings with the `p0` override applied.
    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig { p0: self.p0.unwrap_or(self.fusion.p0), ..self.fusion }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes relative corpus and WAV paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.corpus.path.as_mut() {
            fix(p);
        }
        self.excitation.wav.iter_mut().for_each(fix);
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad("duration must be positive".into());
        }
        for (name, v) in [("snr_wgn", self.snr_wgn), ("snr_sp", self.snr_sp)] {
            if v.is_nan() || v == f64::NEG_INFINITY {
                return bad(format!("{name} must be finite or inf"));
            }
        }
        if !(0.0..1.0).contains(&self.erle_lambda) {
            return bad("erle_lambda must lie in [0, 1)".into());
        }
        self.frame.validate()?;
        self.room.validate()?;
        self.geometry.validate(&self.room)?;
        self.kf.validate()?;
        if self.frame.sample_rate != self.room.sample_rate {
            return bad("frame and room sample rates differ".into());
        }
        if self.geometry.loudspeakers.len() != self.frame.channels {
            return bad(format!(
                "{} loudspeakers but {} channels",
                self.geometry.loudspeakers.len(),
                self.frame.channels
            ));
        }
        if self.room.rir_len < self.frame.filter_len {
            return bad("room.rir_len must be >= frame.filter_len".into());
        }
        if self.blocks() == 0 {
            return bad("duration is shorter than one block".into());
        }
        if self.corpus.size == 0 {
            return bad("corpus.size must be >= 1".into());
        }
        if self.variants.is_empty() {
            return bad("at least one variant is required".into());
        }
        for (i, v) in self.variants.iter().enumerate() {
            if v.name.is_empty() || !v.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return bad(format!("variant name {:?} must be non-empty and use [A-Za-z0-9_-]", v.name));
            }
            if self.variants[..i].iter().any(|u| u.name == v.name) {
                return bad(format!("duplicate variant name {:?}", v.name));
            }
            v.kf_params(&self.kf).validate()?;
            if v.algorithm == Algorithm::Kfasp {
                v.fusion_config().validate()?;
                if v.fusion.k_tau > self.corpus.size {
                    return bad(format!("variant {}: k_tau exceeds corpus.size", v.name));
                }
            }
        }
        if let Some(f) = &self.excitation.far_end {
            f.room.validate()?;
            if f.room.sample_rate != self.frame.sample_rate {
                return bad("far-end room sample rate differs".into());
            }
            if f.mics.len() != self.frame.channels {
                return bad("far_end.mics must have one entry per channel".into());
            }
            if f.talkers.iter().chain(&f.mics).any(|p| !f.room.contains(p)) {
                return bad("far-end talker or microphone outside the far-end room".into());
            }
            if !(f.crossfade >= 0.0 && f.crossfade.is_finite()) {
                return bad("crossfade must be >= 0".into());
            }
        }
        if self.excitation.kind == ExcitationKind::Teleconference
            && !(self.switch_time.is_finite() && self.switch_time >= 0.0)
        {
            return bad("switch_time must be >= 0".into());
        }
        Ok(())
    }

    /// Blocks processed per trial.
    pub fn blocks(&self) -> usize {
        (self.duration * self.frame.sample_rate / self.frame.frame_shift as f64).floor() as usize
    }

    /// Samples per trial, a whole number of blocks.
    pub fn samples(&self) -> usize {
        self.blocks() * self.frame.frame_shift
    }

    pub fn corpus_seed(&self) -> u64 {
        self.corpus.seed.unwrap_or(self.seed)
    }

    /// Seed of the held-out test draws, disjoint from the training draws.
    pub fn test_seed(&self) -> u64 {
        self.corpus_seed().wrapping_add(1)
    }

    pub fn far_end(&self) -> FarEndConfig {
        self.excitation
            .far_end
            .clone()
            .unwrap_or_else(|| FarEndConfig::reference(self.frame.channels, self.frame.sample_rate, self.frame.filter_len))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const SMALL: &str = r#"
seed = 3
trials = 2
duration = 0.5
snr_wgn = 20.0

[frame]
filter_len = 32
frame_shift = 32
channels = 2
sample_rate = 8000.0

[room]
dimensions = [6.0, 5.0, 3.5]
t60 = 0.3
sample_rate = 8000.0
rir_len = 128

[corpus]
size = 40

[excitation]
kind = "wgn"

[[variants]]
name = "baseline"
algorithm = "baseline_kf"

[[variants]]
name = "soft"
algorithm = "kfasp"
fusion = { k_tau = 8 }
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
        assert_eq!(cfg.snr_sp, f64::INFINITY);
        assert_eq!(cfg.geometry, SceneGeometry::reference());
        assert_eq!(cfg.kf, KfHyperParams::default());
        assert_eq!(cfg.variants[1].fusion.k_tau, 8);
        assert_eq!(cfg.variants[1].fusion.beta_pr, 5.0);
        assert_eq!(cfg.blocks(), 125);
        assert_eq!(cfg.test_seed(), 4);
    }

    #[test]
    fn infinite_snr_and_round_trip() {
        let text = SMALL.replace("snr_wgn = 20.0", "snr_wgn = inf");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.snr_wgn, f64::INFINITY);
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml(&SMALL.replace("snr_wgn", "snr_wng")).is_err());
        assert!(ExperimentConfig::from_toml(&SMALL.replace("t60 = 0.3", "t60 = 0.3\nfoo = 1")).is_err());
        assert!(ExperimentConfig::from_toml(&SMALL.replace("trials = 2", "trials = 0")).is_err());
        assert!(ExperimentConfig::from_toml(&SMALL.replace("duration = 0.5", "duration = -1.0")).is_err());
        assert!(ExperimentConfig::from_toml(&SMALL.replace("snr_wgn = 20.0", "snr_wgn = -inf")).is_err());
        assert!(ExperimentConfig::from_toml(&SMALL.replace("channels = 2", "channels = 1")).is_err());
        assert!(ExperimentConfig::from_toml(&SMALL.replace("name = \"soft\"", "name = \"baseline\"")).is_err());
        assert!(ExperimentConfig::from_toml(&SMALL.replace("name = \"soft\"", "name = \"a/b\"")).is_err());
        assert!(ExperimentConfig::from_toml(&SMALL.replace("k_tau = 8", "k_tau = 41")).is_err());
    }

    #[test]
    fn variant_p0_resolution() {
        let kf = KfHyperParams::default();
        let mut b = VariantSpec::baseline("b");
        assert_eq!(b.kf_params(&kf).p0, 0.01);
        b.p0 = Some(0.5);
        assert_eq!(b.kf_params(&kf).p0, 0.5);
        let a = VariantSpec::kfasp("a", FusionConfig::default());
        assert_eq!(a.kf_params(&kf).p0, 0.1);
    }
}
