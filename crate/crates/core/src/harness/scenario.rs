//! Per-trial signal synthesis.

use rand::RngCore;

use crate::dsp::{check_len, convolve_direct, BlockDft, FrameConfig, LoudspeakerHistory};
use crate::error::{Error, Result};
use crate::rir::{indexed_rng, sample_mic_position, simulate_air, simulate_rir, AirSample};

use super::config::{ExcitationKind, ExperimentConfig, FarEndConfig};
use super::signals::{switch_gain, white_noise, SpeechSource};

/// Allowed deviation between the direct and overlap-save observations,
/// relative to the observation peak.
pub const CONVOLUTION_TOLERANCE: f64 = 1e-10;

const STREAM_MIC: u64 = 0;
const STREAM_EXCITATION: u64 = 1;
const STREAM_WGN: u64 = 2;
const STREAM_SPEECH_NOISE: u64 = 3;

/// Seed of trial `trial`: drawn from a stream that no training draw uses.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    indexed_rng(seed.wrapping_add(1), trial as u64).next_u64()
}

/// Signals of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// One loudspeaker stream per channel.
    pub excitation: Vec<Vec<f64>>,
    /// Noise-free observation `d`.
    pub clean: Vec<f64>,
    pub noise_wgn: Vec<f64>,
    pub noise_sp: Vec<f64>,
    /// Full-length responses from each loudspeaker to the microphone.
    pub ground_truth: AirSample,
    pub seed: u64,
}

impl Scenario {
    pub fn noise(&self) -> Vec<f64> {
        self.noise_wgn.iter().zip(&self.noise_sp).map(|(a, b)| a + b).collect()
    }

    /// Microphone signal `y = d + n`.
    pub fn mic(&self) -> Vec<f64> {
        self.clean.iter().zip(&self.noise_wgn).zip(&self.noise_sp).map(|((d, a), b)| d + a + b).collect()
    }

    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }
}

/// Noise-free observation computed block by block with overlap-save and a
/// full-length filter per channel. Inputs must be a whole number of blocks.
pub fn overlap_save_observation(excitation: &[Vec<f64>], truth: &[Vec<f64>], frame_shift: usize, sample_rate: f64) -> Result<Vec<f64>> {
    check_len(truth.len(), excitation.len())?;
    let taps = truth.first().map_or(0, Vec::len);
    let frame = FrameConfig::new(taps, frame_shift, excitation.len(), sample_rate)?;
    let ops = BlockDft::new(frame)?;
    let atfs = truth.iter().map(|h| ops.embed_filter(h)).collect::<Result<Vec<_>>>()?;
    let len = excitation[0].len();
    if !len.is_multiple_of(frame_shift) {
        return Err(Error::invalid("signal length is not a whole number of blocks"));
    }
    let mut history = LoudspeakerHistory::new(&frame);
    let mut out = Vec::with_capacity(len);
    for start in (0..len).step_by(frame_shift) {
        let blocks: Vec<&[f64]> = excitation.iter().map(|x| &x[start..start + frame_shift]).collect();
        history.push(&blocks)?;
        let mut acc = vec![0.0; frame_shift];
        for (b, atf) in atfs.iter().enumerate() {
            for (a, v) in acc.iter_mut().zip(ops.os_convolve(history.channel(b), atf)?) {
                *a += v;
            }
        }
        out.extend(acc);
    }
    Ok(out)
}

/// Scales `noise` so that `‖clean‖² / ‖noise‖²` equals `snr_db`; an infinite
/// SNR yields silence.
pub fn mix_at_snr(clean: &[f64], mut noise: Vec<f64>, snr_db: f64) -> Result<Vec<f64>> {
    if snr_db == f64::INFINITY {
        return Ok(vec![0.0; clean.len()]);
    }
    let ed: f64 = clean.iter().map(|v| v * v).sum();
    let en: f64 = noise.iter().map(|v| v * v).sum();
    if ed == 0.0 {
        return Err(Error::invalid("SNR cannot be realised: the clean observation is silent"));
    }
    if en == 0.0 {
        return Err(Error::invalid("SNR cannot be realised: the noise is silent"));
    }
    let g = (ed / (en * 10f64.powf(snr_db / 10.0))).sqrt();
    noise.iter_mut().for_each(|v| *v *= g);
    Ok(noise)
}

/// Synthesises scenarios for every trial of one experiment. Recordings and
/// far-end responses are loaded once.
#[derive(Debug, Clone)]
pub struct ScenarioBuilder {
    config: ExperimentConfig,
    speech: SpeechSource,
    /// `[talker][channel]` far-end responses, teleconference only.
    far_end: Option<(FarEndConfig, Vec<Vec<Vec<f64>>>)>,
}

impl ScenarioBuilder {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let speech = SpeechSource::load(&config.excitation.wav, config.frame.sample_rate)?;
        let far_end = if config.excitation.kind == ExcitationKind::Teleconference {
            let fe = config.far_end();
            let rirs = fe
                .talkers
                .iter()
                .map(|t| fe.mics.iter().map(|m| simulate_rir(&fe.room, t, m)).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            Some((fe, rirs))
        } else {
            None
        };
        Ok(Self { config: config.clone(), speech, far_end })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn build(&self, trial: usize) -> Result<Scenario> {
        let cfg = &self.config;
        let seed = trial_seed(cfg.seed, trial);
        let n = cfg.samples();
        let fs = cfg.frame.sample_rate;

        let mic = sample_mic_position(&cfg.geometry, &cfg.room, &mut indexed_rng(seed, STREAM_MIC))?;
        let ground_truth = simulate_air(&cfg.room, &cfg.geometry, mic)?;

        let mut rng = indexed_rng(seed, STREAM_EXCITATION);
        let excitation = match cfg.excitation.kind {
            ExcitationKind::Wgn => (0..cfg.frame.channels).map(|_| white_noise(n, &mut rng)).collect(),
            ExcitationKind::SpeechIndependent => (0..cfg.frame.channels).map(|_| self.speech.draw(n, &mut rng)).collect(),
            ExcitationKind::Teleconference => self.teleconference(n, &mut rng)?,
        };

        let mut clean = vec![0.0; n];
        for (x, h) in excitation.iter().zip(&ground_truth.channels) {
            for (c, v) in clean.iter_mut().zip(convolve_direct(x, h)) {
                *c += v;
            }
        }
        let os = overlap_save_observation(&excitation, &ground_truth.channels, cfg.frame.frame_shift, fs)?;
        let peak = clean.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let dev = clean.iter().zip(&os).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if dev > CONVOLUTION_TOLERANCE * peak {
            return Err(Error::invalid(format!("direct and overlap-save observations differ by {dev:e}")));
        }

        let wgn = white_noise(n, &mut indexed_rng(seed, STREAM_WGN));
        let noise_wgn = mix_at_snr(&clean, wgn, cfg.snr_wgn)?;
        let noise_sp = if cfg.snr_sp == f64::INFINITY {
            vec![0.0; n]
        } else {
            let sp = self.speech.draw(n, &mut indexed_rng(seed, STREAM_SPEECH_NOISE));
            mix_at_snr(&clean, sp, cfg.snr_sp)?
        };
        Ok(Scenario { excitation, clean, noise_wgn, noise_sp, ground_truth, seed })
    }

    /// Two talkers with disjoint activity rendered into every playback
    /// channel; the channels share a common gain giving unit mean power.
    fn teleconference(&self, n: usize, rng: &mut dyn RngCore) -> Result<Vec<Vec<f64>>> {
        let (fe, rirs) = self.far_end.as_ref().expect("far-end responses are built for teleconference runs");
        let cfg = &self.config;
        let gain = switch_gain(n, cfg.frame.sample_rate, cfg.switch_time, fe.crossfade);
        let mut talkers: Vec<Vec<f64>> = (0..2).map(|_| self.speech.draw(n, rng)).collect();
        for (s, g) in talkers[0].iter_mut().zip(&gain) {
            *s *= g;
        }
        for (s, g) in talkers[1].iter_mut().zip(&gain) {
            *s *= 1.0 - g;
        }
        let mut out = vec![vec![0.0; n]; cfg.frame.channels];
        for (talker, responses) in talkers.iter().zip(rirs) {
            for (ch, h) in out.iter_mut().zip(responses) {
                for (o, v) in ch.iter_mut().zip(convolve_direct(talker, h)) {
                    *o += v;
                }
            }
        }
        let power = out.iter().flatten().map(|v| v * v).sum::<f64>() / (n * cfg.frame.channels) as f64;
        if power > 0.0 {
            let g = power.sqrt().recip();
            out.iter_mut().flatten().for_each(|v| *v *= g);
        }
        Ok(out)
    }
}

/// One-off synthesis of trial `trial`.
pub fn synthesize_scenario(config: &ExperimentConfig, trial: usize) -> Result<Scenario> {
    ScenarioBuilder::new(config)?.build(trial)
}
