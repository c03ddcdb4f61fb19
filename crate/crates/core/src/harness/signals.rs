//! Excitation and interference signals.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Zero crossings of the resampling kernel on each side, at the lower rate.
const RESAMPLE_ZEROS: f64 = 16.0;
const SPEECH_AR_ORDER: usize = 8;
/// Ramp applied at the edges of talk spurts, in seconds.
const SPURT_RAMP: f64 = 0.01;

pub fn white_noise<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)).collect()
}

/// Coefficients `[1, a1, .., a8]` of a random stable all-pole vocal-tract
/// model with one resonance in each of four formant bands.
pub fn random_formant_filter<R: Rng + ?Sized>(sample_rate: f64, rng: &mut R) -> Vec<f64> {
    const BANDS: [(f64, f64); 4] = [(250.0, 800.0), (800.0, 1800.0), (1800.0, 2700.0), (2700.0, 3600.0)];
    let nyquist = 0.5 * sample_rate;
    let mut poly = vec![1.0];
    for (lo, hi) in BANDS {
        let f = rng.random_range(lo..hi).min(0.9 * nyquist);
        let r = rng.random_range(0.88..0.97);
        let theta = 2.0 * PI * f / sample_rate;
        let section = [1.0, -2.0 * r * theta.cos(), r * r];
        let mut next = vec![0.0; poly.len() + 2];
        for (i, p) in poly.iter().enumerate() {
            for (j, s) in section.iter().enumerate() {
                next[i + j] += p * s;
            }
        }
        poly = next;
    }
    debug_assert_eq!(poly.len(), SPEECH_AR_ORDER + 1);
    poly
}

/// Filters `x` through the all-pole filter `1 / A(z)`.
pub fn all_pole(a: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for n in 0..x.len() {
        let mut acc = x[n];
        for k in 1..a.len().min(n + 1) {
            acc -= a[k] * y[n - k];
        }
        y[n] = acc;
    }
    y
}

/// Talk-spurt gate: spurts of 0.4-1.6 s separated by 0.1-0.5 s pauses, with
/// short linear ramps.
fn spurt_gate<R: Rng + ?Sized>(len: usize, sample_rate: f64, rng: &mut R) -> Vec<f64> {
    let mut gate = vec![0.0; len];
    let ramp = (SPURT_RAMP * sample_rate).max(1.0);
    let mut n = 0usize;
    while n < len {
        let talk = (rng.random_range(0.4..1.6) * sample_rate) as usize;
        let end = (n + talk).min(len);
        for (k, g) in gate[n..end].iter_mut().enumerate() {
            let edge = (k as f64 + 1.0).min((talk - k) as f64);
            *g = (edge / ramp).min(1.0);
        }
        n = end + (rng.random_range(0.1..0.5) * sample_rate) as usize;
    }
    gate
}

/// Synthetic speech-like signal with unit RMS: AR(8)-coloured noise,
/// amplitude-modulated at a syllabic rate and gated into talk spurts.
pub fn speech_like<R: Rng + ?Sized>(len: usize, sample_rate: f64, rng: &mut R) -> Vec<f64> {
    let a = random_formant_filter(sample_rate, rng);
    let rate = rng.random_range(3.0..6.0);
    let phase = rng.random_range(0.0..2.0 * PI);
    let gate = spurt_gate(len, sample_rate, rng);
    let noise = white_noise(len, rng);
    let excitation: Vec<f64> = noise
        .iter()
        .enumerate()
        .map(|(n, v)| {
            let t = n as f64 / sample_rate;
            let syllable = 0.2 + 0.8 * (0.5 - 0.5 * (2.0 * PI * rate * t + phase).cos());
            v * syllable * gate[n]
        })
        .collect();
    let mut y = all_pole(&a, &excitation);
    normalize_rms(&mut y);
    y
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Scales `x` to unit RMS; silent signals are left untouched.
pub fn normalize_rms(x: &mut [f64]) {
    let r = rms(x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v /= r);
    }
}

/// Band-limited resampling with a Hann-windowed sinc kernel.
pub fn resample(x: &[f64], from: f64, to: f64) -> Result<Vec<f64>> {
    if !(from > 0.0 && to > 0.0 && from.is_finite() && to.is_finite()) {
        return Err(Error::invalid("sample rates must be positive"));
    }
    if from == to {
        return Ok(x.to_vec());
    }
    let ratio = to / from;
    let cutoff = ratio.min(1.0);
    let half = RESAMPLE_ZEROS / cutoff;
    let out_len = (x.len() as f64 * ratio).floor() as usize;
    let mut y = Vec::with_capacity(out_len);
    for k in 0..out_len {
        let t = k as f64 / ratio;
        let lo = ((t - half).ceil() as i64).max(0);
        let hi = ((t + half).floor() as i64).min(x.len() as i64 - 1);
        let mut acc = 0.0;
        for j in lo..=hi {
            let u = t - j as f64;
            let arg = cutoff * u;
            let sinc = if arg == 0.0 { 1.0 } else { (PI * arg).sin() / (PI * arg) };
            let window = 0.5 + 0.5 * (PI * u / half).cos();
            acc += x[j as usize] * cutoff * sinc * window;
        }
        y.push(acc);
    }
    Ok(y)
}

/// Reads a mono RIFF WAV (integer PCM or 32-bit float) as samples in
/// `[-1, 1]`, resampled to `sample_rate`.
pub fn read_wav(path: &Path, sample_rate: f64) -> Result<Vec<f64>> {
    let audio_err = |message: String| Error::Audio { path: path.display().to_string(), message };
    let mut reader = hound::WavReader::open(path).map_err(|e| audio_err(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(audio_err(format!("expected mono, found {} channels", spec.channels)));
    }
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| audio_err(e.to_string()))?,
        hound::SampleFormat::Int => {
            let scale = 2f64.powi(i32::from(spec.bits_per_sample) - 1);
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<Result<_, _>>()
                .map_err(|e| audio_err(e.to_string()))?
        }
    };
    if samples.is_empty() {
        return Err(audio_err("no samples".into()));
    }
    resample(&samples, f64::from(spec.sample_rate), sample_rate)
}

/// Where speech signals come from.
#[derive(Debug, Clone)]
pub enum SpeechSource {
    Synthetic { sample_rate: f64 },
    /// Decoded recordings at the processing rate.
    Recordings(Arc<Vec<Vec<f64>>>),
}

impl SpeechSource {
    pub fn load(paths: &[PathBuf], sample_rate: f64) -> Result<Self> {
        if paths.is_empty() {
            return Ok(Self::Synthetic { sample_rate });
        }
        let recs = paths.iter().map(|p| read_wav(p, sample_rate)).collect::<Result<Vec<_>>>()?;
        if let Some((p, _)) = paths.iter().zip(&recs).find(|(_, r)| rms(r) == 0.0) {
            return Err(Error::Audio { path: p.display().to_string(), message: "recording is silent".into() });
        }
        Ok(Self::Recordings(Arc::new(recs)))
    }

    /// A unit-RMS excerpt of `len` samples. Recordings are picked at random,
    /// started at a random offset and looped when too short.
    pub fn draw<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<f64> {
        match self {
            Self::Synthetic { sample_rate } => speech_like(len, *sample_rate, rng),
            Self::Recordings(recs) => {
                let rec = &recs[rng.random_range(0..recs.len())];
                let start = if rec.len() > len { rng.random_range(0..=rec.len() - len) } else { 0 };
                let mut out: Vec<f64> = rec.iter().cycle().skip(start).take(len).copied().collect();
                normalize_rms(&mut out);
                out
            }
        }
    }
}

/// Gain of the first talker: 1 before the switch, 0 after, with a linear
/// crossfade of `crossfade` seconds centred on `switch_time`. The second
/// talker's gain is the complement.
pub fn switch_gain(len: usize, sample_rate: f64, switch_time: f64, crossfade: f64) -> Vec<f64> {
    (0..len)
        .map(|n| {
            let t = n as f64 / sample_rate;
            if crossfade <= 0.0 {
                if t < switch_time { 1.0 } else { 0.0 }
            } else {
                ((switch_time + 0.5 * crossfade - t) / crossfade).clamp(0.0, 1.0)
            }
        })
        .collect()
}
