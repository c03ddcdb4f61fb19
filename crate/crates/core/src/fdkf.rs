//! DFT-domain Kalman filter for MISO online system identification.
//!
//! The state uncertainty is a `B x B` grid of diagonal `M x M` blocks, so
//! every update decouples into independent per-bin problems. With a single
//! microphone the innovation covariance is a scalar per bin.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{check_len, BlockDft, FrameConfig, LoudspeakerHistory};
use crate::error::{Error, Result};
use crate::subspace::DiagonalUncertainty;

/// Initial observation-noise power before the first block is seen.
pub const PSI_N_INIT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KfHyperParams {
    /// State transition coefficient `A`.
    pub a: f64,
    /// Recursive averaging factor of the ATF power.
    pub lambda_w: f64,
    /// Recursive averaging factor of the observation noise power.
    pub lambda_n: f64,
    /// Initial uncertainty scale `P0`.
    pub p0: f64,
}

impl Default for KfHyperParams {
    fn default() -> Self {
        Self { a: 0.9999, lambda_w: 0.9, lambda_n: 0.5, p0: 0.01 }
    }
}

impl KfHyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a <= 1.0) {
            return Err(Error::invalid(format!("state transition coefficient {} must lie in (0, 1]", self.a)));
        }
        for (name, v) in [("lambda_w", self.lambda_w), ("lambda_n", self.lambda_n)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} = {v} must lie in [0, 1]")));
            }
        }
        if !(self.p0.is_finite() && self.p0 > 0.0) {
            return Err(Error::invalid("p0 must be positive"));
        }
        Ok(())
    }
}

/// Posterior mean, uncertainty and noise statistics of one filter stream.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    frame: FrameConfig,
    /// Stacked ATF mean, channel-major, `B * M` bins.
    pub mean: Vec<Complex64>,
    /// Diagonals of `P_ij`, stored at `(i * B + j) * M + f`.
    pub p: Vec<Complex64>,
    /// Diagonal ATF power `Ψ^W_bb`, `B * M` entries.
    pub psi_w: Vec<f64>,
    /// Diagonal process noise `Ψ^ΔW_bb`, `B * M` entries.
    pub psi_dw: Vec<f64>,
    /// Diagonal observation noise `Ψ^N`, `M` entries.
    pub psi_n: Vec<f64>,
    /// Number of processed blocks.
    pub tau: u64,
}

impl KalmanState {
    pub fn new(frame: FrameConfig, p0: f64) -> Result<Self> {
        frame.validate()?;
        let (b, m) = (frame.channels, frame.dft_len());
        let mut p = vec![Complex64::default(); b * b * m];
        for i in 0..b {
            p[(i * b + i) * m..(i * b + i + 1) * m].fill(Complex64::new(p0, 0.0));
        }
        Ok(Self {
            frame,
            mean: vec![Complex64::default(); b * m],
            p,
            psi_w: vec![p0; b * m],
            psi_dw: vec![0.0; b * m],
            psi_n: vec![PSI_N_INIT; m],
            tau: 0,
        })
    }

    pub fn frame(&self) -> &FrameConfig {
        &self.frame
    }

    pub fn mean_channel(&self, b: usize) -> &[Complex64] {
        let m = self.frame.dft_len();
        &self.mean[b * m..(b + 1) * m]
    }

    /// `P_ij` diagonal.
    pub fn p_block(&self, i: usize, j: usize) -> &[Complex64] {
        let (b, m) = (self.frame.channels, self.frame.dft_len());
        &self.p[(i * b + j) * m..(i * b + j + 1) * m]
    }

    /// Real diagonals of every `P_bb`, channel-major.
    pub fn p_diag(&self) -> Vec<f64> {
        (0..self.frame.channels).flat_map(|b| self.p_block(b, b).iter().map(|c| c.re)).collect()
    }

    pub fn diagonal_uncertainty(&self) -> DiagonalUncertainty {
        DiagonalUncertainty::new(self.p_diag()).expect("P diagonals are kept non-negative")
    }

    /// Stacked time-domain filter estimate, `L` taps per channel.
    pub fn time_domain_mean(&self, ops: &BlockDft) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.frame.air_len());
        for b in 0..self.frame.channels {
            ops.extract_filter_into(self.mean_channel(b), &mut out)?;
        }
        Ok(out)
    }
}

/// Loudspeaker spectra `X_b` of the current block, channel-major.
#[derive(Debug, Clone)]
pub struct BlockSpectra {
    pub bins: Vec<Complex64>,
}

impl BlockSpectra {
    pub fn from_history(ops: &BlockDft, history: &LoudspeakerHistory) -> Result<Self> {
        let mut bins = Vec::with_capacity(ops.frame().atf_len());
        for b in 0..history.channels() {
            bins.extend(ops.spectrum(history.channel(b))?);
        }
        Ok(Self { bins })
    }

    pub fn channel(&self, b: usize, m: usize) -> &[Complex64] {
        &self.bins[b * m..(b + 1) * m]
    }
}

/// Prior error of one block in both domains.
#[derive(Debug, Clone)]
pub struct PriorError {
    /// `e⁺ = F Q1 (y - ŷ)`.
    pub spectrum: Vec<Complex64>,
    /// `y - ŷ` over the `R` valid samples.
    pub time: Vec<f64>,
    /// Echo estimate `ŷ` from the previous mean.
    pub estimate: Vec<f64>,
}

/// `e⁺ = F Q1 (y - Q1ᵀ F⁻¹ Σ_b X_b ŵ_b)`, using `A = 1` for the prediction.
pub fn prior_error(state: &KalmanState, ops: &BlockDft, spectra: &BlockSpectra, mic_block: &[f64]) -> Result<PriorError> {
    let frame = state.frame();
    if ops.frame() != frame {
        return Err(Error::invalid("DFT operators and state use different frames"));
    }
    check_len(mic_block.len(), frame.frame_shift)?;
    check_len(spectra.bins.len(), frame.atf_len())?;
    let m = frame.dft_len();
    let mut product = vec![Complex64::default(); m];
    for b in 0..frame.channels {
        for ((acc, x), w) in product.iter_mut().zip(spectra.channel(b, m)).zip(state.mean_channel(b)) {
            *acc += x * w;
        }
    }
    let estimate = ops.valid_output(&mut product);
    let time: Vec<f64> = mic_block.iter().zip(&estimate).map(|(y, d)| y - d).collect();
    let spectrum = ops.embed_block(&time)?;
    Ok(PriorError { spectrum, time, estimate })
}

/// Diagonal recursions for `Ψ^W`, `Ψ^ΔW = (1 - A²) Ψ^W` and `Ψ^N`.
/// `Ψ^W` is driven by the mean of the previous block, so this must run
/// before [`kf_update`].
pub fn track_noise_covariances(state: &mut KalmanState, params: &KfHyperParams, e_plus: &[Complex64]) -> Result<()> {
    check_len(e_plus.len(), state.psi_n.len())?;
    let (lw, ln) = (params.lambda_w, params.lambda_n);
    let leak = 1.0 - params.a * params.a;
    for ((pw, pdw), w) in state.psi_w.iter_mut().zip(state.psi_dw.iter_mut()).zip(&state.mean) {
        *pw = lw * *pw + (1.0 - lw) * w.norm_sqr();
        *pdw = leak * *pw;
    }
    for (pn, e) in state.psi_n.iter_mut().zip(e_plus) {
        *pn = ln * *pn + (1.0 - ln) * e.norm_sqr();
    }
    Ok(())
}

/// Prediction, Kalman gain, mean and uncertainty update for one block.
pub fn kf_update(
    state: &mut KalmanState,
    params: &KfHyperParams,
    ops: &BlockDft,
    spectra: &BlockSpectra,
    e_plus: &[Complex64],
) -> Result<()> {
    let frame = *state.frame();
    let (nb, m) = (frame.channels, frame.dft_len());
    check_len(e_plus.len(), m)?;
    check_len(spectra.bins.len(), nb * m)?;
    let a2 = params.a * params.a;
    let obs_scale = m as f64 / frame.frame_shift as f64;
    let post_scale = frame.frame_shift as f64 / m as f64;

    let mut pp = vec![Complex64::default(); nb * nb];
    let mut s = vec![Complex64::default(); nb];
    let mut gain = vec![Complex64::default(); nb];
    let mut update = vec![Complex64::default(); nb * m];
    let idx = |i: usize, j: usize, f: usize| (i * nb + j) * m + f;

    for f in 0..m {
        for i in 0..nb {
            for j in 0..nb {
                let mut v = a2 * state.p[idx(i, j, f)];
                if i == j {
                    v += state.psi_dw[i * m + f];
                }
                pp[i * nb + j] = v;
            }
        }
        let x = |b: usize| spectra.bins[b * m + f];
        for j in 0..nb {
            s[j] = (0..nb).map(|l| x(l) * pp[l * nb + j]).sum();
        }
        let d: f64 = (0..nb).map(|j| (s[j] * x(j).conj()).re).sum::<f64>() + obs_scale * state.psi_n[f];
        for i in 0..nb {
            gain[i] = if d > f64::MIN_POSITIVE && d.is_finite() {
                (0..nb).map(|j| pp[i * nb + j] * x(j).conj()).sum::<Complex64>() / d
            } else {
                Complex64::default()
            };
            update[i * m + f] = gain[i] * e_plus[f];
        }
        for i in 0..nb {
            for j in i..nb {
                let v = pp[i * nb + j] - post_scale * gain[i] * s[j];
                if i == j {
                    state.p[idx(i, i, f)] = Complex64::new(v.re.max(0.0), 0.0);
                } else {
                    state.p[idx(i, j, f)] = v;
                    state.p[idx(j, i, f)] = v.conj();
                }
            }
        }
    }
    for (b, chunk) in update.chunks_exact_mut(m).enumerate() {
        ops.constrain_in_place(chunk)?;
        for (w, u) in state.mean[b * m..(b + 1) * m].iter_mut().zip(chunk.iter()) {
            *w += u;
        }
    }
    state.tau += 1;
    Ok(())
}

/// Result of processing one block.
#[derive(Debug, Clone)]
pub struct BlockOutput {
    /// Echo estimate `d̂` from the prior mean, `R` samples.
    pub estimate: Vec<f64>,
    /// Prior error `y - d̂`, `R` samples.
    pub error: Vec<f64>,
}

/// Streaming baseline filter: owns the loudspeaker history and the state.
#[derive(Debug, Clone)]
pub struct KalmanFilter {
    ops: BlockDft,
    params: KfHyperParams,
    history: LoudspeakerHistory,
    state: KalmanState,
}

impl KalmanFilter {
    pub fn new(frame: FrameConfig, params: KfHyperParams) -> Result<Self> {
        params.validate()?;
        let ops = BlockDft::new(frame)?;
        Ok(Self { history: LoudspeakerHistory::new(&frame), state: KalmanState::new(frame, params.p0)?, ops, params })
    }

    pub fn state(&self) -> &KalmanState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut KalmanState {
        &mut self.state
    }

    pub fn ops(&self) -> &BlockDft {
        &self.ops
    }

    pub fn params(&self) -> &KfHyperParams {
        &self.params
    }

    /// Shifts in one block of loudspeaker samples and returns the spectra.
    pub fn push_excitation(&mut self, x_blocks: &[&[f64]]) -> Result<BlockSpectra> {
        self.history.push(x_blocks)?;
        BlockSpectra::from_history(&self.ops, &self.history)
    }

    /// Prior error, noise tracking and KF update for spectra already pushed.
    pub fn update(&mut self, spectra: &BlockSpectra, mic_block: &[f64]) -> Result<BlockOutput> {
        let e = prior_error(&self.state, &self.ops, spectra, mic_block)?;
        track_noise_covariances(&mut self.state, &self.params, &e.spectrum)?;
        kf_update(&mut self.state, &self.params, &self.ops, spectra, &e.spectrum)?;
        Ok(BlockOutput { estimate: e.estimate, error: e.time })
    }

    pub fn step(&mut self, x_blocks: &[&[f64]], mic_block: &[f64]) -> Result<BlockOutput> {
        let spectra = self.push_excitation(x_blocks)?;
        self.update(&spectra, mic_block)
    }
}
