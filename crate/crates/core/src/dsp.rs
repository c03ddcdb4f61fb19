//! Block framing and DFT-domain operators for overlap-save processing.
//!
//! The forward DFT is unnormalized and the inverse carries the `1/M` factor.
//! A block of `M = R + L` loudspeaker samples is transformed as a whole; only
//! the last `R` samples of a circular convolution with a zero-padded length-`L`
//! filter are free of wrap-around and form the valid output block.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Block geometry shared by every stage of the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    /// Filter length `L` in taps.
    pub filter_len: usize,
    /// Frame shift `R` in samples.
    pub frame_shift: usize,
    /// Number of loudspeakers `B`.
    pub channels: usize,
    /// Sampling rate in Hz.
    pub sample_rate: f64,
}

impl FrameConfig {
    pub fn new(filter_len: usize, frame_shift: usize, channels: usize, sample_rate: f64) -> Result<Self> {
        let frame = Self { filter_len, frame_shift, channels, sample_rate };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        if self.filter_len == 0 || self.frame_shift == 0 || self.channels == 0 {
            return Err(Error::invalid("filter length, frame shift and channel count must be >= 1"));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::invalid("sample rate must be positive"));
        }
        Ok(())
    }

    /// DFT length `M = R + L`.
    pub fn dft_len(&self) -> usize {
        self.filter_len + self.frame_shift
    }

    /// Length `Q = L * B` of a stacked time-domain MISO filter.
    pub fn air_len(&self) -> usize {
        self.filter_len * self.channels
    }

    /// Length `M * B` of a stacked DFT-domain MISO filter.
    pub fn atf_len(&self) -> usize {
        self.dft_len() * self.channels
    }

    /// Duration of one block in seconds.
    pub fn block_duration(&self) -> f64 {
        self.frame_shift as f64 / self.sample_rate
    }
}

/// Forward/inverse complex DFT of a fixed length.
#[derive(Clone)]
pub struct Dft {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Dft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dft").field("len", &self.len).finish()
    }
}

impl Dft {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "DFT length must be positive");
        let mut planner = FftPlanner::new();
        Self { len, forward: planner.plan_fft_forward(len), inverse: planner.plan_fft_inverse(len) }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Unnormalized forward transform of a real block.
    pub fn forward_real(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        check_len(x.len(), self.len)?;
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        Ok(buf)
    }

    /// In-place unnormalized forward transform.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.len);
        self.forward.process(buf);
    }

    /// In-place inverse transform including the `1/M` factor.
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.len);
        self.inverse.process(buf);
        let scale = 1.0 / self.len as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    pub fn inverse(&self, spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(spectrum.len(), self.len)?;
        let mut buf = spectrum.to_vec();
        self.inverse_in_place(&mut buf);
        Ok(buf)
    }

    /// Inverse transform keeping only real parts.
    pub fn inverse_real(&self, spectrum: &[Complex64]) -> Result<Vec<f64>> {
        Ok(self.inverse(spectrum)?.into_iter().map(|c| c.re).collect())
    }
}

/// The overlap-save operators of one [`FrameConfig`]: zero-padding `F Q2`,
/// filter extraction `Q2ᵀ F⁻¹`, error embedding `F Q1`, the gradient
/// constraint `G = F Q2 Q2ᵀ F⁻¹` and DFT-domain block convolution.
#[derive(Debug, Clone)]
pub struct BlockDft {
    frame: FrameConfig,
    dft: Dft,
}

impl BlockDft {
    pub fn new(frame: FrameConfig) -> Result<Self> {
        frame.validate()?;
        Ok(Self { frame, dft: Dft::new(frame.dft_len()) })
    }

    pub fn frame(&self) -> &FrameConfig {
        &self.frame
    }

    pub fn dft(&self) -> &Dft {
        &self.dft
    }

    /// DFT of a real length-`M` block.
    pub fn spectrum(&self, block: &[f64]) -> Result<Vec<Complex64>> {
        self.dft.forward_real(block)
    }

    /// `F Q2 a`: DFT of `[a; 0_R]` for a length-`L` filter.
    pub fn embed_filter(&self, air: &[f64]) -> Result<Vec<Complex64>> {
        check_len(air.len(), self.frame.filter_len)?;
        let mut buf = vec![Complex64::default(); self.frame.dft_len()];
        for (b, &a) in buf.iter_mut().zip(air) {
            b.re = a;
        }
        self.dft.forward_in_place(&mut buf);
        Ok(buf)
    }

    /// `Q2ᵀ F⁻¹ w`: first `L` real time-domain samples.
    pub fn extract_filter(&self, atf: &[Complex64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.frame.filter_len);
        self.extract_filter_into(atf, &mut out)?;
        Ok(out)
    }

    pub fn extract_filter_into(&self, atf: &[Complex64], out: &mut Vec<f64>) -> Result<()> {
        check_len(atf.len(), self.frame.dft_len())?;
        let mut buf = atf.to_vec();
        self.dft.inverse_in_place(&mut buf);
        out.extend(buf[..self.frame.filter_len].iter().map(|c| c.re));
        Ok(())
    }

    /// `F Q1 e`: DFT of `[0_L; e]` for a length-`R` time block.
    pub fn embed_block(&self, block: &[f64]) -> Result<Vec<Complex64>> {
        check_len(block.len(), self.frame.frame_shift)?;
        let mut buf = vec![Complex64::default(); self.frame.dft_len()];
        for (b, &v) in buf[self.frame.filter_len..].iter_mut().zip(block) {
            b.re = v;
        }
        self.dft.forward_in_place(&mut buf);
        Ok(buf)
    }

    /// Applies `G`: zeroes the last `R` time-domain samples. Complex-valued
    /// time-domain content is kept, so `G` is an orthogonal projector on `C^M`.
    pub fn constrain_gradient(&self, spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut buf = spectrum.to_vec();
        self.constrain_in_place(&mut buf)?;
        Ok(buf)
    }

    pub fn constrain_in_place(&self, buf: &mut [Complex64]) -> Result<()> {
        check_len(buf.len(), self.frame.dft_len())?;
        self.dft.inverse_in_place(buf);
        for v in &mut buf[self.frame.filter_len..] {
            *v = Complex64::default();
        }
        self.dft.forward_in_place(buf);
        Ok(())
    }

    /// `Q1ᵀ F⁻¹ X w`: the valid last `R` samples of the circular convolution of
    /// a length-`M` loudspeaker history with a `Q2`-embedded filter.
    pub fn os_convolve(&self, history: &[f64], atf: &[Complex64]) -> Result<Vec<f64>> {
        check_len(atf.len(), self.frame.dft_len())?;
        let mut buf = self.spectrum(history)?;
        for (x, w) in buf.iter_mut().zip(atf) {
            *x *= w;
        }
        Ok(self.valid_output(&mut buf))
    }

    /// `Q1ᵀ F⁻¹ s` for a product spectrum `s`; consumes `s` as scratch.
    pub fn valid_output(&self, product: &mut [Complex64]) -> Vec<f64> {
        self.dft.inverse_in_place(product);
        product[self.frame.filter_len..].iter().map(|c| c.re).collect()
    }
}

/// Per-channel buffer of the most recent `M` loudspeaker samples; each block
/// shifts in `R` new samples. Starts zero-filled.
#[derive(Debug, Clone)]
pub struct LoudspeakerHistory {
    shift: usize,
    buffers: Vec<Vec<f64>>,
}

impl LoudspeakerHistory {
    pub fn new(frame: &FrameConfig) -> Self {
        Self { shift: frame.frame_shift, buffers: vec![vec![0.0; frame.dft_len()]; frame.channels] }
    }

    pub fn push(&mut self, blocks: &[&[f64]]) -> Result<()> {
        if blocks.len() != self.buffers.len() {
            return Err(Error::LengthMismatch { expected: self.buffers.len(), actual: blocks.len() });
        }
        for (buf, block) in self.buffers.iter_mut().zip(blocks) {
            check_len(block.len(), self.shift)?;
            let len = buf.len();
            buf.copy_within(self.shift.., 0);
            buf[len - self.shift..].copy_from_slice(block);
        }
        Ok(())
    }

    pub fn channel(&self, b: usize) -> &[f64] {
        &self.buffers[b]
    }

    pub fn channels(&self) -> usize {
        self.buffers.len()
    }
}

/// Direct linear convolution, truncated to `signal.len()` output samples.
pub fn convolve_direct(signal: &[f64], filter: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; signal.len()];
    for (n, o) in out.iter_mut().enumerate() {
        let kmax = filter.len().min(n + 1);
        let mut acc = 0.0;
        for k in 0..kmax {
            acc += filter[k] * signal[n - k];
        }
        *o = acc;
    }
    out
}

pub(crate) fn check_len(actual: usize, expected: usize) -> Result<()> {
    if actual == expected {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, actual })
    }
}
