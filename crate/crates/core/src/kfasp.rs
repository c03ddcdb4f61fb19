//! Kalman filter with adaptive subspace projection (KF-ASP).
//!
//! After every KF update the posterior mean is projected onto the affine hull
//! of its nearest training AIRs and fused with that projection, either fully
//! (hard projection) or by per-bin uncertainty weights (soft combination).
//! The fused mean is written back as the KF posterior mean; the uncertainty
//! is left as the KF computed it.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{check_len, BlockDft, FrameConfig};
use crate::error::{Error, Result};
use crate::fdkf::{BlockOutput, BlockSpectra, KalmanFilter, KalmanState, KfHyperParams};
use crate::subspace::{build_knn_subspace, knn_select, knn_select_kf, AffineSubspace, AtfBank, Metric, TrainingSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    /// `α ≡ 1`: replace the KF mean by its projection.
    HardProjection,
    /// `α = P / (P + Ψ_M)` per channel and bin.
    SoftCombination,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    /// Neighbour count `K_τ`.
    pub k_tau: usize,
    /// Prior scale `β_pr`. Infinity disables the fusion in soft mode.
    pub beta_pr: f64,
    pub metric: Metric,
    pub mode: CombineMode,
    /// Initial uncertainty scale for the underlying KF.
    pub p0: f64,
    /// Run the neighbour search every `search_stride` blocks.
    pub search_stride: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { k_tau: 80, beta_pr: 5.0, metric: Metric::Kf, mode: CombineMode::SoftCombination, p0: 0.1, search_stride: 1 }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_tau < 2 {
            return Err(Error::invalid("k_tau must be >= 2"));
        }
        if self.beta_pr.is_nan() || self.beta_pr <= 0.0 {
            return Err(Error::invalid("beta_pr must be positive"));
        }
        if !(self.p0.is_finite() && self.p0 > 0.0) {
            return Err(Error::invalid("p0 must be positive"));
        }
        if self.search_stride == 0 {
            return Err(Error::invalid("search_stride must be >= 1"));
        }
        Ok(())
    }
}

/// Fused ATF estimate and the weights used to form it.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoisedEstimate {
    pub mean: Vec<Complex64>,
    /// Weight of the projection per channel and bin, channel-major.
    pub alpha: Vec<f64>,
}

/// Training corpus prepared for neighbour search in both domains.
#[derive(Debug, Clone)]
pub struct SearchIndex {
    set: TrainingSet,
    bank: AtfBank,
}

impl SearchIndex {
    pub fn new(set: TrainingSet, ops: &BlockDft) -> Result<Self> {
        let bank = AtfBank::new(&set, ops)?;
        Ok(Self { set, bank })
    }

    pub fn set(&self) -> &TrainingSet {
        &self.set
    }

    pub fn bank(&self) -> &AtfBank {
        &self.bank
    }

    /// The `k` nearest training samples to the current KF mean, nearest first.
    /// `time_mean` must be the time-domain image of `state.mean`.
    pub fn neighbours(&self, state: &KalmanState, time_mean: &[f64], metric: Metric, k: usize) -> Result<Vec<usize>> {
        match metric {
            Metric::Euclidean => knn_select(time_mean, &self.set, k),
            Metric::Kf => knn_select_kf(&state.mean, &state.diagonal_uncertainty(), &self.bank, k),
        }
    }
}

fn embed_stacked(ops: &BlockDft, w: &[f64]) -> Result<Vec<Complex64>> {
    let l = ops.frame().filter_len;
    let mut out = Vec::with_capacity(ops.frame().atf_len());
    for ch in w.chunks_exact(l) {
        out.extend(ops.embed_filter(ch)?);
    }
    Ok(out)
}

/// `F Q2` applied per channel to the projection of `Q2ᵀ F⁻¹ ŵ`.
pub fn project_kf_estimate(state: &KalmanState, ops: &BlockDft, subspace: &AffineSubspace) -> Result<Vec<Complex64>> {
    check_len(subspace.ambient_dim(), state.frame().air_len())?;
    let w = state.time_domain_mean(ops)?;
    embed_stacked(ops, &subspace.project(&w)?)
}

/// Model prior weights `Ψ_M = β_pr Ψ^W`, channel-major.
pub fn model_prior_cov(state: &KalmanState, beta_pr: f64) -> Vec<f64> {
    if beta_pr == f64::INFINITY {
        return vec![f64::INFINITY; state.psi_w.len()];
    }
    state.psi_w.iter().map(|w| beta_pr * w).collect()
}

/// Per-bin convex combination of the KF mean and its projection.
pub fn soft_combine(state: &KalmanState, projected: &[Complex64], psi_m: &[f64], mode: CombineMode) -> Result<DenoisedEstimate> {
    check_len(projected.len(), state.mean.len())?;
    check_len(psi_m.len(), state.mean.len())?;
    let alpha: Vec<f64> = match mode {
        CombineMode::HardProjection => vec![1.0; psi_m.len()],
        CombineMode::SoftCombination => state
            .p_diag()
            .iter()
            .zip(psi_m)
            .map(|(&p, &m)| {
                let den = p + m;
                if den > 0.0 {
                    p / den
                } else {
                    0.0
                }
            })
            .collect(),
    };
    let mean = state
        .mean
        .iter()
        .zip(projected)
        .zip(&alpha)
        .map(|((&w, &wp), &a)| match a {
            0.0 => w,
            1.0 => wp,
            _ => w * (1.0 - a) + wp * a,
        })
        .collect();
    Ok(DenoisedEstimate { mean, alpha })
}

/// Result of one KF-ASP block.
#[derive(Debug, Clone)]
pub struct AspOutput {
    pub block: BlockOutput,
    pub estimate: DenoisedEstimate,
    /// Neighbours the subspace was built from, nearest first.
    pub neighbours: Arc<[usize]>,
}

/// Streaming KF-ASP estimator.
#[derive(Debug, Clone)]
pub struct KfAsp {
    filter: KalmanFilter,
    fusion: FusionConfig,
    index: Arc<SearchIndex>,
    cached: Option<(Arc<[usize]>, AffineSubspace)>,
}

impl KfAsp {
    /// The KF is initialised with `fusion.p0`; `params.p0` is ignored.
    pub fn new(frame: FrameConfig, params: KfHyperParams, fusion: FusionConfig, index: Arc<SearchIndex>) -> Result<Self> {
        fusion.validate()?;
        let set = index.set();
        if set.channels() != frame.channels || set.taps() != frame.filter_len {
            return Err(Error::invalid("training set does not match the frame configuration"));
        }
        if fusion.k_tau > set.len() {
            return Err(Error::invalid(format!("k_tau = {} exceeds the training set size {}", fusion.k_tau, set.len())));
        }
        let filter = KalmanFilter::new(frame, KfHyperParams { p0: fusion.p0, ..params })?;
        Ok(Self { filter, fusion, index, cached: None })
    }

    pub fn state(&self) -> &KalmanState {
        self.filter.state()
    }

    pub fn ops(&self) -> &BlockDft {
        self.filter.ops()
    }

    pub fn fusion(&self) -> &FusionConfig {
        &self.fusion
    }

    pub fn step(&mut self, x_blocks: &[&[f64]], mic_block: &[f64]) -> Result<AspOutput> {
        let spectra: BlockSpectra = self.filter.push_excitation(x_blocks)?;
        let block = self.filter.update(&spectra, mic_block)?;

        let state = self.filter.state();
        let ops = self.filter.ops();
        let time_mean = state.time_domain_mean(ops)?;
        let search = self.cached.is_none() || (state.tau - 1).is_multiple_of(self.fusion.search_stride as u64);
        if search {
            let nn = self.index.neighbours(state, &time_mean, self.fusion.metric, self.fusion.k_tau)?;
            let hit = matches!(&self.cached, Some((prev, _)) if **prev == nn[..]);
            if !hit {
                let set = self.index.set();
                let rows: Vec<&[f64]> = nn.iter().map(|&k| set.vector(k)).collect();
                self.cached = Some((nn.into(), build_knn_subspace(&rows)?));
            }
        }
        let (neighbours, subspace) = self.cached.as_ref().expect("subspace computed above");
        let projected = embed_stacked(ops, &subspace.project(&time_mean)?)?;
        let psi_m = model_prior_cov(state, self.fusion.beta_pr);
        let estimate = soft_combine(state, &projected, &psi_m, self.fusion.mode)?;
        let neighbours = neighbours.clone();
        self.filter.state_mut().mean.clone_from(&estimate.mean);
        Ok(AspOutput { block, estimate, neighbours })
    }
}
