//! Offline accuracy of affine subspace models on held-out AIRs.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::FrameConfig;
use crate::error::{Error, Result};
use crate::metrics::system_mismatch;
use crate::rir::{draw_airs, generate_corpus, AirSample, RoomSpec, SceneGeometry};
use crate::subspace::{build_knn_subspace, fit_pca_subspace, kmeans, knn_select, AffineSubspace, MixtureModel, TrainingSet};

use super::config::CorpusConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SubspaceModel {
    /// One PCA subspace over the whole corpus.
    Global,
    /// k-means mixture with oracle cluster selection.
    Mixture { clusters: usize },
    /// Hull of the nearest training AIRs. Without `k_tau`, `K_τ = D + 1` for
    /// every requested dimension `D`.
    Knn {
        #[serde(default)]
        k_tau: Option<usize>,
    },
}

/// Settings of a subspace analysis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub seed: u64,
    pub test_count: usize,
    pub dims: Vec<usize>,
    pub models: Vec<SubspaceModel>,
    pub frame: FrameConfig,
    pub room: RoomSpec,
    #[serde(default = "SceneGeometry::reference")]
    pub geometry: SceneGeometry,
    pub corpus: CorpusConfig,
}

impl AnalysisConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(p) = cfg.corpus.path.as_mut().filter(|p| p.is_relative()) {
            *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        self.room.validate()?;
        self.geometry.validate(&self.room)?;
        if self.test_count == 0 || self.corpus.size == 0 {
            return Err(Error::Config("test_count and corpus.size must be >= 1".into()));
        }
        if self.geometry.loudspeakers.len() != self.frame.channels {
            return Err(Error::Config("one loudspeaker per channel is required".into()));
        }
        if self.room.rir_len < self.frame.filter_len || self.room.sample_rate != self.frame.sample_rate {
            return Err(Error::Config("room and frame are inconsistent".into()));
        }
        if self.models.iter().any(|m| matches!(m, SubspaceModel::Mixture { clusters: 0 } | SubspaceModel::Knn { k_tau: Some(0) })) {
            return Err(Error::Config("cluster and neighbour counts must be >= 1".into()));
        }
        Ok(())
    }

    pub fn corpus_seed(&self) -> u64 {
        self.corpus.seed.unwrap_or(self.seed)
    }

    /// Held-out draws use a seed distinct from the training draws.
    pub fn test_seed(&self) -> u64 {
        self.corpus_seed().wrapping_add(1)
    }

    pub fn corpus(&self) -> Result<TrainingSet> {
        let set = match &self.corpus.path {
            Some(p) => TrainingSet::load(p)?.head(self.corpus.size)?,
            None => generate_corpus(&self.room, &self.geometry, self.corpus.size, self.frame.filter_len, self.corpus_seed())?,
        };
        if set.taps() != self.frame.filter_len || set.channels() != self.frame.channels {
            return Err(Error::Config("corpus does not match the frame configuration".into()));
        }
        Ok(set)
    }

    pub fn test_airs(&self) -> Result<Vec<AirSample>> {
        draw_airs(&self.room, &self.geometry, self.test_count, self.test_seed())
    }
}

/// Average mismatch of one model at one dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisRow {
    /// `oracle_gt`, `oracle_nn`, `global`, `mixture_I<n>`, `knn` or `knn_K<n>`.
    pub model: String,
    /// Subspace dimension; empty for the oracle rows.
    pub dim: Option<usize>,
    pub k_tau: Option<usize>,
    pub mismatch_db: f64,
}

impl fmt::Display for AnalysisRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<usize>| v.map_or_else(|| "-".to_string(), |d| d.to_string());
        write!(f, "{:<14} D={:<4} K={:<5} {:>9.3} dB", self.model, opt(self.dim), opt(self.k_tau), self.mismatch_db)
    }
}

struct TestSet<'a> {
    taps: usize,
    truth: Vec<Vec<&'a [f64]>>,
    truncated: Vec<Vec<f64>>,
}

impl TestSet<'_> {
    /// Mean over the test AIRs of the mismatch of `estimate(k, truncated_k)`.
    fn mean_mismatch(&self, mut estimate: impl FnMut(usize, &[f64]) -> Result<Vec<f64>>) -> Result<f64> {
        let mut acc = 0.0;
        for (k, w) in self.truncated.iter().enumerate() {
            let e = estimate(k, w)?;
            let chunks: Vec<&[f64]> = e.chunks(self.taps).collect();
            acc += system_mismatch(&self.truth[k], &chunks)?;
        }
        Ok(acc / self.truncated.len() as f64)
    }
}

fn knn_subspace(set: &TrainingSet, query: &[f64], k: usize) -> Result<AffineSubspace> {
    let nn = knn_select(query, set, k)?;
    if k == 1 {
        return Ok(AffineSubspace::offset_only(set.vector(nn[0]).to_vec()));
    }
    let rows: Vec<&[f64]> = nn.iter().map(|&i| set.vector(i)).collect();
    build_knn_subspace(&rows)
}

/// Average system mismatch of projecting the first `L` taps of each test AIR
/// onto every model, against the full-length truth. Rows whose dimension the
/// model cannot provide are skipped with a warning.
pub fn analyze_subspace(set: &TrainingSet, tests: &[AirSample], models: &[SubspaceModel], dims: &[usize], seed: u64) -> Result<Vec<AnalysisRow>> {
    if tests.is_empty() {
        return Err(Error::invalid("no test AIRs"));
    }
    let taps = set.taps();
    let q = set.air_len();
    let ts = TestSet {
        taps,
        truth: tests.iter().map(|t| t.channels.iter().map(Vec::as_slice).collect()).collect(),
        truncated: tests.iter().map(|t| t.truncated(taps)).collect(),
    };
    if ts.truth.iter().any(|t| t.len() != set.channels()) {
        return Err(Error::invalid("test AIRs and training set have different channel counts"));
    }
    let rows = set.as_rows();
    let row = |model: String, dim: Option<usize>, k_tau: Option<usize>, mismatch_db: f64| AnalysisRow { model, dim, k_tau, mismatch_db };
    let skip = |model: &str, d: usize, why: &str| log::warn!("skipping {model} at D = {d}: {why}");

    let mut out = vec![
        row("oracle_gt".into(), None, None, ts.mean_mismatch(|_, w| Ok(w.to_vec()))?),
        row("oracle_nn".into(), None, Some(1), ts.mean_mismatch(|_, w| knn_subspace(set, w, 1)?.project(w))?),
    ];
    for model in models {
        match *model {
            SubspaceModel::Global => {
                let cap = q.min(set.len() - 1);
                for &d in dims {
                    if d > cap {
                        skip("global", d, &format!("capacity is {cap}"));
                        continue;
                    }
                    let s = fit_pca_subspace(&rows, d)?;
                    out.push(row("global".into(), Some(d), None, ts.mean_mismatch(|_, w| s.project(w))?));
                }
            }
            SubspaceModel::Mixture { clusters } => {
                let name = format!("mixture_I{clusters}");
                if clusters > set.len() {
                    log::warn!("skipping {name}: more clusters than training AIRs");
                    continue;
                }
                let km = kmeans(&rows, clusters, seed)?;
                for &d in dims {
                    if d > q {
                        skip(&name, d, &format!("ambient dimension is {q}"));
                        continue;
                    }
                    let mix = MixtureModel::from_clustering(&rows, km.clone(), d)?;
                    out.push(row(name.clone(), Some(d), None, ts.mean_mismatch(|_, w| Ok(mix.project_best(w)?.1))?));
                }
            }
            SubspaceModel::Knn { k_tau: Some(k) } => {
                let name = format!("knn_K{k}");
                if k > set.len() {
                    log::warn!("skipping {name}: more neighbours than training AIRs");
                    continue;
                }
                let mut dim = 0;
                let m = ts.mean_mismatch(|_, w| {
                    let s = knn_subspace(set, w, k)?;
                    dim = dim.max(s.dim());
                    s.project(w)
                })?;
                out.push(row(name, Some(dim), Some(k), m));
            }
            SubspaceModel::Knn { k_tau: None } => {
                for &d in dims {
                    if d + 1 > set.len() || d > q {
                        skip("knn", d, "not enough training AIRs");
                        continue;
                    }
                    let m = ts.mean_mismatch(|_, w| knn_subspace(set, w, d + 1)?.project(w))?;
                    out.push(row("knn".into(), Some(d), Some(d + 1), m));
                }
            }
        }
    }
    Ok(out)
}

/// Runs the analysis described by `cfg`.
pub fn run_analysis(cfg: &AnalysisConfig) -> Result<Vec<AnalysisRow>> {
    cfg.validate()?;
    let set = cfg.corpus()?;
    log::info!("corpus of {} AIRs ready", set.len());
    let tests = cfg.test_airs()?;
    log::info!("{} held-out AIRs ready", tests.len());
    analyze_subspace(&set, &tests, &cfg.models, &cfg.dims, cfg.seed)
}

/// CSV with columns `model, dim, k_tau, mismatch_db`.
pub fn analysis_csv(rows: &[AnalysisRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (TrainingSet, Vec<AirSample>) {
        let room = RoomSpec { dimensions: [6.0, 5.0, 3.5], t60: 0.3, sample_rate: 8000.0, rir_len: 64 };
        let g = SceneGeometry::reference();
        (generate_corpus(&room, &g, 60, 8, 5).unwrap(), draw_airs(&room, &g, 6, 6).unwrap())
    }

    fn find<'a>(rows: &'a [AnalysisRow], model: &str, dim: Option<usize>) -> &'a AnalysisRow {
        rows.iter().find(|r| r.model == model && r.dim == dim).unwrap()
    }

    #[test]
    fn full_rank_global_equals_ground_truth_oracle() {
        let (set, tests) = setup();
        let rows = analyze_subspace(&set, &tests, &[SubspaceModel::Global], &[0, 4, 16], 0).unwrap();
        let gt = find(&rows, "oracle_gt", None).mismatch_db;
        assert!((find(&rows, "global", Some(16)).mismatch_db - gt).abs() < 1e-6);
        assert!(find(&rows, "global", Some(0)).mismatch_db > find(&rows, "global", Some(4)).mismatch_db);
    }

    #[test]
    fn knn_with_one_neighbour_is_the_nn_oracle() {
        let (set, tests) = setup();
        let rows = analyze_subspace(&set, &tests, &[SubspaceModel::Knn { k_tau: None }, SubspaceModel::Knn { k_tau: Some(1) }], &[0, 3], 0).unwrap();
        let nn = find(&rows, "oracle_nn", None).mismatch_db;
        assert_eq!(find(&rows, "knn", Some(0)).mismatch_db, nn);
        assert_eq!(find(&rows, "knn_K1", Some(0)).mismatch_db, nn);
        assert!(find(&rows, "knn", Some(3)).mismatch_db < nn);
    }

    #[test]
    fn oversized_dimensions_are_skipped() {
        let (set, tests) = setup();
        let rows = analyze_subspace(&set, &tests, &[SubspaceModel::Global, SubspaceModel::Mixture { clusters: 3 }], &[2, 17], 0).unwrap();
        assert!(rows.iter().all(|r| r.dim != Some(17)));
        assert!(rows.iter().any(|r| r.model == "mixture_I3" && r.dim == Some(2)));
        let csv = String::from_utf8(analysis_csv(&rows).unwrap()).unwrap();
        assert!(csv.starts_with("model,dim,k_tau,mismatch_db\noracle_gt,,,"));
    }

    #[test]
    fn config_parses() {
        let text = r#"
seed = 1
test_count = 4
dims = [0, 2]
models = [{ kind = "global" }, { kind = "mixture", clusters = 3 }, { kind = "knn" }, { kind = "knn", k_tau = 5 }]
[frame]
filter_len = 8
frame_shift = 8
channels = 2
sample_rate = 8000.0
[room]
dimensions = [6.0, 5.0, 3.5]
t60 = 0.3
sample_rate = 8000.0
rir_len = 64
[corpus]
size = 30
"#;
        let cfg = AnalysisConfig::from_toml(text).unwrap();
        assert_eq!(cfg.models[3], SubspaceModel::Knn { k_tau: Some(5) });
        let rows = run_analysis(&cfg).unwrap();
        assert_eq!(rows.len(), 2 + 2 + 2 + 2 + 1);
        assert!(AnalysisConfig::from_toml(&text.replace("test_count", "tests")).is_err());
    }
}
