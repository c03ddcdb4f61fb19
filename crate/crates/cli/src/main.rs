//! `kfasp`: generate training corpora, analyse subspace models and run
//! system identification experiments from TOML configs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use kfasp_core::harness::{analysis_csv, run_analysis, run_experiment, write_outputs, CorpusConfig, CorpusStats};
use kfasp_core::rir::generate_corpus;
use kfasp_core::{AnalysisConfig, ExperimentConfig, FrameConfig, RoomSpec, SceneGeometry, TrainingSet};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "kfasp", version, about)]
struct Cli {
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment or analysis config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed of the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a training corpus and write it in the binary corpus format.
    GenRirs {
        #[command(flatten)]
        common: Common,
        /// Output file; defaults to `corpus.path` of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Project held-out AIRs onto subspace models and tabulate the mismatch.
    AnalyzeSubspace {
        #[command(flatten)]
        common: Common,
        /// Output directory for `analysis.csv`.
        #[arg(long, default_value = "analysis")]
        out: PathBuf,
    },
    /// Run every variant of an experiment over all trials.
    Run {
        #[command(flatten)]
        common: Common,
        /// Output directory for the per-variant CSVs and the manifest.
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Print summary statistics of a corpus.
    Inspect {
        /// Corpus file written by `gen-rirs`.
        corpus: Option<PathBuf>,
        /// Config naming the corpus; it is simulated when no path is set.
        #[arg(long, conflicts_with = "corpus")]
        config: Option<PathBuf>,
        #[arg(long, requires = "config")]
        seed: Option<u64>,
    },
}

/// The corpus-related sections shared by experiment and analysis configs.
#[derive(Deserialize)]
struct CorpusSection {
    seed: u64,
    frame: FrameConfig,
    room: RoomSpec,
    #[serde(default = "SceneGeometry::reference")]
    geometry: SceneGeometry,
    corpus: CorpusConfig,
}

impl CorpusSection {
    fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut s: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(seed) = seed {
            s.seed = seed;
        }
        if let Some(p) = s.corpus.path.as_mut().filter(|p| p.is_relative()) {
            *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
        }
        Ok(s)
    }

    fn generate(&self) -> Result<TrainingSet> {
        let seed = self.corpus.seed.unwrap_or(self.seed);
        Ok(generate_corpus(&self.room, &self.geometry, self.corpus.size, self.frame.filter_len, seed)?)
    }
}

fn gen_rirs(common: &Common, out: Option<&Path>) -> Result<()> {
    let section = CorpusSection::load(&common.config, common.seed)?;
    let Some(out) = out.or(section.corpus.path.as_deref()) else {
        bail!("no output path: pass --out or set corpus.path in the config");
    };
    let set = section.generate()?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    set.save(out)?;
    println!("wrote {} AIRs ({} channels x {} taps) to {}", set.len(), set.channels(), set.taps(), out.display());
    Ok(())
}

fn analyze(common: &Common, out: &Path) -> Result<()> {
    let mut cfg = AnalysisConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let rows = run_analysis(&cfg)?;
    for r in &rows {
        println!("{r}");
    }
    std::fs::create_dir_all(out)?;
    let path = out.join("analysis.csv");
    std::fs::write(&path, analysis_csv(&rows)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(common: &Common, out: &Path) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let result = run_experiment(&cfg, None)?;
    for v in &result.variants {
        let a = &v.aggregate;
        let last = |c: &[f64]| c.last().copied().unwrap_or(f64::NAN);
        println!("{:<16} final mismatch {:>8.2} dB  final ERLE {:>8.2} dB", v.name, last(&a.mismatch_db), last(&a.erle_db));
    }
    for path in write_outputs(&result, out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn inspect(corpus: Option<&Path>, config: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let set = match (corpus, config) {
        (Some(p), _) => TrainingSet::load(p)?,
        (None, Some(c)) => {
            let section = CorpusSection::load(c, seed)?;
            match &section.corpus.path {
                Some(p) => TrainingSet::load(p)?,
                None => section.generate()?,
            }
        }
        (None, None) => bail!("pass a corpus file or --config"),
    };
    println!("{}", CorpusStats::of(&set));
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::GenRirs { common, out } => gen_rirs(common, out.as_deref()),
        Command::AnalyzeSubspace { common, out } => analyze(common, out),
        Command::Run { common, out } => run(common, out),
        Command::Inspect { corpus, config, seed } => inspect(corpus.as_deref(), config.as_deref(), *seed),
    }
}
