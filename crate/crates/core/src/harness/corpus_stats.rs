use std::fmt;

use crate::subspace::TrainingSet;

/// Summary of a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub count: usize,
    pub channels: usize,
    pub taps: usize,
    pub sample_rate: f64,
    pub seed: u64,
    /// Energy of the stacked vectors: min, mean, max.
    pub energy: [f64; 3],
    /// Index of the strongest tap, per channel: min, mean, max.
    pub peak_tap: [f64; 3],
}

fn min_mean_max(v: impl Iterator<Item = f64>) -> [f64; 3] {
    let (mut lo, mut hi, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for x in v {
        lo = lo.min(x);
        hi = hi.max(x);
        sum += x;
        n += 1;
    }
    [lo, sum / n.max(1) as f64, hi]
}

impl CorpusStats {
    pub fn of(set: &TrainingSet) -> Self {
        let energy = min_mean_max(set.iter().map(|v| v.iter().map(|x| x * x).sum()));
        let peak_tap = min_mean_max(set.iter().flat_map(|v| {
            v.chunks(set.taps()).map(|ch| {
                ch.iter().enumerate().fold((0, 0.0f64), |b, (i, x)| if x.abs() > b.1 { (i, x.abs()) } else { b }).0 as f64
            })
        }));
        Self {
            count: set.len(),
            channels: set.channels(),
            taps: set.taps(),
            sample_rate: set.sample_rate(),
            seed: set.seed(),
            energy,
            peak_tap,
        }
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "AIRs:        {}", self.count)?;
        writeln!(f, "channels:    {}", self.channels)?;
        writeln!(f, "taps:        {}", self.taps)?;
        writeln!(f, "sample rate: {} Hz", self.sample_rate)?;
        writeln!(f, "seed:        {}", self.seed)?;
        let [a, b, c] = self.energy;
        writeln!(f, "energy:      min {a:.4e}  mean {b:.4e}  max {c:.4e}")?;
        let [a, b, c] = self.peak_tap;
        write!(f, "peak tap:    min {a:.0}  mean {b:.1}  max {c:.0}")
    }
}
