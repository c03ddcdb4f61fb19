//! System mismatch, ERLE and trial aggregation.

use serde::{Deserialize, Serialize};

use crate::dsp::check_len;
use crate::error::{Error, Result};

/// Lowest reported dB value; stands in for `-inf`.
pub const DB_FLOOR: f64 = -200.0;
/// Highest reported dB value; stands in for `+inf`.
pub const DB_CEIL: f64 = 200.0;
/// Default recursive averaging factor for ERLE, at block rate.
pub const DEFAULT_ERLE_LAMBDA: f64 = 0.99;

fn to_db(ratio: f64) -> f64 {
    if ratio.is_nan() {
        DB_CEIL
    } else {
        (10.0 * ratio.log10()).clamp(DB_FLOOR, DB_CEIL)
    }
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Channel-averaged normalised misalignment of a length-`L` estimate against
/// length-`W` truths, in dB. The estimate is zero-padded to `W`.
pub fn system_mismatch(truth: &[&[f64]], estimate: &[&[f64]]) -> Result<f64> {
    check_len(estimate.len(), truth.len())?;
    if truth.is_empty() {
        return Err(Error::invalid("no channels"));
    }
    let mut acc = 0.0;
    for (w, e) in truth.iter().zip(estimate) {
        if e.len() > w.len() {
            return Err(Error::invalid(format!("estimate length {} exceeds truth length {}", e.len(), w.len())));
        }
        let norm = energy(w);
        if norm == 0.0 {
            return Err(Error::invalid("truth channel has zero energy"));
        }
        let head: f64 = w.iter().zip(e.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        acc += (head + energy(&w[e.len()..])) / norm;
    }
    Ok(to_db(acc / truth.len() as f64))
}

/// Mismatch of a stacked estimate (`L` taps per channel) against stacked
/// truths (`W` taps per channel).
pub fn system_mismatch_stacked(truth: &[f64], truth_len: usize, estimate: &[f64], filter_len: usize) -> Result<f64> {
    if truth_len == 0 || filter_len == 0 || !truth.len().is_multiple_of(truth_len) {
        return Err(Error::invalid("stacked truth length is not a multiple of the channel length"));
    }
    check_len(estimate.len(), truth.len() / truth_len * filter_len)?;
    let t: Vec<&[f64]> = truth.chunks(truth_len).collect();
    let e: Vec<&[f64]> = estimate.chunks(filter_len).collect();
    system_mismatch(&t, &e)
}

/// Recursively averaged ERLE, one value per block.
#[derive(Debug, Clone)]
pub struct ErleTracker {
    lambda: f64,
    echo: f64,
    residual: f64,
}

impl ErleTracker {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::invalid(format!("ERLE smoothing factor {lambda} must lie in [0, 1)")));
        }
        Ok(Self { lambda, echo: 0.0, residual: 0.0 })
    }

    pub fn push(&mut self, d: &[f64], d_hat: &[f64]) -> Result<f64> {
        check_len(d_hat.len(), d.len())?;
        let res: f64 = d.iter().zip(d_hat).map(|(a, b)| (a - b) * (a - b)).sum();
        self.echo = self.lambda * self.echo + (1.0 - self.lambda) * energy(d);
        self.residual = self.lambda * self.residual + (1.0 - self.lambda) * res;
        Ok(if self.residual == 0.0 { DB_CEIL } else { to_db(self.echo / self.residual) })
    }
}

/// ERLE over aligned streams cut into blocks of `block_len` samples.
pub fn erle(d: &[f64], d_hat: &[f64], block_len: usize, lambda: f64) -> Result<Vec<f64>> {
    check_len(d_hat.len(), d.len())?;
    if block_len == 0 {
        return Err(Error::invalid("block length must be >= 1"));
    }
    let mut tracker = ErleTracker::new(lambda)?;
    d.chunks(block_len).zip(d_hat.chunks(block_len)).map(|(a, b)| tracker.push(a, b)).collect()
}

/// Per-block curves of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub mismatch_db: Vec<f64>,
    pub erle_db: Vec<f64>,
    pub block_times: Vec<f64>,
    pub seed: u64,
}

impl TrialLog {
    pub fn new(mismatch_db: Vec<f64>, erle_db: Vec<f64>, block_times: Vec<f64>, seed: u64) -> Result<Self> {
        check_len(erle_db.len(), mismatch_db.len())?;
        check_len(block_times.len(), mismatch_db.len())?;
        Ok(Self { mismatch_db, erle_db, block_times, seed })
    }

    pub fn len(&self) -> usize {
        self.mismatch_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mismatch_db.is_empty()
    }
}

/// How dB curves are averaged over trials.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Arithmetic mean of the dB values.
    #[default]
    Db,
    /// Mean of the linear power ratios, converted back to dB.
    Linear,
}

/// Trial-averaged curves.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mismatch_db: Vec<f64>,
    pub erle_db: Vec<f64>,
    pub block_times: Vec<f64>,
    pub trials: usize,
}

pub fn aggregate_trials(logs: &[TrialLog], averaging: Averaging) -> Result<Aggregate> {
    let first = logs.first().ok_or_else(|| Error::invalid("no trials to aggregate"))?;
    for log in logs {
        check_len(log.len(), first.len())?;
    }
    let n = logs.len() as f64;
    let mean = |pick: fn(&TrialLog) -> &[f64], k: usize| -> f64 {
        match averaging {
            Averaging::Db => logs.iter().map(|l| pick(l)[k]).sum::<f64>() / n,
            Averaging::Linear => to_db(logs.iter().map(|l| 10f64.powf(pick(l)[k] / 10.0)).sum::<f64>() / n),
        }
    };
    Ok(Aggregate {
        mismatch_db: (0..first.len()).map(|k| mean(|l| &l.mismatch_db, k)).collect(),
        erle_db: (0..first.len()).map(|k| mean(|l| &l.erle_db, k)).collect(),
        block_times: first.block_times.clone(),
        trials: logs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mismatch_hand_values() {
        let t = [1.0, 0.5, -0.25, 0.1];
        assert_eq!(system_mismatch(&[&t], &[&[0.0, 0.0]]).unwrap(), 0.0);
        let short = [1.0, 0.5, 0.0, 0.0];
        assert_eq!(system_mismatch(&[&short], &[&[1.0, 0.5]]).unwrap(), DB_FLOOR);
        let d0 = [1.0, 0.0, 0.0, 0.0];
        let d1 = [0.0, 1.0, 0.0, 0.0];
        let got = system_mismatch(&[&d0, &d1], &[&[1.0, 0.0], &[0.0, 0.0]]).unwrap();
        assert!((got - 10.0 * 0.5f64.log10()).abs() < 1e-12);
        assert!((got + 3.0103).abs() < 1e-4);
    }

    #[test]
    fn mismatch_errors() {
        assert!(system_mismatch(&[&[0.0, 0.0]], &[&[1.0]]).is_err());
        assert!(system_mismatch(&[&[1.0]], &[&[1.0, 0.0]]).is_err());
        assert!(system_mismatch(&[&[1.0]], &[]).is_err());
        assert!(system_mismatch_stacked(&[1.0, 0.0, 1.0], 2, &[1.0], 1).is_err());
    }

    #[test]
    fn stacked_matches_channel_form() {
        let truth = [1.0, 0.5, 0.2, -1.0, 0.1, 0.3];
        let est = [0.9, 0.4, -0.8, 0.0];
        let a = system_mismatch_stacked(&truth, 3, &est, 2).unwrap();
        let b = system_mismatch(&[&truth[..3], &truth[3..]], &[&est[..2], &est[2..]]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn erle_hand_values() {
        let d: Vec<f64> = (0..64).map(|k| (k as f64 * 0.3).sin()).collect();
        assert!(erle(&d, &d, 8, 0.99).unwrap().iter().all(|&v| v == DB_CEIL));
        assert!(erle(&d, &[0.0; 64], 8, 0.99).unwrap().iter().all(|&v| v.abs() < 1e-12));
        let half: Vec<f64> = d.iter().map(|v| v / 2.0).collect();
        let e = erle(&d, &half, 8, 0.99).unwrap();
        assert!((e.last().unwrap() - 6.0206).abs() < 1e-4);
        assert!(ErleTracker::new(1.0).is_err());
    }

    #[test]
    fn erle_zero_echo_is_floor() {
        let mut t = ErleTracker::new(0.5).unwrap();
        assert_eq!(t.push(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), DB_FLOOR);
    }

    fn constant(v: f64, n: usize, seed: u64) -> TrialLog {
        TrialLog::new(vec![v; n], vec![-v; n], (0..n).map(|k| k as f64).collect(), seed).unwrap()
    }

    #[test]
    fn aggregation() {
        let one = constant(-7.0, 5, 0);
        let agg = aggregate_trials(std::slice::from_ref(&one), Averaging::Db).unwrap();
        assert_eq!(agg.mismatch_db, one.mismatch_db);
        assert_eq!(agg.erle_db, one.erle_db);
        let two = aggregate_trials(&[constant(-10.0, 3, 0), constant(-20.0, 3, 1)], Averaging::Db).unwrap();
        assert_eq!(two.mismatch_db, vec![-15.0; 3]);
        let lin = aggregate_trials(&[constant(-10.0, 3, 0), constant(-20.0, 3, 1)], Averaging::Linear).unwrap();
        assert!((lin.mismatch_db[0] - 10.0 * 0.055f64.log10()).abs() < 1e-12);
        assert!(aggregate_trials(&[], Averaging::Db).is_err());
        assert!(aggregate_trials(&[constant(0.0, 3, 0), constant(0.0, 4, 0)], Averaging::Db).is_err());
    }

    #[test]
    fn aggregation_matches_summation_oracle() {
        let logs: Vec<TrialLog> = (0..50)
            .map(|t| {
                let m = (0..10).map(|k| -(t as f64) * 0.25 - k as f64).collect();
                let e = (0..10).map(|k| (t * k) as f64 * 0.125).collect();
                TrialLog::new(m, e, (0..10).map(|k| k as f64).collect(), t as u64).unwrap()
            })
            .collect();
        let agg = aggregate_trials(&logs, Averaging::Db).unwrap();
        for k in 0..10 {
            let mut s = 0.0;
            for l in &logs {
                s += l.mismatch_db[k];
            }
            assert_eq!(agg.mismatch_db[k], s / 50.0);
        }
    }

    proptest! {
        #[test]
        fn mismatch_is_scale_invariant(
            truth in proptest::collection::vec(-1.0f64..1.0, 8),
            est in proptest::collection::vec(-1.0f64..1.0, 4),
            c in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
        ) {
            prop_assume!(truth.iter().any(|v| *v != 0.0));
            let a = system_mismatch(&[&truth], &[&est]).unwrap();
            let ts: Vec<f64> = truth.iter().map(|v| v * c).collect();
            let es: Vec<f64> = est.iter().map(|v| v * c).collect();
            let b = system_mismatch(&[&ts], &[&es]).unwrap();
            prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0) || (a == DB_FLOOR && b == DB_FLOOR));
        }

        #[test]
        fn erle_is_scale_invariant(
            d in proptest::collection::vec(-1.0f64..1.0, 32),
            dh in proptest::collection::vec(-1.0f64..1.0, 32),
            c in 0.01f64..100.0,
        ) {
            let a = erle(&d, &dh, 4, 0.9).unwrap();
            let ds: Vec<f64> = d.iter().map(|v| v * c).collect();
            let hs: Vec<f64> = dh.iter().map(|v| v * c).collect();
            let b = erle(&ds, &hs, 4, 0.9).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
