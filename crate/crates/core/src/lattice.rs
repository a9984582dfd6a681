//! Probability vectors on a window of the integers.

use std::io::Write;

use serde::{Deserialize, Serialize};

/// A distribution on `{offset, offset + 1, ..., offset + len - 1}`;
/// everything outside the window has probability zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeDistribution {
    pub offset: i64,
    pub probs: Vec<f64>,
}

/// JSON form of a distribution together with the run it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRecord {
    pub offset: i64,
    pub probs: Vec<f64>,
    pub n: u64,
    pub model: String,
}

impl LatticeDistribution {
    pub fn new(offset: i64, probs: Vec<f64>) -> Self {
        LatticeDistribution { offset, probs }
    }

    pub fn point_mass(at: i64) -> Self {
        LatticeDistribution::new(at, vec![1.0])
    }

    /// Uniform law on `lo..=hi`.
    pub fn uniform(lo: i64, hi: i64) -> Self {
        let m = (hi - lo + 1) as usize;
        LatticeDistribution::new(lo, vec![1.0 / m as f64; m])
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// First state of the window.
    pub fn lo(&self) -> i64 {
        self.offset
    }

    /// Last state of the window.
    pub fn hi(&self) -> i64 {
        self.offset + self.probs.len() as i64 - 1
    }

    /// Probability of state `k` (zero outside the window).
    pub fn get(&self, k: i64) -> f64 {
        let idx = k - self.offset;
        if idx < 0 || idx >= self.probs.len() as i64 {
            0.0
        } else {
            self.probs[idx as usize]
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Iterator over `(state, probability)`.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(move |(idx, &p)| (self.offset + idx as i64, p))
    }

    /// The law of `X + by` for `X` with this law.
    pub fn shifted(&self, by: i64) -> Self {
        LatticeDistribution::new(self.offset + by, self.probs.clone())
    }

    pub fn expectation(&self, f: impl Fn(i64) -> f64) -> f64 {
        self.iter().map(|(k, p)| p * f(k)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.expectation(|k| k as f64)
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    /// Rescale so the probabilities sum to one.
    pub fn normalized(mut self) -> Self {
        let total = self.total_mass();
        if total > 0.0 {
            self.probs.iter_mut().for_each(|p| *p /= total);
        }
        self
    }

    /// `P(X < k)`.
    pub fn mass_below(&self, k: i64) -> f64 {
        self.iter().filter(|&(s, _)| s < k).map(|(_, p)| p).sum()
    }

    /// Write `state,prob` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["state", "prob"])?;
        for (k, p) in self.iter() {
            w.write_record([k.to_string(), format!("{p:e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_record(&self, n: u64, model: &str) -> DistributionRecord {
        DistributionRecord {
            offset: self.offset,
            probs: self.probs.clone(),
            n,
            model: model.to_string(),
        }
    }
}

impl From<DistributionRecord> for LatticeDistribution {
    fn from(rec: DistributionRecord) -> Self {
        LatticeDistribution::new(rec.offset, rec.probs)
    }
}
