//! Fixed-bin histograms shared by reports, score sliders and overlays.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    /// Bins equally spaced in `ln x` rather than `x`; requires `lo > 0`.
    #[serde(default)]
    pub log: bool,
}

impl BinSpec {
    pub fn linear(lo: f64, hi: f64, bins: usize) -> Self {
        BinSpec { lo, hi, bins, log: false }
    }

    pub fn logarithmic(lo: f64, hi: f64, bins: usize) -> Self {
        BinSpec { lo, hi, bins, log: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::param("bins", "must be >= 1"));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::param("range", "need finite lo < hi"));
        }
        if self.log && self.lo <= 0.0 {
            return Err(Error::param("lo", "log bins need lo > 0"));
        }
        Ok(())
    }

    fn scale(&self, x: f64) -> f64 {
        if self.log {
            x.ln()
        } else {
            x
        }
    }

    fn unscale(&self, x: f64) -> f64 {
        if self.log {
            x.exp()
        } else {
            x
        }
    }

    /// `bins + 1` bin edges.
    pub fn edges(&self) -> Vec<f64> {
        let (a, b) = (self.scale(self.lo), self.scale(self.hi));
        (0..=self.bins)
            .map(|i| {
                if i == self.bins {
                    self.hi
                } else if i == 0 {
                    self.lo
                } else {
                    self.unscale(a + (b - a) * i as f64 / self.bins as f64)
                }
            })
            .collect()
    }

    /// Bin of `x`; values outside the range land in the first or last bin.
    pub fn bin(&self, x: f64) -> usize {
        if x.is_nan() || x <= self.lo {
            return 0;
        }
        if x >= self.hi {
            return self.bins - 1;
        }
        let (a, b) = (self.scale(self.lo), self.scale(self.hi));
        let i = ((self.scale(x) - a) / (b - a) * self.bins as f64).floor() as usize;
        i.min(self.bins - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub spec: BinSpec,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    pub fn new(spec: BinSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Histogram {
            spec,
            edges: spec.edges(),
            counts: vec![0; spec.bins],
            total: 0,
        })
    }

    pub fn from_values(spec: BinSpec, values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut h = Self::new(spec)?;
        for v in values {
            h.add(v);
        }
        Ok(h)
    }

    pub fn add(&mut self, x: f64) {
        self.counts[self.spec.bin(x)] += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::param("spec", "cannot merge histograms with different bins"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }

    /// Moves each bin's count to the bin of `spec` containing its midpoint.
    pub fn rebin(&self, spec: BinSpec) -> Result<Histogram> {
        let mut out = Histogram::new(spec)?;
        for (i, &c) in self.counts.iter().enumerate() {
            let mid = if self.spec.log {
                (self.edges[i] * self.edges[i + 1]).sqrt()
            } else {
                (self.edges[i] + self.edges[i + 1]) / 2.0
            };
            out.counts[spec.bin(mid)] += c;
        }
        out.total = self.total;
        Ok(out)
    }
}

/// The coarser of several specs: fewest bins, ties broken by the widest range.
pub fn coarsest(specs: &[BinSpec]) -> Option<BinSpec> {
    specs
        .iter()
        .copied()
        .min_by(|a, b| a.bins.cmp(&b.bins).then((b.hi - b.lo).total_cmp(&(a.hi - a.lo))))
}

/// Location summary attached to histograms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: u64,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    /// `None` for an empty slice. The median of an even count is the mean
    /// of the two middle values.
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        Some(Stats {
            n: n as u64,
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            min: v[0],
            max: v[n - 1],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_sum_and_clamping() {
        let h = Histogram::from_values(BinSpec::linear(0.0, 1.0, 10), [-1.0, 0.0, 0.05, 0.95, 1.0, 7.0]).unwrap();
        assert_eq!(h.total, 6);
        assert_eq!(h.counts.iter().sum::<u64>(), 6);
        assert_eq!(h.counts[0], 3);
        assert_eq!(h.counts[9], 3);
        assert_eq!(h.edges.len(), 11);
    }

    #[test]
    fn log_bins() {
        let s = BinSpec::logarithmic(1.0, 1e4, 4);
        let e = s.edges();
        assert!((e[1] - 10.0).abs() < 1e-9 && (e[2] - 100.0).abs() < 1e-9);
        assert_eq!(s.bin(50.0), 1);
        assert_eq!(s.bin(f64::INFINITY), 3);
        assert!(BinSpec::logarithmic(0.0, 1.0, 3).validate().is_err());
    }

    #[test]
    fn rebin_preserves_total() {
        let fine = Histogram::from_values(BinSpec::linear(0.0, 1.0, 20), (0..100).map(|i| i as f64 / 100.0)).unwrap();
        let coarse = fine.rebin(BinSpec::linear(0.0, 1.0, 5)).unwrap();
        assert_eq!(coarse.counts, vec![20; 5]);
        assert_eq!(coarsest(&[fine.spec, coarse.spec]), Some(coarse.spec));
    }

    #[test]
    fn stats_median() {
        let s = Stats::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.median, s.mean, s.min, s.max), (2.5, 2.5, 1.0, 4.0));
        assert_eq!(Stats::of(&[3.0, 1.0, 2.0]).unwrap().median, 2.0);
        assert!(Stats::of(&[]).is_none());
    }
}
