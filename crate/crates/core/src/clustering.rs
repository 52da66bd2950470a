//! Round-size clustering: windowed trade frequencies around multiples of
//! 100 and 500 base units and a one-sided paired t-test of the round
//! frequency against the most frequent unrounded integer size.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, insufficient, Result};
use crate::fixed::Amount;
use crate::stats::{mean, sample_sd, t_sf};
use crate::trade::{to_base_units, PairSpec};

/// Reported p-value bound for a zero-variance positive difference.
pub const DEGENERATE_P: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeBin {
    /// Trades with size in [i, i + 1) base units.
    pub total: u64,
    /// Trades with size exactly i base units.
    pub exact: u64,
}

/// Trade sizes binned by integer base units, keeping exact-integer counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeHistogram {
    bins: BTreeMap<u64, SizeBin>,
    count: u64,
}

impl SizeHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_amounts<I: IntoIterator<Item = Amount>>(amounts: I, spec: &PairSpec) -> Self {
        let mut h = Self::new();
        for a in amounts {
            h.add(a, spec);
        }
        h
    }

    pub fn add(&mut self, amount: Amount, spec: &PairSpec) {
        let b = to_base_units(amount, spec);
        let bin = self.bins.entry(b.whole()).or_default();
        bin.total += 1;
        if b.is_integer() {
            bin.exact += 1;
        }
        self.count += 1;
    }

    pub fn merge(&mut self, other: &SizeHistogram) {
        for (k, b) in &other.bins {
            let e = self.bins.entry(*k).or_default();
            e.total += b.total;
            e.exact += b.exact;
        }
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn bin(&self, whole: u64) -> SizeBin {
        self.bins.get(&whole).copied().unwrap_or_default()
    }

    /// Nearest-rank percentile of sizes, truncated to whole base units.
    pub fn percentile_floor(&self, q: f64) -> Option<u64> {
        if self.count == 0 {
            return None;
        }
        let rank = ((q * self.count as f64).ceil() as u64).clamp(1, self.count);
        let mut seen = 0;
        for (k, b) in &self.bins {
            seen += b.total;
            if seen >= rank {
                return Some(*k);
            }
        }
        self.bins.keys().next_back().copied()
    }

    /// Trades with size in [lo, hi) base units.
    pub fn count_in(&self, lo: u64, hi: u64) -> u64 {
        self.bins.range(lo..hi).map(|(_, b)| b.total).sum()
    }

    /// CSV `size_base_units,count,is_round_bin` with 1-unit bins over [lo, hi);
    /// bins at multiples of `highlight` are flagged.
    pub fn write_csv<W: Write>(
        &self,
        mut out: W,
        lo: u64,
        hi: u64,
        highlight: u64,
    ) -> std::io::Result<()> {
        writeln!(out, "size_base_units,count,is_round_bin")?;
        for size in lo..hi {
            let round = highlight > 0 && size > 0 && size % highlight == 0;
            writeln!(out, "{size},{},{}", self.bin(size).total, u8::from(round))?;
        }
        Ok(())
    }
}

/// Frequencies inside one observation window `[center - radius, center + radius)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFrequencies {
    /// All trades in the window, including non-integer sizes.
    pub count: u64,
    /// Frequency of each integer size present in the window.
    pub frequency: BTreeMap<u64, f64>,
}

pub fn window_frequencies(
    hist: &SizeHistogram,
    center: u64,
    radius: u64,
) -> Result<Option<WindowFrequencies>> {
    if center <= radius {
        return Err(domain(format!(
            "window center {center} must exceed radius {radius}"
        )));
    }
    let (lo, hi) = (center - radius, center + radius);
    let count = hist.count_in(lo, hi);
    if count == 0 {
        return Ok(None);
    }
    let frequency = hist
        .bins
        .range(lo..hi)
        .filter(|(_, b)| b.exact > 0)
        .map(|(k, b)| (*k, b.exact as f64 / count as f64))
        .collect();
    Ok(Some(WindowFrequencies { count, frequency }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPair {
    pub center: u64,
    pub round_freq: f64,
    pub max_unrounded_freq: f64,
    pub count: u64,
}

impl WindowPair {
    pub fn difference(&self) -> f64 {
        self.round_freq - self.max_unrounded_freq
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Minimum trades in a window for it to be used.
    pub min_support: u64,
    /// Minimum surviving windows for the test to run.
    pub min_windows: usize,
    /// Percentile of trade size bounding the window centers.
    pub cap_percentile: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            min_support: 50,
            min_windows: 10,
            cap_percentile: 0.99,
        }
    }
}

/// Window step and its radius: 100 -> 50, 500 -> 100.
pub fn radius_for_step(step: u64) -> Result<u64> {
    match step {
        100 => Ok(50),
        500 => Ok(100),
        other => Err(domain(format!(
            "clustering step must be 100 or 500, got {other}"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPairs {
    pub step: u64,
    pub radius: u64,
    pub size_cap: u64,
    pub pairs: Vec<WindowPair>,
    /// Fewer than `min_windows` windows survived; the t-test is not run.
    pub insufficient_windows: bool,
}

/// One window pair per center `step, 2*step, ...` up to the size cap.
///
/// The unrounded competitor set excludes every multiple of 100 base units,
/// so the 500-step windows never compare a round size against another round
/// size.
pub fn cluster_pairs(
    hist: &SizeHistogram,
    step: u64,
    config: &ClusterConfig,
) -> Result<ClusterPairs> {
    let radius = radius_for_step(step)?;
    let size_cap = hist.percentile_floor(config.cap_percentile).unwrap_or(0);
    let mut pairs = Vec::new();
    let mut center = step;
    while center <= size_cap {
        if let Some(w) = window_frequencies(hist, center, radius)? {
            if w.count >= config.min_support {
                let round_freq = w.frequency.get(&center).copied().unwrap_or(0.0);
                let max_unrounded_freq = w
                    .frequency
                    .iter()
                    .filter(|(size, _)| *size % 100 != 0)
                    .map(|(_, f)| *f)
                    .fold(0.0, f64::max);
                pairs.push(WindowPair {
                    center,
                    round_freq,
                    max_unrounded_freq,
                    count: w.count,
                });
            }
        }
        center += step;
    }
    Ok(ClusterPairs {
        step,
        radius,
        size_cap,
        insufficient_windows: pairs.len() < config.min_windows,
        pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterTestResult {
    pub step: u64,
    pub n_pairs: usize,
    pub mean_difference: f64,
    pub t_statistic: f64,
    /// One-sided p-value for H1: mean difference > 0.
    pub p_value: f64,
    pub alpha: f64,
    /// Clustering detected (p < alpha).
    pub clustered: bool,
}

impl ClusterTestResult {
    /// P(T <= t): small when round sizes are *less* frequent than the best
    /// unrounded competitor, i.e. evidence against authentic clustering.
    pub fn conformity_p(&self) -> f64 {
        if self.t_statistic.is_nan() {
            return 1.0;
        }
        1.0 - t_sf(self.t_statistic, (self.n_pairs - 1) as f64)
    }
}

/// One-sample t-test on d_k = round_freq - max_unrounded_freq, H1: mean > 0.
pub fn clustering_t_test(pairs: &[WindowPair], step: u64, alpha: f64) -> Result<ClusterTestResult> {
    if pairs.len() < 2 {
        return Err(insufficient(format!(
            "t-test needs at least 2 window pairs, got {}",
            pairs.len()
        )));
    }
    let d: Vec<f64> = pairs.iter().map(WindowPair::difference).collect();
    let m = mean(&d);
    let sd = sample_sd(&d);
    let df = (d.len() - 1) as f64;
    let (t, p) = if sd == 0.0 || sd <= 1e-15 * m.abs() {
        if m > 0.0 {
            (f64::INFINITY, 0.0)
        } else if m < 0.0 {
            (f64::NEG_INFINITY, 1.0)
        } else {
            (0.0, 1.0)
        }
    } else {
        let t = m / (sd / (d.len() as f64).sqrt());
        (t, t_sf(t, df))
    };
    Ok(ClusterTestResult {
        step,
        n_pairs: d.len(),
        mean_difference: m,
        t_statistic: t,
        p_value: p,
        alpha,
        clustered: p < alpha,
    })
}
