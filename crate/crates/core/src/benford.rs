//! First-digit (Benford) conformity tests and the Benford-counterfactual
//! wash-volume lower bound.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, insufficient, Result};
use crate::fixed::Amount;
use crate::stats::chi2_sf;
use crate::trade::first_significant_digit;

/// P(first digit = d) = log10(1 + 1/d), indexed by d - 1.
pub fn benford_expected() -> [f64; 9] {
    std::array::from_fn(|i| (1.0 + 1.0 / (i as f64 + 1.0)).log10())
}

/// Trade counts and volume by first significant digit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigitHistogram {
    /// `counts[d - 1]` trades with leading digit `d`.
    pub counts: [u64; 9],
    /// Summed sizes per digit, in sub-units.
    pub volume: [u128; 9],
}

impl DigitHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, amount: Amount) -> Result<()> {
        let d = first_significant_digit(amount)? as usize;
        self.counts[d - 1] += 1;
        self.volume[d - 1] += u128::from(amount.sub_units());
        Ok(())
    }

    pub fn merge(&mut self, other: &DigitHistogram) {
        for i in 0..9 {
            self.counts[i] += other.counts[i];
            self.volume[i] += other.volume[i];
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn total_volume(&self) -> u128 {
        self.volume.iter().sum()
    }

    pub fn frequencies(&self) -> [f64; 9] {
        let n = self.total() as f64;
        std::array::from_fn(|i| {
            if n > 0.0 {
                self.counts[i] as f64 / n
            } else {
                0.0
            }
        })
    }

    /// Mean trade size per digit in sub-units; zero for empty digits.
    pub fn mean_size(&self) -> [f64; 9] {
        std::array::from_fn(|i| {
            if self.counts[i] == 0 {
                0.0
            } else {
                self.volume[i] as f64 / self.counts[i] as f64
            }
        })
    }

    /// CSV `digit,count,frequency,benford_expected`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "digit,count,frequency,benford_expected")?;
        let freq = self.frequencies();
        for (i, p) in benford_expected().iter().enumerate() {
            writeln!(out, "{},{},{:.6},{:.6}", i + 1, self.counts[i], freq[i], p)?;
        }
        Ok(())
    }
}

/// Histogram over a batch of amounts; fails on an empty batch.
pub fn digit_histogram<I: IntoIterator<Item = Amount>>(amounts: I) -> Result<DigitHistogram> {
    let mut hist = DigitHistogram::new();
    for a in amounts {
        hist.add(a)?;
    }
    if hist.total() == 0 {
        return Err(insufficient("empty trade group"));
    }
    Ok(hist)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquaredResult {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
    pub effective_n: f64,
    pub alpha: f64,
    pub reject: bool,
}

impl ChiSquaredResult {
    pub(crate) fn new(statistic: f64, df: u32, effective_n: f64, alpha: f64) -> Self {
        let p_value = chi2_sf(statistic, f64::from(df));
        ChiSquaredResult {
            statistic,
            df,
            p_value,
            effective_n,
            alpha,
            reject: p_value < alpha,
        }
    }
}

/// Pearson χ² of observed frequencies against expected probabilities,
/// with both scaled to `effective_n` trades.
pub fn pearson_chi_squared(observed: &[f64], expected: &[f64], effective_n: f64) -> f64 {
    observed
        .iter()
        .zip(expected)
        .map(|(o, e)| {
            let (o, e) = (effective_n * o, effective_n * e);
            (o - e) * (o - e) / e
        })
        .sum()
}

/// Pearson χ² test of the digit histogram against Benford's law (df = 8).
///
/// `effective_n` rescales the statistic to a fixed sample size; `None`
/// uses the raw trade count.
pub fn chi_squared_benford(
    hist: &DigitHistogram,
    effective_n: Option<f64>,
    alpha: f64,
) -> Result<ChiSquaredResult> {
    let n = hist.total();
    if n == 0 {
        return Err(insufficient("empty digit histogram"));
    }
    let n_eff = match effective_n {
        Some(v) if !(v > 0.0 && v.is_finite()) => {
            return Err(domain(format!("effective N must be positive, got {v}")))
        }
        Some(v) => v,
        None => n as f64,
    };
    let stat = pearson_chi_squared(&hist.frequencies(), &benford_expected(), n_eff);
    Ok(ChiSquaredResult::new(stat, 8, n_eff, alpha))
}

/// Lower-bound wash fraction implied by Benford's law.
///
/// Each digit X anchors a counterfactual tape with `counts[X] / P(X)` trades
/// spread over digits in Benford proportion, each digit at its observed mean
/// size. The shortfall of that volume against the actual volume, floored at
/// zero, is the wash share for anchor X; the median over the nine anchors is
/// returned.
pub fn counterfactual_wash_benford(hist: &DigitHistogram) -> Result<f64> {
    if hist.counts.contains(&0) {
        return Err(domain(
            "degenerate histogram: every digit needs at least one trade",
        ));
    }
    let p = benford_expected();
    let mean = hist.mean_size();
    let actual = hist.total_volume() as f64;
    let per_trade: f64 = p.iter().zip(&mean).map(|(pd, m)| pd * m).sum();
    let mut diffs: Vec<f64> = (0..9)
        .map(|x| {
            let n_x = hist.counts[x] as f64 / p[x];
            let v_x = n_x * per_trade;
            ((actual - v_x) / actual).max(0.0)
        })
        .collect();
    diffs.sort_by(f64::total_cmp);
    Ok(diffs[4])
}
