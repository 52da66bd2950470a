//! Streaming per-group aggregates.
//!
//! A [`GroupSummary`] holds everything the detectors need for one
//! `(exchange, pair)` group without retaining the raw trades: digit counts,
//! the integer size histogram, roundness levels, weekly volume sums and a
//! bounded reservoir of the largest sizes for tail fitting.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::benford::DigitHistogram;
use crate::clustering::SizeHistogram;
use crate::error::{insufficient, Error, Result};
use crate::fixed::{Amount, Price, POW10, SCALE};
use crate::ingest::{week_index, TradeDataset, WeeklyVolumeSplit};
use crate::tail::{nearest_rank, TailConfig, TailSample};
use crate::trade::{is_round, roundness_level, PairRegistry, PairSpec, RoundnessLevel, Trade};

pub const DEFAULT_RESERVOIR: usize = 1_000_000;

/// Counts of trades at each roundness level, ordered coarse to fine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundnessCounts(pub [u64; 8]);

impl RoundnessCounts {
    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn frequencies(&self) -> [f64; 8] {
        let n = self.total() as f64;
        std::array::from_fn(|i| if n > 0.0 { self.0[i] as f64 / n } else { 0.0 })
    }

    pub fn add(&mut self, level: RoundnessLevel) {
        self.0[level.index()] += 1;
    }

    pub fn merge(&mut self, other: &RoundnessCounts) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroupSummary {
    pub exchange: String,
    pub pair: String,
    pub spec: PairSpec,
    pub count: u64,
    pub round_count: u64,
    /// Total amount, sub-units.
    pub volume: u128,
    pub digits: DigitHistogram,
    pub digits_unrounded: DigitHistogram,
    pub sizes: SizeHistogram,
    pub roundness: RoundnessCounts,
    pub weekly: BTreeMap<i64, WeeklyVolumeSplit>,
    pub first_ts: Option<i64>,
    pub last_ts: Option<i64>,
    top: BinaryHeap<Reverse<u64>>,
    top_unrounded: BinaryHeap<Reverse<u64>>,
    capacity: usize,
}

impl GroupSummary {
    pub fn new(exchange: &str, pair: &str, spec: PairSpec, reservoir: usize) -> Self {
        GroupSummary {
            exchange: exchange.to_string(),
            pair: pair.to_string(),
            spec,
            count: 0,
            round_count: 0,
            volume: 0,
            digits: DigitHistogram::new(),
            digits_unrounded: DigitHistogram::new(),
            sizes: SizeHistogram::new(),
            roundness: RoundnessCounts::default(),
            weekly: BTreeMap::new(),
            first_ts: None,
            last_ts: None,
            top: BinaryHeap::new(),
            top_unrounded: BinaryHeap::new(),
            capacity: reservoir.max(1),
        }
    }

    /// Summary of a slice of trades belonging to one group.
    pub fn from_trades(
        exchange: &str,
        pair: &str,
        spec: PairSpec,
        trades: &[Trade],
    ) -> Result<Self> {
        let mut s = GroupSummary::new(exchange, pair, spec, DEFAULT_RESERVOIR);
        for t in trades {
            s.add(t)?;
        }
        Ok(s)
    }

    pub fn add(&mut self, trade: &Trade) -> Result<()> {
        self.add_amount(trade.amount, trade.price, trade.timestamp_ms)
    }

    fn add_amount(&mut self, amount: Amount, price: Price, ts: i64) -> Result<()> {
        let round = is_round(amount, &self.spec);
        self.digits.add(amount)?;
        if !round {
            self.digits_unrounded.add(amount)?;
            push_bounded(&mut self.top_unrounded, amount.sub_units(), self.capacity);
        }
        self.roundness.add(roundness_level(amount, &self.spec)?);
        self.sizes.add(amount, &self.spec);
        push_bounded(&mut self.top, amount.sub_units(), self.capacity);
        self.count += 1;
        self.round_count += u64::from(round);
        self.volume += u128::from(amount.sub_units());
        let w = week_index(ts);
        let (exchange, pair) = (&self.exchange, &self.pair);
        self.weekly
            .entry(w)
            .or_insert_with(|| WeeklyVolumeSplit {
                exchange: exchange.clone(),
                pair: pair.clone(),
                week_index: w,
                ..Default::default()
            })
            .add(amount, price, round);
        self.first_ts = Some(self.first_ts.map_or(ts, |v| v.min(ts)));
        self.last_ts = Some(self.last_ts.map_or(ts, |v| v.max(ts)));
        Ok(())
    }

    pub fn merge(&mut self, other: GroupSummary) -> Result<()> {
        if other.exchange != self.exchange || other.pair != self.pair {
            return Err(Error::Config(format!(
                "cannot merge group {}/{} into {}/{}",
                other.exchange, other.pair, self.exchange, self.pair
            )));
        }
        self.count += other.count;
        self.round_count += other.round_count;
        self.volume += other.volume;
        self.digits.merge(&other.digits);
        self.digits_unrounded.merge(&other.digits_unrounded);
        self.sizes.merge(&other.sizes);
        self.roundness.merge(&other.roundness);
        for (w, row) in other.weekly {
            let e = self.weekly.entry(w).or_insert_with(|| WeeklyVolumeSplit {
                exchange: row.exchange.clone(),
                pair: row.pair.clone(),
                week_index: w,
                ..Default::default()
            });
            e.v_round += row.v_round;
            e.v_unrounded += row.v_unrounded;
            e.n_round += row.n_round;
            e.n_unrounded += row.n_unrounded;
            e.notional += row.notional;
        }
        for Reverse(v) in other.top {
            push_bounded(&mut self.top, v, self.capacity);
        }
        for Reverse(v) in other.top_unrounded {
            push_bounded(&mut self.top_unrounded, v, self.capacity);
        }
        self.first_ts = [self.first_ts, other.first_ts].into_iter().flatten().min();
        self.last_ts = [self.last_ts, other.last_ts].into_iter().flatten().max();
        Ok(())
    }

    pub fn unrounded_count(&self) -> u64 {
        self.count - self.round_count
    }

    pub fn weekly_panel(&self) -> Vec<WeeklyVolumeSplit> {
        self.weekly.values().cloned().collect()
    }

    /// Tail above the nearest-rank cutoff, in base units.
    pub fn tail_sample(&self, config: &TailConfig) -> Result<TailSample> {
        tail_from_top(&self.top, self.count, &self.spec, self.capacity, config)
    }

    /// Tail of the unrounded trades only, in base units.
    pub fn tail_sample_unrounded(&self, config: &TailConfig) -> Result<TailSample> {
        tail_from_top(
            &self.top_unrounded,
            self.unrounded_count(),
            &self.spec,
            self.capacity,
            config,
        )
    }
}

fn push_bounded(heap: &mut BinaryHeap<Reverse<u64>>, v: u64, capacity: usize) {
    if heap.len() < capacity {
        heap.push(Reverse(v));
    } else if let Some(&Reverse(min)) = heap.peek() {
        if v > min {
            heap.pop();
            heap.push(Reverse(v));
        }
    }
}

fn tail_from_top(
    top: &BinaryHeap<Reverse<u64>>,
    n: u64,
    spec: &PairSpec,
    capacity: usize,
    config: &TailConfig,
) -> Result<TailSample> {
    let n = n as usize;
    if n < 10 * config.min_tail {
        return Err(insufficient(format!(
            "tail cutoff needs at least {} observations, got {n}",
            10 * config.min_tail
        )));
    }
    let mut desc: Vec<u64> = top.iter().map(|Reverse(v)| *v).collect();
    desc.sort_unstable_by(|a, b| b.cmp(a));
    let rank = nearest_rank(1.0 - config.tail_fraction, n);
    let from_top = n - rank;
    if from_top >= desc.len() {
        return Err(insufficient(format!(
            "tail reservoir of {} sizes cannot reach the cutoff for {n} trades",
            desc.len()
        )));
    }
    let x_min = desc[from_top];
    let end = desc.partition_point(|&v| v >= x_min);
    if end == desc.len() && n > capacity {
        return Err(insufficient(
            "tail reservoir truncated at the cutoff; raise its capacity",
        ));
    }
    let scale = base_unit_scale(spec);
    let mut tail: Vec<f64> = desc[..end]
        .iter()
        .rev()
        .map(|&v| v as f64 / scale)
        .collect();
    tail.sort_by(f64::total_cmp);
    Ok(TailSample {
        x_min: x_min as f64 / scale,
        tail,
        n_total: n,
    })
}

/// Sub-units per base unit.
pub(crate) fn base_unit_scale(spec: &PairSpec) -> f64 {
    let k = SCALE as i32 + spec.base_unit_exponent;
    if k >= 0 {
        POW10[k as usize] as f64
    } else {
        1.0 / POW10[(-k) as usize] as f64
    }
}

/// Summaries for every group of a dataset, in key order.
pub fn summarize(dataset: &TradeDataset, registry: &PairRegistry) -> Result<Vec<GroupSummary>> {
    use rayon::prelude::*;
    let groups: Vec<_> = dataset.groups().collect();
    groups
        .into_par_iter()
        .map(|((ex, pair), trades)| {
            let spec = registry.get(pair)?.clone();
            GroupSummary::from_trades(ex, pair, spec, trades)
        })
        .collect()
}
