//! Seeded synthetic trade tapes with ground-truth labels.
//!
//! Authentic flow: each trade is placed by one of many traders whose wealth
//! follows a reflecting geometric random walk over a fixed number of decades,
//! scaled by a Pareto shock. Because log-wealth is spread uniformly over whole
//! decades the first digits follow Benford's law, and the shock gives a
//! power-law tail above the wealth range. A share of trades is floored to a
//! round grid (multiples of 100, 500 or 1000 base units), which keeps the first
//! digit unchanged while creating clustering at round sizes.
//!
//! Wash flow: bots trade sizes drawn from a narrow law at full precision, in
//! bursts of paired buy/sell prints a few milliseconds apart.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fixed::{Amount, Price};
use crate::ingest::{TradeDataset, CSV_HEADER};
use crate::seed::rng_for;
use crate::summary::base_unit_scale;
use crate::trade::{PairSpec, Trade};

const WEEK_MS: i64 = 7 * 86_400_000;
/// Monday 2019-07-01 00:00 UTC.
pub const DEFAULT_START_MS: i64 = 1_561_939_200_000;
/// Round grids in base units.
pub const ROUND_GRID: [u64; 3] = [100, 500, 1000];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WashSizeLaw {
    /// Uniform over `[low, high]` base units at full precision.
    Uniform { low: f64, high: f64 },
    /// Lognormal in base units, redrawn until inside `[low, high]`.
    TruncatedLognormal {
        mu: f64,
        sigma: f64,
        low: f64,
        high: f64,
    },
}

impl WashSizeLaw {
    fn bounds(&self) -> (f64, f64) {
        match *self {
            WashSizeLaw::Uniform { low, high }
            | WashSizeLaw::TruncatedLognormal { low, high, .. } => (low, high),
        }
    }

    /// Mean size in base units (Monte-Carlo free for the uniform law).
    pub fn mean(&self) -> f64 {
        match *self {
            WashSizeLaw::Uniform { low, high } => 0.5 * (low + high),
            WashSizeLaw::TruncatedLognormal {
                mu,
                sigma,
                low,
                high,
            } => {
                // numeric integration on a log grid
                let (a, b) = (low.ln(), high.ln());
                let steps = 2000;
                let h = (b - a) / steps as f64;
                let (mut num, mut den) = (0.0, 0.0);
                for i in 0..steps {
                    let y = a + (i as f64 + 0.5) * h;
                    let w = (-(y - mu).powi(2) / (2.0 * sigma * sigma)).exp();
                    num += w * y.exp();
                    den += w;
                }
                num / den
            }
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            WashSizeLaw::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            WashSizeLaw::TruncatedLognormal {
                mu,
                sigma,
                low,
                high,
            } => {
                let d = LogNormal::new(mu, sigma).expect("validated sigma");
                loop {
                    let x = d.sample(rng);
                    if (low..=high).contains(&x) {
                        return x;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuthenticParams {
    pub traders: usize,
    /// Standard deviation of the per-trade log-wealth step.
    pub step_volatility: f64,
    /// Width of the wealth range in decades.
    pub wealth_decades: f64,
    /// Lower end of the wealth range, base units.
    pub size_scale: f64,
    /// Probability that a trade is floored to a round grid.
    pub round_propensity: f64,
    /// Weights of the 100/500/1000-unit grids.
    pub grid_weights: [f64; 3],
    /// Probability that an unrounded trade is a whole number of base units.
    pub integer_propensity: f64,
    pub tail_alpha: f64,
    /// Share of trades carrying the Pareto shock.
    pub tail_weight: f64,
    /// Log-scale dispersion of weekly activity.
    pub weekly_dispersion: f64,
}

impl Default for AuthenticParams {
    fn default() -> Self {
        AuthenticParams {
            traders: 2000,
            step_volatility: 0.05,
            wealth_decades: 3.0,
            size_scale: 5.0,
            round_propensity: 0.5,
            grid_weights: [0.6, 0.25, 0.15],
            integer_propensity: 0.2,
            tail_alpha: 1.5,
            tail_weight: 1.0,
            weekly_dispersion: 0.5,
        }
    }
}

impl AuthenticParams {
    /// Expected authentic size in base units, ignoring rounding.
    pub fn mean_size(&self) -> f64 {
        let span = self.wealth_decades * std::f64::consts::LN_10;
        let wealth = self.size_scale * (span.exp() - 1.0) / span;
        let a = self.tail_alpha;
        let shock = 1.0 + self.tail_weight * (a / (a - 1.0) - 1.0);
        wealth * shock
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WashParams {
    pub law: WashSizeLaw,
    /// Mean number of buy/sell pairs per burst (at least 1).
    pub burst_intensity: f64,
}

impl Default for WashParams {
    fn default() -> Self {
        WashParams {
            law: WashSizeLaw::Uniform {
                low: 200.0,
                high: 900.0,
            },
            burst_intensity: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TradeCount {
    /// Total trades in the tape, authentic and wash combined (approximate).
    Total(usize),
    /// Authentic trades; wash trades are added on top.
    Authentic(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub exchange: String,
    pub pair: PairSpec,
    pub count: TradeCount,
    pub start_ms: i64,
    pub weeks: u32,
    /// Target wash share of traded volume.
    pub wash_fraction: f64,
    /// Price level in quote currency; defaults to one base unit ≈ 1 quote unit.
    pub reference_price: Option<f64>,
    pub authentic: AuthenticParams,
    pub wash: WashParams,
}

impl GeneratorConfig {
    pub fn new(
        seed: u64,
        exchange: &str,
        pair: PairSpec,
        n_trades: usize,
        wash_fraction: f64,
    ) -> Self {
        GeneratorConfig {
            seed,
            exchange: exchange.to_string(),
            pair,
            count: TradeCount::Total(n_trades),
            start_ms: DEFAULT_START_MS,
            weeks: 13,
            wash_fraction,
            reference_price: None,
            authentic: AuthenticParams::default(),
            wash: WashParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.authentic;
        let cfg = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.wash_fraction) {
            return cfg(format!(
                "wash fraction {} outside [0, 1]",
                self.wash_fraction
            ));
        }
        if !(a.tail_alpha > 1.0 && a.tail_alpha < 2.0) {
            return cfg(format!("tail exponent {} outside (1, 2)", a.tail_alpha));
        }
        if a.grid_weights.iter().any(|w| !(*w >= 0.0))
            || (a.grid_weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return cfg("round-grid weights must be non-negative and sum to 1".into());
        }
        for (name, p) in [
            ("round propensity", a.round_propensity),
            ("integer propensity", a.integer_propensity),
            ("tail weight", a.tail_weight),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return cfg(format!("{name} {p} outside [0, 1]"));
            }
        }
        if a.traders == 0 || self.weeks == 0 {
            return cfg("traders and weeks must be positive".into());
        }
        if !(a.step_volatility >= 0.0
            && a.wealth_decades > 0.0
            && a.size_scale > 0.0
            && a.weekly_dispersion >= 0.0)
        {
            return cfg("wealth-walk parameters must be positive".into());
        }
        let (lo, hi) = self.wash.law.bounds();
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return cfg(format!("wash size range [{lo}, {hi}] is invalid"));
        }
        if let WashSizeLaw::TruncatedLognormal { sigma, .. } = self.wash.law {
            if !(sigma > 0.0) {
                return cfg("lognormal sigma must be positive".into());
            }
        }
        if !(self.wash.burst_intensity >= 1.0) {
            return cfg("burst intensity must be at least 1".into());
        }
        if let Some(p) = self.reference_price {
            if !(p > 0.0 && p.is_finite()) {
                return cfg("reference price must be positive".into());
            }
        }
        Ok(())
    }

    fn label(&self, stream: &str) -> String {
        format!("{stream}/{}/{}", self.exchange, self.pair.pair)
    }

    fn window(&self) -> (i64, i64) {
        (
            self.start_ms,
            self.start_ms + i64::from(self.weeks) * WEEK_MS - 1,
        )
    }

    fn price_level(&self) -> f64 {
        self.reference_price
            .unwrap_or_else(|| 10f64.powi(-self.pair.base_unit_exponent))
    }

    /// Sub-units per base unit.
    fn unit(&self) -> f64 {
        base_unit_scale(&self.pair)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Authentic,
    Wash,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Authentic => "authentic",
            Label::Wash => "wash",
        }
    }
}

/// A generated tape, sorted by timestamp, with one label per trade.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTape {
    pub trades: Vec<Trade>,
    pub labels: Vec<Label>,
    /// Labelled wash volume over total volume.
    pub realized_wash_fraction: f64,
    pub flags: Vec<String>,
}

impl LabeledTape {
    pub fn volume(&self, label: Label) -> u128 {
        self.trades
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l == label)
            .map(|(t, _)| u128::from(t.amount.sub_units()))
            .sum()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }

    pub fn to_dataset(&self) -> TradeDataset {
        TradeDataset::from_trades(self.trades.iter().cloned())
    }

    /// Concatenate tapes (e.g. several exchanges) keeping timestamp order.
    pub fn concat(tapes: Vec<LabeledTape>) -> LabeledTape {
        let mut rows: Vec<(Trade, Label)> = Vec::new();
        let mut flags = Vec::new();
        for t in tapes {
            flags.extend(t.flags);
            rows.extend(t.trades.into_iter().zip(t.labels));
        }
        rows.sort_by_key(|r| r.0.timestamp_ms);
        let (trades, labels): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        let mut tape = LabeledTape {
            trades,
            labels,
            realized_wash_fraction: 0.0,
            flags,
        };
        tape.realized_wash_fraction = tape.compute_fraction();
        tape
    }

    fn compute_fraction(&self) -> f64 {
        let wash = self.volume(Label::Wash);
        let total = wash + self.volume(Label::Authentic);
        if total == 0 {
            0.0
        } else {
            wash as f64 / total as f64
        }
    }

    /// CSV with the ingestion header, plus a `label` column when requested.
    pub fn write_csv<W: Write>(&self, out: W, with_labels: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = CSV_HEADER.to_vec();
        if with_labels {
            header.push("label");
        }
        w.write_record(&header)?;
        for (t, l) in self.trades.iter().zip(&self.labels) {
            let mut rec = vec![
                t.exchange.clone(),
                t.pair.clone(),
                t.timestamp_ms.to_string(),
                t.price.to_string(),
                t.amount.to_string(),
            ];
            if with_labels {
                rec.push(l.as_str().to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSONL with decimal strings, plus a `label` key when requested.
    pub fn write_jsonl<W: Write>(&self, mut out: W, with_labels: bool) -> Result<()> {
        for (t, l) in self.trades.iter().zip(&self.labels) {
            let mut obj = serde_json::json!({
                "exchange": t.exchange,
                "pair": t.pair,
                "timestamp_ms": t.timestamp_ms,
                "price": t.price.to_string(),
                "amount": t.amount.to_string(),
            });
            if with_labels {
                obj["label"] = serde_json::Value::from(l.as_str());
            }
            writeln!(out, "{obj}")?;
        }
        Ok(())
    }
}

/// Bounded log-price walk around the reference level.
struct PriceWalk {
    log_p: f64,
    lo: f64,
    hi: f64,
    step: Normal<f64>,
    tick: u64,
}

impl PriceWalk {
    fn new(level: f64) -> Self {
        // ticks of 0.01 quote units, or 1e-4 below a unit price
        let tick = if level >= 1.0 { 1_000_000 } else { 10_000 };
        PriceWalk {
            log_p: level.ln(),
            lo: (level / 2.0).ln(),
            hi: (level * 2.0).ln(),
            step: Normal::new(0.0, 1e-3).expect("finite"),
            tick,
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> Price {
        self.log_p = reflect(self.log_p + self.step.sample(rng), self.lo, self.hi);
        let sub = (self.log_p.exp() * 1e8 / self.tick as f64).round().max(1.0) as u64 * self.tick;
        Price::from_sub_units(sub)
    }
}

fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    if width <= 0.0 {
        return lo;
    }
    x = (x - lo).rem_euclid(2.0 * width);
    lo + if x > width { 2.0 * width - x } else { x }
}

fn to_sub_units(x: f64) -> u64 {
    if x >= (u64::MAX / 4) as f64 {
        u64::MAX / 4
    } else {
        (x.floor() as u64).max(1)
    }
}

fn week_sampler(config: &GeneratorConfig) -> WeightedIndex<f64> {
    let mut rng = rng_for(config.seed, &config.label("weeks"), 0);
    let weights: Vec<f64> = if config.authentic.weekly_dispersion > 0.0 {
        let d = LogNormal::new(0.0, config.authentic.weekly_dispersion).expect("validated");
        (0..config.weeks).map(|_| d.sample(&mut rng)).collect()
    } else {
        vec![1.0; config.weeks as usize]
    };
    WeightedIndex::new(weights).expect("positive weights")
}

/// `n` authentic trades.
pub fn gen_authentic(config: &GeneratorConfig, n: usize) -> Result<Vec<Trade>> {
    config.validate()?;
    let p = &config.authentic;
    let mut rng = rng_for(config.seed, &config.label("authentic"), 0);
    let span = p.wealth_decades * std::f64::consts::LN_10;
    let mut wealth: Vec<f64> = (0..p.traders).map(|_| span * rng.random::<f64>()).collect();
    let step = Normal::new(0.0, p.step_volatility).map_err(|e| domain(e.to_string()))?;
    let grid = WeightedIndex::new(p.grid_weights).map_err(|e| domain(e.to_string()))?;
    let weeks = week_sampler(config);
    let mut price = PriceWalk::new(config.price_level());
    let unit = config.unit();

    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.random_range(0..p.traders);
        wealth[k] = reflect(wealth[k] + step.sample(&mut rng), 0.0, span);
        let shock = if rng.random::<f64>() < p.tail_weight {
            -(1.0 - rng.random::<f64>()).ln() / p.tail_alpha
        } else {
            0.0
        };
        let x = p.size_scale * (wealth[k] + shock).exp();

        let u_round = rng.random::<f64>();
        let g = ROUND_GRID[grid.sample(&mut rng)];
        let u_int = rng.random::<f64>();
        // flooring to a grid that divides every digit boundary above it keeps the first digit
        let threshold = if g == 500 { 1000 } else { g } as f64;
        let sub = if u_round < p.round_propensity && x >= threshold {
            to_sub_units((x / g as f64).floor() * g as f64 * unit)
        } else if u_int < p.integer_propensity && x >= 1.0 {
            to_sub_units(x.floor() * unit)
        } else {
            to_sub_units(x * unit)
        };

        let week = weeks.sample(&mut rng) as i64;
        let ts = config.start_ms + week * WEEK_MS + rng.random_range(0..WEEK_MS);
        out.push(Trade {
            exchange: config.exchange.clone(),
            pair: config.pair.pair.clone(),
            timestamp_ms: ts,
            price: price.next(&mut rng),
            amount: Amount::from_sub_units(sub),
        });
    }
    Ok(out)
}

/// Endless stream of wash trades in bursts; [`gen_wash`] and
/// [`gen_exchange`] take prefixes of it.
pub struct WashStream<'a> {
    config: &'a GeneratorConfig,
    rng: ChaCha8Rng,
    price: PriceWalk,
    extra_pairs: Option<Poisson<f64>>,
    unit: f64,
    pending: Vec<Trade>,
}

impl<'a> WashStream<'a> {
    pub fn new(config: &'a GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let lambda = config.wash.burst_intensity - 1.0;
        let extra_pairs = if lambda > 0.0 {
            Some(Poisson::new(lambda).map_err(|e| domain(e.to_string()))?)
        } else {
            None
        };
        Ok(WashStream {
            config,
            rng: rng_for(config.seed, &config.label("wash"), 0),
            price: PriceWalk::new(config.price_level()),
            extra_pairs,
            unit: config.unit(),
            pending: Vec::new(),
        })
    }

    fn burst(&mut self) {
        let (start, end) = self.config.window();
        let pairs = 1 + self
            .extra_pairs
            .map_or(0, |d| d.sample(&mut self.rng) as u64);
        let mut t = self.rng.random_range(start..end - 200 * pairs as i64);
        for _ in 0..pairs {
            let size = self.config.wash.law.sample(&mut self.rng);
            let amount = Amount::from_sub_units(to_sub_units(size * self.unit));
            let price = self.price.next(&mut self.rng);
            let lag = self.rng.random_range(1..=100);
            for ts in [t, t + lag] {
                self.pending.push(Trade {
                    exchange: self.config.exchange.clone(),
                    pair: self.config.pair.pair.clone(),
                    timestamp_ms: ts,
                    price,
                    amount,
                });
            }
            t += lag + self.rng.random_range(1..=100);
        }
        self.pending.reverse();
    }

    fn next_trade(&mut self) -> Trade {
        if self.pending.is_empty() {
            self.burst();
        }
        self.pending.pop().expect("burst produced trades")
    }
}

impl Iterator for WashStream<'_> {
    type Item = Trade;

    fn next(&mut self) -> Option<Trade> {
        Some(self.next_trade())
    }
}

/// `n` wash trades.
pub fn gen_wash(config: &GeneratorConfig, n: usize) -> Result<Vec<Trade>> {
    config.validate()?;
    let mut stream = WashStream::new(config)?;
    Ok((0..n).map(|_| stream.next_trade()).collect())
}

/// Interleaved authentic and wash flow with wash volume share `wash_fraction`.
pub fn gen_exchange(config: &GeneratorConfig) -> Result<LabeledTape> {
    config.validate()?;
    let w = config.wash_fraction;
    let mut flags = Vec::new();
    let (authentic, wash) = if w >= 1.0 {
        flags.push(format!(
            "{}: wash fraction 1 leaves no authentic trades",
            config.exchange
        ));
        let n = match config.count {
            TradeCount::Total(n) | TradeCount::Authentic(n) => n,
        };
        (Vec::new(), gen_wash(config, n)?)
    } else {
        let n_auth = match config.count {
            TradeCount::Authentic(n) => n,
            TradeCount::Total(n) => {
                let ratio = w / (1.0 - w) * config.authentic.mean_size() / config.wash.law.mean();
                (n as f64 / (1.0 + ratio)).round() as usize
            }
        };
        let authentic = gen_authentic(config, n_auth)?;
        let auth_volume: u128 = authentic
            .iter()
            .map(|t| u128::from(t.amount.sub_units()))
            .sum();
        let target = (w / (1.0 - w) * auth_volume as f64) as u128;
        let mut stream = WashStream::new(config)?;
        let mut wash = Vec::new();
        let mut volume = 0u128;
        while volume < target {
            let t = stream.next_trade();
            volume += u128::from(t.amount.sub_units());
            wash.push(t);
        }
        (authentic, wash)
    };

    let mut rows: Vec<(Trade, Label)> = authentic
        .into_iter()
        .map(|t| (t, Label::Authentic))
        .chain(wash.into_iter().map(|t| (t, Label::Wash)))
        .collect();
    rows.sort_by_key(|r| r.0.timestamp_ms);
    let (trades, labels): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let mut tape = LabeledTape {
        trades,
        labels,
        realized_wash_fraction: 0.0,
        flags,
    };
    tape.realized_wash_fraction = tape.compute_fraction();
    Ok(tape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benford::{chi_squared_benford, digit_histogram};
    use crate::clustering::{cluster_pairs, clustering_t_test, ClusterConfig, SizeHistogram};
    use crate::trade::{first_significant_digit, is_round, PairRegistry};

    fn btc() -> PairSpec {
        PairRegistry::default().get("BTC/USD").unwrap().clone()
    }

    fn config(n: usize, w: f64) -> GeneratorConfig {
        GeneratorConfig::new(7, "SYN", btc(), n, w)
    }

    #[test]
    fn validation() {
        let mut c = config(10, 0.1);
        assert!(c.validate().is_ok());
        c.authentic.tail_alpha = 2.0;
        assert!(c.validate().is_err());
        let mut c = config(10, 1.2);
        assert!(c.validate().is_err());
        c.wash_fraction = 0.5;
        c.authentic.grid_weights = [0.5, 0.5, 0.5];
        assert!(c.validate().is_err());
    }

    #[test]
    fn all_round_when_forced() {
        let mut c = config(20_000, 0.0);
        c.authentic.round_propensity = 1.0;
        c.authentic.grid_weights = [1.0, 0.0, 0.0];
        c.authentic.size_scale = 100.0;
        let spec = btc();
        let trades = gen_authentic(&c, 20_000).unwrap();
        assert!(trades.iter().all(|t| is_round(t.amount, &spec)));
    }

    #[test]
    fn deterministic() {
        let a = gen_exchange(&config(5_000, 0.5)).unwrap();
        let b = gen_exchange(&config(5_000, 0.5)).unwrap();
        assert_eq!(a, b);
        let mut c = config(5_000, 0.5);
        c.seed = 8;
        assert_ne!(gen_exchange(&c).unwrap().trades, a.trades);
    }

    #[test]
    fn uniform_wash_digits_are_concentrated() {
        let mut c = config(0, 1.0);
        c.wash.law = WashSizeLaw::Uniform {
            low: 4.0,
            high: 9.0,
        };
        let trades = gen_wash(&c, 10_000).unwrap();
        for t in &trades {
            let d = first_significant_digit(t.amount).unwrap();
            assert!((4..=8).contains(&d), "{d}");
        }
    }

    #[test]
    fn wash_trades_are_rarely_round() {
        let spec = btc();
        let trades = gen_wash(&config(0, 1.0), 100_000).unwrap();
        let round = trades.iter().filter(|t| is_round(t.amount, &spec)).count();
        assert!((round as f64) < 0.001 * trades.len() as f64, "{round}");
        // bursts: paired prints share a size and sit 1..=100 ms apart
        assert_eq!(trades[0].amount, trades[1].amount);
        let lag = trades[1].timestamp_ms - trades[0].timestamp_ms;
        assert!((1..=100).contains(&lag));
    }

    #[test]
    fn wash_only_tape_does_not_cluster() {
        let tape = gen_exchange(&config(200_000, 1.0)).unwrap();
        assert!(!tape.flags.is_empty());
        let spec = btc();
        let hist = SizeHistogram::from_amounts(tape.trades.iter().map(|t| t.amount), &spec);
        let pairs = cluster_pairs(&hist, 100, &ClusterConfig::default()).unwrap();
        let r = clustering_t_test(&pairs.pairs, 100, 0.05).unwrap();
        assert!(!r.clustered);
    }

    #[test]
    fn realized_fraction_and_labels() {
        let tape = gen_exchange(&config(100_000, 0.6)).unwrap();
        assert!((tape.realized_wash_fraction - 0.6).abs() < 0.02);
        let wash = tape.volume(Label::Wash) as f64;
        let total = wash + tape.volume(Label::Authentic) as f64;
        assert_eq!(tape.realized_wash_fraction, wash / total);
        assert!(tape
            .trades
            .windows(2)
            .all(|p| p[0].timestamp_ms <= p[1].timestamp_ms));
        let (lo, hi) = config(0, 0.0).window();
        assert!(tape
            .trades
            .iter()
            .all(|t| (lo..=hi).contains(&t.timestamp_ms)));
        let n = tape.trades.len() as f64;
        assert!((n / 100_000.0 - 1.0).abs() < 0.1, "{n}");
    }

    #[test]
    fn authentic_tape_is_benford() {
        let trades = gen_authentic(&config(0, 0.0), 200_000).unwrap();
        let h = digit_histogram(trades.iter().map(|t| t.amount)).unwrap();
        let r = chi_squared_benford(&h, Some(10_000.0), 0.05).unwrap();
        assert!(!r.reject, "{r:?}");
    }

    #[test]
    fn csv_round_trips_through_ingestion() {
        let tape = gen_exchange(&config(2_000, 0.3)).unwrap();
        let mut buf = Vec::new();
        tape.write_csv(&mut buf, false).unwrap();
        let (ds, rep) = crate::ingest::parse_trades(
            buf.as_slice(),
            crate::ingest::Format::Csv,
            &Default::default(),
        )
        .unwrap();
        assert!(rep.rejected.is_empty());
        assert_eq!(ds, tape.to_dataset());
        let mut labelled = Vec::new();
        tape.write_csv(&mut labelled, true).unwrap();
        assert!(String::from_utf8(labelled)
            .unwrap()
            .starts_with("exchange,pair,timestamp_ms,price,amount,label\n"));
        let mut jl = Vec::new();
        tape.write_jsonl(&mut jl, false).unwrap();
        let (ds2, _) = crate::ingest::parse_trades(
            jl.as_slice(),
            crate::ingest::Format::Jsonl,
            &Default::default(),
        )
        .unwrap();
        assert_eq!(ds2, ds);
    }

    #[test]
    fn authentic_count_mode_adds_wash_prefix() {
        let mut c = config(5_000, 0.4);
        c.count = TradeCount::Authentic(5_000);
        let tape = gen_exchange(&c).unwrap();
        let mut authentic = gen_authentic(&c, 5_000).unwrap();
        let mut got_auth: Vec<Trade> = tape
            .trades
            .iter()
            .zip(&tape.labels)
            .filter(|(_, l)| **l == Label::Authentic)
            .map(|(t, _)| t.clone())
            .collect();
        let key = |t: &Trade| (t.timestamp_ms, t.amount, t.price);
        authentic.sort_by_key(key);
        got_auth.sort_by_key(key);
        assert_eq!(got_auth, authentic);

        let mut got_wash: Vec<Trade> = tape
            .trades
            .iter()
            .zip(&tape.labels)
            .filter(|(_, l)| **l == Label::Wash)
            .map(|(t, _)| t.clone())
            .collect();
        let mut prefix = gen_wash(&c, got_wash.len()).unwrap();
        got_wash.sort_by_key(key);
        prefix.sort_by_key(key);
        assert_eq!(got_wash, prefix);
        assert!(
            (tape.realized_wash_fraction - 0.4).abs() < 0.01,
            "{}",
            tape.realized_wash_fraction
        );
    }
}
