//! Wash-volume estimation against a benchmark fitted on regulated exchanges.
//!
//! The benchmark regresses log unrounded weekly volume on log round volume
//! (optionally with exchange covariates). Wash volume on a target exchange is
//! the per-week excess of observed unrounded volume over the benchmark
//! prediction, floored at zero before summing.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benford::ChiSquaredResult;
use crate::error::{domain, insufficient, Error, Result};
use crate::ingest::WeeklyVolumeSplit;
use crate::seed::rng_for;
use crate::stats::{ols, sample_sd};
use crate::summary::RoundnessCounts;
use crate::trade::{Covariates, ExchangeMeta};

/// Minimum exchange-weeks for a benchmark fit.
pub const MIN_BENCHMARK_ROWS: usize = 8;
pub const DEFAULT_BOOTSTRAP: usize = 1000;
pub const MIN_BOOTSTRAP: usize = 100;

/// Pearson χ² of a target roundness distribution against a benchmark.
///
/// Buckets where the benchmark is empty are merged into the next non-empty
/// bucket (trailing ones into the last), and df = merged buckets - 1.
/// `effective_n = None` uses the target's trade count.
pub fn roundness_chi_squared(
    target: &RoundnessCounts,
    benchmark: &RoundnessCounts,
    effective_n: Option<f64>,
    alpha: f64,
) -> Result<ChiSquaredResult> {
    if benchmark.total() == 0 {
        return Err(Error::Config("roundness benchmark missing for pair".into()));
    }
    if target.total() == 0 {
        return Err(insufficient("empty target roundness distribution"));
    }
    let n_eff = match effective_n {
        Some(v) if !(v > 0.0 && v.is_finite()) => {
            return Err(domain(format!("effective N must be positive, got {v}")))
        }
        Some(v) => v,
        None => target.total() as f64,
    };
    let (obs, exp) = merge_empty_buckets(&target.frequencies(), &benchmark.frequencies());
    if obs.len() < 2 {
        return Err(domain("benchmark occupies a single roundness bucket"));
    }
    let stat = crate::benford::pearson_chi_squared(&obs, &exp, n_eff);
    Ok(ChiSquaredResult::new(
        stat,
        (obs.len() - 1) as u32,
        n_eff,
        alpha,
    ))
}

fn merge_empty_buckets(obs: &[f64; 8], exp: &[f64; 8]) -> (Vec<f64>, Vec<f64>) {
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let (mut po, mut pe) = (0.0, 0.0);
    for i in 0..8 {
        po += obs[i];
        pe += exp[i];
        if exp[i] > 0.0 {
            o.push(po);
            e.push(pe);
            po = 0.0;
            pe = 0.0;
        }
    }
    if let (Some(lo), Some(le)) = (o.last_mut(), e.last_mut()) {
        *lo += po;
        *le += pe;
    }
    (o, e)
}

/// How regulated exchange-weeks are grouped into benchmark fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// One regression per currency pair.
    #[default]
    PerPair,
    /// One regression over all pairs with pair indicator intercepts.
    Pooled,
}

impl std::str::FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "per-pair" | "per_pair" | "pair" => Ok(Scope::PerPair),
            "pooled" | "pool" => Ok(Scope::Pooled),
            other => Err(Error::Config(format!("unknown benchmark scope `{other}`"))),
        }
    }
}

/// `ln U = a + b ln R (+ pair effect) (+ g . X) + e`, volumes in native units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkModel {
    pub scope: Scope,
    pub pairs: Vec<String>,
    pub intercept: f64,
    pub slope: f64,
    /// Intercept shift per pair; the first pair is the reference.
    #[serde(default)]
    pub pair_effects: BTreeMap<String, f64>,
    /// Covariate coefficients keyed by [`Covariates::NAMES`]; empty without controls.
    #[serde(default)]
    pub controls: BTreeMap<String, f64>,
    pub residual_se: f64,
    pub n_obs: usize,
    /// Rows dropped for a zero round or unrounded volume.
    pub dropped_rows: usize,
    pub exchanges: Vec<String>,
}

impl BenchmarkModel {
    pub fn uses_controls(&self) -> bool {
        !self.controls.is_empty()
    }

    pub fn covers(&self, pair: &str) -> bool {
        self.pairs.iter().any(|p| p == pair)
    }

    /// Predicted log unrounded volume.
    pub fn predict_ln(
        &self,
        pair: &str,
        ln_round: f64,
        covariates: Option<[f64; 4]>,
    ) -> Result<f64> {
        if !self.covers(pair) {
            return Err(Error::Config(format!(
                "benchmark has no model for pair {pair}"
            )));
        }
        let mut y = self.intercept
            + self.slope * ln_round
            + self.pair_effects.get(pair).copied().unwrap_or(0.0);
        if self.uses_controls() {
            let x = covariates.ok_or_else(|| {
                Error::Config("benchmark uses controls but covariates are missing".into())
            })?;
            for (name, v) in Covariates::NAMES.iter().zip(x) {
                y += self.controls[*name] * v;
            }
        }
        Ok(y)
    }
}

/// Benchmark models for every pair seen in the regulated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSet {
    pub scope: Scope,
    pub models: Vec<BenchmarkModel>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl BenchmarkSet {
    pub fn model_for(&self, pair: &str) -> Result<&BenchmarkModel> {
        self.models
            .iter()
            .find(|m| m.covers(pair))
            .ok_or_else(|| Error::Config(format!("benchmark missing for pair {pair}")))
    }

    pub fn uses_controls(&self) -> bool {
        self.models.iter().any(BenchmarkModel::uses_controls)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("benchmark model: {e}")))
    }
}

/// Fit one benchmark regression on `panel` (regulated rows only).
///
/// With [`Scope::PerPair`] the panel must hold a single pair. Controls are
/// used when `controls` is given; every exchange in the panel then needs all
/// four covariates.
pub fn fit_benchmark(
    panel: &[WeeklyVolumeSplit],
    scope: Scope,
    controls: Option<&BTreeMap<String, ExchangeMeta>>,
) -> Result<BenchmarkModel> {
    let pairs: Vec<String> = panel
        .iter()
        .map(|r| r.pair.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if scope == Scope::PerPair && pairs.len() > 1 {
        return Err(domain(format!(
            "per-pair benchmark given {} pairs",
            pairs.len()
        )));
    }
    let rows: Vec<&WeeklyVolumeSplit> = panel
        .iter()
        .filter(|r| r.v_round > 0 && r.v_unrounded > 0)
        .collect();
    let dropped = panel.len() - rows.len();
    if rows.len() < MIN_BENCHMARK_ROWS {
        return Err(insufficient(format!(
            "insufficient benchmark data: {} usable exchange-weeks, need {MIN_BENCHMARK_ROWS}",
            rows.len()
        )));
    }

    let y: Vec<f64> = rows.iter().map(|r| r.v_unrounded_units().ln()).collect();
    let mut cols: Vec<(String, Vec<f64>)> = vec![
        ("intercept".into(), vec![1.0; rows.len()]),
        (
            "ln_round".into(),
            rows.iter().map(|r| r.v_round_units().ln()).collect(),
        ),
    ];
    if scope == Scope::Pooled {
        for p in pairs.iter().skip(1) {
            cols.push((
                format!("pair:{p}"),
                rows.iter()
                    .map(|r| f64::from(u8::from(&r.pair == p)))
                    .collect(),
            ));
        }
    }
    if let Some(meta) = controls {
        let mut x = Vec::with_capacity(rows.len());
        for r in &rows {
            let c = meta
                .get(&r.exchange)
                .and_then(|m| m.covariates.complete())
                .ok_or_else(|| {
                    Error::Config(format!("exchange {} lacks complete covariates", r.exchange))
                })?;
            x.push(c);
        }
        for (k, name) in Covariates::NAMES.iter().enumerate() {
            cols.push((name.to_string(), x.iter().map(|c| c[k]).collect()));
        }
    }
    let named: Vec<(&str, &[f64])> = cols
        .iter()
        .map(|(n, c)| (n.as_str(), c.as_slice()))
        .collect();
    let fit = ols(&y, &named)?;

    let mut model = BenchmarkModel {
        scope,
        pairs: pairs.clone(),
        intercept: fit.coefficients[0],
        slope: fit.coefficients[1],
        pair_effects: BTreeMap::new(),
        controls: BTreeMap::new(),
        residual_se: fit.residual_se,
        n_obs: rows.len(),
        dropped_rows: dropped,
        exchanges: rows
            .iter()
            .map(|r| r.exchange.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    for (name, b) in fit.names.iter().zip(&fit.coefficients).skip(2) {
        if let Some(p) = name.strip_prefix("pair:") {
            model.pair_effects.insert(p.to_string(), *b);
        } else {
            model.controls.insert(name.clone(), *b);
        }
    }
    Ok(model)
}

/// Fit the benchmark set for `scope`: one model per pair, or one pooled model.
///
/// When `controls` is given but some regulated exchange lacks covariates, the
/// set falls back to no controls and records a warning.
pub fn fit_benchmarks(
    panel: &[WeeklyVolumeSplit],
    scope: Scope,
    controls: Option<&BTreeMap<String, ExchangeMeta>>,
) -> Result<BenchmarkSet> {
    let mut warnings = Vec::new();
    let controls = controls.filter(|meta| {
        let missing: BTreeSet<&str> = panel
            .iter()
            .filter(|r| {
                meta.get(&r.exchange)
                    .and_then(|m| m.covariates.complete())
                    .is_none()
            })
            .map(|r| r.exchange.as_str())
            .collect();
        if !missing.is_empty() {
            warnings.push(format!(
                "controls dropped: no complete covariates for {missing:?}"
            ));
        }
        missing.is_empty()
    });
    let models = match scope {
        Scope::Pooled => vec![fit_benchmark(panel, scope, controls)?],
        Scope::PerPair => {
            let mut by_pair: BTreeMap<&str, Vec<WeeklyVolumeSplit>> = BTreeMap::new();
            for r in panel {
                by_pair.entry(&r.pair).or_default().push(r.clone());
            }
            by_pair
                .values()
                .map(|rows| fit_benchmark(rows, scope, controls))
                .collect::<Result<Vec<_>>>()?
        }
    };
    if models.is_empty() {
        return Err(insufficient(
            "insufficient benchmark data: empty regulated panel",
        ));
    }
    Ok(BenchmarkSet {
        scope,
        models,
        warnings,
    })
}

/// Wash volume for one exchange, either for one pair or aggregated over pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WashEstimate {
    pub exchange: String,
    /// `None` for the exchange aggregate.
    pub pair: Option<String>,
    /// Native units; `None` for the aggregate.
    pub wash_volume: Option<f64>,
    /// Quote-currency value of the wash volume at weekly average prices.
    pub wash_value: f64,
    /// Quote-currency value of all reported volume.
    pub total_value: f64,
    pub wash_percent: f64,
    pub bootstrap_sd: Option<f64>,
    pub controls_used: bool,
    pub weeks: usize,
    pub flags: Vec<String>,
}

/// Per-pair estimates and the value-weighted aggregate for one exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeWash {
    pub exchange: String,
    pub per_pair: Vec<WashEstimate>,
    pub aggregate: WashEstimate,
}

/// Estimate wash volume on one exchange-pair panel.
pub fn estimate_wash(
    rows: &[WeeklyVolumeSplit],
    model: &BenchmarkModel,
    covariates: Option<[f64; 4]>,
) -> Result<WashEstimate> {
    let first = rows.first().ok_or_else(|| domain("empty target panel"))?;
    if rows
        .iter()
        .any(|r| r.exchange != first.exchange || r.pair != first.pair)
    {
        return Err(domain("target panel mixes exchanges or pairs"));
    }
    let (mut wash, mut total, mut wash_value, mut total_value) = (0.0, 0.0, 0.0, 0.0);
    let mut zero_round = 0;
    for r in rows {
        let u = r.v_unrounded_units();
        let excess = if r.v_round == 0 {
            zero_round += 1;
            u
        } else {
            let legit = model
                .predict_ln(&r.pair, r.v_round_units().ln(), covariates)?
                .exp();
            (u - legit).max(0.0)
        };
        wash += excess;
        total += u + r.v_round_units();
        wash_value += excess * r.unit_value();
        total_value += r.notional;
    }
    let mut flags = Vec::new();
    if zero_round > 0 {
        flags.push(format!(
            "{zero_round} week(s) without round volume counted as excess"
        ));
    }
    Ok(WashEstimate {
        exchange: first.exchange.clone(),
        pair: Some(first.pair.clone()),
        wash_volume: Some(wash),
        wash_value,
        total_value,
        wash_percent: if total > 0.0 {
            100.0 * wash / total
        } else {
            0.0
        },
        bootstrap_sd: None,
        controls_used: model.uses_controls(),
        weeks: rows.len(),
        flags,
    })
}

/// Estimates for every pair of one exchange, plus the aggregate in quote value.
pub fn estimate_exchange(
    rows: &[WeeklyVolumeSplit],
    benchmarks: &BenchmarkSet,
    covariates: Option<[f64; 4]>,
) -> Result<ExchangeWash> {
    let first = rows.first().ok_or_else(|| domain("empty target panel"))?;
    let mut by_pair: BTreeMap<&str, Vec<WeeklyVolumeSplit>> = BTreeMap::new();
    for r in rows {
        if r.exchange != first.exchange {
            return Err(domain("target panel mixes exchanges"));
        }
        by_pair.entry(&r.pair).or_default().push(r.clone());
    }
    let per_pair = by_pair
        .iter()
        .map(|(pair, rows)| estimate_wash(rows, benchmarks.model_for(pair)?, covariates))
        .collect::<Result<Vec<_>>>()?;
    let wash_value: f64 = per_pair.iter().map(|e| e.wash_value).sum();
    let total_value: f64 = per_pair.iter().map(|e| e.total_value).sum();
    let aggregate = WashEstimate {
        exchange: first.exchange.clone(),
        pair: None,
        wash_volume: None,
        wash_value,
        total_value,
        wash_percent: if total_value > 0.0 {
            100.0 * wash_value / total_value
        } else {
            0.0
        },
        bootstrap_sd: None,
        controls_used: benchmarks.uses_controls(),
        weeks: per_pair.iter().map(|e| e.weeks).max().unwrap_or(0),
        flags: per_pair
            .iter()
            .flat_map(|e| {
                e.flags
                    .iter()
                    .map(|f| format!("{}: {f}", e.pair.as_deref().unwrap_or("")))
            })
            .collect(),
    };
    Ok(ExchangeWash {
        exchange: first.exchange.clone(),
        per_pair,
        aggregate,
    })
}

/// Resampling settings for [`bootstrap_wash_sd`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub scope: Scope,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: DEFAULT_BOOTSTRAP,
            seed: 0,
            scope: Scope::PerPair,
        }
    }
}

/// Bootstrap standard deviations of the wash percent, per pair and aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSd {
    pub per_pair: BTreeMap<String, f64>,
    pub aggregate: f64,
    pub replicates: usize,
    /// Draws discarded because the refit was singular.
    pub redraws: usize,
}

/// Resample regulated exchange-weeks with replacement, refit and re-estimate.
///
/// Replicate `r` draws from its own stream derived from `(seed, exchange, r)`,
/// so results do not depend on thread scheduling. A singular refit is
/// redrawn; more than `10 * B` draws in total is an error.
pub fn bootstrap_wash_sd(
    target: &[WeeklyVolumeSplit],
    regulated: &[WeeklyVolumeSplit],
    controls: Option<&BTreeMap<String, ExchangeMeta>>,
    covariates: Option<[f64; 4]>,
    config: &BootstrapConfig,
) -> Result<BootstrapSd> {
    let b = config.replicates;
    if b < MIN_BOOTSTRAP {
        return Err(domain(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP} replicates, got {b}"
        )));
    }
    let exchange = &target
        .first()
        .ok_or_else(|| domain("empty target panel"))?
        .exchange;
    if regulated.is_empty() {
        return Err(insufficient(
            "insufficient benchmark data: empty regulated panel",
        ));
    }
    let max_draws = 10 * b;
    let label = format!("bootstrap/{exchange}");
    let outcomes: Vec<Result<(ExchangeWash, usize)>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_for(config.seed, &label, r as u64);
            let mut draws = 0;
            loop {
                draws += 1;
                let sample: Vec<WeeklyVolumeSplit> = (0..regulated.len())
                    .map(|_| regulated[rng.random_range(0..regulated.len())].clone())
                    .collect();
                match fit_benchmarks(&sample, config.scope, controls) {
                    Ok(set) => {
                        return estimate_exchange(target, &set, covariates).map(|e| (e, draws))
                    }
                    Err(Error::Singular { .. } | Error::InsufficientData(_))
                        if draws < max_draws =>
                    {
                        continue
                    }
                    Err(e) => return Err(e),
                }
            }
        })
        .collect();

    let mut per_pair: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut aggregate = Vec::with_capacity(b);
    let mut total_draws = 0;
    for o in outcomes {
        let (est, draws) = o?;
        total_draws += draws;
        for e in est.per_pair {
            per_pair
                .entry(e.pair.unwrap_or_default())
                .or_default()
                .push(e.wash_percent);
        }
        aggregate.push(est.aggregate.wash_percent);
    }
    if total_draws > max_draws {
        return Err(domain(format!(
            "bootstrap exceeded {max_draws} draws: benchmark refits keep failing"
        )));
    }
    Ok(BootstrapSd {
        per_pair: per_pair
            .into_iter()
            .map(|(k, v)| (k, sample_sd(&v)))
            .collect(),
        aggregate: sample_sd(&aggregate),
        replicates: b,
        redraws: total_draws - b,
    })
}

/// Leave-one-out wash estimates over the regulated exchanges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    /// `(exchange, aggregate wash percent)` in exchange order.
    pub estimates: Vec<(String, f64)>,
    pub mean: f64,
    pub max: f64,
}

/// Hold out each regulated exchange, fit on the rest, estimate the held-out one.
pub fn cross_validate_regulated(
    regulated: &[WeeklyVolumeSplit],
    scope: Scope,
    controls: Option<&BTreeMap<String, ExchangeMeta>>,
) -> Result<CrossValidation> {
    let exchanges: BTreeSet<&str> = regulated.iter().map(|r| r.exchange.as_str()).collect();
    if exchanges.len() < 3 {
        return Err(insufficient(format!(
            "cross-validation needs at least 3 regulated exchanges, got {}",
            exchanges.len()
        )));
    }
    let estimates = exchanges
        .par_iter()
        .map(|ex| {
            let (held, rest): (Vec<WeeklyVolumeSplit>, Vec<WeeklyVolumeSplit>) =
                regulated.iter().cloned().partition(|r| r.exchange == *ex);
            let set = fit_benchmarks(&rest, scope, controls)?;
            let covs = controls
                .and_then(|m| m.get(*ex))
                .and_then(|m| m.covariates.complete());
            let est = estimate_exchange(&held, &set, covs)?;
            let pct = match est.per_pair.as_slice() {
                [single] => single.wash_percent,
                _ => est.aggregate.wash_percent,
            };
            Ok((ex.to_string(), pct))
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = estimates.iter().map(|e| e.1).collect();
    Ok(CrossValidation {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        estimates,
    })
}

/// Equal-weighted and volume-weighted mean wash percent across exchanges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WashAggregate {
    pub equal_weighted: f64,
    pub volume_weighted: f64,
}

pub fn aggregate_across(estimates: &[WashEstimate]) -> Result<WashAggregate> {
    if estimates.is_empty() {
        return Err(domain("no estimates to aggregate"));
    }
    let equal = estimates.iter().map(|e| e.wash_percent).sum::<f64>() / estimates.len() as f64;
    let total: f64 = estimates.iter().map(|e| e.total_value).sum();
    let wash: f64 = estimates.iter().map(|e| e.wash_value).sum();
    Ok(WashAggregate {
        equal_weighted: equal,
        volume_weighted: if total > 0.0 {
            100.0 * wash / total
        } else {
            0.0
        },
    })
}

/// CSV `exchange,pair,wash_volume,wash_percent,bootstrap_sd,controls_used,flags`.
///
/// Aggregate rows use `*` as the pair and report the quote-currency value in
/// the `wash_volume` column.
pub fn write_report_csv<W: Write>(estimates: &[WashEstimate], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "exchange",
        "pair",
        "wash_volume",
        "wash_percent",
        "bootstrap_sd",
        "controls_used",
        "flags",
    ])?;
    for e in estimates {
        w.write_record([
            e.exchange.clone(),
            e.pair.clone().unwrap_or_else(|| "*".into()),
            e.wash_volume.unwrap_or(e.wash_value).to_string(),
            e.wash_percent.to_string(),
            e.bootstrap_sd.map(|s| s.to_string()).unwrap_or_default(),
            e.controls_used.to_string(),
            e.flags.join("; "),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed::UNIT;
    use crate::trade::{Covariates, RegulatoryClass};

    fn row(ex: &str, pair: &str, week: i64, round: f64, unrounded: f64) -> WeeklyVolumeSplit {
        let to = |v: f64| (v * UNIT as f64).round() as u128;
        WeeklyVolumeSplit {
            exchange: ex.into(),
            pair: pair.into(),
            week_index: week,
            v_round: to(round),
            v_unrounded: to(unrounded),
            n_round: 1,
            n_unrounded: 1,
            notional: round + unrounded,
        }
    }

    fn panel(ratio: f64, weeks: i64, exchanges: &[&str]) -> Vec<WeeklyVolumeSplit> {
        let mut out = Vec::new();
        for (k, ex) in exchanges.iter().enumerate() {
            for w in 0..weeks {
                let r = 1000.0 * (1.0 + w as f64) * (1.0 + k as f64);
                out.push(row(ex, "BTC/USD", w, r, ratio * r));
            }
        }
        out
    }

    #[test]
    fn identity_and_doubling_benchmarks() {
        let m = fit_benchmark(&panel(1.0, 4, &["a", "b", "c"]), Scope::PerPair, None).unwrap();
        assert!(m.intercept.abs() < 1e-9 && (m.slope - 1.0).abs() < 1e-9);
        assert!(m.residual_se < 1e-9);
        assert_eq!(m.n_obs, 12);
        let m = fit_benchmark(&panel(2.0, 4, &["a", "b", "c"]), Scope::PerPair, None).unwrap();
        assert!((m.intercept - 2f64.ln()).abs() < 1e-9 && (m.slope - 1.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_rows_and_dropped_rows() {
        let err =
            fit_benchmark(&panel(1.0, 2, &["a", "b", "c"]), Scope::PerPair, None).unwrap_err();
        assert!(err.to_string().contains("insufficient benchmark data"));
        let mut p = panel(1.0, 4, &["a", "b", "c"]);
        p.push(row("a", "BTC/USD", 9, 0.0, 5.0));
        let m = fit_benchmark(&p, Scope::PerPair, None).unwrap();
        assert_eq!(m.dropped_rows, 1);
    }

    #[test]
    fn constant_round_volume_is_singular() {
        let p: Vec<_> = (0..10)
            .map(|w| row("a", "BTC/USD", w, 100.0, 50.0 + w as f64))
            .collect();
        match fit_benchmark(&p, Scope::PerPair, None) {
            Err(Error::Singular { column, .. }) => assert_eq!(column, "ln_round"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn estimates_match_definition() {
        let model = fit_benchmark(&panel(1.0, 4, &["a", "b", "c"]), Scope::PerPair, None).unwrap();
        let exact: Vec<_> = (0..5)
            .map(|w| {
                row(
                    "t",
                    "BTC/USD",
                    w,
                    10.0 * (w + 1) as f64,
                    10.0 * (w + 1) as f64,
                )
            })
            .collect();
        let e = estimate_wash(&exact, &model, None).unwrap();
        assert!(e.wash_percent.abs() < 1e-6);
        // U = 2 U_hat with U_hat = R: wash share of U + R is 1/3
        let doubled: Vec<_> = (0..5)
            .map(|w| {
                row(
                    "t",
                    "BTC/USD",
                    w,
                    10.0 * (w + 1) as f64,
                    20.0 * (w + 1) as f64,
                )
            })
            .collect();
        let e = estimate_wash(&doubled, &model, None).unwrap();
        assert!(
            (e.wash_percent - 100.0 / 3.0).abs() < 1e-6,
            "{}",
            e.wash_percent
        );
        assert!(
            e.wash_volume.unwrap() <= doubled.iter().map(|r| r.v_unrounded_units()).sum::<f64>()
        );
    }

    #[test]
    fn per_week_flooring_and_zero_round_weeks() {
        let model = fit_benchmark(&panel(1.0, 4, &["a", "b", "c"]), Scope::PerPair, None).unwrap();
        // one deficient week does not offset an excessive one
        let rows = vec![
            row("t", "BTC/USD", 0, 100.0, 50.0),
            row("t", "BTC/USD", 1, 100.0, 150.0),
        ];
        let e = estimate_wash(&rows, &model, None).unwrap();
        assert!((e.wash_volume.unwrap() - 50.0).abs() < 1e-6);
        let rows = vec![
            row("t", "BTC/USD", 0, 0.0, 40.0),
            row("t", "BTC/USD", 1, 100.0, 100.0),
        ];
        let e = estimate_wash(&rows, &model, None).unwrap();
        assert!((e.wash_volume.unwrap() - 40.0).abs() < 1e-6);
        assert_eq!(e.flags.len(), 1);
        assert!(estimate_wash(&[], &model, None).is_err());
    }

    #[test]
    fn roundness_identical_and_concentrated() {
        let bench = RoundnessCounts([5, 10, 40, 100, 200, 300, 200, 145]);
        let r = roundness_chi_squared(&bench, &bench, Some(1000.0), 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.df, 7);
        let target = RoundnessCounts([0, 0, 0, 0, 0, 0, 0, 50]);
        let r = roundness_chi_squared(&target, &bench, Some(1000.0), 0.05).unwrap();
        // hand Pearson sum over the benchmark vector
        let p: Vec<f64> = bench.0.iter().map(|&c| c as f64 / 1000.0).collect();
        let mut oracle = 0.0;
        for (i, pi) in p.iter().enumerate() {
            let o = if i == 7 { 1000.0 } else { 0.0 };
            oracle += (o - 1000.0 * pi).powi(2) / (1000.0 * pi);
        }
        assert!((r.statistic - oracle).abs() < 1e-9);
        assert!(r.reject);
    }

    #[test]
    fn roundness_merges_empty_buckets() {
        let bench = RoundnessCounts([0, 0, 10, 20, 30, 40, 0, 0]);
        let target = RoundnessCounts([1, 1, 8, 20, 30, 38, 1, 1]);
        let r = roundness_chi_squared(&target, &bench, None, 0.05).unwrap();
        assert_eq!(r.df, 3);
        // merged: [0.1 vs 0.10], [0.2], [0.3], [0.4 vs 0.40]
        assert!(r.statistic.abs() < 1e-12);
        assert!(roundness_chi_squared(&target, &RoundnessCounts::default(), None, 0.05).is_err());
    }

    #[test]
    fn bootstrap_of_identity_panel_is_zero_and_deterministic() {
        let reg = panel(1.0, 5, &["a", "b", "c"]);
        let target: Vec<_> = (0..5).map(|w| row("t", "BTC/USD", w, 50.0, 50.0)).collect();
        let cfg = BootstrapConfig {
            replicates: 100,
            seed: 3,
            scope: Scope::PerPair,
        };
        let sd = bootstrap_wash_sd(&target, &reg, None, None, &cfg).unwrap();
        assert!(sd.aggregate.abs() < 1e-6, "{}", sd.aggregate);
        assert!(bootstrap_wash_sd(
            &target,
            &reg,
            None,
            None,
            &BootstrapConfig {
                replicates: 99,
                ..cfg
            }
        )
        .is_err());
    }

    #[test]
    fn cross_validation_needs_three() {
        assert!(
            cross_validate_regulated(&panel(1.0, 5, &["a", "b"]), Scope::PerPair, None).is_err()
        );
        let cv = cross_validate_regulated(&panel(1.0, 5, &["a", "b", "c"]), Scope::PerPair, None)
            .unwrap();
        assert_eq!(cv.estimates.len(), 3);
        assert!(cv.max < 1e-6);
    }

    #[test]
    fn pooled_scope_has_pair_effects() {
        let mut p = panel(1.0, 4, &["a", "b", "c"]);
        for r in panel(3.0, 4, &["a", "b", "c"]) {
            p.push(WeeklyVolumeSplit {
                pair: "ETH/USD".into(),
                ..r
            });
        }
        let set = fit_benchmarks(&p, Scope::Pooled, None).unwrap();
        let m = set.model_for("ETH/USD").unwrap();
        assert!((m.pair_effects["ETH/USD"] - 3f64.ln()).abs() < 1e-9);
        let per_pair = fit_benchmarks(&p, Scope::PerPair, None).unwrap();
        assert_eq!(per_pair.models.len(), 2);
        let json = set.to_json().unwrap();
        assert_eq!(BenchmarkSet::from_json(&json).unwrap(), set);
    }

    #[test]
    fn controls_fall_back_when_covariates_missing() {
        let p = panel(1.0, 4, &["a", "b", "c"]);
        let mut meta = BTreeMap::new();
        for ex in ["a", "b"] {
            meta.insert(
                ex.to_string(),
                ExchangeMeta {
                    exchange_id: ex.into(),
                    name: ex.into(),
                    class: RegulatoryClass::Regulated,
                    covariates: Covariates {
                        age_years: Some(1.0),
                        rank: Some(2.0),
                        traffic_pct: Some(3.0),
                        unique_visitors: Some(4.0),
                    },
                },
            );
        }
        let set = fit_benchmarks(&p, Scope::PerPair, Some(&meta)).unwrap();
        assert!(!set.uses_controls());
        assert_eq!(set.warnings.len(), 1);
    }

    #[test]
    fn report_csv_header() {
        let model = fit_benchmark(&panel(1.0, 4, &["a", "b", "c"]), Scope::PerPair, None).unwrap();
        let rows: Vec<_> = (0..3).map(|w| row("t", "BTC/USD", w, 10.0, 20.0)).collect();
        let e = estimate_wash(&rows, &model, None).unwrap();
        let mut buf = Vec::new();
        write_report_csv(&[e], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "exchange,pair,wash_volume,wash_percent,bootstrap_sd,controls_used,flags\nt,BTC/USD,"
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn week_order_is_irrelevant(vals in prop::collection::vec((1.0f64..1e6, 1.0f64..1e6), 1..30), rot in 0usize..30) {
                let model = fit_benchmark(&panel(1.3, 4, &["a", "b", "c"]), Scope::PerPair, None).unwrap();
                let rows: Vec<_> = vals.iter().enumerate().map(|(w, (r, u))| row("t", "BTC/USD", w as i64, *r, *u)).collect();
                let mut shuffled = rows.clone();
                shuffled.rotate_left(rot % rows.len());
                shuffled.reverse();
                let a = estimate_wash(&rows, &model, None).unwrap().wash_percent;
                let b = estimate_wash(&shuffled, &model, None).unwrap().wash_percent;
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }

            #[test]
            fn scaling_unrounded_up_weakly_increases_wash(vals in prop::collection::vec((1.0f64..1e6, 1.0f64..1e6), 1..30), k in 1.0f64..5.0) {
                let model = fit_benchmark(&panel(1.3, 4, &["a", "b", "c"]), Scope::PerPair, None).unwrap();
                let rows: Vec<_> = vals.iter().enumerate().map(|(w, (r, u))| row("t", "BTC/USD", w as i64, *r, *u)).collect();
                let scaled: Vec<_> = vals.iter().enumerate().map(|(w, (r, u))| row("t", "BTC/USD", w as i64, *r, *u * k)).collect();
                let a = estimate_wash(&rows, &model, None).unwrap();
                let b = estimate_wash(&scaled, &model, None).unwrap();
                prop_assert!(b.wash_volume.unwrap() >= a.wash_volume.unwrap() - 1e-9);
                prop_assert!(b.wash_percent >= a.wash_percent - 1e-9);
                prop_assert!((0.0..=100.0).contains(&b.wash_percent));
            }
        }
    }
}
