//! Full-battery report over a dataset: detector results per group, failure
//! rates and wash estimates per exchange, serialized as versioned JSON or a
//! flat CSV.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::battery::{run_pair, BatteryConfig, PairReport};
use crate::error::{Error, Result};
use crate::ingest::WeeklyVolumeSplit;
use crate::summary::{GroupSummary, RoundnessCounts};
use crate::trade::{ExchangeMeta, RegulatoryClass};
use crate::verdict::{counterfactual_rank, failure_rate, FailureRate, RankModel, RankShift};
use crate::wash::{
    aggregate_across, bootstrap_wash_sd, cross_validate_regulated, estimate_exchange,
    fit_benchmarks, BenchmarkSet, BootstrapConfig, CrossValidation, ExchangeWash, Scope,
    WashAggregate,
};

/// Version of the report JSON layout.
pub const SCHEMA_VERSION: &str = "1.0.0";

/// How wash volume is estimated, if at all.
#[derive(Debug, Clone, PartialEq)]
pub enum WashMode {
    Skip,
    /// Fit the benchmark on the regulated exchanges in the input.
    Fit {
        scope: Scope,
        controls: bool,
    },
    /// Score exchanges against a previously fitted benchmark.
    Model(BenchmarkSet),
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub battery: BatteryConfig,
    pub wash: WashMode,
    /// Bootstrap replicates; 0 skips the bootstrap.
    pub bootstrap: usize,
    pub seed: u64,
    pub rank_model: RankModel,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            battery: BatteryConfig::default(),
            wash: WashMode::Fit {
                scope: Scope::PerPair,
                controls: false,
            },
            bootstrap: crate::wash::DEFAULT_BOOTSTRAP,
            seed: 0,
            rank_model: RankModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeVerdict {
    pub exchange: String,
    pub class: Option<RegulatoryClass>,
    pub pairs: Vec<PairReport>,
    /// Failed over completed detector tests, overall and by pair.
    pub failure_rate: FailureRate,
    /// Pairs whose Fisher combination rejects.
    pub fisher_rejections: usize,
    pub wash: Option<ExchangeWash>,
    pub rank: Option<RankShift>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub battery: BatteryConfig,
    pub exchanges: Vec<ExchangeVerdict>,
    pub wash_scope: Option<Scope>,
    pub bootstrap_replicates: usize,
    pub seed: u64,
    pub cross_validation: Option<CrossValidation>,
    pub wash_aggregate: Option<WashAggregate>,
    pub benchmark: Option<BenchmarkSet>,
    pub warnings: Vec<String>,
}

impl Report {
    /// True when any group skipped a test for lack of data.
    pub fn has_flagged_groups(&self) -> bool {
        self.exchanges
            .iter()
            .any(|e| e.pairs.iter().any(PairReport::any_skipped))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    /// CSV `exchange,pair,test,statistic,p,pass,skipped`, one row per test.
    pub fn write_flat_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "exchange",
            "pair",
            "test",
            "statistic",
            "p",
            "pass",
            "skipped",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for ex in &self.exchanges {
            for p in &ex.pairs {
                let mut rows: Vec<(&str, &crate::battery::TestOutcome)> = p.tests().to_vec();
                if let Some(r) = &p.roundness {
                    rows.push(("roundness", r));
                }
                for (name, t) in rows {
                    w.write_record([
                        ex.exchange.as_str(),
                        p.pair.as_str(),
                        name,
                        &opt(t.statistic),
                        &opt(t.p),
                        &t.pass.map(|b| b.to_string()).unwrap_or_default(),
                        t.skipped.as_deref().unwrap_or(""),
                    ])?;
                }
                if let Some(f) = &p.fisher {
                    w.write_record([
                        ex.exchange.as_str(),
                        p.pair.as_str(),
                        "fisher",
                        &f.chi2.to_string(),
                        &f.p_value.to_string(),
                        &(!f.reject).to_string(),
                        "",
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn is_regulated(meta: &BTreeMap<String, ExchangeMeta>, exchange: &str) -> bool {
    meta.get(exchange)
        .map(|m| m.class == RegulatoryClass::Regulated)
        .unwrap_or(false)
}

/// Pooled roundness distribution of the regulated exchanges, per pair.
pub fn regulated_roundness(
    summaries: &[GroupSummary],
    meta: &BTreeMap<String, ExchangeMeta>,
) -> BTreeMap<String, RoundnessCounts> {
    let mut out: BTreeMap<String, RoundnessCounts> = BTreeMap::new();
    for s in summaries.iter().filter(|s| is_regulated(meta, &s.exchange)) {
        out.entry(s.pair.clone()).or_default().merge(&s.roundness);
    }
    out
}

/// Run the battery on every group and, unless skipped, estimate wash volume
/// for every exchange not classed as regulated.
pub fn build_report(
    summaries: &[GroupSummary],
    meta: &BTreeMap<String, ExchangeMeta>,
    options: &ReportOptions,
) -> Result<Report> {
    options.battery.validate()?;
    let roundness = regulated_roundness(summaries, meta);
    let pair_reports: Vec<PairReport> = summaries
        .par_iter()
        .map(|s| run_pair(s, &options.battery, roundness.get(&s.pair)))
        .collect();

    let mut by_exchange: BTreeMap<String, Vec<PairReport>> = BTreeMap::new();
    for r in pair_reports {
        by_exchange.entry(r.exchange.clone()).or_default().push(r);
    }
    let mut panels: BTreeMap<&str, Vec<WeeklyVolumeSplit>> = BTreeMap::new();
    for s in summaries {
        panels
            .entry(&s.exchange)
            .or_default()
            .extend(s.weekly_panel());
    }
    let regulated_panel: Vec<WeeklyVolumeSplit> = panels
        .iter()
        .filter(|(ex, _)| is_regulated(meta, ex))
        .flat_map(|(_, rows)| rows.iter().cloned())
        .collect();

    let mut warnings = Vec::new();
    let (plain, controlled, scope, cross_validation) = match &options.wash {
        WashMode::Skip => (None, None, None, None),
        WashMode::Model(set) => (Some(set.clone()), None, Some(set.scope), None),
        WashMode::Fit { scope, controls } => {
            if regulated_panel.is_empty() {
                return Err(Error::Config(
                    "no regulated exchange in input: pass --no-wash or supply a benchmark model file".into(),
                ));
            }
            let plain = fit_benchmarks(&regulated_panel, *scope, None)?;
            let controlled = if *controls {
                match fit_benchmarks(&regulated_panel, *scope, Some(meta)) {
                    Ok(set) if set.uses_controls() => Some(set),
                    Ok(set) => {
                        warnings.extend(set.warnings);
                        None
                    }
                    Err(e) => {
                        warnings.push(format!("controls model unavailable: {e}"));
                        None
                    }
                }
            } else {
                None
            };
            let cv = match cross_validate_regulated(&regulated_panel, *scope, None) {
                Ok(cv) => Some(cv),
                Err(e) => {
                    warnings.push(format!("regulated cross-validation skipped: {e}"));
                    None
                }
            };
            (Some(plain), controlled, Some(*scope), cv)
        }
    };

    let exchanges: Vec<ExchangeVerdict> = by_exchange
        .into_par_iter()
        .map(|(exchange, pairs)| {
            let fr = failure_rate(
                pairs
                    .iter()
                    .flat_map(|p| p.tests().map(|(_, t)| (p.pair.as_str(), t.pass))),
            );
            let mut flags: Vec<String> = pairs
                .iter()
                .filter(|p| p.any_skipped())
                .map(|p| format!("{}: insufficient data for some tests", p.pair))
                .collect();
            if fr.overall.rate().is_none() {
                flags.push("no completed tests; failure rate undefined".into());
            }
            let m = meta.get(&exchange);
            let covariates = m.and_then(|m| m.covariates.complete());
            let mut wash = None;
            let mut rank = None;
            if let (Some(plain), false) = (&plain, is_regulated(meta, &exchange)) {
                let (set, covs) = match (&controlled, covariates) {
                    (Some(c), Some(x)) => (c, Some(x)),
                    _ => (plain, None),
                };
                if controlled.is_some() && covariates.is_none() {
                    flags.push("covariates incomplete: estimated without controls".into());
                }
                let rows = &panels[exchange.as_str()];
                match estimate_exchange(rows, set, covs) {
                    Ok(mut est) => {
                        if options.bootstrap > 0 && !regulated_panel.is_empty() {
                            let cfg = BootstrapConfig {
                                replicates: options.bootstrap,
                                seed: options.seed,
                                scope: set.scope,
                            };
                            let controls = covs.map(|_| meta);
                            match bootstrap_wash_sd(rows, &regulated_panel, controls, covs, &cfg) {
                                Ok(sd) => {
                                    for e in &mut est.per_pair {
                                        e.bootstrap_sd = e
                                            .pair
                                            .as_ref()
                                            .and_then(|p| sd.per_pair.get(p))
                                            .copied();
                                    }
                                    est.aggregate.bootstrap_sd = Some(sd.aggregate);
                                }
                                Err(e) => flags.push(format!("bootstrap failed: {e}")),
                            }
                        }
                        if let Some(r) = m.and_then(|m| m.covariates.rank) {
                            let volume = est.aggregate.total_value;
                            if let Ok(shift) = counterfactual_rank(
                                r.round() as i64,
                                volume,
                                est.aggregate.wash_percent,
                                &options.rank_model,
                            ) {
                                rank = Some(shift);
                            }
                        }
                        wash = Some(est);
                    }
                    Err(e) => flags.push(format!("wash estimate failed: {e}")),
                }
            }
            ExchangeVerdict {
                class: m.map(|m| m.class),
                fisher_rejections: pairs
                    .iter()
                    .filter(|p| p.fisher.map(|f| f.reject).unwrap_or(false))
                    .count(),
                failure_rate: fr,
                pairs,
                wash,
                rank,
                flags,
                exchange,
            }
        })
        .collect();

    let aggregates: Vec<_> = exchanges
        .iter()
        .filter_map(|e| e.wash.as_ref().map(|w| w.aggregate.clone()))
        .collect();
    let wash_aggregate = if aggregates.is_empty() {
        None
    } else {
        aggregate_across(&aggregates).ok()
    };

    Ok(Report {
        schema_version: SCHEMA_VERSION.to_string(),
        battery: options.battery,
        exchanges,
        wash_scope: scope,
        bootstrap_replicates: options.bootstrap,
        seed: options.seed,
        cross_validation,
        wash_aggregate,
        benchmark: plain,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::summary::summarize;
    use crate::synth::{gen_exchange, GeneratorConfig, LabeledTape};
    use crate::trade::{Covariates, PairRegistry};

    fn meta(rows: &[(&str, RegulatoryClass)]) -> BTreeMap<String, ExchangeMeta> {
        rows.iter()
            .map(|(ex, class)| {
                (
                    ex.to_string(),
                    ExchangeMeta {
                        exchange_id: ex.to_string(),
                        name: ex.to_string(),
                        class: *class,
                        covariates: Covariates::default(),
                    },
                )
            })
            .collect()
    }

    fn tapes(n: usize) -> Vec<GroupSummary> {
        let reg = PairRegistry::default();
        let spec = reg.get("BTC/USD").unwrap().clone();
        let mut all = Vec::new();
        for (ex, w) in [("R1", 0.0), ("R2", 0.0), ("R3", 0.0), ("W", 0.8)] {
            all.push(gen_exchange(&GeneratorConfig::new(9, ex, spec.clone(), n, w)).unwrap());
        }
        let tape = LabeledTape::concat(all);
        summarize(&tape.to_dataset(), &reg).unwrap()
    }

    #[test]
    fn wash_exchange_is_flagged_by_fisher_and_estimate() {
        let summaries = tapes(200_000);
        let m = meta(&[
            ("R1", RegulatoryClass::Regulated),
            ("R2", RegulatoryClass::Regulated),
            ("R3", RegulatoryClass::Regulated),
            ("W", RegulatoryClass::UnregulatedTier2),
        ]);
        let opts = ReportOptions {
            bootstrap: 100,
            ..Default::default()
        };
        let report = build_report(&summaries, &m, &opts).unwrap();
        let w = report.exchanges.iter().find(|e| e.exchange == "W").unwrap();
        assert_eq!(w.fisher_rejections, 1);
        let est = w.wash.as_ref().unwrap();
        assert!(
            est.aggregate.wash_percent > 50.0,
            "{}",
            est.aggregate.wash_percent
        );
        assert!(est.aggregate.bootstrap_sd.is_some());
        assert!(report.cross_validation.is_some());
        let r1 = report
            .exchanges
            .iter()
            .find(|e| e.exchange == "R1")
            .unwrap();
        assert!(r1.wash.is_none());
        assert_eq!(r1.fisher_rejections, 0);
        let json = report.to_json().unwrap();
        assert!(json.contains("\"schema_version\": \"1.0.0\""));
        let again = build_report(&summaries, &m, &opts).unwrap();
        assert_eq!(again.to_json().unwrap(), json);
    }

    #[test]
    fn wash_without_regulated_exchange_is_an_error() {
        let summaries = tapes(20_000);
        let err =
            build_report(&summaries, &BTreeMap::new(), &ReportOptions::default()).unwrap_err();
        assert!(err.to_string().contains("--no-wash"));
        let opts = ReportOptions {
            wash: WashMode::Skip,
            ..Default::default()
        };
        let report = build_report(&summaries, &BTreeMap::new(), &opts).unwrap();
        assert!(report.exchanges.iter().all(|e| e.wash.is_none()));
        let mut buf = Vec::new();
        report.write_flat_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("exchange,pair,test,statistic,p,pass,skipped\n"));
    }
}
