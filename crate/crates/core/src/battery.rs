//! The per-group detector battery: Benford, clustering at 100 and 500 base
//! units, and the Pareto-Levy tail test, combined with Fisher's method.

use serde::{Deserialize, Serialize};

use crate::benford::chi_squared_benford;
use crate::clustering::{cluster_pairs, clustering_t_test, ClusterConfig};
use crate::error::{Error, Result};
use crate::summary::{GroupSummary, RoundnessCounts};
use crate::tail::{fit_tail_sample, pareto_levy_verdict, TailConfig};
use crate::verdict::{fisher_combine, FisherResult};
use crate::wash::roundness_chi_squared;

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_EFFECTIVE_N: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryConfig {
    pub alpha: f64,
    /// Sample size the χ² statistics are scaled to; `None` uses raw counts.
    pub effective_n: Option<f64>,
    pub cluster: ClusterConfig,
    pub tail: TailConfig,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            alpha: DEFAULT_ALPHA,
            effective_n: Some(DEFAULT_EFFECTIVE_N),
            cluster: ClusterConfig::default(),
            tail: TailConfig::default(),
        }
    }
}

impl BatteryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(Error::Config(format!(
                "alpha {} outside (0, 0.5]",
                self.alpha
            )));
        }
        if let Some(n) = self.effective_n {
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::Config(format!(
                    "effective N must be positive, got {n}"
                )));
            }
        }
        Ok(())
    }
}

/// One test's result; `pass = None` means the test was skipped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: Option<f64>,
    /// p-value of the test as stated.
    pub p: Option<f64>,
    /// Evidence against authentic behaviour, as fed to Fisher's method.
    pub conformity_p: Option<f64>,
    pub pass: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

impl TestOutcome {
    fn skipped(err: Error) -> Self {
        TestOutcome {
            skipped: Some(err.to_string()),
            ..Default::default()
        }
    }

    pub fn is_skipped(&self) -> bool {
        self.pass.is_none()
    }
}

/// Battery results for one `(exchange, pair)` group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub exchange: String,
    pub pair: String,
    pub n_trades: u64,
    pub round_share: f64,
    pub benford: TestOutcome,
    pub clustering_100: TestOutcome,
    pub clustering_500: TestOutcome,
    pub tail: TestOutcome,
    pub alpha_hill: Option<f64>,
    pub alpha_ols: Option<f64>,
    /// Roundness distribution against the regulated benchmark, when one exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roundness: Option<TestOutcome>,
    /// Fisher combination of Benford, clustering-100 and tail; `None` if any was skipped.
    pub fisher: Option<FisherResult>,
}

impl PairReport {
    /// The four detector tests with their names.
    pub fn tests(&self) -> [(&'static str, &TestOutcome); 4] {
        [
            ("benford", &self.benford),
            ("clustering_100", &self.clustering_100),
            ("clustering_500", &self.clustering_500),
            ("tail", &self.tail),
        ]
    }

    pub fn any_skipped(&self) -> bool {
        self.tests().iter().any(|(_, t)| t.is_skipped())
    }

    /// Number of failed test families among Benford, clustering-100 and tail.
    pub fn failed_families(&self) -> usize {
        [&self.benford, &self.clustering_100, &self.tail]
            .iter()
            .filter(|t| t.pass == Some(false))
            .count()
    }
}

fn clustering_outcome(summary: &GroupSummary, step: u64, config: &BatteryConfig) -> TestOutcome {
    let pairs = match cluster_pairs(&summary.sizes, step, &config.cluster) {
        Ok(p) => p,
        Err(e) => return TestOutcome::skipped(e),
    };
    if pairs.insufficient_windows {
        return TestOutcome::skipped(Error::InsufficientData(format!(
            "{} windows with support >= {}, need {}",
            pairs.pairs.len(),
            config.cluster.min_support,
            config.cluster.min_windows
        )));
    }
    match clustering_t_test(&pairs.pairs, step, config.alpha) {
        Ok(r) => TestOutcome {
            statistic: Some(r.t_statistic),
            p: Some(r.p_value),
            conformity_p: Some(r.conformity_p()),
            pass: Some(r.clustered),
            skipped: None,
        },
        Err(e) => TestOutcome::skipped(e),
    }
}

/// Run every detector on one group summary.
///
/// `roundness_benchmark` is the pooled regulated roundness distribution for
/// the same pair, if available.
pub fn run_pair(
    summary: &GroupSummary,
    config: &BatteryConfig,
    roundness_benchmark: Option<&RoundnessCounts>,
) -> PairReport {
    let benford = match chi_squared_benford(&summary.digits, config.effective_n, config.alpha) {
        Ok(r) => TestOutcome {
            statistic: Some(r.statistic),
            p: Some(r.p_value),
            conformity_p: Some(r.p_value),
            pass: Some(!r.reject),
            skipped: None,
        },
        Err(e) => TestOutcome::skipped(e),
    };
    let clustering_100 = clustering_outcome(summary, 100, config);
    let clustering_500 = clustering_outcome(summary, 500, config);

    let fit = summary
        .tail_sample(&config.tail)
        .and_then(|s| fit_tail_sample(&s, &config.tail));
    let (tail, alpha_hill, alpha_ols) = match fit {
        Ok(fit) => {
            let v = pareto_levy_verdict(&fit);
            (
                TestOutcome {
                    statistic: Some(fit.alpha_hill()),
                    p: Some(v.p_inside),
                    conformity_p: Some(v.p_inside),
                    pass: Some(v.pass),
                    skipped: None,
                },
                Some(fit.alpha_hill()),
                fit.alpha_ols(),
            )
        }
        Err(e) => (TestOutcome::skipped(e), None, None),
    };

    let roundness = roundness_benchmark.map(|b| {
        match roundness_chi_squared(&summary.roundness, b, config.effective_n, config.alpha) {
            Ok(r) => TestOutcome {
                statistic: Some(r.statistic),
                p: Some(r.p_value),
                conformity_p: Some(r.p_value),
                pass: Some(!r.reject),
                skipped: None,
            },
            Err(e) => TestOutcome::skipped(e),
        }
    });

    let fisher = match (
        benford.conformity_p,
        clustering_100.conformity_p,
        tail.conformity_p,
    ) {
        (Some(a), Some(b), Some(c)) => fisher_combine(&[a, b, c], config.alpha).ok(),
        _ => None,
    };

    PairReport {
        exchange: summary.exchange.clone(),
        pair: summary.pair.clone(),
        n_trades: summary.count,
        round_share: if summary.count > 0 {
            summary.round_count as f64 / summary.count as f64
        } else {
            0.0
        },
        benford,
        clustering_100,
        clustering_500,
        tail,
        alpha_hill,
        alpha_ols,
        roundness,
        fisher,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_exchange, GeneratorConfig};
    use crate::trade::PairRegistry;

    fn summary_for(w: f64, n: usize, seed: u64) -> GroupSummary {
        let spec = PairRegistry::default().get("BTC/USD").unwrap().clone();
        let tape = gen_exchange(&GeneratorConfig::new(seed, "X", spec.clone(), n, w)).unwrap();
        GroupSummary::from_trades("X", "BTC/USD", spec, &tape.trades).unwrap()
    }

    #[test]
    fn authentic_tape_passes() {
        let r = run_pair(
            &summary_for(0.0, 300_000, 1),
            &BatteryConfig::default(),
            None,
        );
        assert_eq!(r.benford.pass, Some(true), "{r:?}");
        assert_eq!(r.clustering_100.pass, Some(true), "{r:?}");
        assert_eq!(r.tail.pass, Some(true), "{r:?}");
        assert!(!r.fisher.unwrap().reject);
        assert_eq!(r.failed_families(), 0);
    }

    #[test]
    fn wash_heavy_tape_fails() {
        let r = run_pair(
            &summary_for(0.8, 300_000, 1),
            &BatteryConfig::default(),
            None,
        );
        assert!(r.failed_families() >= 2, "{r:?}");
        assert!(r.fisher.unwrap().reject);
    }

    #[test]
    fn tiny_group_is_skipped() {
        let r = run_pair(&summary_for(0.0, 200, 1), &BatteryConfig::default(), None);
        assert!(r.clustering_100.is_skipped());
        assert!(r.tail.is_skipped());
        assert!(r.fisher.is_none());
        assert!(r.any_skipped());
    }

    #[test]
    fn roundness_against_own_distribution_passes() {
        let s = summary_for(0.0, 50_000, 2);
        let r = run_pair(&s, &BatteryConfig::default(), Some(&s.roundness));
        let rd = r.roundness.unwrap();
        assert_eq!(rd.statistic, Some(0.0));
        assert_eq!(rd.pass, Some(true));
    }

    #[test]
    fn config_validation() {
        assert!(BatteryConfig::default().validate().is_ok());
        assert!(BatteryConfig {
            alpha: 0.6,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(BatteryConfig {
            effective_n: Some(0.0),
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
