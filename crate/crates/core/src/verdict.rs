//! Combining test outcomes: Fisher's method, failure rates, the
//! failure-rate regression, Spearman correlation and rank counterfactuals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{domain, insufficient, Error, Result};
use crate::stats::{chi2_critical, chi2_sf, ols, pearson, t_sf};
use crate::tail::P_FLOOR;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherResult {
    pub chi2: f64,
    pub df: u32,
    pub critical: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
}

/// `chi2 = -2 sum ln p` on `2n` degrees of freedom; p-values below 1e-300
/// are floored first. Rejects iff chi2 exceeds the critical value at `alpha`.
pub fn fisher_combine(p_values: &[f64], alpha: f64) -> Result<FisherResult> {
    if p_values.is_empty() {
        return Err(domain("Fisher's method needs at least one p-value"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(format!("alpha {alpha} outside (0, 1)")));
    }
    let mut chi2 = 0.0;
    for &p in p_values {
        if !(0.0..=1.0).contains(&p) {
            return Err(domain(format!("p-value {p} outside [0, 1]")));
        }
        chi2 -= 2.0 * p.max(P_FLOOR).ln();
    }
    let df = 2 * p_values.len() as u32;
    let critical = chi2_critical(alpha, f64::from(df));
    Ok(FisherResult {
        chi2,
        df,
        critical,
        p_value: chi2_sf(chi2, f64::from(df)),
        alpha,
        reject: chi2 > critical,
    })
}

/// Failed tests over completed tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FailureCount {
    pub failures: usize,
    pub completed: usize,
    pub skipped: usize,
}

impl FailureCount {
    /// `None` when no test completed.
    pub fn rate(&self) -> Option<f64> {
        (self.completed > 0).then(|| self.failures as f64 / self.completed as f64)
    }

    fn record(&mut self, pass: Option<bool>) {
        match pass {
            Some(true) => self.completed += 1,
            Some(false) => {
                self.completed += 1;
                self.failures += 1;
            }
            None => self.skipped += 1,
        }
    }
}

/// Overall failure count and counts grouped by key (e.g. pair).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FailureRate {
    pub overall: FailureCount,
    pub by_group: BTreeMap<String, FailureCount>,
}

/// Tally `(group, pass)` outcomes; `pass = None` marks a skipped test.
pub fn failure_rate<'a, I>(outcomes: I) -> FailureRate
where
    I: IntoIterator<Item = (&'a str, Option<bool>)>,
{
    let mut out = FailureRate::default();
    for (group, pass) in outcomes {
        out.overall.record(pass);
        out.by_group
            .entry(group.to_string())
            .or_default()
            .record(pass);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// Two-sided p-value of the slope.
    pub slope_p: f64,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub n: usize,
}

/// OLS of wash fraction on failure rate over `(failure_rate, wash)` points.
pub fn wash_failure_regression(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 3 {
        return Err(insufficient(format!(
            "regression needs at least 3 points, got {}",
            points.len()
        )));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let ones = vec![1.0; points.len()];
    let fit = ols(&y, &[("intercept", &ones), ("failure_rate", &x)])?;
    let (slope, se) = (fit.coefficients[1], fit.std_errors[1]);
    let df = (points.len() - 2) as f64;
    let slope_p = if se > 0.0 {
        2.0 * t_sf((slope / se).abs(), df)
    } else {
        0.0
    };
    Ok(LinearFit {
        slope,
        intercept: fit.coefficients[0],
        slope_se: se,
        slope_p,
        r_squared: fit.r_squared,
        adj_r_squared: fit.adj_r_squared,
        n: points.len(),
    })
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(domain("spearman: lists differ in length"));
    }
    if x.len() < 3 {
        return Err(insufficient("spearman needs at least 3 observations"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(domain("spearman: non-finite value"));
    }
    let rho = pearson(&average_ranks(x), &average_ranks(y))?;
    Ok(rho.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Ten,
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Ten => x.log10(),
        }
    }
}

impl std::str::FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "e" | "ln" | "natural" => Ok(LogBase::Natural),
            "10" | "log10" | "ten" => Ok(LogBase::Ten),
            other => Err(Error::Config(format!("unknown log base `{other}`"))),
        }
    }
}

/// `rank = a + b log(volume)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankModel {
    pub a: f64,
    pub b: f64,
    pub base: LogBase,
}

impl Default for RankModel {
    fn default() -> Self {
        RankModel {
            a: 416.269,
            b: -19.202,
            base: LogBase::Natural,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankShift {
    /// Model rank at the reported volume.
    pub model_rank: f64,
    /// Model rank at the volume net of wash trading.
    pub counterfactual_model_rank: f64,
    /// Positions lost once wash volume is removed, rounded.
    pub positions: i64,
    /// `reported_rank + positions`.
    pub counterfactual_rank: i64,
}

/// Rank an exchange would hold with its wash volume removed.
pub fn counterfactual_rank(
    reported_rank: i64,
    reported_volume: f64,
    wash_percent: f64,
    model: &RankModel,
) -> Result<RankShift> {
    if !(reported_volume > 0.0 && reported_volume.is_finite()) {
        return Err(domain("reported volume must be positive"));
    }
    if wash_percent >= 100.0 {
        return Err(domain(
            "wash percent 100 leaves no real volume; rank undefined",
        ));
    }
    if !(wash_percent >= 0.0) {
        return Err(domain(format!(
            "wash percent {wash_percent} outside [0, 100)"
        )));
    }
    let real = reported_volume * (1.0 - wash_percent / 100.0);
    let model_rank = model.a + model.b * model.base.log(reported_volume);
    let counterfactual_model_rank = model.a + model.b * model.base.log(real);
    let positions = (model.b * model.base.log(1.0 - wash_percent / 100.0)).round() as i64;
    Ok(RankShift {
        model_rank,
        counterfactual_model_rank,
        positions,
        counterfactual_rank: reported_rank + positions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fisher_examples() {
        let r = fisher_combine(&[0.05, 0.05, 0.05], 0.05).unwrap();
        assert!((r.chi2 - (-6.0 * 0.05f64.ln())).abs() < 1e-12);
        assert!((r.chi2 - 17.97).abs() < 0.01);
        assert!((r.critical - 12.592).abs() < 1e-3);
        assert_eq!(r.df, 6);
        assert!(r.reject);
        let r = fisher_combine(&[1.0, 1.0, 1.0], 0.05).unwrap();
        assert_eq!(r.chi2, 0.0);
        assert!(!r.reject);
    }

    #[test]
    fn fisher_floors_zero_and_rejects_invalid() {
        let r = fisher_combine(&[0.0], 0.05).unwrap();
        assert!((r.chi2 - (-2.0 * 1e-300f64.ln())).abs() < 1e-9);
        assert!(fisher_combine(&[-0.1], 0.05).is_err());
        assert!(fisher_combine(&[f64::NAN], 0.05).is_err());
        assert!(fisher_combine(&[], 0.05).is_err());
    }

    #[test]
    fn failure_rates() {
        let all_pass = failure_rate([("BTC", Some(true)), ("ETH", Some(true))]);
        assert_eq!(all_pass.overall.rate(), Some(0.0));
        let mut outcomes: Vec<(&str, Option<bool>)> = vec![("BTC", Some(false)); 3];
        outcomes.extend(vec![("ETH", Some(true)); 9]);
        outcomes.push(("ETH", None));
        let r = failure_rate(outcomes.iter().copied());
        assert_eq!(r.overall.rate(), Some(0.25));
        assert_eq!(r.overall.skipped, 1);
        assert_eq!(r.by_group["BTC"].rate(), Some(1.0));
        let none = failure_rate([("BTC", None)]);
        assert_eq!(none.overall.rate(), None);
    }

    #[test]
    fn regression_on_exact_line() {
        let pts: Vec<(f64, f64)> = (0..5)
            .map(|i| (i as f64 / 4.0, 0.5 * i as f64 / 4.0 + 0.1))
            .collect();
        let f = wash_failure_regression(&pts).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-12 && (f.intercept - 0.1).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(wash_failure_regression(&[(0.5, 0.1), (0.5, 0.2), (0.5, 0.3)]).is_err());
        assert!(wash_failure_regression(&pts[..2]).is_err());
    }

    #[test]
    fn spearman_extremes_and_ties() {
        let v = [10.0, 20.0, 30.0, 40.0, 50.0];
        let inverse = [5.0, 4.0, 3.0, 2.0, 1.0];
        assert_eq!(spearman(&v, &inverse).unwrap(), -1.0);
        assert_eq!(spearman(&v, &v).unwrap(), 1.0);
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
        assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn spearman_matches_brute_force() {
        use rand::Rng;
        let mut rng = crate::seed::rng_for(5, "spearman", 0);
        let x: Vec<f64> = (0..100)
            .map(|_| (rng.random::<f64>() * 20.0).floor())
            .collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.random::<f64>() * 10.0).collect();
        // brute force: rank by counting smaller and equal elements
        let rank = |xs: &[f64]| -> Vec<f64> {
            xs.iter()
                .map(|a| {
                    let less = xs.iter().filter(|b| *b < a).count() as f64;
                    let eq = xs.iter().filter(|b| *b == a).count() as f64;
                    less + (eq + 1.0) / 2.0
                })
                .collect()
        };
        let (rx, ry) = (rank(&x), rank(&y));
        let n = rx.len() as f64;
        let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
        let oracle = cov / (vx * vy).sqrt();
        assert!((spearman(&x, &y).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn rank_shift_examples() {
        let m = RankModel::default();
        let zero = counterfactual_rank(10, 1e8, 0.0, &m).unwrap();
        assert_eq!(zero.positions, 0);
        assert_eq!(zero.counterfactual_rank, 10);
        let seventy = counterfactual_rank(10, 1e8, 70.0, &m).unwrap();
        assert_eq!(seventy.positions, 23);
        assert!(
            (seventy.counterfactual_model_rank - seventy.model_rank - 19.202 * (1.0f64 / 0.3).ln())
                .abs()
                < 1e-9
        );
        assert_eq!(
            counterfactual_rank(10, 1e8, 50.0, &m).unwrap().positions,
            13
        );
        let ten = RankModel {
            base: LogBase::Ten,
            ..m
        };
        assert_eq!(
            counterfactual_rank(10, 1e8, 70.0, &ten).unwrap().positions,
            10
        );
        assert!(counterfactual_rank(10, 1e8, 100.0, &m).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn fisher_symmetric_and_monotone(ps in prop::collection::vec(1e-12f64..=1.0, 1..6), k in 0usize..6, shrink in 0.0f64..1.0) {
                let a = fisher_combine(&ps, 0.05).unwrap();
                let mut rev = ps.clone();
                rev.reverse();
                prop_assert!((fisher_combine(&rev, 0.05).unwrap().chi2 - a.chi2).abs() < 1e-9);
                let mut lower = ps.clone();
                let i = k % ps.len();
                lower[i] *= shrink.max(1e-6);
                prop_assert!(fisher_combine(&lower, 0.05).unwrap().chi2 >= a.chi2);
                prop_assert_eq!(a.reject, a.chi2 > a.critical);
            }

            #[test]
            fn spearman_monotone_invariance(x in prop::collection::vec(-1e3f64..1e3, 3..40), seed in 0u64..1000) {
                use rand::Rng;
                let mut rng = crate::seed::rng_for(seed, "sp", 0);
                let y: Vec<f64> = x.iter().map(|_| rng.random::<f64>()).collect();
                prop_assume!(x.iter().any(|v| *v != x[0]));
                let base = spearman(&x, &y).unwrap();
                let tx: Vec<f64> = x.iter().map(|v| (v / 100.0).exp()).collect();
                prop_assert!((spearman(&tx, &y).unwrap() - base).abs() < 1e-12);
            }

            #[test]
            fn rank_shift_increases_with_wash(w1 in 0.0f64..99.0, dw in 0.01f64..0.9) {
                let m = RankModel::default();
                let a = counterfactual_rank(1, 1e6, w1, &m).unwrap();
                let b = counterfactual_rank(1, 1e6, w1 + dw, &m).unwrap();
                prop_assert!(b.counterfactual_model_rank > a.counterfactual_model_rank);
                prop_assert!(b.positions >= a.positions);
            }
        }
    }
}
