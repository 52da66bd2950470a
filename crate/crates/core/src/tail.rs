//! Power-law tail fitting of trade sizes.
//!
//! Both estimators report the tail exponent `alpha` of `P(X > x) ~ x^-alpha`.
//! The Hill maximum-likelihood step estimates the density exponent
//! `1 + alpha = 1 + n / sum(ln(x_i / x_min))`; the log-binned OLS fit regresses
//! the log density on log size and reads `alpha = -slope - 1`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, insufficient, Result};
use crate::stats::{normal_cdf, ols};

/// Floor applied to p-values before they are logged or combined.
pub const P_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailConfig {
    /// Share of largest trades forming the tail.
    pub tail_fraction: f64,
    /// Minimum tail observations for the Hill estimator.
    pub min_tail: usize,
    pub bins_per_decade: u32,
    pub min_bins: usize,
    /// Minimum span of the tail, in decades, for the OLS fit.
    pub min_decades: f64,
    /// OLS fits with R² below this are flagged as poor.
    pub poor_fit_r2: f64,
}

impl Default for TailConfig {
    fn default() -> Self {
        TailConfig {
            tail_fraction: 0.1,
            min_tail: 50,
            bins_per_decade: 10,
            min_bins: 5,
            min_decades: 1.0,
            poor_fit_r2: 0.9,
        }
    }
}

/// Nearest-rank cutoff and the tail at or above it.
#[derive(Debug, Clone, PartialEq)]
pub struct TailSample {
    pub x_min: f64,
    /// Tail sizes, ascending.
    pub tail: Vec<f64>,
    pub n_total: usize,
}

/// Split off the top `tail_fraction` of sizes at the nearest-rank percentile.
pub fn tail_cutoff(sizes: &[f64], config: &TailConfig) -> Result<TailSample> {
    let n = sizes.len();
    if n < 10 * config.min_tail {
        return Err(insufficient(format!(
            "tail cutoff needs at least {} observations, got {n}",
            10 * config.min_tail
        )));
    }
    if sizes.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(domain("tail sizes must be positive and finite"));
    }
    let rank = nearest_rank(1.0 - config.tail_fraction, n);
    let mut work = sizes.to_vec();
    let (_, x_min, _) = work.select_nth_unstable_by(rank - 1, f64::total_cmp);
    let x_min = *x_min;
    let mut tail: Vec<f64> = work.into_iter().filter(|&x| x >= x_min).collect();
    tail.sort_by(f64::total_cmp);
    Ok(TailSample {
        x_min,
        tail,
        n_total: n,
    })
}

/// 1-based nearest rank `ceil(q * n)`, clamped to [1, n].
pub fn nearest_rank(q: f64, n: usize) -> usize {
    // exact for the common q = 0.9 case
    let r = if (q - 0.9).abs() < 1e-15 {
        (9 * n).div_ceil(10)
    } else {
        (q * n as f64).ceil() as usize
    };
    r.clamp(1, n.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillFit {
    /// Density exponent `1 + n / sum(ln(x_i / x_min))`.
    pub pdf_exponent: f64,
    /// Tail exponent, `pdf_exponent - 1`.
    pub alpha: f64,
    /// Asymptotic standard error `alpha / sqrt(n)`.
    pub std_error: f64,
    pub n: usize,
}

pub fn fit_hill(tail: &[f64], x_min: f64, config: &TailConfig) -> Result<HillFit> {
    if !(x_min > 0.0 && x_min.is_finite()) {
        return Err(domain(format!("x_min must be positive, got {x_min}")));
    }
    if tail.len() < config.min_tail {
        return Err(insufficient(format!(
            "Hill estimator needs at least {} tail observations, got {}",
            config.min_tail,
            tail.len()
        )));
    }
    let mut log_sum = 0.0;
    for &x in tail {
        if x < x_min {
            return Err(domain(format!("tail value {x} below cutoff {x_min}")));
        }
        log_sum += (x / x_min).ln();
    }
    if log_sum <= 0.0 {
        return Err(domain(
            "Hill estimator undefined: every tail value sits at the cutoff",
        ));
    }
    let n = tail.len();
    let alpha = n as f64 / log_sum;
    Ok(HillFit {
        pdf_exponent: 1.0 + alpha,
        alpha,
        std_error: alpha / (n as f64).sqrt(),
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// OLS of ln(density) on ln(size).
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<LogLogFit> {
    let x: Vec<f64> = points.iter().map(|(c, _)| c.ln()).collect();
    let y: Vec<f64> = points.iter().map(|(_, d)| d.ln()).collect();
    let ones = vec![1.0; points.len()];
    let fit = ols(&y, &[("const", &ones), ("ln_size", &x)])?;
    Ok(LogLogFit {
        slope: fit.coefficients[1],
        intercept: fit.coefficients[0],
        r_squared: fit.r_squared,
        points: points.len(),
    })
}

/// One non-empty logarithmic bin of the tail density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityBin {
    pub lower: f64,
    pub upper: f64,
    pub center: f64,
    pub count: usize,
    pub density: f64,
}

/// Empirical density of the tail over logarithmic bins anchored at `x_min`.
pub fn log_binned_density(tail: &[f64], x_min: f64, bins_per_decade: u32) -> Vec<DensityBin> {
    let bpd = f64::from(bins_per_decade);
    let max = tail.iter().copied().fold(x_min, f64::max);
    let n_bins = ((bpd * (max / x_min).log10()).ceil() as usize).max(1);
    let mut counts = vec![0usize; n_bins];
    for &x in tail {
        let k = (bpd * (x / x_min).log10()).floor().max(0.0) as usize;
        counts[k.min(n_bins - 1)] += 1;
    }
    let n = tail.len() as f64;
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| {
            let lower = x_min * 10f64.powf(k as f64 / bpd);
            let upper = x_min * 10f64.powf((k + 1) as f64 / bpd);
            let center = x_min * 10f64.powf((k as f64 + 0.5) / bpd);
            DensityBin {
                lower,
                upper,
                center,
                count: c,
                density: c as f64 / (n * (upper - lower)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsTail {
    pub alpha: f64,
    pub fit: LogLogFit,
    pub poor_fit: bool,
}

/// Log-binned OLS tail exponent; `Err(InsufficientData)` when the tail spans
/// less than `min_decades` or yields fewer than `min_bins` non-empty bins.
pub fn fit_ols(tail: &[f64], x_min: f64, config: &TailConfig) -> Result<OlsTail> {
    if tail.is_empty() {
        return Err(insufficient("insufficient tail span: empty tail"));
    }
    let max = tail.iter().copied().fold(x_min, f64::max);
    let decades = (max / x_min).log10();
    if decades < config.min_decades {
        return Err(insufficient(format!(
            "insufficient tail span: {decades:.3} decades"
        )));
    }
    let bins = log_binned_density(tail, x_min, config.bins_per_decade);
    if bins.len() < config.min_bins {
        return Err(insufficient(format!(
            "insufficient tail span: {} non-empty bins",
            bins.len()
        )));
    }
    let points: Vec<(f64, f64)> = bins.iter().map(|b| (b.center, b.density)).collect();
    ols_tail_from_density(&points, config)
}

/// Tail exponent from `(bin center, density)` points: alpha = -slope - 1.
pub fn ols_tail_from_density(points: &[(f64, f64)], config: &TailConfig) -> Result<OlsTail> {
    let fit = fit_loglog(points)?;
    Ok(OlsTail {
        alpha: -fit.slope - 1.0,
        poor_fit: fit.r_squared < config.poor_fit_r2,
        fit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub x_min: f64,
    pub n_tail: usize,
    pub hill: HillFit,
    /// `None` when the tail is too narrow for the binned fit.
    pub ols: Option<OlsTail>,
    pub in_pareto_levy: bool,
}

impl TailFit {
    pub fn alpha_hill(&self) -> f64 {
        self.hill.alpha
    }

    pub fn alpha_ols(&self) -> Option<f64> {
        self.ols.map(|o| o.alpha)
    }

    /// CSV `log10_size,log10_density,fitted_ols,fitted_hill` over the tail bins.
    pub fn write_plot_csv<W: Write>(
        &self,
        tail: &[f64],
        bins_per_decade: u32,
        mut out: W,
    ) -> std::io::Result<()> {
        writeln!(out, "log10_size,log10_density,fitted_ols,fitted_hill")?;
        let a = self.hill.alpha;
        for b in log_binned_density(tail, self.x_min, bins_per_decade) {
            let fitted_ols = self
                .ols
                .map(|o| {
                    ((o.fit.intercept + o.fit.slope * b.center.ln()) / std::f64::consts::LN_10)
                        .to_string()
                })
                .unwrap_or_default();
            let hill_density = (a / self.x_min) * (b.center / self.x_min).powf(-a - 1.0);
            writeln!(
                out,
                "{:.6},{:.6},{},{:.6}",
                b.center.log10(),
                b.density.log10(),
                fitted_ols,
                hill_density.log10()
            )?;
        }
        Ok(())
    }
}

fn in_range(alpha: f64) -> bool {
    alpha > 1.0 && alpha < 2.0
}

/// Cutoff, Hill and OLS fits for a sample of sizes.
pub fn fit_tail(sizes: &[f64], config: &TailConfig) -> Result<(TailFit, TailSample)> {
    let sample = tail_cutoff(sizes, config)?;
    let fit = fit_tail_sample(&sample, config)?;
    Ok((fit, sample))
}

pub fn fit_tail_sample(sample: &TailSample, config: &TailConfig) -> Result<TailFit> {
    let hill = fit_hill(&sample.tail, sample.x_min, config)?;
    let ols = fit_ols(&sample.tail, sample.x_min, config).ok();
    let in_pareto_levy = in_range(hill.alpha) && ols.map(|o| in_range(o.alpha)).unwrap_or(false);
    Ok(TailFit {
        x_min: sample.x_min,
        n_tail: sample.tail.len(),
        hill,
        ols,
        in_pareto_levy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoLevyVerdict {
    pub pass: bool,
    /// Mass of Normal(alpha_hill, SE) outside (1, 2), floored at 1e-300.
    pub p_outside: f64,
    /// Mass of Normal(alpha_hill, SE) inside (1, 2), floored at 1e-300.
    pub p_inside: f64,
}

/// Pass iff both exponents lie in (1, 2).
pub fn pareto_levy_verdict(fit: &TailFit) -> ParetoLevyVerdict {
    let (a, se) = (fit.hill.alpha, fit.hill.std_error);
    let (p_inside, p_outside) = if se > 0.0 {
        let lo = (1.0 - a) / se;
        let hi = (2.0 - a) / se;
        // tails computed separately so neither side loses precision
        let outside = normal_cdf(lo) + normal_cdf(-hi);
        let inside = if a <= 1.5 {
            (normal_cdf(hi) - normal_cdf(lo)).max(0.0)
        } else {
            (normal_cdf(-lo) - normal_cdf(-hi)).max(0.0)
        };
        (inside, outside)
    } else if in_range(a) {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    ParetoLevyVerdict {
        pass: fit.in_pareto_levy,
        p_outside: p_outside.clamp(P_FLOOR, 1.0),
        p_inside: p_inside.clamp(P_FLOOR, 1.0),
    }
}
