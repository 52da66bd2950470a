//! Distribution functions and least squares shared by the detectors.

use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::error::{domain, Error, Result};

/// Upper tail P(X > x) of the χ² distribution with `df` degrees of freedom,
/// via the regularized upper incomplete gamma function Q(df/2, x/2).
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma_ur(df / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// Critical value c with P(χ²_df > c) = alpha.
pub fn chi2_critical(alpha: f64, df: f64) -> f64 {
    ChiSquared::new(df)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - alpha)
}

/// Upper tail P(T > t) of Student's t.
pub fn t_sf(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t == f64::INFINITY {
        return 0.0;
    }
    if t == f64::NEG_INFINITY {
        return 1.0;
    }
    // sf(t) = cdf(-t) keeps precision deep in the upper tail
    StudentsT::new(0.0, 1.0, df)
        .expect("positive degrees of freedom")
        .cdf(-t)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(domain("pearson: inputs must be non-empty and equal length"));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(domain("correlation undefined for a constant list"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Ordinary least squares fit `y ~ X b` with named regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residual_se: f64,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub n: usize,
}

impl OlsFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.coefficients[i])
    }
}

/// Relative residual norm below which a column is treated as collinear.
const COLLINEAR_TOL: f64 = 1e-9;

/// Least squares via modified Gram-Schmidt QR.
///
/// Each column is orthogonalized against the preceding ones (twice, for
/// stability); a column whose residual vanishes relative to its norm is
/// reported as collinear with the earlier columns.
pub fn ols(y: &[f64], columns: &[(&str, &[f64])]) -> Result<OlsFit> {
    let n = y.len();
    let p = columns.len();
    if p == 0 {
        return Err(domain("ols: no regressors"));
    }
    if n < p {
        return Err(Error::InsufficientData(format!(
            "ols: {n} observations for {p} regressors"
        )));
    }
    if let Some((name, _)) = columns.iter().find(|(_, c)| c.len() != n) {
        return Err(domain(format!("ols: column `{name}` has wrong length")));
    }
    if y.iter()
        .chain(columns.iter().flat_map(|(_, c)| c.iter()))
        .any(|v| !v.is_finite())
    {
        return Err(domain("ols: non-finite input"));
    }

    let mut q: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut r = vec![vec![0.0; p]; p];
    for (j, (name, col)) in columns.iter().enumerate() {
        let mut v = col.to_vec();
        let norm0 = dot(&v, &v).sqrt();
        for _pass in 0..2 {
            for (k, qk) in q.iter().enumerate() {
                let proj = dot(qk, &v);
                r[k][j] += proj;
                for (vi, qi) in v.iter_mut().zip(qk) {
                    *vi -= proj * qi;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm0 == 0.0 || norm <= COLLINEAR_TOL * norm0.max(1.0) {
            return Err(Error::Singular {
                column: name.to_string(),
                others: columns[..j].iter().map(|(n, _)| n.to_string()).collect(),
            });
        }
        r[j][j] = norm;
        v.iter_mut().for_each(|x| *x /= norm);
        q.push(v);
    }

    let qty: Vec<f64> = q.iter().map(|qk| dot(qk, y)).collect();
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|k| r[i][k] * beta[k]).sum();
        beta[i] = (qty[i] - s) / r[i][i];
    }

    let fitted: Vec<f64> = (0..n)
        .map(|i| columns.iter().zip(&beta).map(|((_, c), b)| c[i] * b).sum())
        .collect();
    let rss: f64 = y.iter().zip(&fitted).map(|(a, f)| (a - f) * (a - f)).sum();
    let ybar = mean(y);
    let tss: f64 = y.iter().map(|a| (a - ybar) * (a - ybar)).sum();
    let dof = n.saturating_sub(p);
    let sigma2 = if dof > 0 { rss / dof as f64 } else { 0.0 };
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let adj_r_squared = if n > p && tss > 0.0 {
        1.0 - (1.0 - r_squared) * (n - 1) as f64 / (n - p) as f64
    } else {
        r_squared
    };

    // (R^T R)^{-1} diagonal via R^{-1}
    let rinv = invert_upper(&r);
    let std_errors = (0..p)
        .map(|i| {
            let s: f64 = (i..p).map(|k| rinv[i][k] * rinv[i][k]).sum();
            (sigma2 * s).sqrt()
        })
        .collect();

    Ok(OlsFit {
        names: columns.iter().map(|(n, _)| n.to_string()).collect(),
        coefficients: beta,
        std_errors,
        residual_se: sigma2.sqrt(),
        r_squared,
        adj_r_squared,
        n,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn invert_upper(r: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = r.len();
    let mut inv = vec![vec![0.0; p]; p];
    for j in 0..p {
        inv[j][j] = 1.0 / r[j][j];
        for i in (0..j).rev() {
            let s: f64 = (i + 1..=j).map(|k| r[i][k] * inv[k][j]).sum();
            inv[i][j] = -s / r[i][i];
        }
    }
    inv
}
