//! One-sample one-sided t-test and Pearson correlation.

pub mod special;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use special::incomplete_beta_with_complement;

/// Student's t distribution with `df` degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentT {
    df: f64,
}

impl StudentT {
    pub fn new(df: f64) -> Result<Self> {
        if !(df > 0.0 && df.is_finite()) {
            return Err(Error::Stats(format!(
                "degrees of freedom must be positive, got {df}"
            )));
        }
        Ok(Self { df })
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    /// `P(T > t)`.
    pub fn sf(&self, t: f64) -> f64 {
        if t.is_nan() {
            return f64::NAN;
        }
        if t < 0.0 {
            return 1.0 - self.sf(-t);
        }
        if t == f64::INFINITY {
            return 0.0;
        }
        let t2 = t * t;
        let x = self.df / (self.df + t2);
        let y = t2 / (self.df + t2);
        0.5 * incomplete_beta_with_complement(self.df / 2.0, 0.5, x, y)
    }

    /// `P(T <= t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            self.sf(-t)
        } else {
            1.0 - self.sf(t)
        }
    }
}

/// Result of testing `H0: mu = 0` against `H1: mu > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator).
    pub sd: f64,
    pub n: usize,
    pub t_statistic: f64,
    pub p_value_one_sided: f64,
    pub alpha: f64,
    pub reject_h0: bool,
    /// Set when every observation was identical, so `t` is 0 or infinite.
    pub degenerate: bool,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Stats(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

fn mean_sd(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::Stats(format!(
            "t-test needs at least 2 values, got {}",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Stats(format!("non-finite value {v} in sample")));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

/// One-sample one-sided t-test. Requires `n >= 2` and a positive sd.
pub fn one_sample_t(values: &[f64], alpha: f64) -> Result<TTestResult> {
    let (mean, sd) = mean_sd(values)?;
    one_sample_t_from_summary(mean, sd, values.len(), alpha)
}

/// The same test from summary statistics.
pub fn one_sample_t_from_summary(mean: f64, sd: f64, n: usize, alpha: f64) -> Result<TTestResult> {
    check_alpha(alpha)?;
    if n < 2 {
        return Err(Error::Stats(format!("t-test needs n >= 2, got {n}")));
    }
    if !(sd > 0.0) {
        return Err(Error::Stats(
            "standard deviation is zero; t is undefined".into(),
        ));
    }
    let t = mean / (sd / (n as f64).sqrt());
    let p = StudentT::new((n - 1) as f64)?.sf(t);
    Ok(TTestResult {
        mean,
        sd,
        n,
        t_statistic: t,
        p_value_one_sided: p,
        alpha,
        reject_h0: p < alpha,
        degenerate: false,
    })
}

/// Like [`one_sample_t`], but a constant sample yields a degenerate result
/// instead of an error: `t = 0, p = 0.5` for a zero mean, otherwise
/// `t = ±inf` with `p` of 0 or 1.
pub fn one_sample_t_allow_constant(values: &[f64], alpha: f64) -> Result<TTestResult> {
    check_alpha(alpha)?;
    let (mean, sd) = mean_sd(values)?;
    if sd > 0.0 {
        return one_sample_t_from_summary(mean, sd, values.len(), alpha);
    }
    let (t, p) = if mean == 0.0 {
        (0.0, 0.5)
    } else if mean > 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (f64::NEG_INFINITY, 1.0)
    };
    Ok(TTestResult {
        mean,
        sd,
        n: values.len(),
        t_statistic: t,
        p_value_one_sided: p,
        alpha,
        reject_h0: p < alpha,
        degenerate: true,
    })
}

/// Display form of a p-value: three decimals, or below `1e-4` a one-digit
/// upper bound such as `<7e-06` that is never smaller than `p`.
pub fn format_p_value(p: f64) -> String {
    if p.is_nan() {
        return "nan".into();
    }
    if p == 0.0 {
        return "0".into();
    }
    if p >= 1e-4 {
        return format!("{p:.3}");
    }
    let mut exp = p.log10().floor() as i32;
    let mut digit = (p / 10f64.powi(exp)).floor() as i64 + 1;
    if digit >= 10 {
        digit = 1;
        exp += 1;
    }
    format!("<{digit}e-{:02}", -exp)
}

/// Sample Pearson correlation.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Stats(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Stats("correlation needs at least 2 points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Stats(
            "correlation is undefined for a constant input".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
