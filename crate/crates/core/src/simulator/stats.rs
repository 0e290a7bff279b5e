use serde::{Deserialize, Serialize};

use crate::analytic::SurvivalTable;
use crate::{ModelError, Result};

/// `entry[l]` = fraction of samples strictly greater than `l`, for
/// `l = 0..=max(samples)`.
pub fn empirical_survival(samples: &[u32]) -> Result<Vec<f64>> {
    let max = *samples.iter().max().ok_or(ModelError::EmptyInput)? as usize;
    let mut counts = vec![0u64; max + 1];
    for &s in samples {
        counts[s as usize] += 1;
    }
    let n = samples.len() as f64;
    let mut above = samples.len() as u64;
    Ok(counts
        .iter()
        .map(|&c| {
            above -= c;
            above as f64 / n
        })
        .collect())
}

/// Dvoretzky–Kiefer–Wolfowitz goodness-of-fit summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `sup_l |empirical[l] - exact[l]|`
    pub statistic: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub n: u64,
    pub argmax_l: usize,
    pub verdict: bool,
}

/// `sqrt(ln(2/alpha) / (2n))`: with probability at least `1 - alpha` the
/// empirical survival function of `n` i.i.d. samples stays this close to
/// the true one everywhere.
pub fn dkw_threshold(alpha: f64, n: u64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

fn at_or_last(values: &[f64], l: usize) -> f64 {
    values.get(l).or(values.last()).copied().unwrap_or(0.0)
}

pub fn compare(
    empirical: &[f64],
    exact: &SurvivalTable,
    alpha: f64,
    n: u64,
) -> Result<ComparisonReport> {
    if n == 0 {
        return Err(ModelError::param("n", "sample count must be at least 1"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ModelError::param(
            "alpha",
            format!("must lie in (0, 1), got {alpha}"),
        ));
    }
    if empirical.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let exact = exact.survival();
    let len = empirical.len().max(exact.len());
    let (argmax_l, statistic) = (0..len)
        .map(|l| (l, (at_or_last(empirical, l) - at_or_last(exact, l)).abs()))
        .fold((0, 0.0_f64), |best, cur| if cur.1 > best.1 { cur } else { best });
    let threshold = dkw_threshold(alpha, n);
    Ok(ComparisonReport {
        statistic,
        threshold,
        alpha,
        n,
        argmax_l,
        verdict: statistic <= threshold,
    })
}

/// Mean, variance and batch-means standard errors of a correlated series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub mean: f64,
    pub var: f64,
    pub mean_se: f64,
    pub var_se: f64,
    pub batches: usize,
}

/// Splits `xs` into `batches` contiguous batches and uses the spread of the
/// per-batch mean and variance to estimate standard errors, which stays
/// honest when successive observations are correlated.
pub fn batch_summary(xs: &[f64], batches: usize) -> BatchSummary {
    let n = xs.len();
    let (mean, var) = mean_var(xs);
    let batches = batches.min(n).max(1);
    if batches < 2 {
        return BatchSummary {
            mean,
            var,
            mean_se: f64::NAN,
            var_se: f64::NAN,
            batches,
        };
    }
    let size = n / batches;
    let (means, vars): (Vec<f64>, Vec<f64>) =
        xs.chunks_exact(size).take(batches).map(mean_var).unzip();
    let se = |v: &[f64]| (mean_var(v).1 / v.len() as f64).sqrt();
    BatchSummary {
        mean,
        var,
        mean_se: se(&means),
        var_se: se(&vars),
        batches,
    }
}

/// Sample mean and unbiased sample variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, ss / (n - 1.0))
}
