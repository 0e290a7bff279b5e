//! Heavy-traffic approximations to the law of `L` and probes of their error
//! terms against the exact values from [`crate::analytic`].
//!
//! The index range splits at `l₀ = λ - √λ`. Below it (the body) the survival
//! function is `1 - l/λ + 1/(λ(1 - l/λ))` up to `O(1/λ) + O(1/(λ²(1-l/λ)³))`;
//! at and above it (the tail) it is dominated by a Poisson-like term with the
//! explicit constant `e⁷`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::analytic::{self, build_survival_table, MomentMethod, MAX_MOMENT_ORDER};
use crate::{ModelError, ModelParams, Result};

/// Smallest load for which the tail bound is certified (`⌊λ - 2√λ⌋ ≥ 0` and
/// the bounding chain behind it hold from here on).
pub const TAIL_MIN_LAMBDA: f64 = 9.0;

/// Largest `n` accepted by [`t_sum_exact`].
pub const MAX_T_ORDER: u32 = 5;

/// `ln` of the constant in the tail bound.
const TAIL_LOG_CONSTANT: f64 = 7.0;

/// Body/tail split point `l₀ = λ - s` with `s = √λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyTailSplit {
    pub lambda: f64,
    pub s: f64,
    pub l0: f64,
}

impl BodyTailSplit {
    pub fn new(params: ModelParams) -> Self {
        let lambda = params.lambda();
        let s = lambda.sqrt();
        Self {
            lambda,
            s,
            l0: lambda - s,
        }
    }

    /// Largest integer index inside the body, if any.
    pub fn last_body_index(&self) -> Option<usize> {
        (self.l0 >= 0.0).then(|| self.l0.floor() as usize)
    }

    /// Smallest integer index inside the tail.
    pub fn first_tail_index(&self) -> usize {
        self.l0.max(0.0).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticMoment {
    pub m: u32,
    pub leading: f64,
    pub second: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSweep {
    pub m: u32,
    pub grid: Vec<f64>,
    pub exact: Vec<f64>,
    pub expansion: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl ResidualSweep {
    /// `max - min` of the normalized residuals.
    pub fn width(&self) -> f64 {
        spread(&self.residuals)
    }
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if values.is_empty() {
        0.0
    } else {
        max - min
    }
}

/// Two-term body approximation `(1 - l/λ) + 1/(λ(1 - l/λ))` to `Pr[L > l]`.
///
/// The neglected terms are `O(1/λ) + O(1/(λ²(1 - l/λ)³))`; the second one
/// grows without bound as `l → λ`, so indices past `l₀ = λ - √λ` are rejected.
pub fn body_estimate(params: ModelParams, l: usize) -> Result<f64> {
    let split = BodyTailSplit::new(params);
    if l as f64 > split.l0 {
        return Err(ModelError::Domain {
            l: l as u64,
            region: "body",
            boundary: split.l0,
        });
    }
    let lambda = params.lambda();
    let gap = 1.0 - l as f64 / lambda;
    Ok(gap + 1.0 / (lambda * gap))
}

/// `ln(e⁷ e^{-λ} λ^l / l!)`, uncapped.
pub fn log_tail_bound(params: ModelParams, l: usize) -> f64 {
    let lambda = params.lambda();
    let lf = l as f64;
    TAIL_LOG_CONSTANT - lambda + lf * lambda.ln() - ln_gamma(lf + 1.0)
}

/// Upper bound `min(1, e⁷ e^{-λ} λ^l / l!)` on `Pr[L > l]` in the tail.
pub fn tail_bound(params: ModelParams, l: usize) -> Result<f64> {
    let lambda = params.lambda();
    if lambda < TAIL_MIN_LAMBDA {
        return Err(ModelError::param(
            "lambda",
            format!("tail bound is only certified for lambda >= {TAIL_MIN_LAMBDA}, got {lambda}"),
        ));
    }
    let split = BodyTailSplit::new(params);
    if (l as f64) < split.l0 {
        return Err(ModelError::Domain {
            l: l as u64,
            region: "tail",
            boundary: split.l0,
        });
    }
    Ok(log_tail_bound(params, l).min(0.0).exp())
}

/// `Ex[L^m] ≈ λ^m/(m+1) + m λ^{m-1} ln(λ)/2`.
pub fn moment_expansion(params: ModelParams, m: u32) -> Result<AsymptoticMoment> {
    if m == 0 {
        return Err(ModelError::param("m", "expansion is stated for m >= 1"));
    }
    let lambda = params.lambda();
    let mf = f64::from(m);
    let leading = lambda.powi(m as i32) / (mf + 1.0);
    let second = mf * lambda.powi(m as i32 - 1) * lambda.ln() / 2.0;
    Ok(AsymptoticMoment {
        m,
        leading,
        second,
        value: leading + second,
    })
}

/// `Var[L] ≈ λ²/12 + λ ln(λ)/2`.
pub fn variance_expansion(params: ModelParams) -> f64 {
    let lambda = params.lambda();
    lambda * lambda / 12.0 + lambda * lambda.ln() / 2.0
}

/// `T_n = Σ_{l≥0} l^n Pr[L > l]` with the omitted tail certified below `eps`.
pub fn t_sum_exact(params: ModelParams, n: u32, eps: f64) -> Result<f64> {
    if n > MAX_T_ORDER {
        return Err(ModelError::param(
            "n",
            format!("order {n} exceeds the supported maximum {MAX_T_ORDER}"),
        ));
    }
    let sum = analytic::certified_sum(params, n, eps, |l, t| {
        (l as f64).powi(n as i32) * t.survival()[l]
    })?;
    Ok(sum.value)
}

/// `T_n ≈ λ^{n+1}/((n+1)(n+2)) + λ^n ln(λ)/2`.
pub fn t_sum_expansion(params: ModelParams, n: u32) -> f64 {
    let lambda = params.lambda();
    let nf = f64::from(n);
    lambda.powi(n as i32 + 1) / ((nf + 1.0) * (nf + 2.0)) + lambda.powi(n as i32) * lambda.ln() / 2.0
}

/// The uniform approximation `max(0, 1 - l/λ)`. At `l = λ` both branches
/// give zero.
pub fn newell_approximation(params: ModelParams, l: usize) -> f64 {
    (1.0 - l as f64 / params.lambda()).max(0.0)
}

/// Sup distance between the exact survival function and the uniform
/// approximation, together with the index where it is attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformDistance {
    pub lambda: f64,
    pub distance: f64,
    pub argmax_l: usize,
}

pub fn uniform_limit(params: ModelParams) -> Result<UniformDistance> {
    let lambda = params.lambda();
    if lambda < 4.0 {
        return Err(ModelError::param(
            "lambda",
            format!("uniform-limit distance needs lambda >= 4, got {lambda}"),
        ));
    }
    let table = build_survival_table(params, params.default_l_max());
    let (argmax_l, distance) = table
        .survival()
        .iter()
        .enumerate()
        .map(|(l, &s)| (l, (s - newell_approximation(params, l)).abs()))
        .fold((0, f64::NEG_INFINITY), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        });
    Ok(UniformDistance {
        lambda,
        distance,
        argmax_l,
    })
}

pub fn uniform_limit_distance(params: ModelParams) -> Result<f64> {
    uniform_limit(params).map(|u| u.distance)
}

/// Relative tolerance used for the certified sums behind the sweeps.
const SWEEP_RELATIVE_EPS: f64 = 1e-12;

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    if let Some(&bad) = grid.iter().find(|&&x| !(x >= TAIL_MIN_LAMBDA) || !x.is_finite()) {
        return Err(ModelError::param(
            "grid",
            format!("every load must be finite and >= {TAIL_MIN_LAMBDA}, got {bad}"),
        ));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ModelError::param("grid", "loads must be strictly increasing"));
    }
    Ok(())
}

/// `(Ex[L^m] - expansion)/λ^{m-1}` over a grid of loads.
pub fn residual_sweep(grid: &[f64], m: u32) -> Result<ResidualSweep> {
    if m == 0 || m > MAX_MOMENT_ORDER {
        return Err(ModelError::param(
            "m",
            format!("moment order must be in 1..={MAX_MOMENT_ORDER}, got {m}"),
        ));
    }
    validate_grid(grid)?;
    let mut sweep = ResidualSweep {
        m,
        grid: grid.to_vec(),
        exact: Vec::with_capacity(grid.len()),
        expansion: Vec::with_capacity(grid.len()),
        residuals: Vec::with_capacity(grid.len()),
    };
    for &lambda in grid {
        let params = ModelParams::new(lambda)?;
        let eps = SWEEP_RELATIVE_EPS * lambda.powi(m as i32);
        let exact = analytic::exact_moment(params, m, eps, MomentMethod::PartialSummation)?.exact;
        let expansion = moment_expansion(params, m)?.value;
        sweep.exact.push(exact);
        sweep.expansion.push(expansion);
        sweep
            .residuals
            .push((exact - expansion) / lambda.powi(m as i32 - 1));
    }
    Ok(sweep)
}

/// `(T_n - expansion)/λ^n` over a grid of loads.
pub fn t_residual_sweep(grid: &[f64], n: u32) -> Result<ResidualSweep> {
    validate_grid(grid)?;
    let mut sweep = ResidualSweep {
        m: n,
        grid: grid.to_vec(),
        exact: Vec::with_capacity(grid.len()),
        expansion: Vec::with_capacity(grid.len()),
        residuals: Vec::with_capacity(grid.len()),
    };
    for &lambda in grid {
        let params = ModelParams::new(lambda)?;
        let eps = SWEEP_RELATIVE_EPS * lambda.powi(n as i32 + 1);
        let exact = t_sum_exact(params, n, eps)?;
        let expansion = t_sum_expansion(params, n);
        sweep.exact.push(exact);
        sweep.expansion.push(expansion);
        sweep.residuals.push((exact - expansion) / lambda.powi(n as i32));
    }
    Ok(sweep)
}

/// Largest `|body_estimate - exact|` over the body region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyError {
    pub lambda: f64,
    pub max_error: f64,
    pub argmax_l: usize,
    pub l0: f64,
}

pub fn max_body_error(params: ModelParams) -> Result<BodyError> {
    let split = BodyTailSplit::new(params);
    let last = split.last_body_index().ok_or_else(|| {
        ModelError::param("lambda", "body region l <= lambda - sqrt(lambda) is empty")
    })?;
    let table = build_survival_table(params, last);
    let mut worst = BodyError {
        lambda: params.lambda(),
        max_error: f64::NEG_INFINITY,
        argmax_l: 0,
        l0: split.l0,
    };
    for l in 0..=last {
        let err = (body_estimate(params, l)? - table.survival()[l]).abs();
        if err > worst.max_error {
            worst.max_error = err;
            worst.argmax_l = l;
        }
    }
    Ok(worst)
}

/// Outcome of checking the tail bound against exact survival on
/// `[λ - √λ, λ + width·√λ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub lambda: f64,
    pub l_min: usize,
    pub l_max: usize,
    pub checked: usize,
    pub violations: Vec<usize>,
    /// Smallest `bound - exact` over the checked range.
    pub min_slack: f64,
}

pub fn tail_dominance(params: ModelParams, width: f64) -> Result<TailCheck> {
    let split = BodyTailSplit::new(params);
    let l_min = split.first_tail_index();
    let l_max = (params.lambda() + width * split.s).floor() as usize;
    let table = build_survival_table(params, l_max);
    let mut check = TailCheck {
        lambda: params.lambda(),
        l_min,
        l_max,
        checked: 0,
        violations: Vec::new(),
        min_slack: f64::INFINITY,
    };
    for l in l_min..=l_max {
        let bound = tail_bound(params, l)?;
        let exact = table.survival()[l];
        check.checked += 1;
        check.min_slack = check.min_slack.min(bound - exact);
        if exact > bound {
            check.violations.push(l);
        }
    }
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(lambda: f64) -> ModelParams {
        ModelParams::new(lambda).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn split_parameters() {
        let s = BodyTailSplit::new(p(100.0));
        assert_eq!(s.s, 10.0);
        assert_eq!(s.l0, 90.0);
        assert_eq!(s.last_body_index(), Some(90));
        assert_eq!(s.first_tail_index(), 90);
        let s = BodyTailSplit::new(p(0.25));
        assert!(s.l0 < 0.0);
        assert_eq!(s.last_body_index(), None);
    }

    #[test]
    fn body_examples() {
        assert!(close(body_estimate(p(1e4), 0).unwrap(), 1.0001, 1e-15));
        assert!(close(body_estimate(p(100.0), 50).unwrap(), 0.52, 1e-15));
        assert!(close(body_estimate(p(1e4), 5000).unwrap(), 0.5002, 1e-15));
        assert!(body_estimate(p(100.0), 90).is_ok());
        match body_estimate(p(100.0), 91) {
            Err(ModelError::Domain { boundary, .. }) => assert_eq!(boundary, 90.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tail_examples() {
        assert_eq!(tail_bound(p(100.0), 100).unwrap(), 1.0);
        // mpmath: exp(7 - 100 + 100 ln 100 - lgamma(101)) = 43.71289082892...
        assert!(close(log_tail_bound(p(100.0), 100).exp(), 43.712_890_828_921_73, 1e-11));
        // mpmath: exp(7 - 100 + 150 ln 100 - lgamma(151)) = 7.140354469919...e-4
        assert!(close(tail_bound(p(100.0), 150).unwrap(), 7.140_354_469_919_69e-4, 1e-10));
        assert!(tail_bound(p(8.9), 20).is_err());
        assert!(matches!(
            tail_bound(p(100.0), 89),
            Err(ModelError::Domain { .. })
        ));
    }

    #[test]
    fn tail_bound_decreases_past_lambda() {
        let params = p(400.0);
        let values: Vec<f64> = (401..600).map(|l| log_tail_bound(params, l)).collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn moment_expansion_examples() {
        let a = moment_expansion(p(100.0), 1).unwrap();
        assert!(close(a.value, 50.0 + 100f64.ln() / 2.0, 1e-15));
        assert!(close(a.value, 52.302585, 1e-8));
        let b = moment_expansion(p(10.0), 2).unwrap();
        assert!(close(b.leading, 100.0 / 3.0, 1e-15));
        assert!(close(b.value, 56.3592, 1e-5));
        let e2 = std::f64::consts::E.powi(2);
        let c = moment_expansion(p(e2), 1).unwrap();
        assert!(close(c.second, 1.0, 1e-15));
        assert!(close(c.value, 4.69453, 1e-6));
        assert!(moment_expansion(p(10.0), 0).is_err());
    }

    #[test]
    fn variance_examples() {
        assert!(close(variance_expansion(p(1.0)), 1.0 / 12.0, 1e-15));
        assert!(close(variance_expansion(p(100.0)), 1063.59, 1e-5));
    }

    #[test]
    fn t_expansion_examples() {
        assert!(close(t_sum_expansion(p(100.0), 0), 52.3026, 1e-6));
        assert!(close(t_sum_expansion(p(100.0), 1), 1896.9252, 1e-7));
        assert!(close(t_sum_expansion(p(10.0), 2), 198.46, 1e-4));
        for lambda in [9.5, 100.0, 3e5] {
            assert_eq!(
                t_sum_expansion(p(lambda), 0),
                moment_expansion(p(lambda), 1).unwrap().value
            );
        }
    }

    #[test]
    fn newell_examples() {
        assert_eq!(newell_approximation(p(100.0), 0), 1.0);
        assert_eq!(newell_approximation(p(100.0), 100), 0.0);
        assert_eq!(newell_approximation(p(100.0), 25), 0.75);
        assert_eq!(newell_approximation(p(100.0), 180), 0.0);
    }

    #[test]
    fn uniform_distance_small_load() {
        let d = uniform_limit_distance(p(4.0)).unwrap();
        assert!(d > 0.0 && d < 1.0);
        assert!(uniform_limit_distance(p(3.9)).is_err());
    }

    #[test]
    fn t_sum_rejects_large_order() {
        assert!(t_sum_exact(p(10.0), 6, 1.0).is_err());
    }

    #[test]
    fn sweep_validation() {
        assert!(residual_sweep(&[1000.0], 0).is_err());
        assert!(residual_sweep(&[], 1).is_err());
        assert!(residual_sweep(&[5.0, 100.0], 1).is_err());
        assert!(residual_sweep(&[100.0, 100.0], 1).is_err());
        let single = residual_sweep(&[1000.0], 1).unwrap();
        assert_eq!(single.residuals.len(), 1);
        assert_eq!(single.width(), 0.0);
    }
}
