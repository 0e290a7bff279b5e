//! Exact equilibrium law of `L`.
//!
//! `Pr[L > l]` is the probability that the first `l` servers are all busy,
//! which is the Erlang loss formula `(λ^l/l!) / Σ_{k≤l} λ^k/k! = 1/D_l` with
//!
//! ```text
//! D_l = Σ_{0≤k≤l} l! / ((l-k)! λ^k) = ∫₀^∞ (1 + x/λ)^l e^{-x} dx.
//! ```
//!
//! The table is built from the increasing recursion `D_l = 1 + (l/λ) D_{l-1}`,
//! which only ever adds positive quantities. [`survival_direct`] and
//! [`survival_integral`] evaluate the sum and the integral literally and serve
//! as independent checks on it.

use serde::{Deserialize, Serialize};

use crate::quadrature::GaussLaguerre;
use crate::{ModelError, ModelParams, Result};

/// Highest moment order accepted by [`exact_moment`].
///
/// At `λ = 10⁶` the seventh power already exceeds `2^53` by more than 25
/// orders of magnitude, so higher orders carry no meaningful low digits.
pub const MAX_MOMENT_ORDER: u32 = 6;

/// Exact `D_l` and `Pr[L > l]` for `l = 0..=l_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTable {
    lambda: f64,
    d: Vec<f64>,
    survival: Vec<f64>,
    overflow_index: Option<usize>,
}

impl SurvivalTable {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn l_max(&self) -> usize {
        self.d.len() - 1
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn survival(&self) -> &[f64] {
        &self.survival
    }

    /// First index at which `D_l` overflowed to `+inf`; survival is exactly
    /// zero from there on.
    pub fn overflow_index(&self) -> Option<usize> {
        self.overflow_index
    }

    /// `Pr[L = l] = Pr[L > l-1] - Pr[L > l]` for `1 ≤ l ≤ l_max`.
    pub fn pmf(&self, l: usize) -> Result<f64> {
        if l == 0 || l > self.l_max() {
            return Err(ModelError::IndexOutOfRange {
                index: l as u64,
                max: self.l_max() as u64,
            });
        }
        Ok((self.survival[l - 1] - self.survival[l]).max(0.0))
    }

    fn extend_to(&mut self, l_max: usize) {
        let lambda = self.lambda;
        for l in self.d.len()..=l_max {
            let prev = self.d[l - 1];
            let d = 1.0 + (l as f64 / lambda) * prev;
            if d.is_infinite() && self.overflow_index.is_none() {
                self.overflow_index = Some(l);
            }
            self.d.push(d);
            self.survival.push(if d.is_finite() { 1.0 / d } else { 0.0 });
        }
    }

    /// Reassembles a table from serialized `d` and `survival` columns.
    pub fn from_parts(lambda: f64, d: Vec<f64>, survival: Vec<f64>) -> Result<Self> {
        ModelParams::new(lambda)?;
        if d.is_empty() || d.len() != survival.len() {
            return Err(ModelError::Precondition(format!(
                "d and survival columns must be non-empty and of equal length ({} vs {})",
                d.len(),
                survival.len()
            )));
        }
        let overflow_index = d.iter().position(|v| v.is_infinite());
        Ok(Self {
            lambda,
            d,
            survival,
            overflow_index,
        })
    }
}

pub fn build_survival_table(params: ModelParams, l_max: usize) -> SurvivalTable {
    let mut table = SurvivalTable {
        lambda: params.lambda(),
        d: Vec::with_capacity(l_max + 1),
        survival: Vec::with_capacity(l_max + 1),
        overflow_index: None,
    };
    table.d.push(1.0);
    table.survival.push(1.0);
    table.extend_to(l_max);
    table
}

/// `1/D_l` with `D_l` summed term by term, smallest index-`l` term first.
pub fn survival_direct(params: ModelParams, l: usize) -> f64 {
    let lambda = params.lambda();
    // t_k = l (l-1) ... (l-k+1) / λ^k
    let mut terms = Vec::with_capacity(l + 1);
    let mut t = 1.0_f64;
    terms.push(t);
    for k in 1..=l {
        t *= (l - k + 1) as f64 / lambda;
        terms.push(t);
    }
    let d: f64 = terms.iter().rev().sum();
    if d.is_finite() {
        1.0 / d
    } else {
        0.0
    }
}

/// `1/D_l` with `D_l = ∫₀^∞ (1 + x/λ)^l e^{-x} dx` evaluated by an `n_nodes`
/// Gauss–Laguerre rule. The integrand is a degree-`l` polynomial, so the rule
/// is exact once `n_nodes ≥ l/2 + 1`.
pub fn survival_integral(params: ModelParams, l: usize, n_nodes: usize) -> Result<f64> {
    if n_nodes < l / 2 + 1 {
        return Err(ModelError::Precondition(format!(
            "{n_nodes} Gauss-Laguerre nodes cannot integrate a degree-{l} polynomial exactly \
             (need at least {})",
            l / 2 + 1
        )));
    }
    let rule = GaussLaguerre::new(n_nodes)?;
    Ok(survival_with_rule(&rule, params, l))
}

/// Same as [`survival_integral`] with a caller-supplied rule; the caller is
/// responsible for the node-count precondition.
pub fn survival_with_rule(rule: &GaussLaguerre, params: ModelParams, l: usize) -> f64 {
    let lambda = params.lambda();
    let lf = l as f64;
    let log_d = rule.integrate_log(|x| lf * (x / lambda).ln_1p());
    (-log_d).exp()
}

/// `l^m - (l-1)^m`, exact when it fits an `i64`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BackwardDifference {
    Exact(i64),
    /// Evaluated in floating point because the exact value overflows `i64`.
    Overflowed(f64),
}

impl BackwardDifference {
    pub fn as_f64(self) -> f64 {
        match self {
            BackwardDifference::Exact(v) => v as f64,
            BackwardDifference::Overflowed(v) => v,
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, BackwardDifference::Exact(_))
    }
}

pub fn backward_difference(m: u32, l: u64) -> Result<BackwardDifference> {
    if m == 0 {
        return Err(ModelError::param("m", "backward differences need m >= 1"));
    }
    if l == 0 {
        return Err(ModelError::param("l", "backward differences need l >= 1"));
    }
    // l^m - (l-1)^m = Σ_{j<m} l^j (l-1)^{m-1-j}: every term is nonnegative,
    // so neither route below cancels.
    let exact = (0..m).try_fold(0_i64, |acc, j| {
        let a = i64::try_from(l).ok()?.checked_pow(j)?;
        let b = i64::try_from(l - 1).ok()?.checked_pow(m - 1 - j)?;
        acc.checked_add(a.checked_mul(b)?)
    });
    Ok(match exact {
        Some(v) => BackwardDifference::Exact(v),
        None => {
            let (a, b) = (l as f64, (l - 1) as f64);
            BackwardDifference::Overflowed(
                (0..m)
                    .map(|j| a.powi(j as i32) * b.powi((m - 1 - j) as i32))
                    .sum(),
            )
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    /// `Σ_{l≥0} Δ_m(l+1) Pr[L > l]`
    PartialSummation,
    /// `Σ_{l≥1} l^m Pr[L = l]`
    DirectPmf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub m: u32,
    pub exact: f64,
    pub l_cut: usize,
    pub truncation_bound: f64,
    pub method: MomentMethod,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Bound on `Σ_{k≥0} (c+1+k)^p Pr[L > c+k]`.
///
/// Beyond `c` the survival ratio satisfies `S(j+1)/S(j) = D_j/D_{j+1} <
/// λ/(j+1) ≤ λ/(c+1)`, and `(c+1+k)^p ≤ (c+1)^p e^{pk/(c+1)}`, so the tail is
/// dominated by a geometric series of ratio `q = λ e^{p/(c+1)}/(c+1)`. The
/// bound is infinite while `q ≥ 1`.
pub(crate) fn tail_certificate(lambda: f64, survival_at_cut: f64, cut: usize, power: u32) -> f64 {
    let c1 = cut as f64 + 1.0;
    let q = lambda / c1 * (f64::from(power) / c1).exp();
    if q >= 1.0 {
        return f64::INFINITY;
    }
    if survival_at_cut == 0.0 {
        return 0.0;
    }
    survival_at_cut * c1.powi(power as i32) / (1.0 - q)
}

/// Result of a certified weighted sum over the survival table.
pub(crate) struct CertifiedSum {
    pub value: f64,
    pub l_cut: usize,
    pub truncation_bound: f64,
}

/// Finds the smallest `l_cut ≥ max(λ + 10√λ, power)` whose tail certificate
/// is below `eps`, then sums `weight(l, table)` for `l = 0..=l_cut`.
pub(crate) fn certified_sum<F>(
    params: ModelParams,
    power: u32,
    eps: f64,
    weight: F,
) -> Result<CertifiedSum>
where
    F: Fn(usize, &SurvivalTable) -> f64,
{
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(ModelError::param(
            "eps",
            format!("must be positive and finite, got {eps}"),
        ));
    }
    let lambda = params.lambda();
    let start = ((lambda + 10.0 * lambda.sqrt()).ceil() as usize).max(power as usize);
    let mut table = build_survival_table(params, params.default_l_max().max(start));
    let mut cut = start;
    let mut bound = loop {
        if cut > table.l_max() {
            table.extend_to(2 * table.l_max());
        }
        let bound = tail_certificate(lambda, table.survival[cut], cut, power);
        if bound < eps {
            break bound;
        }
        cut += 1;
    };

    let mut acc = CompensatedSum::default();
    for l in 0..=cut {
        acc.add(weight(l, &table));
    }
    let value = acc.value();

    // below one ulp of the result the certificate no longer describes the
    // number actually returned
    let floor = f64::EPSILON * value.abs();
    if eps < floor {
        return Err(ModelError::NumericalCapacity {
            requested: eps,
            achievable: floor,
        });
    }
    if !value.is_finite() {
        return Err(ModelError::NumericalCapacity {
            requested: eps,
            achievable: f64::INFINITY,
        });
    }
    if bound.is_nan() {
        bound = f64::INFINITY;
    }
    Ok(CertifiedSum {
        value,
        l_cut: cut,
        truncation_bound: bound,
    })
}

/// `Ex[L^m]` with the omitted tail certified below `eps` (absolute).
pub fn exact_moment(
    params: ModelParams,
    m: u32,
    eps: f64,
    method: MomentMethod,
) -> Result<MomentReport> {
    if m > MAX_MOMENT_ORDER {
        return Err(ModelError::param(
            "m",
            format!("moment order {m} exceeds the supported maximum {MAX_MOMENT_ORDER}"),
        ));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(ModelError::param(
            "eps",
            format!("must be positive and finite, got {eps}"),
        ));
    }
    if m == 0 {
        return Ok(MomentReport {
            m,
            exact: 1.0,
            l_cut: 0,
            truncation_bound: 0.0,
            method,
        });
    }
    let sum = match method {
        MomentMethod::PartialSummation => certified_sum(params, m, eps, |l, t| {
            let delta = backward_difference(m, l as u64 + 1)
                .expect("m >= 1 and l + 1 >= 1")
                .as_f64();
            delta * t.survival()[l]
        })?,
        MomentMethod::DirectPmf => certified_sum(params, m, eps, |l, t| {
            if l == 0 {
                0.0
            } else {
                (l as f64).powi(m as i32) * t.pmf(l).expect("l within table")
            }
        })?,
    };
    Ok(MomentReport {
        m,
        exact: sum.value,
        l_cut: sum.l_cut,
        truncation_bound: sum.truncation_bound,
        method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(lambda: f64) -> ModelParams {
        ModelParams::new(lambda).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn rejects_bad_lambda() {
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(ModelParams::new(bad).is_err());
        }
    }

    #[test]
    fn first_entries() {
        let t = build_survival_table(p(1.0), 1);
        assert_eq!(t.d(), &[1.0, 2.0]);
        assert_eq!(t.survival(), &[1.0, 0.5]);

        let t = build_survival_table(p(2.0), 2);
        assert_eq!(t.d()[2], 2.5);
        assert_eq!(t.survival()[2], 0.4);

        let t = build_survival_table(p(3.0), 2);
        assert!(rel(t.survival()[2], 9.0 / 17.0) < 1e-15);

        let t = build_survival_table(p(123.4), 0);
        assert_eq!(t.d(), &[1.0]);
        assert_eq!(t.survival(), &[1.0]);
    }

    #[test]
    fn unit_load_is_integer_sequence() {
        let t = build_survival_table(p(1.0), 6);
        assert_eq!(t.d(), &[1.0, 2.0, 5.0, 16.0, 65.0, 326.0, 1957.0]);
    }

    #[test]
    fn direct_sum_examples() {
        assert_eq!(survival_direct(p(1.0), 2), 0.2);
        assert_eq!(survival_direct(p(7.5), 0), 1.0);
        let t = build_survival_table(p(10.0), 5);
        assert!(rel(survival_direct(p(10.0), 5), t.survival()[5]) < 1e-12);
    }

    #[test]
    fn integral_examples() {
        assert!((survival_integral(p(3.3), 0, 1).unwrap() - 1.0).abs() < 1e-15);
        assert!((survival_integral(p(1.0), 1, 1).unwrap() - 0.5).abs() < 1e-15);
        let t = build_survival_table(p(10.0), 30);
        let q = survival_integral(p(10.0), 30, 32).unwrap();
        assert!(rel(q, t.survival()[30]) < 1e-10);
    }

    #[test]
    fn integral_rejects_too_few_nodes() {
        assert!(matches!(
            survival_integral(p(10.0), 30, 15),
            Err(ModelError::Precondition(_))
        ));
        assert!(survival_integral(p(10.0), 30, 16).is_ok());
    }

    #[test]
    fn pmf_examples() {
        let t = build_survival_table(p(1.0), 3);
        assert_eq!(t.pmf(1).unwrap(), 0.5);
        let t = build_survival_table(p(2.0), 2);
        assert!((t.pmf(2).unwrap() - 4.0 / 15.0).abs() < 1e-15);
        assert!(t.pmf(0).is_err());
        assert!(matches!(
            t.pmf(3),
            Err(ModelError::IndexOutOfRange { index: 3, max: 2 })
        ));
    }

    #[test]
    fn pmf_telescopes() {
        for lambda in [0.5, 4.0, 60.0] {
            let t = build_survival_table(p(lambda), 200);
            let total: f64 =
                (1..=t.l_max()).map(|l| t.pmf(l).unwrap()).sum::<f64>() + t.survival()[t.l_max()];
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_difference_examples() {
        assert_eq!(backward_difference(1, 7).unwrap(), BackwardDifference::Exact(1));
        assert_eq!(backward_difference(2, 5).unwrap(), BackwardDifference::Exact(9));
        assert_eq!(backward_difference(3, 2).unwrap(), BackwardDifference::Exact(7));
        assert_eq!(backward_difference(4, 1).unwrap(), BackwardDifference::Exact(1));
        assert!(backward_difference(0, 3).is_err());
        assert!(backward_difference(2, 0).is_err());
    }

    #[test]
    fn backward_difference_overflow_falls_back_to_float() {
        // 10^24 - (10^6 - 1)^4 ≈ 4e18 fits; the sixth power does not
        let d = backward_difference(6, 1_000_000).unwrap();
        assert!(!d.is_exact());
        let l = 1e6_f64;
        let want = 6.0 * l.powi(5) - 15.0 * l.powi(4) + 20.0 * l.powi(3);
        assert!(rel(d.as_f64(), want) < 1e-12);
    }

    #[test]
    fn overflow_is_recorded_not_fatal() {
        let t = build_survival_table(p(0.5), 400);
        let idx = t.overflow_index().expect("D_l overflows well before l = 400");
        assert!(t.d()[idx].is_infinite());
        assert!(t.survival()[idx..].iter().all(|&s| s == 0.0));
        assert!(t.survival()[idx - 1] > 0.0);
    }

    #[test]
    fn zeroth_moment_is_one() {
        for method in [MomentMethod::PartialSummation, MomentMethod::DirectPmf] {
            let r = exact_moment(p(17.0), 0, 1e-10, method).unwrap();
            assert_eq!(r.exact, 1.0);
        }
    }

    #[test]
    fn moment_rejects_bad_arguments() {
        assert!(exact_moment(p(1.0), 7, 1e-10, MomentMethod::DirectPmf).is_err());
        assert!(exact_moment(p(1.0), 1, 0.0, MomentMethod::DirectPmf).is_err());
        assert!(exact_moment(p(1.0), 1, f64::NAN, MomentMethod::DirectPmf).is_err());
    }

    #[test]
    fn moment_reports_capacity_error() {
        let err = exact_moment(p(1e4), 3, 1e-10, MomentMethod::PartialSummation).unwrap_err();
        match err {
            ModelError::NumericalCapacity { achievable, .. } => assert!(achievable > 1e-10),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn moment_certificate_respected() {
        for lambda in [0.5_f64, 3.0, 250.0] {
            for m in 1..=4 {
                let eps = 1e-12 * (lambda + 1.0).powi(m as i32);
                let r = exact_moment(p(lambda), m, eps, MomentMethod::PartialSummation).unwrap();
                assert!(r.truncation_bound < eps);
                assert!(r.l_cut as f64 >= lambda + 10.0 * lambda.sqrt());
                assert!(r.exact >= 1.0);
            }
        }
    }

    #[test]
    fn tail_certificate_dominates_actual_tail() {
        let lambda = 40.0;
        let t = build_survival_table(p(lambda), 400);
        for cut in [60usize, 80, 100] {
            for power in 0..=4u32 {
                let actual: f64 = (cut..=400)
                    .map(|j| ((j + 1) as f64).powi(power as i32) * t.survival()[j])
                    .sum();
                let bound = tail_certificate(lambda, t.survival()[cut], cut, power);
                assert!(actual <= bound, "cut={cut} p={power}: {actual} > {bound}");
            }
        }
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1.0);
        for _ in 0..10 {
            s.add(1e-17);
        }
        assert_eq!(s.value(), 1.0 + 1e-16);
    }
}
