//! Gauss–Laguerre quadrature for integrals of the form `∫₀^∞ f(x) e^{-x} dx`.
//!
//! Nodes are the roots of the Laguerre polynomial `L_n`, found by Newton
//! iteration from asymptotic initial guesses. The three-term recurrence is
//! evaluated with a running power-of-ten rescale so that `n` in the hundreds
//! does not overflow, and weights are kept as logarithms because the weights
//! attached to the largest nodes underflow long before the integrands that
//! multiply them stop growing.

use crate::{ModelError, Result};

const RESCALE_AT: f64 = 1e150;
const NEWTON_MAX_ITER: usize = 200;

/// An `n`-point Gauss–Laguerre rule with weight function `e^{-x}`.
#[derive(Debug, Clone)]
pub struct GaussLaguerre {
    nodes: Vec<f64>,
    log_weights: Vec<f64>,
}

/// `L_n(x)` and `L_{n-1}(x)`, both divided by `exp(log_scale)`.
struct ScaledPair {
    p_n: f64,
    p_n_minus_1: f64,
    log_scale: f64,
}

fn laguerre_pair(n: usize, x: f64) -> ScaledPair {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut log_scale = 0.0;
    for j in 0..n {
        let j = j as f64;
        let next = ((2.0 * j + 1.0 - x) * cur - j * prev) / (j + 1.0);
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE_AT {
            cur /= RESCALE_AT;
            prev /= RESCALE_AT;
            log_scale += RESCALE_AT.ln();
        }
    }
    ScaledPair {
        p_n: cur,
        p_n_minus_1: prev,
        log_scale,
    }
}

impl GaussLaguerre {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(ModelError::param("n_nodes", "must be at least 1"));
        }
        let nf = n as f64;
        let mut nodes = Vec::with_capacity(n);
        let mut log_weights = Vec::with_capacity(n);
        let mut z = 0.0_f64;
        for i in 0..n {
            z = match i {
                0 => 3.0 / (1.0 + 2.4 * nf),
                1 => z + 15.0 / (1.0 + 2.5 * nf),
                _ => {
                    let ai = (i - 1) as f64;
                    z + (1.0 + 2.55 * ai) / (1.9 * ai) * (z - nodes[i - 2])
                }
            };
            let mut converged = false;
            let mut last_step = f64::INFINITY;
            for _ in 0..NEWTON_MAX_ITER {
                let p = laguerre_pair(n, z);
                // L_n'(z) = n (L_n - L_{n-1}) / z
                let dz = z * p.p_n / (nf * (p.p_n - p.p_n_minus_1));
                z -= dz;
                let step = (dz / z).abs();
                // either machine precision, or the steps have stopped shrinking
                // at the rounding floor of the recurrence
                if step <= 1e-14 || (step < 1e-10 && step >= last_step) {
                    converged = true;
                    break;
                }
                last_step = step;
            }
            let previous = nodes.last().copied().unwrap_or(0.0);
            if !converged || !z.is_finite() || z <= previous {
                return Err(ModelError::Precondition(format!(
                    "Gauss-Laguerre root {i} of {n} failed to converge"
                )));
            }
            // At a root of L_n the recurrence gives L_{n+1} = -n L_{n-1}/(n+1),
            // so w = x / ((n+1) L_{n+1})^2 = x / (n L_{n-1})^2.
            let p = laguerre_pair(n, z);
            let log_w = z.ln() - 2.0 * (nf.ln() + p.p_n_minus_1.abs().ln() + p.log_scale);
            nodes.push(z);
            log_weights.push(log_w);
        }
        Ok(Self { nodes, log_weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_weights.iter().map(|w| w.exp())
    }

    /// `ln ∫₀^∞ f(x) e^{-x} dx` for a positive integrand supplied as `ln f`.
    pub fn integrate_log<F>(&self, log_f: F) -> f64
    where
        F: Fn(f64) -> f64,
    {
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.log_weights)
            .map(|(&x, &lw)| lw + log_f(x))
            .collect();
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return max;
        }
        // ascending order keeps the small terms from being absorbed early
        let mut scaled: Vec<f64> = terms.iter().map(|t| (t - max).exp()).collect();
        scaled.sort_by(|a, b| a.partial_cmp(b).unwrap());
        max + scaled.iter().sum::<f64>().ln()
    }

    /// `∫₀^∞ f(x) e^{-x} dx`.
    pub fn integrate<F>(&self, f: F) -> f64
    where
        F: Fn(f64) -> f64,
    {
        self.nodes
            .iter()
            .zip(self.weights())
            .map(|(&x, w)| w * f(x))
            .sum()
    }
}
