//! Gauss–Hermite quadrature for Gaussian-weighted averages.
//!
//! Nodes are the roots of the orthonormal Hermite polynomials: bracketed by a
//! sign-change scan, then polished by safeguarded Newton iteration on the
//! three-term recurrence. The recurrence is rescaled on the
//! fly so that orders in the thousands neither overflow nor lose the weights
//! of interior nodes; the outermost weights underflow to zero and are dropped.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

const RESCALE_THRESHOLD: f64 = 1e150;
const NEWTON_MAX_ITER: usize = 100;

/// Nodes `x_i` and weights `w_i` with `Σ w_i f(x_i) ≈ ∫ e^{−x²} f(x) dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("quadrature_order", "must be >= 1"));
        }
        let (nodes, weights) = hermite_rule(order)?;
        Ok(GaussHermite {
            order,
            nodes,
            weights,
        })
    }

    /// Shared rule of the given order, built once per process.
    pub fn cached(order: usize) -> Result<Arc<GaussHermite>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(rule) = cache.lock().expect("quadrature cache poisoned").get(&order) {
            return Ok(Arc::clone(rule));
        }
        let rule = Arc::new(GaussHermite::new(order)?);
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        Ok(Arc::clone(guard.entry(order).or_insert(rule)))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫ e^{−x²} f(x) dx`
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Nodes and probability weights for `X ~ N(0, σ²)`: `E[f(X)] ≈ Σ p_i f(x_i)`.
    ///
    /// Nodes whose weight is below `1e-300` are omitted.
    pub fn normal_points(&self, sigma: f64) -> Vec<(f64, f64)> {
        let scale = std::f64::consts::SQRT_2 * sigma;
        let norm = 1.0 / PI.sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 1e-300)
            .map(|(&x, &w)| (scale * x, w * norm))
            .collect()
    }
}

/// Evaluates the orthonormal Hermite polynomials p_n and p_{n−1} at x.
/// Returns (p_n, p_{n−1}, ln scale) with actual values = returned · e^{ln scale}.
fn hermite_pair(order: usize, x: f64) -> (f64, f64, f64) {
    let mut p_prev = 0.0;
    let mut p = PI.powf(-0.25);
    let mut log_scale = 0.0;
    for j in 1..=order {
        let jf = j as f64;
        let next = x * (2.0 / jf).sqrt() * p - ((jf - 1.0) / jf).sqrt() * p_prev;
        p_prev = p;
        p = next;
        if p.abs() > RESCALE_THRESHOLD {
            p /= RESCALE_THRESHOLD;
            p_prev /= RESCALE_THRESHOLD;
            log_scale += RESCALE_THRESHOLD.ln();
        }
    }
    (p, p_prev, log_scale)
}

fn hermite_rule(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = order;
    let nf = n as f64;
    let positive = n / 2;
    // Brackets: scan (0, √(2n+1)] for sign changes on a step well below the
    // smallest root spacing, π/√(2n), which occurs at the centre.
    let step = PI / (2.0 * nf + 1.0).sqrt() / 6.0;
    let limit = (2.0 * nf + 1.0).sqrt() + step;
    let mut brackets = Vec::with_capacity(positive);
    let mut lo = 0.5 * step;
    let mut p_lo = hermite_pair(n, lo).0;
    while lo < limit && brackets.len() < positive {
        let hi = lo + step;
        let p_hi = hermite_pair(n, hi).0;
        if p_lo.signum() != p_hi.signum() {
            brackets.push((lo, hi));
        }
        lo = hi;
        p_lo = p_hi;
    }
    if brackets.len() != positive {
        return Err(Error::invalid(
            "quadrature_order",
            format!(
                "found {} of {positive} positive Hermite roots of order {n}",
                brackets.len()
            ),
        ));
    }

    // Safeguarded Newton inside each bracket, largest root first.
    let half = n.div_ceil(2);
    let mut roots = vec![0.0; half];
    let mut weights = vec![0.0; half];
    for (i, &(mut a, mut b)) in brackets.iter().rev().enumerate() {
        let sign_a = hermite_pair(n, a).0.signum();
        let mut z = 0.5 * (a + b);
        let mut derivative = (0.0, 0.0);
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, p_prev, log_scale) = hermite_pair(n, z);
            let dp = (2.0 * nf).sqrt() * p_prev;
            derivative = (dp, log_scale);
            if p.signum() == sign_a {
                a = z;
            } else {
                b = z;
            }
            let newton = z - p / dp;
            let next = if newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
            let moved = (next - z).abs();
            z = next;
            if moved <= 1e-15 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::invalid(
                "quadrature_order",
                format!("Newton iteration for Hermite root {i} of order {n} did not converge"),
            ));
        }
        let (dp, log_scale) = derivative;
        roots[i] = z;
        // w = 2 / p_n'(x)²
        let log_w = 2f64.ln() - 2.0 * (dp.abs().ln() + log_scale);
        weights[i] = log_w.exp();
    }
    if n % 2 == 1 {
        let (_, p_prev, log_scale) = hermite_pair(n, 0.0);
        let dp = (2.0 * nf).sqrt() * p_prev;
        roots[half - 1] = 0.0;
        weights[half - 1] = (2f64.ln() - 2.0 * (dp.abs().ln() + log_scale)).exp();
    }
    let mut nodes = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for i in 0..half {
        nodes.push(-roots[i]);
        w.push(weights[i]);
    }
    let start = if n % 2 == 1 { half - 1 } else { half };
    for i in (0..start).rev() {
        nodes.push(roots[i]);
        w.push(weights[i]);
    }
    if nodes.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::invalid(
            "quadrature_order",
            format!("Hermite roots of order {n} are not strictly increasing"),
        ));
    }
    Ok((nodes, w))
}
