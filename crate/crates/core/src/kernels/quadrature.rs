//! Gauss-Laguerre rules for `∫_0^∞ e^{-v} f(v) dv` and Gauss-Legendre rules
//! for `∫_{-1}^1 f(x) dx`.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Nodes and weights of an order-`m` Gaussian rule.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ w_i f(v_i)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&v, &w)| w * f(v))
            .sum()
    }
}

/// Builds the order-`order` rule.
///
/// Nodes start from the eigenvalues of the Jacobi matrix of the Laguerre
/// recurrence (diagonal `2k + 1`, off-diagonal `k`), are polished by Newton
/// on `L_m`, and weights come from `w_i = v_i / ((m + 1)^2 L_{m+1}(v_i)^2)`.
pub fn gauss_laguerre(order: usize) -> Result<QuadratureRule> {
    if !(4..=128).contains(&order) {
        return Err(Error::QuadratureOrder(order));
    }
    let m = order;
    let jacobi = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            (2 * i + 1) as f64
        } else if i.abs_diff(j) == 1 {
            i.max(j) as f64
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    nodes.sort_by(f64::total_cmp);

    for v in nodes.iter_mut() {
        for _ in 0..8 {
            let (lm, lm1) = laguerre_pair(m, *v);
            let deriv = m as f64 * (lm - lm1) / *v;
            let step = lm / deriv;
            *v -= step;
            if step.abs() <= 4.0 * f64::EPSILON * v.abs() {
                break;
            }
        }
    }

    let weights = nodes
        .iter()
        .map(|&v| {
            let denom = (m + 1) as f64 * laguerre_pair(m + 1, v).0;
            v / (denom * denom)
        })
        .collect();

    Ok(QuadratureRule { nodes, weights })
}

/// Builds the order-`order` Gauss-Legendre rule on `[-1, 1]`, the same way:
/// Jacobi matrix with off-diagonal `k / sqrt(4k^2 - 1)`, Newton polish on
/// `P_m`, weights `2 / ((1 - x^2) P_m'(x)^2)`.
pub fn gauss_legendre(order: usize) -> Result<QuadratureRule> {
    if !(2..=128).contains(&order) {
        return Err(Error::QuadratureOrder(order));
    }
    let m = order;
    let jacobi = DMatrix::from_fn(m, m, |i, j| {
        if i.abs_diff(j) == 1 {
            let k = i.max(j) as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    nodes.sort_by(f64::total_cmp);

    let deriv = |x: f64| {
        let (pm, pm1) = legendre_pair(m, x);
        m as f64 * (x * pm - pm1) / (x * x - 1.0)
    };
    for x in nodes.iter_mut() {
        for _ in 0..8 {
            let step = legendre_pair(m, *x).0 / deriv(*x);
            *x -= step;
            if step.abs() <= 4.0 * f64::EPSILON {
                break;
            }
        }
    }
    let weights = nodes
        .iter()
        .map(|&x| {
            let d = deriv(x);
            2.0 / ((1.0 - x * x) * d * d)
        })
        .collect();
    Ok(QuadratureRule { nodes, weights })
}

/// Order-16 Gauss-Legendre rule, built once.
pub(crate) fn legendre16() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16).expect("order 16 is in range"))
}

pub(crate) fn legendre8() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(8).expect("order 8 is in range"))
}

/// `(P_n(x), P_{n-1}(x))` by the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    let mut cur = x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// `(L_n(x), L_{n-1}(x))` by the three-term recurrence.
fn laguerre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    let mut cur = 1.0 - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    (cur, prev)
}
