//! Closed-form kernels of the integral representation and the quadrature used
//! for the singular rebate term.
//!
//! Arguments follow a fixed convention throughout: `x` is a stock price, `y`
//! the time-to-maturity being priced, `z` (or `u`) an earlier
//! time-to-maturity inside the integral and `w` the exit boundary at `z`.

mod quadrature;

use std::f64::consts::PI;


pub use quadrature::{gauss_laguerre, gauss_legendre, QuadratureRule};
pub(crate) use quadrature::legendre16;
use quadrature::legendre8;

use crate::error::{Error, Result};
use crate::ie_solver::BoundaryView;
use crate::model::{validate_pair, DimensionlessConstants, LoanSpec, MarketParams};
use crate::par;

/// Relative slack allowed when checking `x >= a(y)`.
const DEBT_SLACK: f64 = 1e-12;

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Black-Scholes-Merton `d1`, `d2` for spot `x`, time `y` and strike `z`.
pub fn d12(x: f64, y: f64, z: f64, market: &MarketParams) -> Result<(f64, f64)> {
    if !(y > 0.0) {
        return Err(Error::domain("y", y, "(0, inf)"));
    }
    if !(x > 0.0) {
        return Err(Error::domain("x", x, "(0, inf)"));
    }
    if !(z > 0.0) {
        return Err(Error::domain("z", z, "(0, inf)"));
    }
    Ok(d12_unchecked(x, y, z, market))
}

#[inline]
fn d12_unchecked(x: f64, y: f64, z: f64, market: &MarketParams) -> (f64, f64) {
    let vol_sqrt = market.volatility * y.sqrt();
    let d1 = ((x / z).ln() + (market.risk_free - market.dividend + 0.5 * market.volatility * market.volatility) * y)
        / vol_sqrt;
    (d1, d1 - vol_sqrt)
}

/// Heaviside step with `H(0) = 1/2`.
#[inline]
fn heaviside(x: f64, w: f64) -> f64 {
    if x > w {
        1.0
    } else if x < w {
        0.0
    } else {
        0.5
    }
}

/// A rebate `R(tau)` paid when the stock touches the accrued debt.
///
/// Must be callable from several threads at once.
pub trait RebateFn: Sync {
    fn rebate(&self, tau: f64) -> f64;
}

impl<F> RebateFn for F
where
    F: Fn(f64) -> f64 + Sync,
{
    fn rebate(&self, tau: f64) -> f64 {
        self(tau)
    }
}

/// Everything the kernels need about the contract.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelContext {
    pub market: MarketParams,
    pub spec: LoanSpec,
    pub constants: DimensionlessConstants,
}

impl KernelContext {
    pub fn new(market: MarketParams, spec: LoanSpec) -> Result<Self> {
        validate_pair(&market, &spec)?;
        Ok(Self {
            market,
            spec,
            constants: DimensionlessConstants::new(&market, &spec),
        })
    }

    /// Accrued debt `a(y)`.
    #[inline]
    pub fn debt(&self, y: f64) -> f64 {
        self.spec.debt(y)
    }

    fn check_holding(&self, x: f64, y: f64) -> Result<f64> {
        let a = self.debt(y);
        if x < a * (1.0 - DEBT_SLACK) {
            return Err(Error::domain("x", x, format!("[a(y) = {a}, inf)")));
        }
        Ok(a)
    }

    /// European call on the dividend-paying stock,
    /// `x e^{-delta y} N(d1) - z e^{-r y} N(d2)`; `max(x - z, 0)` at `y = 0`.
    pub fn m1(&self, x: f64, y: f64, z: f64) -> f64 {
        if y <= 0.0 {
            return (x - z).max(0.0);
        }
        let m = &self.market;
        let (d1, d2) = d12_unchecked(x, y, z, m);
        x * (-m.dividend * y).exp() * norm_cdf(d1) - z * (-m.risk_free * y).exp() * norm_cdf(d2)
    }

    /// `M1` minus its image about the debt curve:
    /// `M1(x,y,z) - (x/a)^lambda M1(a^2/x, y, z)`.
    pub fn m_reflected(&self, x: f64, y: f64, z: f64) -> Result<f64> {
        let a = self.check_holding(x, y)?;
        Ok(self.m_reflected_at(x, y, z, a))
    }

    #[inline]
    fn m_reflected_at(&self, x: f64, y: f64, z: f64, a: f64) -> f64 {
        let ratio = x / a;
        self.m1(x, y, z) - ratio.powf(self.constants.lambda) * self.m1(a / ratio, y, z)
    }

    /// Early-exit premium density
    /// `x delta e^{-delta(y-z)} N(d1) - a(y)(r-eta) e^{-(r-eta)(y-z)} N(d2)`
    /// with the `N` factors replaced by `H(ln(x/w))` at `z = y`.
    pub fn q1(&self, x: f64, y: f64, z: f64, w: f64) -> f64 {
        self.q1_at(x, y, z, w, self.debt(y))
    }

    #[inline]
    fn q1_at(&self, x: f64, y: f64, z: f64, w: f64, a: f64) -> f64 {
        let m = &self.market;
        let carry = m.risk_free - self.spec.loan_rate;
        let dt = y - z;
        if dt <= 0.0 {
            return (x * m.dividend - a * carry) * heaviside(x, w);
        }
        let (d1, d2) = d12_unchecked(x, dt, w, m);
        x * m.dividend * (-m.dividend * dt).exp() * norm_cdf(d1)
            - a * carry * (-carry * dt).exp() * norm_cdf(d2)
    }

    /// The smooth part of the margin-call density:
    /// `Q1(x,y,z,w) - (x/a)^lambda Q1(a^2/x, y, z, w)`.
    pub fn q_smooth(&self, x: f64, y: f64, z: f64, w: f64) -> Result<f64> {
        let a = self.check_holding(x, y)?;
        if !(0.0..=y).contains(&z) {
            return Err(Error::domain("z", z, format!("[0, {y}]")));
        }
        Ok(self.q_smooth_at(x, y, z, w, a))
    }

    #[inline]
    fn q_smooth_at(&self, x: f64, y: f64, z: f64, w: f64, a: f64) -> f64 {
        let ratio = x / a;
        self.q1_at(x, y, z, w, a)
            - ratio.powf(self.constants.lambda) * self.q1_at(a / ratio, y, z, w, a)
    }

    /// `(x/a)^{lambda/2} ∫_0^y K(x,y,z) dz` after the substitution
    /// `v = K2 (sqrt(y/(y-z)) - 1)`: `(2/sqrt(pi)) ∫_0^inf e^{-v} K3(x, y, v) dv`.
    ///
    /// `K3` carries the `(x/a)^alpha = (x/a)^{lambda/2}` factor, so the result
    /// is the complete rebate term of the value formula.
    ///
    /// The rebate enters at `z = y (1 - K2^2 / (v + K2)^2)`, which moves on
    /// the scale `v ~ K2`. For spots near the debt `K2` is small and that
    /// layer falls between the Laguerre nodes, so `[0, LAYER_END]` is covered
    /// by Gauss-Legendre panels `[0, K2], [K2, 4 K2], ...` and only the tail
    /// uses Gauss-Laguerre.
    pub fn k_integral(
        &self,
        x: f64,
        y: f64,
        rebate: &dyn RebateFn,
        rule: &QuadratureRule,
    ) -> Result<f64> {
        let a = self.check_holding(x, y)?;
        if y < 0.0 {
            return Err(Error::domain("y", y, "[0, inf)"));
        }
        Ok(self.k_integral_at(x, y, a, rebate, rule))
    }

    fn k_integral_at(
        &self,
        x: f64,
        y: f64,
        a: f64,
        rebate: &dyn RebateFn,
        rule: &QuadratureRule,
    ) -> f64 {
        const LAYER_END: f64 = 2.0;
        if y == 0.0 {
            return 0.0;
        }
        let log_ratio = (x / a).ln().max(0.0);
        let k2 = log_ratio / (self.market.volatility * (2.0 * y).sqrt());
        let beta = self.constants.beta;
        let alpha = self.constants.alpha;
        // K3 at v, times e^{shift}
        let term = |v: f64, shift: f64| {
            let shifted = v + k2;
            let frac = if k2 == 0.0 { 0.0 } else { k2 * k2 / (shifted * shifted) };
            let z = (y - y * frac).clamp(0.0, y);
            let r = rebate.rebate(z);
            if r == 0.0 {
                return 0.0;
            }
            let expo = alpha * log_ratio + log_ratio * log_ratio * beta / (4.0 * shifted * shifted)
                - shifted * shifted
                + shift;
            r * expo.exp()
        };

        let mut edges = vec![0.0];
        if k2 > 0.0 && k2 < LAYER_END {
            let mut e = k2;
            while e < LAYER_END {
                edges.push(e);
                e *= 4.0;
            }
            edges.push(LAYER_END);
        }
        let start = *edges.last().unwrap();
        let panel = legendre8();
        let layer = (edges.len() - 1) * panel.order();
        let tail = rule.nodes();
        let terms = par::map_range(layer + tail.len(), |i| {
            if i < layer {
                let (p, k) = (i / panel.order(), i % panel.order());
                let half = 0.5 * (edges[p + 1] - edges[p]);
                let v = edges[p] + half * (panel.nodes()[k] + 1.0);
                half * panel.weights()[k] * term(v, 0.0)
            } else {
                // ∫_start^inf h dv = ∫_0^inf e^{-w} (e^{w} h(start + w)) dw
                let w = tail[i - layer];
                rule.weights()[i - layer] * term(start + w, w)
            }
        });
        2.0 / PI.sqrt() * terms.iter().sum::<f64>()
    }

    /// `∫_0^y Q(x, y, u, S_f(u)) du`: [`Self::q_smooth`] integrated along the
    /// boundary (see [`BoundaryView::integrate`]) plus [`Self::k_integral`].
    pub fn q_total_integral(
        &self,
        x: f64,
        y: f64,
        boundary: &BoundaryView<'_>,
        rebate: &dyn RebateFn,
        rule: &QuadratureRule,
    ) -> Result<f64> {
        let a = self.check_holding(x, y)?;
        if y == 0.0 {
            return Ok(0.0);
        }
        boundary.check_covers(y)?;
        Ok(self.q_total_at(x, y, a, boundary, rebate, rule))
    }

    pub(crate) fn q_total_at(
        &self,
        x: f64,
        y: f64,
        a: f64,
        boundary: &BoundaryView<'_>,
        rebate: &dyn RebateFn,
        rule: &QuadratureRule,
    ) -> f64 {
        if y == 0.0 {
            return 0.0;
        }
        let smooth = boundary.integrate(y, |u, w| self.q_smooth_at(x, y, u, w, a));
        smooth + self.k_integral_at(x, y, a, rebate, rule)
    }

    /// `∫_0^y Q1(x, y, u, S_f(u)) du` along the boundary.
    pub(crate) fn q1_integral(&self, x: f64, y: f64, boundary: &BoundaryView<'_>) -> f64 {
        if y == 0.0 {
            return 0.0;
        }
        let a = self.debt(y);
        boundary.integrate(y, |u, w| self.q1_at(x, y, u, w, a))
    }

    /// Value formula of the margin-call loan in the holding region:
    /// `M(x, y, a(0)) + ∫_0^y Q du`.
    pub(crate) fn margin_call_formula(
        &self,
        x: f64,
        y: f64,
        boundary: &BoundaryView<'_>,
        rebate: &dyn RebateFn,
        rule: &QuadratureRule,
    ) -> f64 {
        let a = self.debt(y);
        self.m_reflected_at(x, y, self.spec.debt_at_expiry(), a)
            + self.q_total_at(x, y, a, boundary, rebate, rule)
    }

    /// Value formula of the non-recourse loan in the holding region:
    /// `M1(x, y, a(0)) + ∫_0^y Q1 du`.
    pub(crate) fn non_recourse_formula(&self, x: f64, y: f64, boundary: &BoundaryView<'_>) -> f64 {
        self.m1(x, y, self.spec.debt_at_expiry()) + self.q1_integral(x, y, boundary)
    }
}
