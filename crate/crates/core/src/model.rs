//! Contract and market parameters, the accrued-debt curve and the
//! dimensionless constants of the heat-equation reduction.
//!
//! Time is always time-to-maturity `tau`, so `tau = maturity` is inception and
//! `tau = 0` is expiry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Terms of the loan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoanSpec {
    /// Principal `E`.
    pub principal: f64,
    /// Continuously compounded loan rate `eta`.
    pub loan_rate: f64,
    /// Maturity `T` in years.
    pub maturity: f64,
    /// Margin-call payment as a fraction `Delta` of the accrued debt.
    #[serde(default)]
    pub margin_fraction: f64,
}

impl LoanSpec {
    pub fn new(principal: f64, loan_rate: f64, maturity: f64, margin_fraction: f64) -> Result<Self> {
        let spec = Self {
            principal,
            loan_rate,
            maturity,
            margin_fraction,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.principal > 0.0 && self.principal.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "principal",
                value: self.principal,
                reason: "must be positive and finite",
            });
        }
        if !self.loan_rate.is_finite() {
            return Err(Error::InvalidParameter {
                name: "loan_rate",
                value: self.loan_rate,
                reason: "must be finite",
            });
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "maturity",
                value: self.maturity,
                reason: "must be positive and finite",
            });
        }
        if !(0.0..1.0).contains(&self.margin_fraction) {
            return Err(Error::InvalidParameter {
                name: "margin_fraction",
                value: self.margin_fraction,
                reason: "must lie in [0, 1)",
            });
        }
        Ok(())
    }

    /// Same contract with a different principal.
    pub fn with_principal(&self, principal: f64) -> Self {
        Self { principal, ..*self }
    }

    /// Same contract with a different margin fraction.
    pub fn with_margin_fraction(&self, margin_fraction: f64) -> Self {
        Self {
            margin_fraction,
            ..*self
        }
    }

    /// Accrued debt `a(tau) = E e^{eta (T - tau)}`.
    pub fn accrued_debt(&self, tau: f64) -> Result<f64> {
        if !(0.0..=self.maturity).contains(&tau) {
            return Err(Error::domain(
                "tau",
                tau,
                format!("[0, {}]", self.maturity),
            ));
        }
        Ok(self.debt(tau))
    }

    /// Unchecked accrued debt, for hot loops that already hold a valid `tau`.
    #[inline]
    pub(crate) fn debt(&self, tau: f64) -> f64 {
        self.principal * (self.loan_rate * (self.maturity - tau)).exp()
    }

    /// Debt due at expiry, `a(0) = E e^{eta T}`.
    #[inline]
    pub fn debt_at_expiry(&self) -> f64 {
        self.debt(0.0)
    }
}

/// Risk-neutral market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub risk_free: f64,
    pub dividend: f64,
    pub volatility: f64,
}

impl MarketParams {
    pub fn new(risk_free: f64, dividend: f64, volatility: f64) -> Result<Self> {
        let market = Self {
            risk_free,
            dividend,
            volatility,
        };
        market.validate()?;
        Ok(market)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.risk_free >= 0.0 && self.risk_free.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "risk_free",
                value: self.risk_free,
                reason: "must be nonnegative and finite",
            });
        }
        if !(self.dividend >= 0.0 && self.dividend.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dividend",
                value: self.dividend,
                reason: "must be nonnegative and finite",
            });
        }
        if !(self.volatility > 0.0 && self.volatility.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "volatility",
                value: self.volatility,
                reason: "must be positive and finite",
            });
        }
        Ok(())
    }
}

/// Validates a market/contract pair, including the joint condition that keeps
/// the terminal exit price finite.
pub fn validate_pair(market: &MarketParams, spec: &LoanSpec) -> Result<()> {
    market.validate()?;
    spec.validate()?;
    if market.dividend == 0.0 && market.risk_free > spec.loan_rate {
        return Err(Error::UnboundedBoundary {
            risk_free: market.risk_free,
            loan_rate: spec.loan_rate,
        });
    }
    Ok(())
}

/// Constants of the reduction `S = a(tau) e^x`, `tau = 2 l / sigma^2`,
/// `V = E e^{alpha x + beta l} C(x, l)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionlessConstants {
    pub gamma: f64,
    pub q: f64,
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Exponent of the reflection factor `(S / a)^lambda`.
    pub lambda: f64,
}

impl DimensionlessConstants {
    pub fn new(market: &MarketParams, spec: &LoanSpec) -> Self {
        let var = market.volatility * market.volatility;
        let gamma = 2.0 * market.risk_free / var;
        let q = 2.0 * market.dividend / var;
        let k = gamma - q - 2.0 * spec.loan_rate / var - 1.0;
        let alpha = -0.5 * k;
        Self {
            gamma,
            q,
            k,
            alpha,
            beta: -alpha * alpha - gamma,
            lambda: 2.0 * alpha,
        }
    }
}

/// Limit of the exit boundary as `tau -> 0+`:
/// `max(E e^{eta T}, (r - eta)/delta · E e^{eta T})`.
pub fn terminal_exit_price(spec: &LoanSpec, market: &MarketParams) -> Result<f64> {
    validate_pair(market, spec)?;
    let debt = spec.debt_at_expiry();
    if market.risk_free <= spec.loan_rate + market.dividend {
        return Ok(debt);
    }
    // r > eta + delta >= eta, so delta > 0 here
    Ok(debt.max((market.risk_free - spec.loan_rate) / market.dividend * debt))
}

/// Discretisation controls for the boundary solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    /// Number of uniform time steps `n` on `[0, T]`.
    pub time_steps: usize,
    /// Gauss-Laguerre order used for the singular K integral.
    pub quadrature_order: usize,
    /// Relative Newton tolerance.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            time_steps: 50,
            quadrature_order: 32,
            newton_tol: 1e-10,
            newton_max_iter: 50,
        }
    }
}

impl GridSpec {
    pub fn with_steps(time_steps: usize) -> Self {
        Self {
            time_steps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_steps < 2 {
            return Err(Error::InvalidParameter {
                name: "time_steps",
                value: self.time_steps as f64,
                reason: "need at least 2 steps",
            });
        }
        if !(4..=128).contains(&self.quadrature_order) {
            return Err(Error::QuadratureOrder(self.quadrature_order));
        }
        if !(self.newton_tol > 0.0 && self.newton_tol.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "newton_tol",
                value: self.newton_tol,
                reason: "must be positive",
            });
        }
        if self.newton_max_iter == 0 {
            return Err(Error::InvalidParameter {
                name: "newton_max_iter",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        Ok(())
    }
}
