//! Margin-call stock loan: exit boundary, contract value and service fee.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ie_solver::{solve_boundary, BoundaryCurve, BoundaryView, ResidualProblem};
use crate::kernels::{gauss_laguerre, KernelContext, QuadratureRule, RebateFn};
use crate::model::{terminal_exit_price, GridSpec, LoanSpec, MarketParams};
use crate::nonrecourse::Rebate;

/// Where a quote sits relative to the two boundaries of the holding region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExerciseState {
    /// `a(tau) < S < S_f(tau)`: the contract is worth more than its exit payoff.
    Holding,
    /// `S >= S_f(tau)`: exit is optimal and the value is `S - a(tau)`.
    ExitOptimal,
    /// `S = a(tau)`: the margin call fires and the value is `R(tau)`.
    MarginCallBoundary,
}

impl ExerciseState {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExerciseState::Holding => "holding",
            ExerciseState::ExitOptimal => "exit_optimal",
            ExerciseState::MarginCallBoundary => "margin_call_boundary",
        }
    }
}

impl fmt::Display for ExerciseState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceQuote {
    pub value: f64,
    pub state: ExerciseState,
    pub tau: f64,
    pub spot: f64,
}

struct Residual<'a> {
    ctx: &'a KernelContext,
    rebate: &'a Rebate,
    rule: &'a QuadratureRule,
    start: f64,
}

impl ResidualProblem for Residual<'_> {
    fn maturity(&self) -> f64 {
        self.ctx.spec.maturity
    }

    fn initial_value(&self) -> f64 {
        self.start
    }

    fn lower_bound(&self, tau: f64) -> f64 {
        self.ctx.debt(tau)
    }

    fn scale(&self) -> f64 {
        self.ctx.spec.principal
    }

    fn residual(&self, s: f64, tau: f64, boundary: &BoundaryView<'_>) -> f64 {
        s - self.ctx.debt(tau) - self.ctx.margin_call_formula(s, tau, boundary, self.rebate, self.rule)
    }
}

/// A solved margin-call loan.
#[derive(Debug, Clone)]
pub struct MarginCallPricer {
    ctx: KernelContext,
    rule: QuadratureRule,
    rebate: Rebate,
    boundary: BoundaryCurve,
}

impl MarginCallPricer {
    /// Builds the rebate from the embedded non-recourse loan, then solves
    /// `S_f - a = M(S_f, tau, a(0)) + ∫_0^tau Q(S_f, tau, u, S_f(u)) du`.
    pub fn solve(market: MarketParams, spec: LoanSpec, grid: &GridSpec) -> Result<Self> {
        grid.validate()?;
        let ctx = KernelContext::new(market, spec)?;
        let rule = gauss_laguerre(grid.quadrature_order)?;
        let rebate = Rebate::build(market, spec, grid)?;
        let start = terminal_exit_price(&spec, &market)?;
        let boundary = solve_boundary(
            &Residual {
                ctx: &ctx,
                rebate: &rebate,
                rule: &rule,
                start,
            },
            grid,
        )?;
        Ok(Self {
            ctx,
            rule,
            rebate,
            boundary,
        })
    }

    pub fn boundary(&self) -> &BoundaryCurve {
        &self.boundary
    }

    pub fn rebate(&self) -> &Rebate {
        &self.rebate
    }

    pub fn context(&self) -> &KernelContext {
        &self.ctx
    }

    pub fn spec(&self) -> &LoanSpec {
        &self.ctx.spec
    }

    pub fn market(&self) -> &MarketParams {
        &self.ctx.market
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    /// Prices the contract at `(spot, tau)`.
    ///
    /// The contract is only defined on or above the debt curve: a spot below
    /// `a(tau)` means the margin call has already been made. In the holding
    /// region the formula value is floored at the exit payoff.
    pub fn value(&self, spot: f64, tau: f64) -> Result<PriceQuote> {
        let spec = &self.ctx.spec;
        if !(0.0..=spec.maturity).contains(&tau) {
            return Err(Error::domain("tau", tau, format!("[0, {}]", spec.maturity)));
        }
        let debt = self.ctx.debt(tau);
        if !(spot >= debt) {
            return Err(Error::MarginCalled { spot, debt });
        }
        let quote = |value, state| PriceQuote {
            value,
            state,
            tau,
            spot,
        };
        if spot == debt {
            return Ok(quote(self.rebate.rebate(tau), ExerciseState::MarginCallBoundary));
        }
        if tau == 0.0 || spot >= self.boundary.at(tau) {
            return Ok(quote(spot - debt, ExerciseState::ExitOptimal));
        }
        Ok(quote(self.formula_value(spot, tau).max(spot - debt), ExerciseState::Holding))
    }

    /// The holding-region formula `M(S, tau, a(0)) + ∫_0^tau Q du` at any
    /// `spot >= a(tau)`, without the exit clamp.
    pub fn formula_value(&self, spot: f64, tau: f64) -> f64 {
        self.ctx
            .margin_call_formula(spot, tau, &self.boundary.view(), &self.rebate, &self.rule)
    }

    /// Residual of the boundary equation at node `j`, recomputed from the
    /// solved curve.
    pub fn node_residual(&self, j: usize) -> f64 {
        let b = &self.boundary;
        let tau = b.taus()[j];
        if j == 0 {
            return 0.0;
        }
        let view = b.view_through(j);
        let sf = b.values()[j];
        sf - self.ctx.debt(tau) - self.ctx.margin_call_formula(sf, tau, &view, &self.rebate, &self.rule)
    }

    /// Upfront fee `c = V0 - S0 + E` that makes the contract fair at inception.
    pub fn service_fee(&self, spot0: f64) -> Result<f64> {
        let v0 = self.value(spot0, self.ctx.spec.maturity)?.value;
        Ok(v0 - (spot0 - self.ctx.spec.principal))
    }
}

/// Solves the contract and returns the service fee at inception spot `spot0`.
pub fn service_fee(market: MarketParams, spec: LoanSpec, grid: &GridSpec, spot0: f64) -> Result<f64> {
    MarginCallPricer::solve(market, spec, grid)?.service_fee(spot0)
}
