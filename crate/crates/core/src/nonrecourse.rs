//! Non-recourse stock loan: an American call whose strike is the accruing
//! debt `a(tau)`.
//!
//! Also provides the margin-call rebate `R(tau)`, which is the value of the
//! non-recourse loan left after the margin payment.

use crate::error::{Error, Result};
use crate::ie_solver::{solve_boundary, BoundaryCurve, BoundaryView, ResidualProblem};
use crate::kernels::{KernelContext, RebateFn};
use crate::model::{terminal_exit_price, GridSpec, LoanSpec, MarketParams};

struct Residual<'a> {
    ctx: &'a KernelContext,
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
        s - self.ctx.debt(tau) - self.ctx.non_recourse_formula(s, tau, boundary)
    }
}

/// A solved non-recourse loan.
#[derive(Debug, Clone)]
pub struct NonRecoursePricer {
    ctx: KernelContext,
    boundary: BoundaryCurve,
}

impl NonRecoursePricer {
    /// Solves the exit boundary. The margin fraction of `spec` is ignored.
    pub fn solve(market: MarketParams, spec: LoanSpec, grid: &GridSpec) -> Result<Self> {
        let spec = spec.with_margin_fraction(0.0);
        let ctx = KernelContext::new(market, spec)?;
        let start = terminal_exit_price(&spec, &market)?;
        let boundary = solve_boundary(&Residual { ctx: &ctx, start }, grid)?;
        Ok(Self { ctx, boundary })
    }

    pub fn boundary(&self) -> &BoundaryCurve {
        &self.boundary
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

    /// Loan value `V(S, tau)`.
    ///
    /// Below the boundary this is `M1(S, tau, a(0)) + ∫_0^tau Q1 du`, floored
    /// at the exit payoff; at or above it the exit payoff `S - a(tau)`; at
    /// expiry `max(S - a(0), 0)`.
    pub fn value(&self, spot: f64, tau: f64) -> Result<f64> {
        if !(spot > 0.0) {
            return Err(Error::domain("spot", spot, "(0, inf)"));
        }
        if !(0.0..=self.ctx.spec.maturity).contains(&tau) {
            return Err(Error::domain("tau", tau, format!("[0, {}]", self.ctx.spec.maturity)));
        }
        if tau <= 0.0 {
            return Ok((spot - self.ctx.spec.debt_at_expiry()).max(0.0));
        }
        let exit = spot - self.ctx.debt(tau);
        if spot >= self.boundary.at(tau) {
            return Ok(exit);
        }
        Ok(self.ctx.non_recourse_formula(spot, tau, &self.boundary.view()).max(exit))
    }

    /// Holding-region formula evaluated at any spot, without the exit clamp.
    pub fn formula_value(&self, spot: f64, tau: f64) -> f64 {
        if tau <= 0.0 {
            return (spot - self.ctx.spec.debt_at_expiry()).max(0.0);
        }
        self.ctx.non_recourse_formula(spot, tau, &self.boundary.view())
    }

    /// Residual of the boundary equation at node `j`, recomputed from the
    /// solved curve.
    pub fn node_residual(&self, j: usize) -> f64 {
        let b = &self.boundary;
        if j == 0 {
            return 0.0;
        }
        let tau = b.taus()[j];
        let view = b.view_through(j);
        let sf = b.values()[j];
        sf - self.ctx.debt(tau) - self.ctx.non_recourse_formula(sf, tau, &view)
    }
}

/// The margin-call rebate `R(tau) = V_st(a(tau), tau; (1 - Delta) a(tau)) - Delta a(tau)`.
///
/// The non-recourse loan entered after a margin call at `tau` has debt
/// `(1 - Delta) a(tau)` accruing at the same rate, which is exactly the debt
/// curve of one loan with principal `(1 - Delta) E`. One boundary solve of
/// that embedded loan serves every `tau`.
#[derive(Debug, Clone)]
pub struct Rebate {
    embedded: NonRecoursePricer,
    spec: LoanSpec,
}

impl Rebate {
    pub fn build(market: MarketParams, spec: LoanSpec, grid: &GridSpec) -> Result<Self> {
        spec.validate()?;
        let embedded_spec = spec
            .with_principal((1.0 - spec.margin_fraction) * spec.principal)
            .with_margin_fraction(0.0);
        let embedded = NonRecoursePricer::solve(market, embedded_spec, grid)?;
        Ok(Self { embedded, spec })
    }

    pub fn embedded(&self) -> &NonRecoursePricer {
        &self.embedded
    }

    pub fn value(&self, tau: f64) -> Result<f64> {
        if !(0.0..=self.spec.maturity).contains(&tau) {
            return Err(Error::domain("tau", tau, format!("[0, {}]", self.spec.maturity)));
        }
        Ok(self.rebate(tau))
    }
}

impl RebateFn for Rebate {
    fn rebate(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        let tau = tau.min(self.spec.maturity);
        // The formula value is used on both sides of the embedded boundary:
        // where exit is immediate it is the exit payoff Delta a up to
        // discretisation error, and R stays continuous in tau.
        let debt = self.spec.debt(tau);
        (self.embedded.formula_value(debt, tau) - self.spec.margin_fraction * debt).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1(maturity: f64) -> (MarketParams, LoanSpec) {
        (
            MarketParams::new(0.06, 0.03, 0.4).unwrap(),
            LoanSpec::new(0.7, 0.1, maturity, 0.0).unwrap(),
        )
    }

    #[test]
    fn inception_boundary_one_year() {
        let (m, s) = table1(1.0);
        let p = NonRecoursePricer::solve(m, s, &GridSpec::default()).unwrap();
        assert!((p.boundary().inception() - 1.168).abs() < 0.005);
    }

    #[test]
    fn expiry_payoff() {
        let (m, s) = table1(1.0);
        let p = NonRecoursePricer::solve(m, s, &GridSpec::default()).unwrap();
        let a0 = s.debt_at_expiry();
        assert_eq!(p.value(a0, 0.0).unwrap(), 0.0);
        assert_eq!(p.value(a0 + 0.1, 0.0).unwrap(), 0.1 + a0 - a0);
        assert!(p.value(1.0, -0.1).is_err());
        assert!(p.value(0.0, 0.5).is_err());
    }

    #[test]
    fn value_matching_on_the_grid() {
        let (m, s) = table1(5.0);
        let p = NonRecoursePricer::solve(m, s, &GridSpec::default()).unwrap();
        let b = p.boundary();
        for (i, (&tau, &sf)) in b.taus().iter().zip(b.values()).enumerate().skip(1) {
            let v = p.formula_value(sf, tau);
            let want = sf - s.debt(tau);
            assert!((v - want).abs() <= 1e-6 * s.principal, "node {i}: {v} vs {want}");
        }
    }

    #[test]
    fn rebate_vanishes_at_expiry() {
        let (m, s) = table1(5.0);
        for delta in [0.0, 0.1, 0.3] {
            let r = Rebate::build(m, s.with_margin_fraction(delta), &GridSpec::default()).unwrap();
            assert!(r.value(0.0).unwrap().abs() <= 1e-10);
            assert!(r.value(5.1).is_err());
        }
    }

    #[test]
    fn rebate_is_nonnegative_and_humped() {
        let (m, s) = table1(5.0);
        let r = Rebate::build(m, s, &GridSpec::default()).unwrap();
        let samples: Vec<f64> = (0..=50).map(|i| r.value(0.1 * i as f64).unwrap()).collect();
        assert!(samples.iter().all(|&v| v >= 0.0));
        let (imax, vmax) = samples
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        assert!(vmax > 0.0);
        assert!(imax > 0, "rebate should rise away from expiry");
        assert!(samples[0] < vmax);
    }
}
