//! Cox-Ross-Rubinstein lattice used as an independent check on the
//! integral-equation prices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::RebateFn;
use crate::model::{validate_pair, LoanSpec, MarketParams};
use crate::par;

/// Levels at least this wide are updated in parallel.
const PARALLEL_LEVEL: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub steps: usize,
}

impl Default for TreeSpec {
    fn default() -> Self {
        Self { steps: 10_000 }
    }
}

impl TreeSpec {
    pub fn new(steps: usize) -> Self {
        Self { steps }
    }

    pub fn lattice(&self, market: &MarketParams, maturity: f64) -> Result<Lattice> {
        self.lattice_with_drift(market, maturity, market.risk_free - market.dividend)
    }

    /// Lattice whose up probability matches a growth rate `drift` of the
    /// spot coordinate; discounting stays at the risk-free rate.
    fn lattice_with_drift(&self, market: &MarketParams, maturity: f64, drift: f64) -> Result<Lattice> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter {
                name: "steps",
                value: 0.0,
                reason: "tree needs at least one step",
            });
        }
        let dt = maturity / self.steps as f64;
        let log_up = market.volatility * dt.sqrt();
        let up = log_up.exp();
        let down = 1.0 / up;
        let prob = ((drift * dt).exp() - down) / (up - down);
        if !(prob > 0.0 && prob < 1.0) {
            return Err(Error::TreeProbability(prob));
        }
        Ok(Lattice {
            steps: self.steps,
            maturity,
            dt,
            log_up,
            prob,
            discount: (-market.risk_free * dt).exp(),
        })
    }
}

/// Derived CRR quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub steps: usize,
    pub maturity: f64,
    pub dt: f64,
    /// `ln u = sigma sqrt(dt)`.
    pub log_up: f64,
    /// Risk-neutral up probability.
    pub prob: f64,
    pub discount: f64,
}

impl Lattice {
    pub fn up(&self) -> f64 {
        self.log_up.exp()
    }

    /// Time-to-maturity of level `i` (level 0 is inception).
    fn tau(&self, level: usize) -> f64 {
        self.maturity - level as f64 * self.dt
    }

    /// `u^e` for `e` in `lo..=hi`, indexed from `lo`.
    fn powers(&self, lo: i64, hi: i64) -> Vec<f64> {
        (lo..=hi).map(|e| (e as f64 * self.log_up).exp()).collect()
    }
}

/// Which inception nodes a backward induction produces.
#[derive(Debug, Clone, Copy)]
enum Window {
    /// The usual CRR tree rooted at the anchor.
    Root,
    /// Every level `anchor u^k` for `k` in `lo..=hi` at inception, i.e. two
    /// interleaved CRR lattices.
    Full { lo: i64, hi: i64 },
}

/// Backward induction. `node(spot, level, continuation)` gives the value of
/// a node at `level` (0 = inception); `terminal(spot)` the payoff at expiry.
///
/// Returns the inception values and their continuation values.
fn induct<T, N>(anchor: f64, lattice: &Lattice, window: Window, terminal: T, node: N) -> (Vec<f64>, Vec<f64>)
where
    T: Fn(f64) -> f64 + Sync,
    N: Fn(f64, usize, f64) -> f64 + Sync,
{
    let n = lattice.steps as i64;
    // level i holds k = first(i) + stride * m for m in 0..width(i)
    let (k_lo, k_hi, stride) = match window {
        Window::Root => (0, 0, 2),
        Window::Full { lo, hi } => (lo, hi, 1),
    };
    let width = |level: i64| ((k_hi - k_lo + 2 * level) / stride + 1) as usize;
    let first = |level: i64| k_lo - level;
    // children of index m sit at m (down) and m + up_off (up) one level later
    let up_off = (2 / stride) as usize;

    let base = k_lo - n;
    let pows = lattice.powers(base, k_hi + n);
    let spot = |k: i64| anchor * pows[(k - base) as usize];
    let (p, disc) = (lattice.prob, lattice.discount);

    let mut old = vec![0.0; width(n)];
    let k0 = first(n);
    par::fill_indexed(&mut old, PARALLEL_LEVEL, |m| terminal(spot(k0 + stride * m as i64)));

    let mut new = vec![0.0; old.len()];
    for level in (0..n).rev() {
        let k0 = first(level);
        let out = &mut new[..width(level)];
        par::fill_indexed(out, PARALLEL_LEVEL, |m| {
            let cont = disc * (p * old[m + up_off] + (1.0 - p) * old[m]);
            node(spot(k0 + stride * m as i64), level as usize, cont)
        });
        if level == 0 {
            let cont = (0..width(0))
                .map(|m| disc * (p * old[m + up_off] + (1.0 - p) * old[m]))
                .collect();
            let mut values = new;
            values.truncate(width(0));
            return (values, cont);
        }
        std::mem::swap(&mut old, &mut new);
    }
    // zero-step trees are rejected by `TreeSpec::lattice`
    unreachable!("lattice has at least one step")
}

fn level_debts(lattice: &Lattice, spec: &LoanSpec) -> Vec<f64> {
    (0..=lattice.steps).map(|i| spec.debt(lattice.tau(i))).collect()
}

fn checked_lattice(market: &MarketParams, spec: &LoanSpec, tree: &TreeSpec) -> Result<Lattice> {
    validate_pair(market, spec)?;
    tree.lattice(market, spec.maturity)
}

/// Non-recourse loan value: American call with strike `a(tau)`.
pub fn nr_tree_value(spot0: f64, market: &MarketParams, spec: &LoanSpec, tree: &TreeSpec) -> Result<f64> {
    let lattice = checked_lattice(market, spec, tree)?;
    let a0 = spec.debt_at_expiry();
    let debts = level_debts(&lattice, spec);
    let (v, _) = induct(
        spot0,
        &lattice,
        Window::Root,
        |s| (s - a0).max(0.0),
        |s, level, cont| (s - debts[level]).max(cont),
    );
    Ok(v[0])
}

/// The same contract without early exit.
pub fn european_tree_value(spot0: f64, market: &MarketParams, spec: &LoanSpec, tree: &TreeSpec) -> Result<f64> {
    let lattice = checked_lattice(market, spec, tree)?;
    let a0 = spec.debt_at_expiry();
    let (v, _) = induct(spot0, &lattice, Window::Root, |s| (s - a0).max(0.0), |_, _, cont| cont);
    Ok(v[0])
}

/// Adjacent inception spot levels between which exit switches from
/// suboptimal to optimal.
///
/// The lattice is anchored at the principal `E = a(T)`: inception spots are
/// `E u^k` for every integer `k`, so the bracket is one factor `u` wide.
pub fn nr_tree_boundary_bracket(
    market: &MarketParams,
    spec: &LoanSpec,
    tree: &TreeSpec,
) -> Result<(f64, f64)> {
    let lattice = checked_lattice(market, spec, tree)?;
    let anchor = spec.principal;
    let a0 = spec.debt_at_expiry();
    let start = crate::model::terminal_exit_price(spec, market)?;
    let ceiling = 4.0 * start.max(anchor) * (3.0 * market.volatility * spec.maturity.sqrt()).exp();
    let k_hi = ((ceiling / anchor).ln() / lattice.log_up).ceil() as i64;
    let debts = level_debts(&lattice, spec);
    let (_, cont) = induct(
        anchor,
        &lattice,
        Window::Full { lo: 0, hi: k_hi.max(1) },
        |s| (s - a0).max(0.0),
        |s, level, c| (s - debts[level]).max(c),
    );
    let spot = |m: usize| anchor * (m as f64 * lattice.log_up).exp();
    let debt = spec.principal;
    let exercise: Vec<bool> = cont
        .iter()
        .enumerate()
        .map(|(m, &c)| {
            let payoff = spot(m) - debt;
            payoff > 0.0 && payoff >= c
        })
        .collect();
    // lowest index from which every higher node exercises
    let mut switch = None;
    for m in (0..exercise.len()).rev() {
        if exercise[m] {
            switch = Some(m);
        } else {
            break;
        }
    }
    match switch {
        Some(m) if m > 0 => Ok((spot(m - 1), spot(m))),
        _ => Err(Error::BracketNotFound {
            low: anchor,
            high: spot(exercise.len() - 1),
        }),
    }
}

/// Margin-call loan value. Any node with `S <= a(tau)` takes the rebate
/// `R(tau)`; backward induction makes that the first touch from above.
///
/// The lattice follows the debt: level-`i` spots are `E u^k a(tau_i) / E`,
/// so the trigger `S = a(tau)` is always the node `k = 0` instead of falling
/// between nodes (which leaves an error of the order of the node spacing).
/// The up probability carries the matching drift `r - delta - eta`. `spot0`
/// is generally off the lattice and is interpolated quadratically in `ln S`
/// from the three nearest inception nodes.
pub fn mc_tree_value(
    spot0: f64,
    market: &MarketParams,
    spec: &LoanSpec,
    tree: &TreeSpec,
    rebate: &dyn RebateFn,
) -> Result<f64> {
    validate_pair(market, spec)?;
    let lattice = tree.lattice_with_drift(market, spec.maturity, market.risk_free - market.dividend - spec.loan_rate)?;
    let e = spec.principal;
    if !(spot0 >= e) {
        return Err(Error::MarginCalled { spot: spot0, debt: e });
    }
    // growth of the debt since inception, per level
    let growth: Vec<f64> = level_debts(&lattice, spec).iter().map(|a| a / e).collect();
    let rebates: Vec<f64> = par::map_range(lattice.steps + 1, |i| rebate.rebate(lattice.tau(i)));
    let (g_end, r_end) = (growth[lattice.steps], rebates[lattice.steps]);

    let x = (spot0 / e).ln() / lattice.log_up;
    let lo = (x.round() as i64 - 1).max(0);
    let (v, _) = induct(
        e,
        &lattice,
        Window::Full { lo, hi: lo + 2 },
        |s| if s <= e { r_end } else { g_end * (s - e) },
        |s, level, cont| {
            if s <= e {
                rebates[level]
            } else {
                (growth[level] * (s - e)).max(cont)
            }
        },
    );
    // Lagrange through k = lo, lo+1, lo+2 at fractional index x
    let t = x - lo as f64;
    Ok(v[0] * (t - 1.0) * (t - 2.0) / 2.0 - v[1] * t * (t - 2.0) + v[2] * t * (t - 1.0) / 2.0)
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
    fn probability_guard() {
        let m = MarketParams::new(0.5, 0.0, 0.01).unwrap();
        assert!(matches!(
            TreeSpec::new(10).lattice(&m, 1.0),
            Err(Error::TreeProbability(_))
        ));
        let m = MarketParams::new(0.1, 0.05, 0.2).unwrap();
        let l = TreeSpec::new(500).lattice(&m, 1.0).unwrap();
        assert!(l.prob > 0.0 && l.prob < 1.0);
    }

    #[test]
    fn american_dominates_european() {
        let (m, s) = table1(1.0);
        let t = TreeSpec::new(400);
        for spot in [0.6, 0.9, 1.1, 1.4] {
            let am = nr_tree_value(spot, &m, &s, &t).unwrap();
            let eu = european_tree_value(spot, &m, &s, &t).unwrap();
            assert!(am >= eu - 1e-14);
            assert!(am >= (spot - s.principal).max(0.0));
        }
    }

    #[test]
    fn deterministic_limit() {
        // nearly deterministic stock, deep in the money
        let m = MarketParams::new(0.05, 0.02, 0.01).unwrap();
        let s = LoanSpec::new(1.0, 0.03, 1.0, 0.0).unwrap();
        let spot0 = 3.0;
        let v = nr_tree_value(spot0, &m, &s, &TreeSpec::new(1000)).unwrap();
        let det = (0..=1000)
            .map(|i| {
                let t = i as f64 / 1000.0;
                (-m.risk_free * t).exp() * (spot0 * ((m.risk_free - m.dividend) * t).exp() - s.debt(1.0 - t))
            })
            .fold(f64::MIN, f64::max);
        assert!((v - det).abs() < 1e-3, "{v} {det}");
    }

    #[test]
    fn full_window_matches_single_root() {
        // every inception node of the anchored window equals the tree rooted there
        let (m, s) = table1(1.0);
        let t = TreeSpec::new(200);
        let l = t.lattice(&m, 1.0).unwrap();
        let a0 = s.debt_at_expiry();
        let debts = level_debts(&l, &s);
        let (vals, _) = induct(
            s.principal,
            &l,
            Window::Full { lo: 0, hi: 40 },
            |x| (x - a0).max(0.0),
            |x, level, c| (x - debts[level]).max(c),
        );
        for k in [0usize, 7, 23, 40] {
            let spot = s.principal * (k as f64 * l.log_up).exp();
            let single = nr_tree_value(spot, &m, &s, &t).unwrap();
            assert!((vals[k] - single).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn bracket_table1_one_year() {
        let (m, s) = table1(1.0);
        let (lo, hi) = nr_tree_boundary_bracket(&m, &s, &TreeSpec::default()).unwrap();
        assert!((lo - 1.163).abs() < 5e-4 && (hi - 1.168).abs() < 5e-4, "{lo} {hi}");
    }

    #[test]
    fn bracket_in_the_money_case() {
        // r > eta + delta: the boundary starts above the expiry debt
        let m = MarketParams::new(0.10, 0.04, 0.3).unwrap();
        let s = LoanSpec::new(1.0, 0.02, 1.0, 0.0).unwrap();
        let (lo, hi) = nr_tree_boundary_bracket(&m, &s, &TreeSpec::new(2000)).unwrap();
        assert!(lo > s.principal && hi > lo);
    }

    #[test]
    fn margin_call_rejects_called_spot() {
        let m = MarketParams::new(0.1, 0.05, 0.2).unwrap();
        let s = LoanSpec::new(80.0, 0.05, 1.0, 0.1).unwrap();
        let zero = |_: f64| 0.0;
        assert!(mc_tree_value(79.0, &m, &s, &TreeSpec::new(100), &zero).is_err());
        let v = mc_tree_value(95.0, &m, &s, &TreeSpec::new(500), &zero).unwrap();
        let nr = nr_tree_value(95.0, &m, &s, &TreeSpec::new(500)).unwrap();
        // a zero rebate only removes value
        assert!(v <= nr + 1e-12 && v >= 15.0);
    }

    #[test]
    fn bracket_five_years() {
        // The switch sits between E u^86 and E u^87; the integral-equation
        // boundary (about 1.529) lies one node higher, in [E u^87, E u^88].
        let (m, s) = table1(5.0);
        let (lo, hi) = nr_tree_boundary_bracket(&m, &s, &TreeSpec::default()).unwrap();
        let u = TreeSpec::default().lattice(&m, 5.0).unwrap().up();
        assert!((hi / lo - u).abs() < 1e-12);
        assert!((hi - 1.524).abs() < 5e-4, "{lo} {hi}");
    }

    fn table2(e: f64) -> (MarketParams, LoanSpec) {
        (
            MarketParams::new(0.1, 0.05, 0.2).unwrap(),
            LoanSpec::new(e, 0.05, 1.0, 0.1).unwrap(),
        )
    }

    #[test]
    fn margin_call_table2_cells() {
        for (e, spot, want) in [(80.0, 95.0, 15.289), (90.0, 110.0, 20.158)] {
            let (m, s) = table2(e);
            let r = crate::nonrecourse::Rebate::build(m, s, &crate::model::GridSpec::default()).unwrap();
            let v = mc_tree_value(spot, &m, &s, &TreeSpec::default(), &r).unwrap();
            assert!((v - want).abs() < 5e-3, "E={e} S={spot}: {v}");
        }
    }

    #[test]
    fn margin_call_tree_converges() {
        let (m, s) = table2(90.0);
        let r = crate::nonrecourse::Rebate::build(m, s, &crate::model::GridSpec::default()).unwrap();
        let v: Vec<f64> = [500, 1000, 2000]
            .iter()
            .map(|&n| mc_tree_value(95.0, &m, &s, &TreeSpec::new(n), &r).unwrap())
            .collect();
        assert!((v[2] - v[1]).abs() < (v[1] - v[0]).abs());
    }

    #[test]
    fn margin_call_without_margin_is_non_recourse() {
        let (m, s) = table2(85.0);
        let s = s.with_margin_fraction(0.0);
        let r = crate::nonrecourse::Rebate::build(m, s, &crate::model::GridSpec::default()).unwrap();
        let t = TreeSpec::new(2000);
        for spot in [95.0, 100.0, 105.0, 110.0] {
            let mc = mc_tree_value(spot, &m, &s, &t, &r).unwrap();
            let nr = nr_tree_value(spot, &m, &s, &t).unwrap();
            assert!((mc - nr).abs() < 0.01, "S={spot}: {mc} vs {nr}");
        }
    }

    #[test]
    fn margin_call_on_lattice_spot_needs_no_interpolation() {
        let (m, s) = table2(85.0);
        let t = TreeSpec::new(300);
        let rebate = |tau: f64| 0.5 * tau;
        let l = t.lattice_with_drift(&m, 1.0, m.risk_free - m.dividend - s.loan_rate).unwrap();
        let node = s.principal * (10.0 * l.log_up).exp();
        let v = mc_tree_value(node, &m, &s, &t, &rebate).unwrap();
        let near = mc_tree_value(node * (1.0 + 1e-9), &m, &s, &t, &rebate).unwrap();
        assert!((v - near).abs() < 1e-6);
        assert_eq!(mc_tree_value(s.principal, &m, &s, &t, &rebate).unwrap(), rebate(1.0));
    }
}
