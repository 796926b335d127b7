//! One function per subcommand. Each returns the finished CSV and a status;
//! nothing here touches stdout or the file system.

use std::time::Instant;

use super::config::{Product, RunConfig, ValidateMode};
use super::output::{Cell, Csv};
use super::CliError;
use crate::binomial::{mc_tree_value, nr_tree_boundary_bracket, nr_tree_value};
use crate::error::Result;
use crate::margincall::MarginCallPricer;
use crate::model::{GridSpec, LoanSpec, MarketParams};
use crate::nonrecourse::{NonRecoursePricer, Rebate};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// `validate` found a cell outside tolerance.
    ValidationFailed,
    /// Every row of a sweep failed.
    AllRowsFailed,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub csv: String,
    pub status: Status,
}

fn start(command: &str, config: &RunConfig) -> Csv {
    let mut csv = Csv::new(config.precision);
    csv.comment(&format!("stockloan {command}"));
    let json = serde_json::to_string(config).expect("config serializes");
    csv.comment(&format!("config: {json}"));
    csv
}

fn state_of_rows(failed: usize, total: usize) -> Status {
    if total > 0 && failed == total {
        Status::AllRowsFailed
    } else {
        Status::Ok
    }
}

pub fn boundary(config: &RunConfig) -> std::result::Result<Report, CliError> {
    let (market, loan) = config.contract()?;
    let curve = match config.product {
        Product::Nonrecourse => NonRecoursePricer::solve(market, loan, &config.grid)?.boundary().clone(),
        Product::Margincall => MarginCallPricer::solve(market, loan, &config.grid)?.boundary().clone(),
    };
    let mut csv = start("boundary", config);
    csv.header(&["tau", "S_f", "a_tau", "residual"]);
    for ((&tau, &sf), &res) in curve.taus().iter().zip(curve.values()).zip(curve.residuals()) {
        csv.row(&[tau.into(), sf.into(), loan.debt(tau).into(), res.into()]);
    }
    Ok(Report {
        csv: csv.into_string(),
        status: Status::Ok,
    })
}

// built once per command
#[allow(clippy::large_enum_variant)]
enum Pricer {
    NonRecourse(NonRecoursePricer),
    MarginCall(MarginCallPricer),
}

impl Pricer {
    fn solve(product: Product, market: MarketParams, loan: LoanSpec, grid: &GridSpec) -> Result<Self> {
        Ok(match product {
            Product::Nonrecourse => Pricer::NonRecourse(NonRecoursePricer::solve(market, loan, grid)?),
            Product::Margincall => Pricer::MarginCall(MarginCallPricer::solve(market, loan, grid)?),
        })
    }

    fn quote(&self, spot: f64, tau: f64) -> Result<(f64, &'static str)> {
        match self {
            Pricer::MarginCall(p) => p.value(spot, tau).map(|q| (q.value, q.state.as_str())),
            Pricer::NonRecourse(p) => {
                let value = p.value(spot, tau)?;
                let exit = if tau == 0.0 {
                    spot > p.spec().debt_at_expiry()
                } else {
                    spot >= p.boundary().at(tau)
                };
                Ok((value, if exit { "exit_optimal" } else { "holding" }))
            }
        }
    }
}

pub fn price(config: &RunConfig) -> std::result::Result<Report, CliError> {
    let (market, loan) = config.contract()?;
    config.require("spots", &config.spots)?;
    config.require("taus", &config.taus)?;
    let pricer = Pricer::solve(config.product, market, loan, &config.grid)?;
    let cells: Vec<(f64, f64)> = config
        .spots
        .iter()
        .flat_map(|&s| config.taus.iter().map(move |&t| (s, t)))
        .collect();
    let quotes = par::map(&cells, |&(s, t)| pricer.quote(s, t));

    let mut csv = start("price", config);
    csv.header(&["S", "tau", "value", "state", "error"]);
    let mut failed = 0;
    for (&(s, t), q) in cells.iter().zip(quotes) {
        match q {
            Ok((v, state)) => csv.row(&[s.into(), t.into(), v.into(), state.into(), Cell::Empty]),
            Err(e) => {
                failed += 1;
                csv.row(&[s.into(), t.into(), Cell::Empty, "error".into(), e.to_string().into()]);
            }
        }
    }
    Ok(Report {
        csv: csv.into_string(),
        status: state_of_rows(failed, cells.len()),
    })
}

pub fn fee(config: &RunConfig) -> std::result::Result<Report, CliError> {
    let (market, loan) = config.contract()?;
    config.require("principals", &config.principals)?;
    config.require("deltas", &config.deltas)?;
    let s0 = config.s0.ok_or_else(|| CliError::Usage("fee needs s0".into()))?;
    let cells: Vec<(f64, f64)> = config
        .principals
        .iter()
        .flat_map(|&e| config.deltas.iter().map(move |&d| (e, d)))
        .collect();
    let results = par::map(&cells, |&(e, d)| -> Result<(f64, f64)> {
        let spec = loan.with_principal(e).with_margin_fraction(d);
        spec.validate()?;
        let pricer = MarginCallPricer::solve(market, spec, &config.grid)?;
        let v0 = pricer.value(s0, spec.maturity)?.value;
        Ok((v0, v0 - (s0 - e)))
    });

    let mut csv = start("fee", config);
    csv.header(&["E", "Delta", "S0", "V0", "fee", "error"]);
    let mut failed = 0;
    for (&(e, d), r) in cells.iter().zip(results) {
        match r {
            Ok((v0, fee)) => csv.row(&[e.into(), d.into(), s0.into(), v0.into(), fee.into(), Cell::Empty]),
            Err(err) => {
                failed += 1;
                csv.row(&[e.into(), d.into(), s0.into(), Cell::Empty, Cell::Empty, err.to_string().into()]);
            }
        }
    }
    Ok(Report {
        csv: csv.into_string(),
        status: state_of_rows(failed, cells.len()),
    })
}

pub fn rebate(config: &RunConfig) -> std::result::Result<Report, CliError> {
    let (market, loan) = config.contract()?;
    let rebate = Rebate::build(market, loan, &config.grid)?;
    let n = config.grid.time_steps;
    let mut csv = start("rebate", config);
    csv.header(&["tau", "a_tau", "R"]);
    for i in 0..=n {
        let tau = if i == n { loan.maturity } else { i as f64 * loan.maturity / n as f64 };
        csv.row(&[tau.into(), loan.debt(tau).into(), rebate.value(tau)?.into()]);
    }
    Ok(Report {
        csv: csv.into_string(),
        status: Status::Ok,
    })
}

pub fn validate(config: &RunConfig) -> std::result::Result<Report, CliError> {
    match config.mode {
        ValidateMode::Values => validate_values(config),
        ValidateMode::Bracket => validate_bracket(config),
    }
}

fn pass_cell(ok: bool) -> Cell {
    Cell::from(if ok { "pass" } else { "fail" })
}

fn summary(csv: &mut Csv, passed: usize, total: usize, tol: f64) -> Status {
    let ok = passed == total;
    csv.comment(&format!(
        "summary: {passed}/{total} within {tol}: {}",
        if ok { "pass" } else { "fail" }
    ));
    if ok {
        Status::Ok
    } else {
        Status::ValidationFailed
    }
}

/// Inception values from the integral equation and the tree, per (E, S).
fn validate_values(config: &RunConfig) -> std::result::Result<Report, CliError> {
    let (market, loan) = config.contract()?;
    config.require("principals", &config.principals)?;
    config.require("spots", &config.spots)?;
    let mut csv = start("validate", config);
    csv.header(&["E", "S", "ie", "bt", "abs_diff", "result"]);
    let (mut passed, mut total) = (0, 0);
    for &e in &config.principals {
        let spec = loan.with_principal(e);
        let pricer = Pricer::solve(config.product, market, spec, &config.grid)?;
        let cells = par::map(&config.spots, |&s| -> Result<(f64, f64)> {
            let (ie, _) = pricer.quote(s, spec.maturity)?;
            let bt = match &pricer {
                Pricer::MarginCall(p) => mc_tree_value(s, &market, &spec, &config.tree, p.rebate())?,
                Pricer::NonRecourse(_) => nr_tree_value(s, &market, &spec, &config.tree)?,
            };
            Ok((ie, bt))
        });
        for (&s, cell) in config.spots.iter().zip(cells) {
            let (ie, bt) = cell?;
            let diff = (ie - bt).abs();
            let ok = diff <= config.tolerance;
            passed += ok as usize;
            total += 1;
            csv.row(&[e.into(), s.into(), ie.into(), bt.into(), diff.into(), pass_cell(ok)]);
        }
    }
    let status = summary(&mut csv, passed, total, config.tolerance);
    Ok(Report {
        csv: csv.into_string(),
        status,
    })
}

/// Distance from `x` to the interval `[lo, hi]`.
fn distance_to(x: f64, lo: f64, hi: f64) -> f64 {
    (lo - x).max(x - hi).max(0.0)
}

/// Non-recourse inception boundary against the tree's exercise bracket, per T.
fn validate_bracket(config: &RunConfig) -> std::result::Result<Report, CliError> {
    let (market, loan) = config.contract()?;
    config.require("maturities", &config.maturities)?;
    let mut csv = start("validate", config);
    csv.header(&["T", "ie", "bt_low", "bt_high", "abs_diff", "result"]);
    let (mut passed, mut total) = (0, 0);
    for &t in &config.maturities {
        let spec = LoanSpec { maturity: t, ..loan }.with_margin_fraction(0.0);
        spec.validate().map_err(CliError::Config)?;
        let ie = NonRecoursePricer::solve(market, spec, &config.grid)?.boundary().inception();
        let (lo, hi) = nr_tree_boundary_bracket(&market, &spec, &config.tree)?;
        let diff = distance_to(ie, lo, hi);
        let ok = diff <= config.tolerance;
        passed += ok as usize;
        total += 1;
        csv.row(&[t.into(), ie.into(), lo.into(), hi.into(), diff.into(), pass_cell(ok)]);
    }
    let status = summary(&mut csv, passed, total, config.tolerance);
    Ok(Report {
        csv: csv.into_string(),
        status,
    })
}

/// Reference values the `tables` command reproduces.
pub mod reference {
    /// Non-recourse inception boundary: (T, value, tree bracket low, high).
    pub const NON_RECOURSE: [(f64, f64, f64, f64); 3] =
        [(1.0, 1.168, 1.163, 1.168), (5.0, 1.529, 1.524, 1.538), (20.0, 1.843, 1.839, 1.872)];

    pub const MARGIN_CALL_PRINCIPALS: [f64; 3] = [80.0, 85.0, 90.0];
    pub const MARGIN_CALL_SPOTS: [f64; 4] = [95.0, 100.0, 105.0, 110.0];
    /// Inception values indexed `[principal][spot]`.
    pub const MARGIN_CALL_IE: [[f64; 4]; 3] = [
        [15.291, 20.062, 25.000, 30.000],
        [10.848, 15.373, 20.106, 25.001],
        [6.738, 10.970, 15.462, 20.159],
    ];
    pub const MARGIN_CALL_BT: [[f64; 4]; 3] = [
        [15.289, 20.062, 25.000, 30.000],
        [10.846, 15.372, 20.105, 25.003],
        [6.735, 10.968, 15.461, 20.158],
    ];

    /// Margin-call boundary: (T, at inception, at expiry).
    pub const MARGIN_CALL_BOUNDARY: [(f64, f64, f64); 3] =
        [(1.0, 1.043, 0.774), (5.0, 1.358, 1.154), (10.0, 1.509, 1.902)];
}

fn table1_contract(maturity: f64, delta: f64) -> (MarketParams, LoanSpec) {
    (
        MarketParams {
            risk_free: 0.06,
            dividend: 0.03,
            volatility: 0.4,
        },
        LoanSpec {
            principal: 0.7,
            loan_rate: 0.1,
            maturity,
            margin_fraction: delta,
        },
    )
}

fn table2_contract(principal: f64) -> (MarketParams, LoanSpec) {
    (
        MarketParams {
            risk_free: 0.1,
            dividend: 0.05,
            volatility: 0.2,
        },
        LoanSpec {
            principal,
            loan_rate: 0.05,
            maturity: 1.0,
            margin_fraction: 0.1,
        },
    )
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}

/// Reproduces the three reference tables with the configured grid and tree.
/// Wall-clock columns are only added with `timings`, since they make the
/// output nondeterministic.
pub fn tables(config: &RunConfig, timings: bool) -> std::result::Result<Report, CliError> {
    let grid = &config.grid;
    let tree = &config.tree;
    let mut csv = start("tables", config);

    csv.comment("table 1: non-recourse optimal exit price at inception");
    let mut cols = vec!["T", "ie", "ref_ie", "bt_low", "bt_high", "ref_bt_low", "ref_bt_high"];
    if timings {
        cols.extend(["ie_seconds", "bt_seconds"]);
    }
    csv.header(&cols);
    for (t, ref_ie, ref_lo, ref_hi) in reference::NON_RECOURSE {
        let (market, spec) = table1_contract(t, 0.0);
        let (pricer, ie_secs) = timed(|| NonRecoursePricer::solve(market, spec, grid));
        let ie = pricer?.boundary().inception();
        let (bracket, bt_secs) = timed(|| nr_tree_boundary_bracket(&market, &spec, tree));
        let (lo, hi) = bracket?;
        let mut row = vec![t.into(), ie.into(), ref_ie.into(), lo.into(), hi.into(), ref_lo.into(), ref_hi.into()];
        if timings {
            row.extend([ie_secs.into(), bt_secs.into()]);
        }
        csv.row(&row);
    }

    csv.comment("table 2: margin-call loan values at inception");
    let mut cols = vec!["E", "S", "ie", "ref_ie", "bt", "ref_bt", "abs_diff"];
    if timings {
        cols.extend(["ie_seconds", "bt_seconds"]);
    }
    csv.header(&cols);
    for (i, e) in reference::MARGIN_CALL_PRINCIPALS.into_iter().enumerate() {
        let (market, spec) = table2_contract(e);
        let (pricer, ie_secs) = timed(|| MarginCallPricer::solve(market, spec, grid));
        let pricer = pricer?;
        for (j, s) in reference::MARGIN_CALL_SPOTS.into_iter().enumerate() {
            let ie = pricer.value(s, spec.maturity)?.value;
            let (bt, bt_secs) = timed(|| mc_tree_value(s, &market, &spec, tree, pricer.rebate()));
            let bt = bt?;
            let mut row = vec![
                e.into(),
                s.into(),
                ie.into(),
                reference::MARGIN_CALL_IE[i][j].into(),
                bt.into(),
                reference::MARGIN_CALL_BT[i][j].into(),
                (ie - bt).abs().into(),
            ];
            if timings {
                row.extend([ie_secs.into(), bt_secs.into()]);
            }
            csv.row(&row);
        }
    }

    csv.comment("table 3: margin-call optimal exit price at inception and expiry (Delta = 0.1)");
    let mut cols = vec!["T", "S_f_T", "ref_S_f_T", "S_f_0", "ref_S_f_0"];
    if timings {
        cols.push("ie_seconds");
    }
    csv.header(&cols);
    for (t, ref_inception, ref_expiry) in reference::MARGIN_CALL_BOUNDARY {
        let (market, spec) = table1_contract(t, 0.1);
        let (pricer, secs) = timed(|| MarginCallPricer::solve(market, spec, grid));
        let b = pricer?.boundary().clone();
        let mut row = vec![
            t.into(),
            b.inception().into(),
            ref_inception.into(),
            b.expiry_value().into(),
            ref_expiry.into(),
        ];
        if timings {
            row.push(secs.into());
        }
        csv.row(&row);
    }
    Ok(Report {
        csv: csv.into_string(),
        status: Status::Ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_to_interval() {
        assert_eq!(distance_to(1.5, 1.0, 2.0), 0.0);
        assert!((distance_to(0.75, 1.0, 2.0) - 0.25).abs() < 1e-15);
        assert!((distance_to(2.5, 1.0, 2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn row_status() {
        assert_eq!(state_of_rows(0, 3), Status::Ok);
        assert_eq!(state_of_rows(2, 3), Status::Ok);
        assert_eq!(state_of_rows(3, 3), Status::AllRowsFailed);
    }
}
