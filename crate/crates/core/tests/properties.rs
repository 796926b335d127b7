use proptest::prelude::*;

use stockloan::cli::output::fmt_sig;
use stockloan::kernels::norm_cdf;
use stockloan::{gauss_laguerre, GridSpec, LoanSpec, MarginCallPricer, MarketParams, NonRecoursePricer};

fn market() -> impl Strategy<Value = MarketParams> {
    (0.01..0.1f64, 0.0..0.06f64, 0.15..0.5f64).prop_map(|(r, d, s)| MarketParams::new(r, d, s).unwrap())
}

fn loan() -> impl Strategy<Value = LoanSpec> {
    (0.4..0.9f64, 0.02..0.12f64, 0.5..3.0f64).prop_map(|(e, eta, t)| LoanSpec::new(e, eta, t, 0.0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn boundary_stays_above_debt(m in market(), l in loan()) {
        let p = NonRecoursePricer::solve(m, l, &GridSpec::with_steps(12)).unwrap();
        let b = p.boundary();
        for (&tau, &sf) in b.taus().iter().zip(b.values()) {
            let a = l.accrued_debt(tau).unwrap();
            prop_assert!(sf >= a * (1.0 - 1e-12), "tau={tau}: {sf} < {a}");
        }
    }

    #[test]
    fn nonrecourse_value_within_bounds(m in market(), l in loan(), x in 0.2..3.0f64, frac in 0.0..1.0f64) {
        let p = NonRecoursePricer::solve(m, l, &GridSpec::with_steps(12)).unwrap();
        let tau = frac * l.maturity;
        let a = l.accrued_debt(tau).unwrap();
        let spot = x * a;
        let v = p.value(spot, tau).unwrap();
        prop_assert!(v >= (spot - a).max(0.0) - 1e-12 * l.principal);
        prop_assert!(v <= spot);
    }

    #[test]
    fn margin_call_value_within_bounds(m in market(), l in loan(), delta in 0.05..0.4f64, x in 1.0001..2.5f64) {
        let l = l.with_margin_fraction(delta);
        let p = MarginCallPricer::solve(m, l, &GridSpec::with_steps(10)).unwrap();
        let tau = 0.5 * l.maturity;
        let a = l.accrued_debt(tau).unwrap();
        let v = p.value(x * a, tau).unwrap().value;
        prop_assert!(v >= (x - 1.0) * a - 1e-12 * l.principal);
        prop_assert!(v <= x * a);
    }

    #[test]
    fn gauss_laguerre_integrates_monomials(m in 4usize..24, j in 0usize..47) {
        prop_assume!(j < 2 * m);
        let rule = gauss_laguerre(m).unwrap();
        let got: f64 = rule.nodes().iter().zip(rule.weights()).map(|(x, w)| w * x.powi(j as i32)).sum();
        let factorial: f64 = (1..=j).map(|k| k as f64).product();
        prop_assert!((got - factorial).abs() <= 1e-10 * factorial, "m={m} j={j}: {got} vs {factorial}");
    }

    #[test]
    fn norm_cdf_is_symmetric(x in -8.0..8.0f64) {
        prop_assert!((norm_cdf(x) + norm_cdf(-x) - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn significant_digits_round_trip(x in -1e8..1e8f64, digits in 1usize..15) {
        prop_assume!(x.abs() > 1e-8);
        let back: f64 = fmt_sig(x, digits).parse().unwrap();
        prop_assert!((back - x).abs() <= 0.5 * 10f64.powi(1 - digits as i32) * x.abs() * (1.0 + 1e-12));
    }
}
