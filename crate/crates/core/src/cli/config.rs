//! JSON run configuration merged with command-line overrides.

use std::path::Path;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::binomial::TreeSpec;
use crate::model::{validate_pair, GridSpec, LoanSpec, MarketParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Product {
    Nonrecourse,
    Margincall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ValidateMode {
    /// Contract values at inception, one cell per (E, S).
    Values,
    /// Non-recourse inception boundary against the tree bracket, one row per T.
    Bracket,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarketFile {
    risk_free: Option<f64>,
    dividend: Option<f64>,
    volatility: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoanFile {
    principal: Option<f64>,
    loan_rate: Option<f64>,
    maturity: Option<f64>,
    margin_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    time_steps: Option<usize>,
    quadrature_order: Option<usize>,
    newton_tol: Option<f64>,
    newton_max_iter: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeFile {
    steps: Option<usize>,
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    market: MarketFile,
    #[serde(default)]
    loan: LoanFile,
    #[serde(default)]
    grid: GridFile,
    #[serde(default)]
    tree: TreeFile,
    product: Option<Product>,
    mode: Option<ValidateMode>,
    spots: Option<Vec<f64>>,
    taus: Option<Vec<f64>>,
    deltas: Option<Vec<f64>>,
    principals: Option<Vec<f64>>,
    maturities: Option<Vec<f64>>,
    s0: Option<f64>,
    tolerance: Option<f64>,
    precision: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Flags shared by every subcommand. Anything given here wins over the file.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    /// JSON configuration file
    #[arg(long, value_name = "FILE")]
    pub config: Option<std::path::PathBuf>,
    /// Write CSV here instead of stdout
    #[arg(long, value_name = "FILE")]
    pub out: Option<std::path::PathBuf>,
    /// Significant digits in numeric output
    #[arg(long)]
    pub precision: Option<usize>,

    /// Risk-free rate r
    #[arg(long = "risk-free")]
    pub risk_free: Option<f64>,
    /// Dividend yield
    #[arg(long)]
    pub dividend: Option<f64>,
    /// Volatility
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Principal E
    #[arg(long)]
    pub principal: Option<f64>,
    /// Loan rate
    #[arg(long = "loan-rate")]
    pub loan_rate: Option<f64>,
    /// Maturity T in years
    #[arg(long)]
    pub maturity: Option<f64>,
    /// Margin-call fraction
    #[arg(long = "delta-frac")]
    pub delta_frac: Option<f64>,

    /// Integral-equation time steps n
    #[arg(long)]
    pub steps: Option<usize>,
    /// Gauss-Laguerre order
    #[arg(long)]
    pub order: Option<usize>,
    /// Newton relative tolerance
    #[arg(long = "newton-tol")]
    pub newton_tol: Option<f64>,
    /// Binomial tree steps N
    #[arg(long = "tree-steps")]
    pub tree_steps: Option<usize>,

    #[arg(long, value_enum)]
    pub product: Option<Product>,
    /// Comma-separated spot prices
    #[arg(long, value_delimiter = ',')]
    pub spots: Option<Vec<f64>>,
    /// Comma-separated times to maturity
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    /// Comma-separated margin fractions to sweep
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
    /// Comma-separated principals to sweep
    #[arg(long, value_delimiter = ',')]
    pub principals: Option<Vec<f64>>,
    /// Comma-separated maturities (validate --mode bracket)
    #[arg(long, value_delimiter = ',')]
    pub maturities: Option<Vec<f64>>,
    /// Inception spot for fees
    #[arg(long)]
    pub s0: Option<f64>,
    /// Pass/fail tolerance for validate
    #[arg(long = "tol")]
    pub tolerance: Option<f64>,
    /// What validate compares
    #[arg(long, value_enum)]
    pub mode: Option<ValidateMode>,
}

/// Fully resolved parameters of one run; echoed in every output header.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub market: Option<MarketParams>,
    pub loan: Option<LoanSpec>,
    pub grid: GridSpec,
    pub tree: TreeSpec,
    pub product: Product,
    pub mode: ValidateMode,
    pub spots: Vec<f64>,
    pub taus: Vec<f64>,
    pub deltas: Vec<f64>,
    pub principals: Vec<f64>,
    pub maturities: Vec<f64>,
    pub s0: Option<f64>,
    pub tolerance: f64,
    pub precision: usize,
}

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

impl RunConfig {
    pub fn resolve(file: FileConfig, o: &Overrides) -> Result<Self, CliError> {
        let defaults = GridSpec::default();
        let grid = GridSpec {
            time_steps: pick(o.steps, file.grid.time_steps).unwrap_or(defaults.time_steps),
            quadrature_order: pick(o.order, file.grid.quadrature_order).unwrap_or(defaults.quadrature_order),
            newton_tol: pick(o.newton_tol, file.grid.newton_tol).unwrap_or(defaults.newton_tol),
            newton_max_iter: file.grid.newton_max_iter.unwrap_or(defaults.newton_max_iter),
        };
        grid.validate().map_err(CliError::Config)?;
        let tree = TreeSpec::new(pick(o.tree_steps, file.tree.steps).unwrap_or(TreeSpec::default().steps));
        if tree.steps == 0 {
            return Err(CliError::Usage("tree steps must be positive".into()));
        }

        let market = match (
            pick(o.risk_free, file.market.risk_free),
            pick(o.dividend, file.market.dividend),
            pick(o.sigma, file.market.volatility),
        ) {
            (Some(r), Some(d), Some(s)) => Some(MarketParams::new(r, d, s).map_err(CliError::Config)?),
            (None, None, None) => None,
            _ => return Err(CliError::Usage("market needs risk_free, dividend and volatility".into())),
        };
        let loan = match (
            pick(o.principal, file.loan.principal),
            pick(o.loan_rate, file.loan.loan_rate),
            pick(o.maturity, file.loan.maturity),
        ) {
            (Some(e), Some(eta), Some(t)) => {
                let delta = pick(o.delta_frac, file.loan.margin_fraction).unwrap_or(0.0);
                Some(LoanSpec::new(e, eta, t, delta).map_err(CliError::Config)?)
            }
            (None, None, None) => None,
            _ => return Err(CliError::Usage("loan needs principal, loan_rate and maturity".into())),
        };
        if let (Some(m), Some(l)) = (&market, &loan) {
            validate_pair(m, l).map_err(CliError::Config)?;
        }

        let maturity = loan.map(|l| l.maturity);
        let or_loan = |list: Option<Vec<f64>>, f: fn(&LoanSpec) -> f64| {
            list.or_else(|| loan.as_ref().map(|l| vec![f(l)])).unwrap_or_default()
        };
        let config = Self {
            market,
            loan,
            grid,
            tree,
            product: pick(o.product, file.product).unwrap_or(Product::Margincall),
            mode: pick(o.mode, file.mode).unwrap_or(ValidateMode::Values),
            spots: pick(o.spots.clone(), file.spots).unwrap_or_default(),
            taus: pick(o.taus.clone(), file.taus).or(maturity.map(|t| vec![t])).unwrap_or_default(),
            deltas: or_loan(pick(o.deltas.clone(), file.deltas), |l| l.margin_fraction),
            principals: or_loan(pick(o.principals.clone(), file.principals), |l| l.principal),
            maturities: or_loan(pick(o.maturities.clone(), file.maturities), |l| l.maturity),
            s0: pick(o.s0, file.s0),
            tolerance: pick(o.tolerance, file.tolerance).unwrap_or(0.01),
            precision: pick(o.precision, file.precision).unwrap_or(6),
        };
        if !(1..=17).contains(&config.precision) {
            return Err(CliError::Usage("precision must be between 1 and 17".into()));
        }
        if !(config.tolerance >= 0.0) {
            return Err(CliError::Usage("tolerance must be nonnegative".into()));
        }
        Ok(config)
    }

    /// Market and loan, which every command except `tables` needs.
    pub fn contract(&self) -> Result<(MarketParams, LoanSpec), CliError> {
        match (self.market, self.loan) {
            (Some(m), Some(l)) => Ok((m, l)),
            _ => Err(CliError::Usage(
                "market (risk_free, dividend, volatility) and loan (principal, loan_rate, maturity) are required".into(),
            )),
        }
    }

    pub fn require(&self, name: &str, list: &[f64]) -> Result<(), CliError> {
        if list.is_empty() {
            return Err(CliError::Usage(format!("{name} must not be empty")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(json: &str) -> FileConfig {
        serde_json::from_str(json).unwrap()
    }

    const BASE: &str = r#"{
        "market": {"risk_free": 0.1, "dividend": 0.05, "volatility": 0.2},
        "loan": {"principal": 80, "loan_rate": 0.05, "maturity": 1, "margin_fraction": 0.1},
        "spots": [95, 100]
    }"#;

    #[test]
    fn flags_win_over_file() {
        let o = Overrides {
            sigma: Some(0.3),
            delta_frac: Some(0.2),
            steps: Some(20),
            ..Default::default()
        };
        let c = RunConfig::resolve(file(BASE), &o).unwrap();
        assert_eq!(c.market.unwrap().volatility, 0.3);
        assert_eq!(c.loan.unwrap().margin_fraction, 0.2);
        assert_eq!(c.grid.time_steps, 20);
        assert_eq!(c.spots, vec![95.0, 100.0]);
        assert_eq!(c.taus, vec![1.0]);
        assert_eq!(c.deltas, vec![0.2]);
        assert_eq!(c.principals, vec![80.0]);
    }

    #[test]
    fn defaults_without_contract() {
        let c = RunConfig::resolve(FileConfig::default(), &Overrides::default()).unwrap();
        assert!(c.contract().is_err());
        assert_eq!(c.precision, 6);
        assert_eq!(c.tree.steps, 10_000);
        assert_eq!(c.grid, GridSpec::default());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(serde_json::from_str::<FileConfig>(r#"{"market": {"vol": 0.2}}"#).is_err());
        let partial = file(r#"{"market": {"risk_free": 0.1}}"#);
        assert!(matches!(RunConfig::resolve(partial, &Overrides::default()), Err(CliError::Usage(_))));
        let o = Overrides {
            sigma: Some(-0.2),
            ..Default::default()
        };
        assert!(matches!(RunConfig::resolve(file(BASE), &o), Err(CliError::Config(_))));
        let o = Overrides {
            precision: Some(0),
            ..Default::default()
        };
        assert!(RunConfig::resolve(file(BASE), &o).is_err());
    }
}
