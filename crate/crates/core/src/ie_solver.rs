//! Recursive solver for the exit-boundary integral equation.
//!
//! The boundary lives on a uniform grid `tau_i = i h`, `h = T / n`. Node 0 is
//! fixed analytically at `S_f(0+)`; node `j` is the root of a residual
//! `F(s, tau_j)` that integrates over the already solved nodes `0..j` plus the
//! unknown `s` at `u = tau_j`.

use crate::error::{Error, Result};
use crate::kernels::legendre16;
use crate::model::GridSpec;

/// Relative offset above the debt curve used as the lower bracket.
pub const DEBT_OFFSET: f64 = 1e-8;

/// Nodes within this fraction of a step of a grid point are treated as on it.
const GRID_SNAP: f64 = 1e-9;

/// Sub-steps used inside the first panel `[0, h]`.
///
/// The boundary leaves its expiry value like `sqrt(tau)`, so a single panel
/// there carries most of the discretisation error. The extra nodes are solved
/// like the others and only enter the integrals; outputs stay on the uniform
/// grid.
pub const EXPIRY_SUBSTEPS: usize = 8;

/// A boundary sampled at `tau = 0` and then on a grid of step `h`, with the
/// first panel optionally split into `head` equal sub-steps.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryView<'a> {
    step: f64,
    head: usize,
    values: &'a [f64],
}

impl<'a> BoundaryView<'a> {
    /// Uniform nodes `tau_i = i step`.
    pub fn new(step: f64, values: &'a [f64]) -> Self {
        Self::refined(step, 1, values)
    }

    /// Nodes `i step / head` for `i <= head`, then `(i - head + 1) step`.
    pub fn refined(step: f64, head: usize, values: &'a [f64]) -> Self {
        debug_assert!(!values.is_empty() && head >= 1);
        Self { step, head, values }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }

    /// Time of node `i`.
    pub fn node(&self, i: usize) -> f64 {
        if i <= self.head {
            i as f64 * self.step / self.head as f64
        } else {
            (i - self.head + 1) as f64 * self.step
        }
    }

    /// Largest time-to-maturity covered.
    pub fn span(&self) -> f64 {
        self.node(self.values.len() - 1)
    }

    pub(crate) fn check_covers(&self, y: f64) -> Result<()> {
        if y < 0.0 || y > self.span() * (1.0 + GRID_SNAP) + GRID_SNAP * self.step {
            return Err(Error::domain("y", y, format!("[0, {}]", self.span())));
        }
        Ok(())
    }

    /// Fractional node position of `u`, clamped at 0.
    fn position(&self, u: f64) -> f64 {
        let pos = (u / self.step).max(0.0);
        if pos <= 1.0 {
            pos * self.head as f64
        } else {
            pos + self.head as f64 - 1.0
        }
    }

    /// Index of the last node strictly before `y` (a node within
    /// `GRID_SNAP` of `y` counts as `y` itself).
    fn node_before(&self, y: f64) -> usize {
        let last = self.values.len() - 1;
        let pos = self.position(y);
        let nearest = pos.round();
        if (pos - nearest).abs() <= GRID_SNAP {
            (nearest as usize).min(last).saturating_sub(1)
        } else {
            (pos.floor() as usize).min(last)
        }
    }

    /// Boundary at `u`, clamped to the nodes. Log-linear between nodes except
    /// on the first panel, where the boundary leaves its expiry value like
    /// `sqrt(u)` and is interpolated in the square root of the panel fraction.
    pub fn at(&self, u: f64) -> f64 {
        let n = self.values.len();
        if n == 1 {
            return self.values[0];
        }
        let pos = self.position(u);
        let i = (pos.floor() as usize).min(n - 2);
        let t = (pos - i as f64).min(1.0);
        if t == 0.0 {
            return self.values[i];
        }
        let (lo, hi) = (self.values[i], self.values[i + 1]);
        if i == 0 {
            return lo + (hi - lo) * t.sqrt();
        }
        ((1.0 - t) * lo.ln() + t * hi.ln()).exp()
    }

    /// `∫_0^y f(u, S_f(u)) du` on panels anchored at `y`.
    ///
    /// The final panel `[y - h, y]` uses Gauss-Legendre in `t = sqrt(y - u)`.
    /// Kernels like `N(ln(x/w) / (sigma sqrt(y - u)))` switch over a layer of
    /// width `(ln(x/w) / sigma)^2` next to `u = y`; for `x` close to the
    /// boundary that layer is much thinner than a step, and in `t` it is
    /// resolved. Below `y - h` the trapezoid rule runs on points `y - h - i h`
    /// until it reaches `[h, 2h)`, and the stored nodes (with the refined
    /// first panel) cover the rest. On grid nodes every point is a node; off
    /// the grid the boundary is interpolated, and the result moves
    /// continuously with `y`.
    pub fn integrate<F>(&self, y: f64, mut f: F) -> f64
    where
        F: FnMut(f64, f64) -> f64,
    {
        if y <= 0.0 {
            return 0.0;
        }
        let h = self.step;
        let top = (y - h).max(0.0);
        let mut sum = self.sqrt_panel(top, y, &mut f);
        if top <= GRID_SNAP * h {
            return sum;
        }
        let mut right = top;
        let mut f_right = f(right, self.at(right));
        while right - h >= h * (1.0 - GRID_SNAP) {
            let left = right - h;
            let f_left = f(left, self.at(left));
            sum += 0.5 * h * (f_left + f_right);
            right = left;
            f_right = f_left;
        }
        let k = self.node_before(right);
        let (nodes, f_k) = self.trapezoid_nodes(k, &mut f);
        sum + nodes + 0.5 * (right - self.node(k)) * (f_k + f_right)
    }

    /// Gauss-Legendre for `∫_lo^y f du` in `t = sqrt(y - u)`, `du = 2t dt`.
    fn sqrt_panel<F>(&self, lo: f64, y: f64, f: &mut F) -> f64
    where
        F: FnMut(f64, f64) -> f64,
    {
        let half = 0.5 * (y - lo).max(0.0).sqrt();
        let rule = legendre16();
        let mut sum = 0.0;
        for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
            let t = half * (x + 1.0);
            let u = y - t * t;
            sum += w * half * 2.0 * t * f(u, self.at(u));
        }
        sum
    }

    /// Trapezoid rule for `∫_0^y f(u, S_f(u)) du` over the nodes up to `y`.
    ///
    /// When `y` falls between nodes the last panel is partial and its right
    /// end uses the interpolated boundary. The right end is always evaluated
    /// at exactly `u = y`.
    pub fn trapezoid<F>(&self, y: f64, mut f: F) -> f64
    where
        F: FnMut(f64, f64) -> f64,
    {
        if y <= 0.0 {
            return 0.0;
        }
        let last = self.values.len() - 1;
        let pos = self.position(y);
        let nearest = pos.round();
        if (pos - nearest).abs() <= GRID_SNAP && nearest as usize <= last {
            let j = nearest as usize;
            if j == 0 {
                return 0.0;
            }
            // right end at exactly y
            let mut g = |u: f64, w: f64| f(if u == self.node(j) { y } else { u }, w);
            return self.trapezoid_nodes(j, &mut g).0;
        }
        let k = (pos.floor() as usize).min(last);
        let left = self.node(k);
        let (sum, f_left) = self.trapezoid_nodes(k, &mut f);
        sum + 0.5 * (y - left) * (f_left + f(y, self.at(y)))
    }

    /// Trapezoid sum over the panels between nodes `0..=k`, and `f` at node `k`.
    fn trapezoid_nodes<F>(&self, k: usize, f: &mut F) -> (f64, f64)
    where
        F: FnMut(f64, f64) -> f64,
    {
        let mut sum = 0.0;
        let mut prev_u = 0.0;
        let mut prev = f(0.0, self.values[0]);
        for i in 1..=k {
            let u = self.node(i);
            let cur = f(u, self.values[i]);
            sum += 0.5 * (u - prev_u) * (prev + cur);
            prev_u = u;
            prev = cur;
        }
        (sum, prev)
    }
}

/// Solved exit boundary on `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCurve {
    taus: Vec<f64>,
    values: Vec<f64>,
    expiry_value: f64,
    residuals: Vec<f64>,
    iterations: Vec<usize>,
    /// Every solved node, including the sub-steps of the first panel.
    nodes: Vec<f64>,
    head: usize,
}

impl BoundaryCurve {
    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    /// `values[0]` is `S_f(0+)`; `values[n]` is the boundary at inception.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Residual of the integral equation at each node (zero at node 0).
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// Newton updates spent on each node.
    pub fn iterations(&self) -> &[usize] {
        &self.iterations
    }

    pub fn mean_iterations(&self) -> f64 {
        let solved = &self.iterations[1..];
        solved.iter().sum::<usize>() as f64 / solved.len() as f64
    }

    pub fn step(&self) -> f64 {
        self.taus[1]
    }

    pub fn maturity(&self) -> f64 {
        *self.taus.last().unwrap()
    }

    /// Boundary at inception, `S_f(T)`.
    pub fn inception(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Boundary at expiry, `S_f(0) = a(0)`.
    pub fn expiry_value(&self) -> f64 {
        self.expiry_value
    }

    /// `S_f(0+)` when it lies strictly above `S_f(0)`.
    pub fn terminal_jump(&self) -> Option<f64> {
        (self.values[0] > self.expiry_value).then_some(self.values[0])
    }

    /// Boundary at any `tau` in `[0, T]` (log-linear between nodes).
    pub fn at(&self, tau: f64) -> f64 {
        self.view().at(tau)
    }

    pub fn view(&self) -> BoundaryView<'_> {
        BoundaryView::refined(self.step(), self.head, &self.nodes)
    }

    /// The curve up to and including grid node `j`, as seen by the solver
    /// when it placed that node.
    pub fn view_through(&self, j: usize) -> BoundaryView<'_> {
        let last = if j == 0 { 0 } else { self.head + j - 1 };
        BoundaryView::refined(self.step(), self.head, &self.nodes[..=last])
    }
}

/// A boundary integral equation in residual form.
pub trait ResidualProblem: Sync {
    fn maturity(&self) -> f64;

    /// `S_f(0+)`, the value of node 0.
    fn initial_value(&self) -> f64;

    /// `S_f(0)`, the boundary exactly at expiry.
    fn expiry_value(&self) -> f64 {
        self.lower_bound(0.0)
    }

    /// The boundary can not go below this price at `tau` (the accrued debt).
    fn lower_bound(&self, tau: f64) -> f64;

    /// Money scale for the residual tolerance (the principal).
    fn scale(&self) -> f64;

    /// `F(s, tau)`; `boundary` holds the solved nodes followed by `s` as its
    /// last value, and `tau` is the time of that last node.
    fn residual(&self, s: f64, tau: f64, boundary: &BoundaryView<'_>) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Relative tolerance on both the step and the residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Residual scale: convergence needs `|f| <= tol * scale`.
    pub scale: f64,
    /// Iterates are kept strictly above this value by damping.
    pub lower: Option<f64>,
}

impl NewtonOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            scale: 1.0,
            lower: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOutcome {
    pub root: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Newton-Raphson with a central finite-difference derivative
/// (step `max(1e-6 |x|, 1e-9)`).
///
/// Stops once `|f(x)| <= tol * scale` and the next predicted step is below
/// `tol * |x|`.
pub fn newton_solve<F>(mut f: F, x0: f64, opts: &NewtonOptions) -> Result<NewtonOutcome>
where
    F: FnMut(f64) -> f64,
{
    let mut x = x0;
    let mut fx = f(x);
    let mut last_slope: Option<f64> = None;
    for it in 0..=opts.max_iter {
        if !fx.is_finite() {
            break;
        }
        if fx.abs() <= opts.tol * opts.scale {
            let settled = match last_slope {
                Some(df) => (fx / df).abs() <= opts.tol * x.abs(),
                None => true,
            };
            if settled || fx == 0.0 {
                return Ok(NewtonOutcome {
                    root: x,
                    iterations: it,
                    residual: fx,
                });
            }
        }
        if it == opts.max_iter {
            break;
        }
        let h = (1e-6 * x.abs()).max(1e-9);
        let df = (f(x + h) - f(x - h)) / (2.0 * h);
        if !(df.abs() >= 1e-14) {
            return Err(Error::SingularDerivative { at: x, derivative: df });
        }
        let mut next = x - fx / df;
        if let Some(lo) = opts.lower {
            if next <= lo {
                next = 0.5 * (x + lo);
            }
        }
        last_slope = Some(df);
        x = next;
        fx = f(x);
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        last: x,
        residual: fx,
    })
}

/// Bisection on `[lo, hi]` with `f(lo) < 0 < f(hi)`.
fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64, scale: f64) -> Result<NewtonOutcome>
where
    F: FnMut(f64) -> f64,
{
    let f_hi = f(hi);
    if !(f_hi > 0.0) {
        return Err(Error::NoConvergence {
            iterations: 0,
            last: hi,
            residual: f_hi,
        });
    }
    let mut iterations = 0;
    let mut mid = 0.5 * (lo + hi);
    let mut f_mid = f(mid);
    while iterations < 200 {
        iterations += 1;
        if f_mid.abs() <= tol * scale && (hi - lo) <= tol * mid.abs() {
            break;
        }
        if f_mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
        mid = 0.5 * (lo + hi);
        f_mid = f(mid);
    }
    Ok(NewtonOutcome {
        root: mid,
        iterations,
        residual: f_mid,
    })
}

/// Marches the boundary from `tau = 0` to `tau = T`.
pub fn solve_boundary<P: ResidualProblem + ?Sized>(problem: &P, grid: &GridSpec) -> Result<BoundaryCurve> {
    grid.validate()?;
    let n = grid.time_steps;
    let maturity = problem.maturity();
    let h = maturity / n as f64;
    let head = EXPIRY_SUBSTEPS;
    let total = head + n;
    let layout = BoundaryView::refined(h, head, &[0.0]);
    let mut node_taus: Vec<f64> = (0..total).map(|i| layout.node(i)).collect();
    node_taus[total - 1] = maturity;

    let mut nodes = vec![0.0; total];
    let mut residuals = vec![0.0; total];
    let mut iterations = vec![0; total];
    nodes[0] = problem.initial_value();
    let scale = problem.scale();

    let mut scratch = nodes.clone();
    for j in 1..total {
        let tau = node_taus[j];
        let lo = problem.lower_bound(tau) * (1.0 + DEBT_OFFSET);
        scratch[..j].copy_from_slice(&nodes[..j]);
        let mut residual = |s: f64| {
            scratch[j] = s;
            problem.residual(s, tau, &BoundaryView::refined(h, head, &scratch[..=j]))
        };

        let at_floor = residual(lo);
        let outcome = if at_floor >= 0.0 {
            // no crossing above the debt curve: the boundary touches it
            NewtonOutcome {
                root: lo,
                iterations: 0,
                residual: at_floor,
            }
        } else {
            let prev = nodes[j - 1];
            let x0 = prev.max(lo * (1.0 + 1e-4));
            let opts = NewtonOptions {
                tol: grid.newton_tol,
                max_iter: grid.newton_max_iter,
                scale,
                lower: Some(lo),
            };
            match newton_solve(&mut residual, x0, &opts) {
                Ok(out) => out,
                Err(newton_err) => bisect(&mut residual, lo, 5.0 * prev.max(lo), grid.newton_tol, scale)
                    .map_err(|_| newton_err)
                    .map_err(|e| Error::Step {
                        step: j.saturating_sub(head - 1),
                        tau,
                        source: Box::new(e),
                    })?,
            }
        };
        nodes[j] = outcome.root;
        residuals[j] = outcome.residual;
        iterations[j] = outcome.iterations;
    }

    // grid node j > 0 is node head + j - 1
    let pick = |j: usize| if j == 0 { 0 } else { head + j - 1 };
    let mut taus: Vec<f64> = (0..=n).map(|j| j as f64 * h).collect();
    taus[n] = maturity;
    Ok(BoundaryCurve {
        taus,
        values: (0..=n).map(|j| nodes[pick(j)]).collect(),
        expiry_value: problem.expiry_value(),
        residuals: (0..=n).map(|j| residuals[pick(j)]).collect(),
        iterations: (0..=n).map(|j| iterations[pick(j)]).collect(),
        nodes,
        head,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_finds_known_root() {
        let out = newton_solve(|x| x * x - 4.0, 3.0, &NewtonOptions::new(1e-12, 50)).unwrap();
        assert!((out.root - 2.0).abs() < 1e-10);
    }

    #[test]
    fn newton_affine_converges_immediately() {
        // one step lands on the root, the next evaluation confirms it
        let out = newton_solve(|x| x - 1.7, 10.0, &NewtonOptions::new(1e-10, 50)).unwrap();
        assert!(out.iterations <= 2);
        assert!((out.root - 1.7).abs() < 1e-12);
    }

    #[test]
    fn newton_reports_failures() {
        let err = newton_solve(|x| x * x + 1.0, 3.0, &NewtonOptions::new(1e-12, 20)).unwrap_err();
        assert!(matches!(
            err,
            Error::NoConvergence { .. } | Error::SingularDerivative { .. }
        ));
        let err = newton_solve(|_| 1.0, 3.0, &NewtonOptions::new(1e-12, 20)).unwrap_err();
        assert!(matches!(err, Error::SingularDerivative { .. }));
    }

    #[test]
    fn newton_respects_lower_bound() {
        // from x0 = 3 the raw step on 1/x - 1 lands at -3 and never recovers
        let raw = newton_solve(|x| 1.0 / x - 1.0, 3.0, &NewtonOptions::new(1e-12, 100));
        assert!(raw.is_err());
        let opts = NewtonOptions {
            lower: Some(0.1),
            ..NewtonOptions::new(1e-12, 100)
        };
        let out = newton_solve(|x| 1.0 / x - 1.0, 3.0, &opts).unwrap();
        assert!((out.root - 1.0).abs() < 1e-10);
    }

    #[test]
    fn trapezoid_on_and_off_grid() {
        let values = vec![1.0; 11];
        let view = BoundaryView::new(0.1, &values);
        // ∫_0^y u du
        let on = view.trapezoid(1.0, |u, _| u);
        assert!((on - 0.5).abs() < 1e-14);
        let off = view.trapezoid(0.55, |u, _| u);
        assert!((off - 0.5 * 0.55 * 0.55).abs() < 1e-14);
        let tiny = view.trapezoid(0.05, |u, _| u);
        assert!((tiny - 0.5 * 0.05 * 0.05).abs() < 1e-15);
        assert_eq!(view.trapezoid(0.0, |u, _| u), 0.0);
        // the right end is evaluated at exactly y
        let mut last = 0.0;
        view.trapezoid(0.3, |u, _| {
            last = u;
            0.0
        });
        assert_eq!(last, 0.3);
    }

    #[test]
    fn interpolation() {
        let values = vec![1.0, 4.0, 16.0];
        let view = BoundaryView::new(1.0, &values);
        // square-root profile on the first panel, log-linear after
        assert!((view.at(0.25) - 2.5).abs() < 1e-14);
        assert!((view.at(1.5) - 8.0).abs() < 1e-13);
        assert_eq!(view.at(0.0), 1.0);
        assert_eq!(view.at(1.0), 4.0);
        assert!((view.at(3.0) - 16.0).abs() < 1e-13);
    }

    struct DebtCurve;

    impl ResidualProblem for DebtCurve {
        fn maturity(&self) -> f64 {
            2.0
        }
        fn initial_value(&self) -> f64 {
            self.lower_bound(0.0)
        }
        fn lower_bound(&self, tau: f64) -> f64 {
            (0.05 * (2.0 - tau)).exp()
        }
        fn scale(&self) -> f64 {
            1.0
        }
        fn residual(&self, s: f64, tau: f64, _: &BoundaryView<'_>) -> f64 {
            s - self.lower_bound(tau)
        }
    }

    #[test]
    fn degenerate_residual_tracks_the_debt() {
        let curve = solve_boundary(&DebtCurve, &GridSpec::with_steps(20)).unwrap();
        for (t, v) in curve.taus().iter().zip(curve.values()) {
            let a = DebtCurve.lower_bound(*t);
            assert!((v - a).abs() <= 2e-8 * a);
        }
        assert_eq!(curve.terminal_jump(), None);
    }

    struct Shifted;

    impl ResidualProblem for Shifted {
        fn maturity(&self) -> f64 {
            1.0
        }
        fn initial_value(&self) -> f64 {
            1.5
        }
        fn lower_bound(&self, _: f64) -> f64 {
            1.0
        }
        fn scale(&self) -> f64 {
            1.0
        }
        // root at 1.5 + tau, uses the solved nodes through their mean
        fn residual(&self, s: f64, tau: f64, b: &BoundaryView<'_>) -> f64 {
            let prior: f64 = b.values()[..b.values().len() - 1].iter().sum();
            (s - 1.5 - tau) * (1.0 + 0.01 * prior)
        }
    }

    #[test]
    fn march_solves_each_node() {
        let curve = solve_boundary(&Shifted, &GridSpec::with_steps(10)).unwrap();
        for (t, v) in curve.taus().iter().zip(curve.values()) {
            assert!((v - 1.5 - t).abs() < 1e-9);
        }
        assert_eq!(curve.terminal_jump(), Some(1.5));
        assert!(curve.mean_iterations() <= 2.0);
        assert_eq!(curve.maturity(), 1.0);
    }
}
