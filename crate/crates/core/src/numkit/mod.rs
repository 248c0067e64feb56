//! Numerical primitives: the budget-constrained maximizer, the expenditure
//! minimizer, scalar root finding, finite differences and brute-force
//! lattice oracles.
//!
//! Both optimizers search over expenditure shares `w` on the unit simplex.
//! The primal problem uses `q_i = M w_i / P_i`, which puts every candidate
//! on the budget line. The dual problem uses rays `q = lambda * w / P`, with
//! `lambda(w)` solving `U(q) = u`, so the cost of a direction is
//! `P.q = lambda`. With two goods the refined optimum is polished by a
//! Brent root of the tangency condition `U_1/P_1 = U_2/P_2`.

pub(crate) mod lattice;
mod nelder_mead;
mod root;

pub use lattice::{default_divisions, minimize_on_simplex, project_shares, simplex_lattice, SimplexMin};
pub use nelder_mead::{nelder_mead, NelderMeadOptions, NelderMeadResult};
pub use root::{brent_root, brent_solve, RootOptions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Bundle, UtilityExpr};

/// Money prices and income.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceIncome {
    prices: Vec<f64>,
    income: f64,
}

impl PriceIncome {
    pub fn new(prices: Vec<f64>, income: f64) -> Result<Self> {
        check_prices(&prices)?;
        if !(income.is_finite() && income > 0.0) {
            return Err(Error::Invalid(format!("income must be positive, got {income}")));
        }
        Ok(Self { prices, income })
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn income(&self) -> f64 {
        self.income
    }

    pub fn normalized(&self) -> NormalizedPrices {
        NormalizedPrices(self.prices.iter().map(|p| p / self.income).collect())
    }

    /// `(tP, tM)`.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        Self::new(self.prices.iter().map(|p| p * t).collect(), self.income * t)
    }
}

pub(crate) fn check_prices(prices: &[f64]) -> Result<()> {
    if prices.is_empty() {
        return Err(Error::Invalid("empty price vector".into()));
    }
    if let Some(p) = prices.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::Invalid(format!("prices must be positive, got {p}")));
    }
    Ok(())
}

/// Prices divided by income (`p = P / M`); normalized income is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPrices(Vec<f64>);

impl NormalizedPrices {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        check_prices(&p)?;
        Ok(Self(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub argmin_or_argmax: Vec<f64>,
    pub objective_value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub active_constraint_residual: f64,
}

impl SolveResult {
    pub fn bundle(&self) -> Bundle {
        Bundle::new(self.argmin_or_argmax.clone()).expect("solver bundles are nonnegative")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Lattice divisions for the primal seed scan with two goods; scaled
    /// down for more goods.
    pub budget_divisions: usize,
    /// Lattice divisions for the dual seed scan with two goods.
    pub expenditure_divisions: usize,
    pub nelder_mead: NelderMeadOptions,
    /// Lattice values within this relative margin count as ties.
    pub tie_tol: f64,
    /// Relative feasibility tolerance on the active constraint.
    pub feas_tol: f64,
    /// Polish two-good optima with a root of the tangency condition.
    pub polish: bool,
    /// Upper limit for the expenditure search box.
    pub q_max_limit: f64,
    /// Attainability margin for the expenditure search box.
    pub box_margin: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            budget_divisions: 1000,
            expenditure_divisions: 200,
            nelder_mead: NelderMeadOptions::default(),
            tie_tol: 1e-9,
            feas_tol: 1e-8,
            polish: true,
            q_max_limit: 1e6,
            box_margin: 1e-3,
        }
    }
}

fn check_dims(u: &UtilityExpr, prices: &[f64]) -> Result<()> {
    if prices.len() != u.n_goods() {
        return Err(Error::Invalid(format!(
            "{} prices given for {} goods",
            prices.len(),
            u.n_goods()
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Tangency gap `U_1/P_1 - U_2/P_2` at `q`.
fn tangency(u: &UtilityExpr, prices: &[f64], q: &[f64]) -> Result<f64> {
    let g = u.gradient(q)?;
    Ok(g[0] / prices[0] - g[1] / prices[1])
}

/// Finds a bracket `[lo, hi]` around `w` inside `(0, 1)` on which the
/// tangency gap goes from positive to negative, then solves for its root.
fn polish_share<F>(gap: F, w: f64) -> Option<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut delta = 1e-7;
    while delta <= 0.5 {
        let lo = (w - delta).max(1e-12);
        let hi = (w + delta).min(1.0 - 1e-12);
        if lo < hi {
            if let (Ok(glo), Ok(ghi)) = (gap(lo), gap(hi)) {
                if glo > 0.0 && ghi < 0.0 {
                    let opts = RootOptions {
                        xtol: 1e-16,
                        ..RootOptions::default()
                    };
                    return brent_solve(&gap, lo, hi, opts).ok();
                }
                if glo < 0.0 && ghi > 0.0 {
                    // local minimum of the objective: not ours to polish
                    return None;
                }
            }
        }
        delta *= 4.0;
    }
    None
}

/// Maximizes `U` over the budget set `{q >= 0, P.q <= M}`.
pub fn maximize_on_budget(
    u: &UtilityExpr,
    pi: &PriceIncome,
    settings: &SolverSettings,
) -> Result<SolveResult> {
    let prices = pi.prices();
    check_dims(u, prices)?;
    let n = u.n_goods();
    let m = pi.income();
    let bundle = |w: &[f64]| -> Vec<f64> { w.iter().zip(prices).map(|(w, p)| m * w / p).collect() };
    let neg_u = |w: &[f64]| match u.eval(&bundle(w)) {
        Ok(v) => -v,
        Err(_) => f64::INFINITY,
    };

    let divisions = default_divisions(n, settings.budget_divisions);
    let mut best = minimize_on_simplex(neg_u, n, divisions, settings.tie_tol, settings.nelder_mead);
    if !best.value.is_finite() {
        return Err(Error::Convergence(
            "utility is undefined everywhere on the budget line".into(),
        ));
    }

    if settings.polish && n == 2 {
        let gap = |w1: f64| tangency(u, prices, &bundle(&[w1, 1.0 - w1]));
        if let Some(w1) = polish_share(gap, best.w[0]) {
            let w = [w1, 1.0 - w1];
            let v = neg_u(&w);
            if v <= best.value + 1e-12 * best.value.abs().max(1.0) {
                best.w = w.to_vec();
                best.value = v;
                best.converged = true;
            }
        }
    }

    let q = bundle(&best.w);
    let residual = (dot(prices, &q) - m).abs() / m;
    Ok(SolveResult {
        objective_value: -best.value,
        converged: best.converged && residual <= settings.feas_tol,
        iterations: best.iterations,
        active_constraint_residual: residual,
        argmin_or_argmax: q,
    })
}

/// Solves `U(lambda * d) = target` for `lambda > 0` along direction `d`,
/// where `lambda_hi` is an initial upper guess. `None` when the ray never
/// attains the target.
pub(crate) fn ray_scale(u: &UtilityExpr, d: &[f64], target: f64, lambda_hi: f64) -> Option<f64> {
    let g = |lam: f64| -> Result<f64> {
        let q: Vec<f64> = d.iter().map(|x| lam * x).collect();
        Ok(u.eval(&q)? - target)
    };
    let mut hi = lambda_hi;
    let mut ghi = g(hi).ok()?;
    let mut grow = 0;
    while ghi < 0.0 {
        grow += 1;
        if grow > 40 {
            return None;
        }
        hi *= 2.0;
        ghi = g(hi).ok()?;
    }
    if ghi == 0.0 {
        return Some(hi);
    }
    let mut lo = hi;
    let mut found = false;
    for _ in 0..1100 {
        lo *= 0.5;
        if lo == 0.0 {
            break;
        }
        match g(lo) {
            Ok(v) if v < 0.0 => {
                found = true;
                break;
            }
            Ok(v) if v == 0.0 => return Some(lo),
            _ => {}
        }
    }
    if !found {
        return None;
    }
    let opts = RootOptions {
        xtol: 0.0,
        rtol: 2.0 * f64::EPSILON,
        ..RootOptions::default()
    };
    brent_solve(g, lo, hi, opts).ok()
}

/// Minimizes `P.q` over `{q >= 0, U(q) >= u_target}`.
pub fn minimize_expenditure(
    u: &UtilityExpr,
    prices: &[f64],
    u_target: f64,
    settings: &SolverSettings,
) -> Result<SolveResult> {
    check_prices(prices)?;
    check_dims(u, prices)?;
    let n = u.n_goods();
    if !u_target.is_finite() {
        return Err(Error::Invalid(format!("utility target must be finite, got {u_target}")));
    }

    if let Ok(u0) = u.eval(&vec![0.0; n]) {
        if u0 >= u_target {
            return Ok(SolveResult {
                argmin_or_argmax: vec![0.0; n],
                objective_value: 0.0,
                converged: true,
                iterations: 0,
                active_constraint_residual: 0.0,
            });
        }
    }

    // search box: smallest power of two Q with U(Q * 1) above the target
    let goal = u_target + settings.box_margin * u_target.abs().max(1.0);
    let mut q_max = 1.0;
    loop {
        if matches!(u.eval(&vec![q_max; n]), Ok(v) if v >= goal) {
            break;
        }
        q_max *= 2.0;
        if q_max > settings.q_max_limit {
            return Err(Error::Infeasible(format!(
                "utility {u_target} is not attainable with quantities up to {}",
                settings.q_max_limit
            )));
        }
    }
    let p_max = prices.iter().cloned().fold(0.0, f64::max);
    let lambda_hi = q_max * n as f64 * p_max;

    let direction = |w: &[f64]| -> Vec<f64> { w.iter().zip(prices).map(|(w, p)| w / p).collect() };
    let cost = |w: &[f64]| ray_scale(u, &direction(w), u_target, lambda_hi).unwrap_or(f64::INFINITY);

    let divisions = default_divisions(n, settings.expenditure_divisions);
    let mut best = minimize_on_simplex(cost, n, divisions, settings.tie_tol, settings.nelder_mead);
    if !best.value.is_finite() {
        return Err(Error::Infeasible(format!(
            "no direction attains utility {u_target}"
        )));
    }

    if settings.polish && n == 2 {
        let point = |w1: f64| -> Result<Vec<f64>> {
            let d = direction(&[w1, 1.0 - w1]);
            let lam = ray_scale(u, &d, u_target, lambda_hi)
                .ok_or_else(|| Error::domain("ray does not attain target"))?;
            Ok(d.iter().map(|x| lam * x).collect())
        };
        let gap = |w1: f64| tangency(u, prices, &point(w1)?);
        if let Some(w1) = polish_share(gap, best.w[0]) {
            let w = [w1, 1.0 - w1];
            let v = cost(&w);
            if v <= best.value * (1.0 + 1e-12) {
                best.w = w.to_vec();
                best.value = v;
                best.converged = true;
            }
        }
    }

    let lam = best.value;
    let q: Vec<f64> = direction(&best.w).iter().map(|x| lam * x).collect();
    let attained = u.eval(&q)?;
    let residual = (attained - u_target).abs() / u_target.abs().max(1.0);
    Ok(SolveResult {
        objective_value: dot(prices, &q),
        converged: best.converged && residual <= settings.feas_tol,
        iterations: best.iterations,
        active_constraint_residual: residual,
        argmin_or_argmax: q,
    })
}

/// Exhaustive search over a uniform lattice on the budget face `P.q = M`.
/// `points_per_dim` lattice points per share axis; at most three goods.
pub fn grid_oracle_budget(u: &UtilityExpr, pi: &PriceIncome, points_per_dim: usize) -> Result<SolveResult> {
    let prices = pi.prices();
    check_dims(u, prices)?;
    let n = u.n_goods();
    if n > 3 {
        return Err(Error::Invalid("the lattice oracle supports at most three goods".into()));
    }
    if points_per_dim < 2 {
        return Err(Error::Invalid("need at least two lattice points per axis".into()));
    }
    let m = pi.income();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut count = 0;
    for w in simplex_lattice(n, points_per_dim - 1) {
        count += 1;
        let q: Vec<f64> = w.iter().zip(prices).map(|(w, p)| m * w / p).collect();
        let Ok(v) = u.eval(&q) else { continue };
        match &best {
            Some((_, b)) if v <= *b + 1e-9 * b.abs().max(1.0) => {}
            _ => best = Some((q, v)),
        }
    }
    let (q, v) = best.ok_or_else(|| Error::domain("utility undefined on the whole lattice"))?;
    let residual = (dot(prices, &q) - m).abs() / m;
    Ok(SolveResult {
        argmin_or_argmax: q,
        objective_value: v,
        converged: true,
        iterations: count,
        active_constraint_residual: residual,
    })
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn central_diff<F>(f: F, x: &[f64], i: usize, h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if i >= x.len() {
        return Err(Error::Invalid(format!("index {i} out of range for dimension {}", x.len())));
    }
    let mut xp = x.to_vec();
    xp[i] += h;
    let mut xm = x.to_vec();
    xm[i] -= h;
    Ok((f(&xp)? - f(&xm)?) / (2.0 * h))
}

/// Default finite-difference step `1e-6 * max(1, |x|)`.
pub fn default_step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}
