//! Uniform lattices on the unit simplex and simplex-constrained search.

use super::nelder_mead::{nelder_mead, NelderMeadOptions};

/// Every `w` with `w_i = k_i / divisions`, `sum k_i = divisions`, in
/// lexicographically ascending order of `w`.
pub fn simplex_lattice(n: usize, divisions: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut ks = vec![0usize; n];
    fill(&mut out, &mut ks, 0, divisions, divisions);
    out
}

fn fill(out: &mut Vec<Vec<f64>>, ks: &mut [usize], pos: usize, left: usize, total: usize) {
    let n = ks.len();
    if pos == n - 1 {
        ks[pos] = left;
        out.push(ks.iter().map(|&k| k as f64 / total as f64).collect());
        return;
    }
    for k in 0..=left {
        ks[pos] = k;
        fill(out, ks, pos + 1, left - k, total);
    }
}

/// Default number of lattice divisions for a seed scan in `n` dimensions.
pub fn default_divisions(n: usize, two_goods: usize) -> usize {
    match n {
        0..=2 => two_goods,
        3 => (two_goods / 16).max(20),
        _ => (two_goods / 50).max(10),
    }
}

/// Maps free coordinates `y` (first `n-1` shares) onto the simplex,
/// returning the projected shares and the distance moved.
pub fn project_shares(y: &[f64]) -> (Vec<f64>, f64) {
    let mut w: Vec<f64> = y.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let mut moved: f64 = y
        .iter()
        .zip(&w)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>();
    let s: f64 = w.iter().sum();
    if s > 1.0 {
        let before = w.clone();
        w.iter_mut().for_each(|v| *v /= s);
        moved += before
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    let last = (1.0 - w.iter().sum::<f64>()).max(0.0);
    w.push(last);
    (w, moved.sqrt())
}

#[derive(Debug, Clone)]
pub struct SimplexMin {
    pub w: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` over the unit simplex: lattice scan (first strict
/// improvement beyond `tie_tol` wins, so ties resolve to the
/// lexicographically smallest point) followed by Nelder-Mead refinement
/// from the best lattice point. Non-finite values count as `+inf`.
pub fn minimize_on_simplex<F>(
    f: F,
    n: usize,
    divisions: usize,
    tie_tol: f64,
    nm: NelderMeadOptions,
) -> SimplexMin
where
    F: Fn(&[f64]) -> f64,
{
    let lattice = simplex_lattice(n, divisions);
    let vals: Vec<f64> = lattice.iter().map(|w| finite_or_inf(f(w))).collect();
    let mut best = 0;
    for (i, &v) in vals.iter().enumerate() {
        if improves(v, vals[best], tie_tol) {
            best = i;
        }
    }
    refine_from(&f, &lattice[best], vals[best], divisions, tie_tol, nm)
}

pub(crate) fn refine_from<F>(
    f: &F,
    w0: &[f64],
    f0: f64,
    divisions: usize,
    tie_tol: f64,
    nm: NelderMeadOptions,
) -> SimplexMin
where
    F: Fn(&[f64]) -> f64,
{
    let n = w0.len();
    if n < 2 || !f0.is_finite() {
        return SimplexMin {
            w: w0.to_vec(),
            value: f0,
            iterations: 0,
            converged: f0.is_finite(),
        };
    }
    let penalized = |y: &[f64]| {
        let (w, moved) = project_shares(y);
        let v = finite_or_inf(f(&w));
        if moved > 0.0 {
            v + 1e3 * moved * (1.0 + v.abs())
        } else {
            v
        }
    };
    let step = 1.0 / divisions.max(1) as f64;
    let r = nelder_mead(penalized, &w0[..n - 1], step, nm);
    let (w, _) = project_shares(&r.x);
    let v = finite_or_inf(f(&w));
    // keep the lattice point unless refinement is a real improvement
    if improves(v, f0, tie_tol) || (v <= f0 && v.is_finite()) {
        SimplexMin {
            w,
            value: v,
            iterations: r.iterations,
            converged: r.converged,
        }
    } else {
        SimplexMin {
            w: w0.to_vec(),
            value: f0,
            iterations: r.iterations,
            converged: r.converged,
        }
    }
}

fn improves(v: f64, best: f64, tie_tol: f64) -> bool {
    if !best.is_finite() {
        return v < best;
    }
    v < best - tie_tol * best.abs().max(1.0)
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}
