//! Scalar monotone inversion and share-balance inversion used by the
//! inverse transitions.

use crate::error::{Error, Result};
use crate::numkit::lattice::{refine_from, simplex_lattice};
use crate::numkit::{brent_solve, NelderMeadOptions, RootOptions};

/// Stand-in magnitude for evaluations that fail beyond the attainable range.
const BIG: f64 = 1e200;

/// Solves `g(x) = 0` for monotone `g`, searching outward from `x0` with
/// doubling steps inside `limits`. Failed evaluations met while searching
/// are taken to lie beyond the root in the search direction.
pub(crate) fn solve_monotone<G>(
    g: G,
    x0: f64,
    step0: f64,
    increasing: bool,
    limits: (f64, f64),
    opts: RootOptions,
) -> Result<f64>
where
    G: Fn(f64) -> Result<f64>,
{
    let sign = if increasing { 1.0 } else { -1.0 };
    let h = |x: f64| g(x).map(|v| sign * v);
    let h0 = h(x0)?;
    if h0 == 0.0 {
        return Ok(x0);
    }
    if h0.is_nan() {
        return Err(Error::domain(format!("non-finite value at {x0}")));
    }
    let up = h0 < 0.0;
    let (mut prev, mut step) = (x0, step0);
    let (other, other_failed) = loop {
        let x = if up { prev + step } else { prev - step };
        if (up && x > limits.1) || (!up && x < limits.0) {
            let edge = if up { limits.1 } else { limits.0 };
            let g_edge = h(edge).map(|v| sign * v).unwrap_or(f64::NAN);
            let (lo, hi, g_lo, g_hi) = if up {
                (x0, edge, sign * h0, g_edge)
            } else {
                (edge, x0, g_edge, sign * h0)
            };
            return Err(Error::Bracket { lo, hi, g_lo, g_hi });
        }
        match h(x) {
            Ok(v) if v.is_nan() => break (x, true),
            Ok(v) if (v >= 0.0) == up => break (x, false),
            Ok(_) => {}
            Err(_) => break (x, true),
        }
        prev = x;
        step *= 2.0;
    };
    let (lo, hi) = if up { (prev, other) } else { (other, prev) };
    // failures inside the final bracket share the sign of the failed end
    let fail_value = if up { BIG } else { -BIG };
    let bracketed = |x: f64| -> Result<f64> {
        match h(x) {
            Ok(v) if !v.is_nan() => Ok(v),
            Ok(_) | Err(_) if other_failed => Ok(fail_value),
            Ok(_) => Err(Error::domain(format!("non-finite value at {x}"))),
            Err(e) => Err(e),
        }
    };
    brent_solve(bracketed, lo, hi, opts)
}

/// Settings for [`balance`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct BalanceOptions {
    pub divisions: usize,
    /// Smallest share considered; solutions are interior.
    pub margin: f64,
    /// Relative mismatch accepted at a solution.
    pub tol: f64,
}

/// Finds the interior shares `w` on the simplex where every component of
/// `m(w)` is equal. Exactly one solution is expected: none gives a
/// convergence error and several an ambiguity error.
pub(crate) fn balance<M>(m: M, n: usize, opts: BalanceOptions) -> Result<Vec<f64>>
where
    M: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let roots = if n == 2 {
        balance_two(&m, opts)
    } else {
        balance_many(&m, n, opts)
    };
    match roots.len() {
        0 => Err(Error::Convergence(
            "no interior point satisfies the inverse conditions".into(),
        )),
        1 => Ok(roots.into_iter().next().unwrap_or_default()),
        k => Err(Error::Ambiguity(format!(
            "{k} distinct solutions, e.g. shares {:?} and {:?}",
            roots[0], roots[1]
        ))),
    }
}

fn mismatch(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let spread = v.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x))
        - v.iter().fold(f64::INFINITY, |a, &x| a.min(x));
    if scale == 0.0 {
        f64::NAN
    } else {
        spread / scale
    }
}

fn balance_two<M>(m: &M, opts: BalanceOptions) -> Vec<Vec<f64>>
where
    M: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let s = |w1: f64| -> Result<f64> {
        let v = m(&[w1, 1.0 - w1])?;
        let d = v[0].abs() + v[1].abs();
        let r = (v[0] - v[1]) / d;
        if r.is_finite() {
            Ok(r)
        } else {
            Err(Error::domain("balance undefined"))
        }
    };
    let valid = |w1: f64| -> bool {
        m(&[w1, 1.0 - w1])
            .map(|v| mismatch(&v) <= opts.tol)
            .unwrap_or(false)
    };
    let n = opts.divisions.max(2);
    let span = 1.0 - 2.0 * opts.margin;
    let grid: Vec<f64> = (0..=n)
        .map(|k| opts.margin + span * k as f64 / n as f64)
        .collect();
    let vals: Vec<Option<f64>> = grid.iter().map(|&w| s(w).ok()).collect();

    let mut roots: Vec<f64> = Vec::new();
    let push = |r: f64, roots: &mut Vec<f64>| {
        if valid(r) && roots.iter().all(|x| (x - r).abs() > 1e-6) {
            roots.push(r);
        }
    };
    for k in 0..=n {
        if vals[k] == Some(0.0) {
            push(grid[k], &mut roots);
        }
        if k == n {
            break;
        }
        let root_opts = RootOptions {
            xtol: 1e-14,
            ..RootOptions::default()
        };
        match (vals[k], vals[k + 1]) {
            (Some(a), Some(b)) => {
                if a != 0.0 && b != 0.0 && (a < 0.0) != (b < 0.0) {
                    if let Ok(r) = brent_solve(s, grid[k], grid[k + 1], root_opts) {
                        push(r, &mut roots);
                    }
                }
            }
            // one end failed: close in on it geometrically for a sign change
            (Some(a), None) | (None, Some(a)) if a != 0.0 => {
                let (good, bad) = if vals[k].is_some() {
                    (grid[k], grid[k + 1])
                } else {
                    (grid[k + 1], grid[k])
                };
                let mut last = good;
                for j in 1..=40 {
                    let x = good + (1.0 - 0.5f64.powi(j)) * (bad - good);
                    let Ok(v) = s(x) else { continue };
                    if v == 0.0 {
                        push(x, &mut roots);
                        break;
                    }
                    if (v < 0.0) != (a < 0.0) {
                        let (lo, hi) = if last < x { (last, x) } else { (x, last) };
                        if let Ok(r) = brent_solve(s, lo, hi, root_opts) {
                            push(r, &mut roots);
                        }
                        break;
                    }
                    last = x;
                }
            }
            _ => {}
        }
    }
    roots.into_iter().map(|r| vec![r, 1.0 - r]).collect()
}

fn balance_many<M>(m: &M, n: usize, opts: BalanceOptions) -> Vec<Vec<f64>>
where
    M: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let inner = |w: &[f64]| -> Vec<f64> {
        let scale = 1.0 - n as f64 * opts.margin;
        w.iter().map(|x| opts.margin + scale * x).collect()
    };
    let r = |w: &[f64]| -> f64 {
        match m(&inner(w)) {
            Ok(v) => {
                let mean = v.iter().sum::<f64>() / n as f64;
                v.iter().map(|x| (x / mean - 1.0).powi(2)).sum::<f64>()
            }
            Err(_) => f64::INFINITY,
        }
    };
    let divisions = match n {
        3 => (opts.divisions / 4).max(20),
        _ => (opts.divisions / 10).max(10),
    };
    let lattice = simplex_lattice(n, divisions);
    let mut scored: Vec<(f64, usize)> = lattice
        .iter()
        .enumerate()
        .map(|(i, w)| (r(w), i))
        .filter(|(v, _)| v.is_finite())
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));

    let sep = 2.5 / divisions as f64;
    let mut seeds: Vec<usize> = Vec::new();
    for &(_, i) in &scored {
        let far = seeds.iter().all(|&j| {
            lattice[i]
                .iter()
                .zip(&lattice[j])
                .any(|(a, b)| (a - b).abs() > sep)
        });
        if far {
            seeds.push(i);
        }
        if seeds.len() == 6 {
            break;
        }
    }
    let nm = NelderMeadOptions {
        xtol: 1e-11,
        max_iter: 6000,
    };
    let mut roots: Vec<Vec<f64>> = Vec::new();
    for i in seeds {
        let res = refine_from(&r, &lattice[i], r(&lattice[i]), divisions, 0.0, nm);
        let w = inner(&res.w);
        let ok = m(&w).map(|v| mismatch(&v) <= opts.tol).unwrap_or(false);
        if ok
            && roots
                .iter()
                .all(|x| x.iter().zip(&w).any(|(a, b)| (a - b).abs() > 1e-5))
        {
            roots.push(w);
        }
    }
    roots
}
