//! Builders turning source handles into the handle of a transition's
//! target node. Builders are lazy: they only capture callables, and all
//! numerical work happens when the resulting handle is evaluated.

use std::sync::Arc;

use super::graph::Method;
use super::handle::{FnVs, FunctionHandle, Kernel};
use super::invert::{balance, solve_monotone};
use super::WheelSettings;
use crate::error::{Error, Result};
use crate::expr::UtilityExpr;
use crate::numkit::{maximize_on_budget, minimize_expenditure, PriceIncome, RootOptions};

/// Log-scale search range for expenditure and distance scalings.
const LOG_LIMITS: (f64, f64) = (-200.0, 200.0);
/// Search range for utility levels.
const UTILITY_LIMITS: (f64, f64) = (-1e12, 1e12);

pub(crate) fn build(
    method: Method,
    utility: &Arc<UtilityExpr>,
    settings: &WheelSettings,
    primary: &FunctionHandle,
    extras: &[Arc<FunctionHandle>],
) -> Result<Kernel> {
    let s = *settings;
    let extra = |k: usize| -> Result<&FunctionHandle> {
        extras
            .get(k)
            .map(|h| h.as_ref())
            .ok_or_else(|| Error::Invalid(format!("{method} is missing a source handle")))
    };
    Ok(match method {
        Method::PrimalSolve => {
            let u = utility.clone();
            Kernel::Mdf(Arc::new(move |p, m| {
                let pi = PriceIncome::new(p.to_vec(), m)?;
                Ok(maximize_on_budget(&u, &pi, &s.solver)?.argmin_or_argmax)
            }))
        }
        Method::MdfToIuf => {
            let u = utility.clone();
            let x = primary.mdf()?.clone();
            Kernel::Iuf(Arc::new(move |p, m| u.eval(&x(p, m)?)))
        }
        Method::Roy => {
            let v = primary.iuf()?.clone();
            Kernel::Mdf(Arc::new(move |p, m| {
                let n = p.len();
                let mut z = p.to_vec();
                z.push(m);
                let f = |z: &[f64]| v(&z[..n], z[n]);
                let g = fd_gradient(f, &z, s.solver_fd_step)?;
                let vm = g[n];
                if !(vm.abs() > 0.0) || !vm.is_finite() {
                    return Err(Error::domain("marginal utility of income vanishes"));
                }
                Ok(g[..n].iter().map(|vp| -vp / vm).collect())
            }))
        }
        Method::NormRoy => {
            let v = primary.iuf()?.clone();
            Kernel::NormMdf(Arc::new(move |p| {
                let g = fd_gradient(|p: &[f64]| v(p, 1.0), p, s.solver_fd_step)?;
                let den: f64 = g.iter().zip(p).map(|(g, p)| g * p).sum();
                if !(den.abs() > 0.0) || !den.is_finite() {
                    return Err(Error::domain("indirect utility is flat in prices"));
                }
                Ok(g.iter().map(|g| g / den).collect())
            }))
        }
        Method::IufToEf => {
            let v = primary.iuf()?.clone();
            Kernel::Ef(Arc::new(move |p, u| {
                let t0 = p.iter().sum::<f64>().ln();
                let g = |t: f64| Ok(v(p, t.exp())? - u);
                match solve_monotone(g, t0, 1.0, true, LOG_LIMITS, RootOptions::default()) {
                    Ok(t) => Ok(t.exp()),
                    // the level is reached at vanishing income
                    Err(Error::Bracket { lo, g_lo, .. }) if lo == LOG_LIMITS.0 && g_lo > 0.0 => {
                        Ok(0.0)
                    }
                    Err(e) => Err(e),
                }
            }))
        }
        Method::EfToIuf => {
            let e = primary.ef()?.clone();
            Kernel::Iuf(Arc::new(move |p, m| invert_expenditure(&e, p, m)))
        }
        Method::DualSolve => {
            let u = utility.clone();
            Kernel::Hdf(Arc::new(move |p, level| {
                Ok(minimize_expenditure(&u, p, level, &s.solver)?.argmin_or_argmax)
            }))
        }
        Method::HdfToEf => {
            let x = primary.hdf()?.clone();
            Kernel::Ef(Arc::new(move |p, u| Ok(dot(p, &x(p, u)?))))
        }
        Method::Shephard => {
            let e = primary.ef()?.clone();
            Kernel::Hdf(Arc::new(move |p, u| {
                fd_gradient(|p: &[f64]| e(p, u), p, s.solver_fd_step)
            }))
        }
        Method::NormShephard => {
            let e = primary.ef()?.clone();
            Kernel::NormHdf(Arc::new(move |p, u| {
                fd_gradient(|p: &[f64]| e(p, u), p, s.solver_fd_step)
            }))
        }
        Method::HotellingWold => {
            let u = utility.clone();
            Kernel::Hidf(Arc::new(move |q| {
                let g = u.gradient(q)?;
                let den = dot(&g, q);
                if !(den > 0.0) || !den.is_finite() {
                    return Err(Error::domain(
                        "sum of marginal utilities times quantities must be positive",
                    ));
                }
                Ok(g.iter().map(|g| g / den).collect())
            }))
        }
        Method::HidfToMdf => {
            let phi = primary.hidf()?.clone();
            Kernel::Mdf(Arc::new(move |p, m| {
                let pn: Vec<f64> = p.iter().map(|p| p / m).collect();
                let bundle = |w: &[f64]| -> Vec<f64> { w.iter().zip(&pn).map(|(w, p)| w / p).collect() };
                let bal = |w: &[f64]| -> Result<Vec<f64>> {
                    let f = phi(&bundle(w))?;
                    Ok(f.iter().zip(&pn).map(|(f, p)| f / p).collect())
                };
                let w = balance(bal, p.len(), s.balance_options())?;
                Ok(bundle(&w))
            }))
        }
        Method::Antonelli => {
            let d = primary.df()?.clone();
            Kernel::Aidf(Arc::new(move |q, u| {
                if q.iter().any(|&x| x <= 0.0) {
                    return Err(Error::domain("inverse demand requires a strictly positive bundle"));
                }
                fd_gradient(|q: &[f64]| d(q, u), q, s.fd_step)
            }))
        }
        Method::AidfToHdf => {
            let psi = primary.aidf()?.clone();
            let d = extra(0)?.df()?.clone();
            Kernel::Hdf(Arc::new(move |p, u| {
                let locus = |w: &[f64]| -> Result<Vec<f64>> {
                    let dir: Vec<f64> = w.iter().zip(p).map(|(w, p)| w / p).collect();
                    let dist = d(&dir, u)?;
                    if !(dist > 0.0) {
                        return Err(Error::domain("distance must be positive"));
                    }
                    Ok(dir.iter().map(|x| x / dist).collect())
                };
                let bal = |w: &[f64]| -> Result<Vec<f64>> {
                    let q = locus(w)?;
                    let f = psi(&q, u)?;
                    Ok(f.iter().zip(p).map(|(f, p)| f / p).collect())
                };
                let w = balance(bal, p.len(), s.balance_options())?;
                locus(&w)
            }))
        }
        Method::DufToDf => {
            let u = utility.clone();
            Kernel::Df(Arc::new(move |q, level| {
                if q.iter().all(|&x| x == 0.0) {
                    return Err(Error::domain("distance is undefined at the origin"));
                }
                let at = |lam: f64| -> Result<f64> {
                    let z: Vec<f64> = q.iter().map(|x| x / lam).collect();
                    u.eval(&z)
                };
                let (a, b, c) = (at(0.5)?, at(1.0)?, at(2.0)?);
                if !(a > b && b > c) {
                    return Err(Error::Monotonicity(format!(
                        "U(q/lambda) at lambda = 0.5, 1, 2 is {a}, {b}, {c}"
                    )));
                }
                let g = |t: f64| Ok(at(t.exp())? - level);
                let t = solve_monotone(g, 0.0, 1.0, false, LOG_LIMITS, RootOptions::default())?;
                Ok(t.exp())
            }))
        }
        Method::DfToDuf => {
            let d = primary.df()?.clone();
            Kernel::Duf(Arc::new(move |q| {
                let g = |u: f64| -> Result<f64> {
                    let v = d(q, u)?;
                    if v > 0.0 {
                        Ok(v.ln())
                    } else {
                        Err(Error::domain("distance must be positive"))
                    }
                };
                let u0 = first_ok(&g, &[1.0, 0.0, 10.0, 0.1, -1.0])?;
                solve_monotone(g, u0, 0.5 * u0.abs().max(1.0), false, UTILITY_LIMITS, utility_root_opts())
            }))
        }
        Method::MdfToDuf => {
            let x = primary.mdf()?.clone();
            let v = extra(0)?.iuf()?.clone();
            Kernel::Duf(Arc::new(move |q| {
                if q.iter().any(|&x| x <= 0.0) {
                    return Err(Error::domain("demand inversion requires a strictly positive bundle"));
                }
                let prices = |w: &[f64]| -> Vec<f64> { w.iter().zip(q).map(|(w, q)| w / q).collect() };
                let bal = |w: &[f64]| -> Result<Vec<f64>> {
                    let d = x(&prices(w), 1.0)?;
                    Ok(d.iter().zip(q).map(|(d, q)| d / q).collect())
                };
                let w = balance(bal, q.len(), s.balance_options())?;
                v(&prices(&w), 1.0)
            }))
        }
        Method::HdfToEaf => {
            let x = primary.hdf()?.clone();
            let e = extra(0)?.ef()?.clone();
            Kernel::Eaf(Arc::new(move |p, q| {
                let amount = dot(p, q);
                if amount <= 0.0 {
                    return Ok(0.0);
                }
                let u = invert_expenditure(&e, p, amount)?;
                let demand = x(p, u)?;
                let on_image = demand
                    .iter()
                    .zip(q)
                    .all(|(a, b)| (a - b).abs() <= 1e-5 * b.abs().max(1.0));
                if on_image {
                    e(p, u)
                } else {
                    Ok(amount)
                }
            }))
        }
        Method::IufToMdfViaHdf => {
            let v = primary.iuf()?.clone();
            let h = extra(0)?.hdf()?.clone();
            Kernel::Mdf(Arc::new(move |p, m| h(p, v(p, m)?)))
        }
        Method::EfToHdfViaMdf => {
            let e = primary.ef()?.clone();
            let x = extra(0)?.mdf()?.clone();
            Kernel::Hdf(Arc::new(move |p, u| {
                let m = e(p, u)?;
                if m <= 0.0 {
                    return Ok(vec![0.0; p.len()]);
                }
                x(p, m)
            }))
        }
        Method::EafToBc => {
            let e = primary.eaf()?.clone();
            Kernel::Bc(Arc::new(move |p, m, q| Ok(m - e(p, q)?)))
        }
        other => {
            return Err(Error::Invalid(format!(
                "{other} is a relationship, not an executable transition"
            )))
        }
    })
}

fn utility_root_opts() -> RootOptions {
    RootOptions {
        xtol: 1e-14,
        ..RootOptions::default()
    }
}

/// The utility level `u` with `E(P,u) = M`.
fn invert_expenditure(e: &FnVs, p: &[f64], m: f64) -> Result<f64> {
    let g = |u: f64| Ok(e(p, u)? - m);
    let u0 = first_ok(&g, &[1.0, 0.0, 10.0, 0.1, -1.0])?;
    solve_monotone(g, u0, 0.5 * u0.abs().max(1.0), true, UTILITY_LIMITS, utility_root_opts())
}

fn first_ok<G: Fn(f64) -> Result<f64>>(g: &G, starts: &[f64]) -> Result<f64> {
    let mut last = None;
    for &x in starts {
        match g(x) {
            Ok(v) if v.is_finite() => return Ok(x),
            Ok(_) => {}
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::domain("no finite starting value")))
}

/// Central-difference gradient with step `rel * max(1, |x_i|)`, kept
/// below half of each positive coordinate.
pub(crate) fn fd_gradient<F>(f: F, x: &[f64], rel: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    (0..x.len())
        .map(|i| {
            let mut h = rel * x[i].abs().max(1.0);
            if x[i] > 0.0 {
                h = h.min(0.5 * x[i]);
            }
            crate::numkit::central_diff(&f, x, i, h)
        })
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}
