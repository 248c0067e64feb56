//! Named utility families with closed-form wheel functions, used as
//! independent oracles for the numerical engine.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{parse_utility, UtilityExpr, MAX_GOODS};
use crate::wheel::{EvalPoint, NodeId, Value};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `prod q_i^a_i`
    CobbDouglas { a: Vec<f64> },
    /// `(a1 q1^rho + a2 q2^rho)^(1/rho)`
    Ces { a: [f64; 2], rho: f64 },
    /// `q1 + ln(q2)`
    Quasilinear,
    /// `q1^2 + q2^2`, increasing but not quasi-concave.
    NonconvexDemo,
}

impl Family {
    pub fn cobb_douglas(a: Vec<f64>) -> Result<Self> {
        if !(2..=MAX_GOODS).contains(&a.len()) {
            return Err(Error::Param(format!(
                "cobb_douglas takes 2 to {MAX_GOODS} exponents, got {}",
                a.len()
            )));
        }
        if a.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::Param("cobb_douglas exponents must be positive".into()));
        }
        Ok(Family::CobbDouglas { a })
    }

    pub fn ces(a: [f64; 2], rho: f64) -> Result<Self> {
        if a.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::Param("ces weights must be positive".into()));
        }
        if !(rho > -5.0 && rho < 1.0) || rho == 0.0 {
            return Err(Error::Param(format!(
                "ces requires rho in (-5, 1) and rho != 0, got {rho}"
            )));
        }
        Ok(Family::Ces { a, rho })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::CobbDouglas { .. } => "cobb_douglas",
            Family::Ces { .. } => "ces",
            Family::Quasilinear => "quasilinear",
            Family::NonconvexDemo => "nonconvex_demo",
        }
    }

    /// One instance of every family with default parameters.
    pub fn defaults() -> Vec<Family> {
        vec![
            Family::CobbDouglas { a: vec![0.5, 0.5] },
            Family::Ces {
                a: [0.5, 0.5],
                rho: 0.5,
            },
            Family::Quasilinear,
            Family::NonconvexDemo,
        ]
    }

    pub fn n_goods(&self) -> usize {
        match self {
            Family::CobbDouglas { a } => a.len(),
            _ => 2,
        }
    }

    /// Whether the preferences are convex, so every duality holds.
    pub fn convex(&self) -> bool {
        !matches!(self, Family::NonconvexDemo)
    }

    pub fn utility_text(&self) -> String {
        match self {
            Family::CobbDouglas { a } => a
                .iter()
                .enumerate()
                .map(|(i, a)| format!("q{}^{}", i + 1, num(*a)))
                .collect::<Vec<_>>()
                .join(" * "),
            Family::Ces { a, rho } => format!(
                "({}*q1^{r} + {}*q2^{r})^(1/{r})",
                num(a[0]),
                num(a[1]),
                r = num(*rho)
            ),
            Family::Quasilinear => "q1 + ln(q2)".into(),
            Family::NonconvexDemo => "q1^2 + q2^2".into(),
        }
    }

    pub fn utility(&self) -> Result<UtilityExpr> {
        parse_utility(&self.utility_text())
    }

    pub fn u(&self, q: &[f64]) -> Result<f64> {
        self.check_len(q)?;
        Ok(match self {
            Family::CobbDouglas { a } => q.iter().zip(a).map(|(q, a)| q.powf(*a)).product(),
            Family::Ces { a, rho } => {
                (a[0] * q[0].powf(*rho) + a[1] * q[1].powf(*rho)).powf(1.0 / rho)
            }
            Family::Quasilinear => {
                if q[1] <= 0.0 {
                    return Err(Error::domain("ln of a non-positive quantity"));
                }
                q[0] + q[1].ln()
            }
            Family::NonconvexDemo => q[0] * q[0] + q[1] * q[1],
        })
    }

    pub fn mdf(&self, p: &[f64], m: f64) -> Result<Vec<f64>> {
        self.check_len(p)?;
        Ok(match self {
            Family::CobbDouglas { a } => {
                let s: f64 = a.iter().sum();
                a.iter().zip(p).map(|(a, p)| a * m / (s * p)).collect()
            }
            Family::Ces { a, rho } => {
                let sigma = 1.0 / (1.0 - rho);
                let den: f64 = (0..2).map(|i| a[i].powf(sigma) * p[i].powf(1.0 - sigma)).sum();
                (0..2)
                    .map(|i| m * a[i].powf(sigma) * p[i].powf(-sigma) / den)
                    .collect()
            }
            Family::Quasilinear => {
                if m > p[0] {
                    vec![m / p[0] - 1.0, p[0] / p[1]]
                } else {
                    vec![0.0, m / p[1]]
                }
            }
            Family::NonconvexDemo => {
                let i = cheapest(p);
                let mut x = vec![0.0; 2];
                x[i] = m / p[i];
                x
            }
        })
    }

    pub fn iuf(&self, p: &[f64], m: f64) -> Result<f64> {
        self.check_len(p)?;
        Ok(match self {
            Family::CobbDouglas { a } => {
                let s: f64 = a.iter().sum();
                a.iter()
                    .zip(p)
                    .map(|(a, p)| (a * m / (s * p)).powf(*a))
                    .product()
            }
            Family::Ces { .. } => m / self.ces_index(p),
            Family::Quasilinear => {
                if m > p[0] {
                    m / p[0] - 1.0 + (p[0] / p[1]).ln()
                } else {
                    (m / p[1]).ln()
                }
            }
            Family::NonconvexDemo => (m / p[cheapest(p)]).powi(2),
        })
    }

    pub fn ef(&self, p: &[f64], u: f64) -> Result<f64> {
        self.check_len(p)?;
        match self {
            Family::CobbDouglas { a } => {
                if u <= 0.0 {
                    return Ok(0.0);
                }
                let s: f64 = a.iter().sum();
                let k: f64 = a.iter().zip(p).map(|(a, p)| (a / (s * p)).powf(*a)).product();
                Ok((u / k).powf(1.0 / s))
            }
            Family::Ces { .. } => Ok(u.max(0.0) * self.ces_index(p)),
            Family::Quasilinear => {
                let r = (p[0] / p[1]).ln();
                if u > r {
                    Ok(p[0] * (u + 1.0 - r))
                } else {
                    Ok(p[1] * u.exp())
                }
            }
            Family::NonconvexDemo => Ok(u.max(0.0).sqrt() * p[cheapest(p)]),
        }
    }

    pub fn hdf(&self, p: &[f64], u: f64) -> Result<Vec<f64>> {
        self.check_len(p)?;
        match self {
            Family::Quasilinear => {
                let r = (p[0] / p[1]).ln();
                if u > r {
                    Ok(vec![u - r, p[0] / p[1]])
                } else {
                    Ok(vec![0.0, u.exp()])
                }
            }
            // homothetic and corner cases: Marshallian demand at M = E(P,u)
            _ => {
                let e = self.ef(p, u)?;
                if e <= 0.0 {
                    return Ok(vec![0.0; p.len()]);
                }
                self.mdf(p, e)
            }
        }
    }

    pub fn df(&self, q: &[f64], u: f64) -> Result<f64> {
        self.check_len(q)?;
        if !(u > 0.0) {
            return Err(Error::domain("distance oracle needs a positive utility level"));
        }
        match self {
            Family::CobbDouglas { a } => {
                let s: f64 = a.iter().sum();
                Ok((self.u(q)? / u).powf(1.0 / s))
            }
            Family::Ces { .. } => Ok(self.u(q)? / u),
            Family::Quasilinear => Err(Error::NoOracle("quasilinear distance function".into())),
            Family::NonconvexDemo => Ok((self.u(q)? / u).sqrt()),
        }
    }

    pub fn hidf(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.check_len(q)?;
        match self {
            Family::CobbDouglas { a } => {
                let s: f64 = a.iter().sum();
                Ok(a.iter().zip(q).map(|(a, q)| a / (s * q)).collect())
            }
            Family::Ces { a, rho } => {
                let u = self.u(q)?;
                Ok((0..2)
                    .map(|i| a[i] * q[i].powf(rho - 1.0) * u.powf(-rho))
                    .collect())
            }
            Family::Quasilinear => {
                let d = q[0] + 1.0;
                Ok(vec![1.0 / d, 1.0 / (q[1] * d)])
            }
            Family::NonconvexDemo => {
                let s = q[0] * q[0] + q[1] * q[1];
                Ok(q.iter().map(|x| x / s).collect())
            }
        }
    }

    pub fn aidf(&self, q: &[f64], u: f64) -> Result<Vec<f64>> {
        let d = self.df(q, u)?;
        match self {
            Family::CobbDouglas { a } => {
                let s: f64 = a.iter().sum();
                Ok(a.iter().zip(q).map(|(a, q)| d * a / (s * q)).collect())
            }
            Family::Ces { a, rho } => {
                let uq = self.u(q)?;
                Ok((0..2)
                    .map(|i| a[i] * q[i].powf(rho - 1.0) * uq.powf(1.0 - rho) / u)
                    .collect())
            }
            Family::Quasilinear => Err(Error::NoOracle("quasilinear inverse demand".into())),
            Family::NonconvexDemo => {
                let s = (q[0] * q[0] + q[1] * q[1]).sqrt();
                Ok(q.iter().map(|x| x / (u.sqrt() * s)).collect())
            }
        }
    }

    /// Closed-form value of `node` at `pt`.
    pub fn oracle(&self, node: NodeId, pt: &EvalPoint) -> Result<Value> {
        use Value::{Scalar, Vector};
        Ok(match node {
            NodeId::Duf => Scalar(self.u(pt.bundle_or_err()?)?),
            NodeId::Iuf => Scalar(self.iuf(pt.prices_or_err()?, pt.income_or_err()?)?),
            NodeId::Ef => Scalar(self.ef(pt.prices_or_err()?, pt.utility_or_err()?)?),
            NodeId::Df => Scalar(self.df(pt.bundle_or_err()?, pt.utility_or_err()?)?),
            NodeId::Mdf => Vector(self.mdf(pt.prices_or_err()?, pt.income_or_err()?)?),
            NodeId::Hdf => Vector(self.hdf(pt.prices_or_err()?, pt.utility_or_err()?)?),
            NodeId::Hidf => Vector(self.hidf(pt.bundle_or_err()?)?),
            NodeId::Aidf => Vector(self.aidf(pt.bundle_or_err()?, pt.utility_or_err()?)?),
            NodeId::Eaf => Scalar(dot(pt.prices_or_err()?, pt.bundle_or_err()?)),
            NodeId::Bc => Scalar(
                pt.income_or_err()? - dot(pt.prices_or_err()?, pt.bundle_or_err()?),
            ),
        })
    }

    fn ces_index(&self, p: &[f64]) -> f64 {
        match self {
            Family::Ces { a, rho } => {
                let sigma = 1.0 / (1.0 - rho);
                (0..2)
                    .map(|i| a[i].powf(sigma) * p[i].powf(1.0 - sigma))
                    .sum::<f64>()
                    .powf(1.0 / (1.0 - sigma))
            }
            _ => f64::NAN,
        }
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n_goods() {
            return Err(Error::Invalid(format!(
                "{} takes {} goods, got {}",
                self.name(),
                self.n_goods(),
                v.len()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::CobbDouglas { a } => {
                let parts: Vec<String> = a
                    .iter()
                    .enumerate()
                    .map(|(i, a)| format!("a{}={}", i + 1, a))
                    .collect();
                write!(f, "cobb_douglas:{}", parts.join(","))
            }
            Family::Ces { a, rho } => write!(f, "ces:a1={},a2={},rho={}", a[0], a[1], rho),
            other => f.write_str(other.name()),
        }
    }
}

/// Parses `name` or `name:key=value,...`, e.g. `cobb_douglas:a1=0.3`.
/// A lone `a1` for Cobb-Douglas implies `a2 = 1 - a1`.
impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let mut params: Vec<(String, f64)> = Vec::new();
        for kv in rest.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Param(format!("expected key=value, got '{kv}'")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Param(format!("'{}' is not a number", v.trim())))?;
            params.push((k.trim().to_string(), v));
        }
        let get = |key: &str| params.iter().find(|(k, _)| k == key).map(|(_, v)| *v);
        let only = |allowed: &[&str]| -> Result<()> {
            match params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
                Some((k, _)) => Err(Error::Param(format!("{name} has no parameter '{k}'"))),
                None => Ok(()),
            }
        };
        match name {
            "cobb_douglas" => {
                only(&["a1", "a2", "a3", "a4"])?;
                let mut a: Vec<f64> = Vec::new();
                for i in 1..=MAX_GOODS {
                    match get(&format!("a{i}")) {
                        Some(v) => a.push(v),
                        None => break,
                    }
                }
                if a.len() != params.len() {
                    return Err(Error::Param("exponents must be a1, a2, ... without gaps".into()));
                }
                match a.len() {
                    0 => a = vec![0.5, 0.5],
                    1 => a.push(1.0 - a[0]),
                    _ => {}
                }
                Family::cobb_douglas(a)
            }
            "ces" => {
                only(&["a1", "a2", "rho"])?;
                let a1 = get("a1").unwrap_or(0.5);
                let a2 = get("a2").unwrap_or(1.0 - a1);
                Family::ces([a1, a2], get("rho").unwrap_or(0.5))
            }
            "quasilinear" => {
                only(&[])?;
                Ok(Family::Quasilinear)
            }
            "nonconvex_demo" => {
                only(&[])?;
                Ok(Family::NonconvexDemo)
            }
            other => Err(Error::Param(format!("unknown family '{other}'"))),
        }
    }
}

fn num(x: f64) -> String {
    if x < 0.0 {
        format!("({x})")
    } else {
        format!("{x}")
    }
}

/// Index of the cheapest good; ties go to the last one, matching the
/// solver's preference for the lexicographically smallest share vector.
fn cheapest(p: &[f64]) -> usize {
    let min = p.iter().copied().fold(f64::INFINITY, f64::min);
    p.iter().rposition(|&x| x == min).unwrap_or(0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}
