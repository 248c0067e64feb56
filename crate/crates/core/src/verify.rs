//! Identity residual harness: named identity checks over seeded samples,
//! Slutsky decomposition, duality gap, loop closure, the quasi-linear
//! coincidence and the information-loss demonstration.
//!
//! Residuals are `max_k |lhs_k - rhs_k| / max(1, |rhs_k|)`. Derivative
//! identities default to a 1e-3 tolerance, substitutions and round trips
//! to 1e-5.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::Family;
use crate::numkit::PriceIncome;
use crate::wheel::{
    check_dual_pair_df_ef, check_dual_pair_duf_iuf, is_connected_path, EvalPoint, Method, NodeId,
    Value, WheelSession,
};

pub const DERIVATIVE_TOL: f64 = 1e-3;
pub const SUBSTITUTION_TOL: f64 = 1e-5;
pub const LONG_LOOP_TOL: f64 = 1e-2;

/// DUF -> MDF -> DUF, the inverse demand substituted into the IUF derived
/// from the same demand.
pub const SHORT_LOOP: [Method; 2] = [Method::PrimalSolve, Method::MdfToDuf];

/// DUF -> DF -> AIDF -> HDF -> EF -> IUF -> MDF -> DUF.
pub const LONG_LOOP: [Method; 7] = [
    Method::DufToDf,
    Method::Antonelli,
    Method::AidfToHdf,
    Method::HdfToEf,
    Method::EfToIuf,
    Method::Roy,
    Method::MdfToDuf,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Identity {
    Roy,
    NormRoy,
    Shephard,
    NormShephard,
    HotellingWold,
    Antonelli,
    IufEfInverse,
    MdfHdfCrossU,
    MdfHdfCrossM,
    DufDfInverse,
    DualPairDufIuf,
    DualPairDfEf,
    Slutsky,
    SlutskySymmetry,
    HidfInversion,
    DualityGap,
    LoopClosureShort,
    LoopClosureLong,
}

impl Identity {
    pub const ALL: [Identity; 18] = [
        Identity::Roy,
        Identity::NormRoy,
        Identity::Shephard,
        Identity::NormShephard,
        Identity::HotellingWold,
        Identity::Antonelli,
        Identity::IufEfInverse,
        Identity::MdfHdfCrossU,
        Identity::MdfHdfCrossM,
        Identity::DufDfInverse,
        Identity::DualPairDufIuf,
        Identity::DualPairDfEf,
        Identity::Slutsky,
        Identity::SlutskySymmetry,
        Identity::HidfInversion,
        Identity::DualityGap,
        Identity::LoopClosureShort,
        Identity::LoopClosureLong,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Identity::Roy => "roy",
            Identity::NormRoy => "norm_roy",
            Identity::Shephard => "shephard",
            Identity::NormShephard => "norm_shephard",
            Identity::HotellingWold => "hotelling_wold",
            Identity::Antonelli => "antonelli",
            Identity::IufEfInverse => "iuf_ef_inverse",
            Identity::MdfHdfCrossU => "mdf_hdf_cross_u",
            Identity::MdfHdfCrossM => "mdf_hdf_cross_M",
            Identity::DufDfInverse => "duf_df_inverse",
            Identity::DualPairDufIuf => "dual_pair_duf_iuf",
            Identity::DualPairDfEf => "dual_pair_df_ef",
            Identity::Slutsky => "slutsky",
            Identity::SlutskySymmetry => "slutsky_symmetry",
            Identity::HidfInversion => "hidf_inversion",
            Identity::DualityGap => "duality_gap",
            Identity::LoopClosureShort => "loop_closure_short",
            Identity::LoopClosureLong => "loop_closure_long",
        }
    }

    pub fn default_tolerance(self) -> f64 {
        match self {
            Identity::IufEfInverse
            | Identity::MdfHdfCrossU
            | Identity::MdfHdfCrossM
            | Identity::DufDfInverse
            | Identity::DualityGap => SUBSTITUTION_TOL,
            Identity::LoopClosureLong => LONG_LOOP_TOL,
            _ => DERIVATIVE_TOL,
        }
    }

    /// Identities that presume an interior optimum at the sampled point.
    pub fn needs_interior(self) -> bool {
        matches!(
            self,
            Identity::Roy
                | Identity::NormRoy
                | Identity::Shephard
                | Identity::NormShephard
                | Identity::HotellingWold
                | Identity::Antonelli
                | Identity::Slutsky
                | Identity::SlutskySymmetry
        )
    }

    /// Reported, but a property implied by others rather than a wheel edge.
    pub fn bonus(self) -> bool {
        self == Identity::SlutskySymmetry
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Identity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Identity::ALL
            .into_iter()
            .find(|i| i.name() == s.trim())
            .ok_or_else(|| Error::Invalid(format!("unknown identity '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub identity: String,
    pub point: EvalPoint,
    pub lhs: Option<Value>,
    pub rhs: Option<Value>,
    pub residual: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryError {
    pub identity: String,
    pub point: EvalPoint,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub excluded: usize,
    pub failed_identities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub entries: Vec<ResidualEntry>,
    /// Tolerance override, or the derivative default when none was given.
    pub tolerance: f64,
    pub tolerances: BTreeMap<String, f64>,
    pub seed: u64,
    pub sample_count: usize,
    /// Samples skipped per identity because the optimum was at a corner.
    pub excluded: BTreeMap<String, usize>,
    pub errors: Vec<EntryError>,
    pub bonus_identities: Vec<String>,
    pub summary: Summary,
}

impl ResidualReport {
    fn new(seed: u64, sample_count: usize, tolerance: Option<f64>) -> Self {
        Self {
            entries: vec![],
            tolerance: tolerance.unwrap_or(DERIVATIVE_TOL),
            tolerances: BTreeMap::new(),
            seed,
            sample_count,
            excluded: BTreeMap::new(),
            errors: vec![],
            bonus_identities: vec![],
            summary: Summary::default(),
        }
    }

    pub fn failures(&self) -> usize {
        self.summary.failed
    }

    pub fn entries_for<'a>(&'a self, identity: &'a str) -> impl Iterator<Item = &'a ResidualEntry> + 'a {
        self.entries.iter().filter(move |e| e.identity == identity)
    }

    pub fn max_residual(&self, identity: &str) -> Option<f64> {
        self.entries_for(identity)
            .filter_map(|e| e.residual)
            .fold(None, |a, r| Some(a.map_or(r, |a: f64| a.max(r))))
    }

    fn merge(&mut self, other: ResidualReport) {
        self.entries.extend(other.entries);
        self.tolerances.extend(other.tolerances);
        for (k, v) in other.excluded {
            *self.excluded.entry(k).or_default() += v;
        }
        self.errors.extend(other.errors);
        for b in other.bonus_identities {
            if !self.bonus_identities.contains(&b) {
                self.bonus_identities.push(b);
            }
        }
        self.summarize();
    }

    fn summarize(&mut self) {
        let passed = self.entries.iter().filter(|e| e.pass).count();
        let mut failed_identities: Vec<String> = self
            .entries
            .iter()
            .filter(|e| !e.pass)
            .map(|e| e.identity.clone())
            .collect();
        failed_identities.sort();
        failed_identities.dedup();
        self.summary = Summary {
            total: self.entries.len(),
            passed,
            failed: self.entries.len() - passed,
            excluded: self.excluded.values().sum(),
            failed_identities,
        };
    }

    /// Fixed-width text table for terminals.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<20} {:>6} {:>6} {:>8} {:>12} {:>10}\n",
            "identity", "pass", "fail", "excluded", "max resid", "tolerance"
        );
        let mut names: Vec<&str> = self.entries.iter().map(|e| e.identity.as_str()).collect();
        names.extend(self.excluded.keys().map(String::as_str));
        names.sort();
        names.dedup();
        for name in names {
            let pass = self.entries_for(name).filter(|e| e.pass).count();
            let fail = self.entries_for(name).filter(|e| !e.pass).count();
            let max = self
                .max_residual(name)
                .map_or("-".to_string(), |r| format!("{r:.3e}"));
            out.push_str(&format!(
                "{:<20} {:>6} {:>6} {:>8} {:>12} {:>10.0e}\n",
                name,
                pass,
                fail,
                self.excluded.get(name).copied().unwrap_or(0),
                max,
                self.tolerances.get(name).copied().unwrap_or(self.tolerance)
            ));
        }
        out.push_str(&format!(
            "total {} entries: {} passed, {} failed, {} excluded (seed {})\n",
            self.summary.total, self.summary.passed, self.summary.failed, self.summary.excluded, self.seed
        ));
        out
    }
}

/// `max_k |lhs_k - rhs_k| / max(1, |rhs_k|)`.
pub fn relative_residual(lhs: &[f64], rhs: &[f64]) -> f64 {
    if lhs.len() != rhs.len() {
        return f64::INFINITY;
    }
    lhs.iter()
        .zip(rhs)
        .map(|(l, r)| {
            let d = (l - r).abs() / r.abs().max(1.0);
            if d.is_nan() {
                f64::INFINITY
            } else {
                d
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    /// Overrides every per-identity tolerance.
    pub tolerance: Option<f64>,
    pub loop_probes: usize,
    pub long_loop_probes: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            samples: 25,
            seed: 42,
            tolerance: None,
            loop_probes: 10,
            long_loop_probes: 4,
        }
    }
}

/// One seeded draw: prices, income and a bundle on that budget line.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub prices: Vec<f64>,
    pub income: f64,
    pub bundle: Vec<f64>,
}

/// Log-uniform prices in [0.1, 10] and income in [1, 100]; the bundle
/// spends shares drawn uniformly from [0.1, 0.9] and renormalized.
pub fn draw_samples(n: usize, count: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> f64 {
        rng.gen_range(lo.ln()..hi.ln()).exp()
    };
    (0..count)
        .map(|_| {
            let prices: Vec<f64> = (0..n).map(|_| log_uniform(&mut rng, 0.1, 10.0)).collect();
            let income = log_uniform(&mut rng, 1.0, 100.0);
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..0.9)).collect();
            let total: f64 = raw.iter().sum();
            let bundle = raw
                .iter()
                .zip(&prices)
                .map(|(w, p)| income * w / total / p)
                .collect();
            Sample {
                prices,
                income,
                bundle,
            }
        })
        .collect()
}

/// Whether `x` is an interior optimum at prices `p` and budget `m`.
pub fn is_interior(x: &[f64], p: &[f64], m: f64) -> bool {
    x.iter()
        .zip(p)
        .all(|(x, p)| *x >= (1e-3 * m / p).max(1e-6))
}

struct Prepared {
    sample: Sample,
    demand: Result<Vec<f64>>,
    level: Result<f64>,
}

fn prepare(session: &WheelSession, sample: Sample) -> Prepared {
    let pt = EvalPoint::default()
        .with_prices(&sample.prices)
        .with_income(sample.income);
    let demand = session.evaluate(NodeId::Mdf, &pt).map(|v| v.components());
    let level = demand
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|x| session.utility().eval(x));
    Prepared {
        sample,
        demand,
        level,
    }
}

enum Outcome {
    Excluded,
    Done(EvalPoint, Result<(Value, Value)>),
}

fn vector(v: Vec<f64>) -> Value {
    Value::Vector(v)
}

fn eval(session: &WheelSession, m: Method, pt: &EvalPoint) -> Result<Value> {
    session.transition(m)?.evaluate(pt)
}

fn node(session: &WheelSession, n: NodeId, pt: &EvalPoint) -> Result<Value> {
    session.evaluate(n, pt)
}

fn scalar(v: Value) -> Result<f64> {
    v.as_scalar()
        .ok_or_else(|| Error::Invalid("expected a scalar value".into()))
}

fn evaluate_identity(session: &WheelSession, id: Identity, prep: &Prepared) -> Outcome {
    let s = &prep.sample;
    let (p, m, q) = (&s.prices, s.income, &s.bundle);
    let pm = EvalPoint::default().with_prices(p).with_income(m);
    if id.needs_interior() {
        match &prep.demand {
            Ok(x) if !is_interior(x, p, m) => return Outcome::Excluded,
            Err(e) => return Outcome::Done(pm, Err(e.clone())),
            Ok(_) => {}
        }
    }
    let demand = || prep.demand.clone();
    let level = || prep.level.clone();
    let with_level = |pt: EvalPoint| -> Result<EvalPoint> { Ok(pt.with_utility(level()?)) };

    let (point, result): (EvalPoint, Result<(Value, Value)>) = match id {
        Identity::Roy => (pm.clone(), (|| Ok((eval(session, Method::Roy, &pm)?, vector(demand()?))))()),
        Identity::NormRoy => {
            let pn: Vec<f64> = p.iter().map(|p| p / m).collect();
            let pt = pm.clone().with_normalized(&pn);
            let r = (|| Ok((eval(session, Method::NormRoy, &pt)?, vector(demand()?))))();
            (pt, r)
        }
        Identity::Shephard | Identity::NormShephard => {
            let pn: Vec<f64> = p.iter().map(|p| p / m).collect();
            let mut pt = EvalPoint::default().with_prices(p);
            if id == Identity::NormShephard {
                pt = pt.with_normalized(&pn);
            }
            let r = (|| {
                let pt = with_level(pt.clone())?;
                let method = if id == Identity::Shephard {
                    Method::Shephard
                } else {
                    Method::NormShephard
                };
                Ok((eval(session, method, &pt)?, node(session, NodeId::Hdf, &pt)?))
            })();
            (with_level(pt.clone()).unwrap_or(pt), r)
        }
        Identity::HotellingWold => {
            let r = (|| {
                let x = demand()?;
                let phi = node(session, NodeId::Hidf, &EvalPoint::default().with_bundle(&x))?.components();
                let mut lhs = phi.clone();
                lhs.push(dot(&phi, &x));
                let mut rhs: Vec<f64> = p.iter().map(|p| p / m).collect();
                rhs.push(1.0);
                Ok((vector(lhs), vector(rhs)))
            })();
            (pm.clone(), r)
        }
        Identity::Antonelli => {
            let pt = with_level(EvalPoint::default().with_prices(p)).map(|pt| pt.with_bundle(q));
            let r = (|| {
                let pt = pt.clone()?;
                let u = pt.utility_or_err()?;
                let xc = node(session, NodeId::Hdf, &pt)?.components();
                let e = scalar(node(session, NodeId::Ef, &pt)?)?;
                let aidf = session.handle(NodeId::Aidf)?;
                let mut lhs = aidf.evaluate(&EvalPoint::default().with_bundle(&xc).with_utility(u))?.components();
                let at_q = aidf.evaluate(&EvalPoint::default().with_bundle(q).with_utility(u))?.components();
                lhs.push(dot(&at_q, q));
                let mut rhs: Vec<f64> = p.iter().map(|p| p / e).collect();
                rhs.push(scalar(node(session, NodeId::Df, &EvalPoint::default().with_bundle(q).with_utility(u))?)?);
                Ok((vector(lhs), vector(rhs)))
            })();
            (pt.unwrap_or(pm.clone()), r)
        }
        Identity::IufEfInverse => {
            let u_alt = session.utility().eval(q);
            let pt = match &u_alt {
                Ok(u) => pm.clone().with_utility(*u),
                Err(_) => pm.clone(),
            };
            let r = (|| {
                let u_alt = u_alt.clone()?;
                let v = scalar(node(session, NodeId::Iuf, &pm)?)?;
                let e_of_v = scalar(node(session, NodeId::Ef, &EvalPoint::default().with_prices(p).with_utility(v))?)?;
                let e = scalar(node(session, NodeId::Ef, &EvalPoint::default().with_prices(p).with_utility(u_alt))?)?;
                let v_of_e = scalar(node(session, NodeId::Iuf, &EvalPoint::default().with_prices(p).with_income(e))?)?;
                Ok((vector(vec![e_of_v, v_of_e]), vector(vec![m, u_alt])))
            })();
            (pt, r)
        }
        Identity::MdfHdfCrossU => {
            let u_alt = session.utility().eval(q);
            let pt = match &u_alt {
                Ok(u) => EvalPoint::default().with_prices(p).with_utility(*u),
                Err(_) => EvalPoint::default().with_prices(p),
            };
            let r = (|| {
                u_alt.clone()?;
                Ok((eval(session, Method::EfToHdfViaMdf, &pt)?, node(session, NodeId::Hdf, &pt)?))
            })();
            (pt, r)
        }
        Identity::MdfHdfCrossM => {
            let r = (|| Ok((eval(session, Method::IufToMdfViaHdf, &pm)?, vector(demand()?))))();
            (pm.clone(), r)
        }
        Identity::DufDfInverse => {
            let pt = EvalPoint::default().with_bundle(q);
            let r = (|| {
                let u = session.utility().eval(q)?;
                let d = scalar(node(session, NodeId::Df, &pt.clone().with_utility(u))?)?;
                let back = scalar(eval(session, Method::DfToDuf, &pt)?)?;
                Ok((vector(vec![d, back]), vector(vec![1.0, u])))
            })();
            (pt, r)
        }
        Identity::DualPairDufIuf => {
            let pt = EvalPoint::default().with_bundle(q);
            let r = check_dual_pair_duf_iuf(session, q)
                .map(|c| (Value::Scalar(c.dual), Value::Scalar(c.direct)));
            (pt, r)
        }
        Identity::DualPairDfEf => {
            let pt = match level() {
                Ok(u) => EvalPoint::default().with_bundle(q).with_utility(u),
                Err(_) => EvalPoint::default().with_bundle(q),
            };
            let r = (|| {
                let c = check_dual_pair_df_ef(session, q, level()?)?;
                Ok((Value::Scalar(c.dual), Value::Scalar(c.direct)))
            })();
            (pt, r)
        }
        Identity::Slutsky => {
            let r = slutsky_parts(session, p, m).map(|parts| {
                let n = p.len();
                let mut lhs = vec![];
                let mut rhs = vec![];
                for i in 0..n {
                    for j in 0..n {
                        lhs.push(parts.marshallian[i][j]);
                        rhs.push(parts.hicksian[i][j] - parts.income[i] * parts.demand[j]);
                    }
                }
                (vector(lhs), vector(rhs))
            });
            (pm.clone(), r)
        }
        Identity::SlutskySymmetry => {
            let r = slutsky_parts(session, p, m).map(|parts| {
                let n = p.len();
                let mut lhs = vec![];
                let mut rhs = vec![];
                for i in 0..n {
                    for j in i + 1..n {
                        lhs.push(parts.hicksian[i][j]);
                        rhs.push(parts.hicksian[j][i]);
                    }
                }
                (vector(lhs), vector(rhs))
            });
            (pm.clone(), r)
        }
        Identity::HidfInversion => {
            let pt = EvalPoint::default().with_bundle(q);
            let r = (|| {
                let phi = node(session, NodeId::Hidf, &pt)?.components();
                let at = EvalPoint::default().with_prices(&phi).with_income(1.0);
                let mut lhs = eval(session, Method::HidfToMdf, &at)?.components();
                lhs.extend(node(session, NodeId::Mdf, &at)?.components());
                let mut rhs = q.clone();
                rhs.extend(q.iter().copied());
                Ok((vector(lhs), vector(rhs)))
            })();
            (pt, r)
        }
        Identity::DualityGap => {
            let r = PriceIncome::new(p.clone(), m)
                .and_then(|pi| duality_gap(session, &pi))
                .map(|g| (Value::Scalar(g.d_star), Value::Scalar(g.p_star)));
            (pm.clone(), r)
        }
        Identity::LoopClosureShort | Identity::LoopClosureLong => {
            let path: &[Method] = if id == Identity::LoopClosureShort {
                &SHORT_LOOP
            } else {
                &LONG_LOOP
            };
            let pt = EvalPoint::default().with_bundle(q);
            let r = loop_values(session, path, &pt);
            (pt, r)
        }
    };
    Outcome::Done(point, result)
}

fn loop_values(session: &WheelSession, path: &[Method], pt: &EvalPoint) -> Result<(Value, Value)> {
    let trace = session.execute_path(NodeId::Duf, path, None)?;
    if let Some(e) = trace.error {
        return Err(e);
    }
    let handle = trace
        .handle
        .ok_or_else(|| Error::Invalid("loop produced no handle".into()))?;
    let original = session.handle(handle.node())?;
    Ok((handle.evaluate(pt)?, original.evaluate(pt)?))
}

fn tolerance_for(id: Identity, opts: &VerifyOptions) -> f64 {
    opts.tolerance.unwrap_or_else(|| id.default_tolerance())
}

fn run(session: &WheelSession, ids: &[Identity], opts: &VerifyOptions) -> ResidualReport {
    let mut report = ResidualReport::new(opts.seed, opts.samples, opts.tolerance);
    let samples = draw_samples(session.n_goods(), opts.samples.max(opts.loop_probes).max(opts.long_loop_probes), opts.seed);
    let prepared: Vec<Prepared> = samples
        .into_par_iter()
        .map(|s| prepare(session, s))
        .collect();
    for &id in ids {
        let count = match id {
            Identity::LoopClosureShort => opts.loop_probes,
            Identity::LoopClosureLong => opts.long_loop_probes,
            _ => opts.samples,
        };
        let tol = tolerance_for(id, opts);
        report.tolerances.insert(id.name().to_string(), tol);
        if id.bonus() {
            report.bonus_identities.push(id.name().to_string());
        }
        let outcomes: Vec<Outcome> = prepared[..count.min(prepared.len())]
            .par_iter()
            .map(|prep| evaluate_identity(session, id, prep))
            .collect();
        for o in outcomes {
            match o {
                Outcome::Excluded => *report.excluded.entry(id.name().to_string()).or_default() += 1,
                Outcome::Done(point, Ok((lhs, rhs))) => {
                    let residual = relative_residual(&lhs.components(), &rhs.components());
                    report.entries.push(ResidualEntry {
                        identity: id.name().to_string(),
                        point,
                        lhs: Some(lhs),
                        rhs: Some(rhs),
                        residual: Some(residual),
                        pass: residual <= tol,
                    });
                }
                Outcome::Done(point, Err(e)) => {
                    report.errors.push(EntryError {
                        identity: id.name().to_string(),
                        point: point.clone(),
                        kind: e.kind().to_string(),
                        message: e.to_string(),
                    });
                    report.entries.push(ResidualEntry {
                        identity: id.name().to_string(),
                        point,
                        lhs: None,
                        rhs: None,
                        residual: None,
                        pass: false,
                    });
                }
            }
        }
    }
    report.summarize();
    report
}

/// Residuals of one named identity over `opts.samples` seeded points.
/// Per-point failures are recorded; the check itself does not abort.
pub fn check_identity(session: &WheelSession, name: &str, opts: &VerifyOptions) -> Result<ResidualReport> {
    let id: Identity = name.parse()?;
    Ok(run(session, &[id], opts))
}

/// Several identities in one report, in the order given.
pub fn check_identities(session: &WheelSession, ids: &[Identity], opts: &VerifyOptions) -> ResidualReport {
    run(session, ids, opts)
}

/// Every identity, the duality gap, the inversion check and both loops.
pub fn verify_all(session: &WheelSession, opts: &VerifyOptions) -> ResidualReport {
    run(session, &Identity::ALL, opts)
}

/// Compares the handle at the end of `path` (which must return to its
/// starting node) against the session's own handle for that node.
pub fn check_loop_closure(
    session: &WheelSession,
    start: NodeId,
    path: &[Method],
    probes: &[EvalPoint],
    tolerance: f64,
) -> Result<ResidualReport> {
    if !is_connected_path(start, path) || path.last().map(|m| m.edge().to) != Some(start) {
        return Err(Error::Invalid(format!("{path:?} is not a loop through {start}")));
    }
    let trace = session.execute_path(start, path, None)?;
    if let Some(e) = trace.error {
        return Err(e);
    }
    let derived = trace
        .handle
        .ok_or_else(|| Error::Invalid("loop produced no handle".into()))?;
    let original = session.handle(start)?;
    let name = format!("loop_closure[{}]", path.iter().map(|m| m.name()).collect::<Vec<_>>().join(","));
    let mut report = ResidualReport::new(0, probes.len(), Some(tolerance));
    report.tolerances.insert(name.clone(), tolerance);
    let results: Vec<Result<(Value, Value)>> = probes
        .par_iter()
        .map(|pt| Ok((derived.evaluate(pt)?, original.evaluate(pt)?)))
        .collect();
    for (pt, r) in probes.iter().zip(results) {
        match r {
            Ok((lhs, rhs)) => {
                let residual = relative_residual(&lhs.components(), &rhs.components());
                report.entries.push(ResidualEntry {
                    identity: name.clone(),
                    point: pt.clone(),
                    lhs: Some(lhs),
                    rhs: Some(rhs),
                    residual: Some(residual),
                    pass: residual <= tolerance,
                });
            }
            Err(e) => {
                report.errors.push(EntryError {
                    identity: name.clone(),
                    point: pt.clone(),
                    kind: e.kind().into(),
                    message: e.to_string(),
                });
                report.entries.push(ResidualEntry {
                    identity: name.clone(),
                    point: pt.clone(),
                    lhs: None,
                    rhs: None,
                    residual: None,
                    pass: false,
                });
            }
        }
    }
    report.summarize();
    Ok(report)
}

/// Slopes entering the Slutsky equation at `(P, M)`, by central
/// differences of the session's canonical demand handles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlutskyParts {
    pub demand: Vec<f64>,
    pub utility: f64,
    /// `d x_i^M / d P_j`
    pub marshallian: Vec<Vec<f64>>,
    /// `d x_i^c / d P_j` at `u = V(P,M)`
    pub hicksian: Vec<Vec<f64>>,
    /// `d x_i^M / d M`
    pub income: Vec<f64>,
}

pub fn slutsky_parts(session: &WheelSession, p: &[f64], m: f64) -> Result<SlutskyParts> {
    let pi = PriceIncome::new(p.to_vec(), m)?;
    let (p, m) = (pi.prices(), pi.income());
    let n = p.len();
    let mdf = session.handle(NodeId::Mdf)?.mdf()?.clone();
    let hdf = session.handle(NodeId::Hdf)?.hdf()?.clone();
    let rel = session.settings().solver_fd_step;
    let demand = mdf(p, m)?;
    let utility = session.utility().eval(&demand)?;

    let step = |x: f64| (rel * x.abs().max(1.0)).min(0.5 * x);
    let mut marshallian = vec![vec![0.0; n]; n];
    let mut hicksian = vec![vec![0.0; n]; n];
    for j in 0..n {
        let h = step(p[j]);
        let mut up = p.to_vec();
        up[j] += h;
        let mut dn = p.to_vec();
        dn[j] -= h;
        let (xu, xd) = (mdf(&up, m)?, mdf(&dn, m)?);
        let (cu, cd) = (hdf(&up, utility)?, hdf(&dn, utility)?);
        for i in 0..n {
            marshallian[i][j] = (xu[i] - xd[i]) / (2.0 * h);
            hicksian[i][j] = (cu[i] - cd[i]) / (2.0 * h);
        }
    }
    let h = step(m);
    let (xu, xd) = (mdf(p, m + h)?, mdf(p, m - h)?);
    let income = (0..n).map(|i| (xu[i] - xd[i]) / (2.0 * h)).collect();
    Ok(SlutskyParts {
        demand,
        utility,
        marshallian,
        hicksian,
        income,
    })
}

/// The Slutsky equation for one `(i, j)` pair (zero-based goods).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlutskyCheck {
    pub i: usize,
    pub j: usize,
    /// `d x_i^M / d P_j`
    pub lhs: f64,
    /// `d x_i^c / d P_j`
    pub substitution_effect: f64,
    /// `-(d x_i^M / d M) x_j`
    pub income_effect: f64,
    pub rhs: f64,
    /// `|lhs - rhs| / max(1, |lhs|)`
    pub residual: f64,
}

pub fn check_slutsky(session: &WheelSession, pi: &PriceIncome, i: usize, j: usize) -> Result<SlutskyCheck> {
    let n = session.n_goods();
    if i >= n || j >= n {
        return Err(Error::Invalid(format!("goods {i}, {j} out of range for {n} goods")));
    }
    let parts = slutsky_parts(session, pi.prices(), pi.income())?;
    let lhs = parts.marshallian[i][j];
    let substitution_effect = parts.hicksian[i][j];
    let income_effect = -parts.income[i] * parts.demand[j];
    let rhs = substitution_effect + income_effect;
    Ok(SlutskyCheck {
        i,
        j,
        lhs,
        substitution_effect,
        income_effect,
        rhs,
        residual: (lhs - rhs).abs() / lhs.abs().max(1.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Income `M`, the money value of the primal optimum.
    pub p_star: f64,
    /// `E(P, V(P,M))`, the dual optimum at the primal utility level.
    pub d_star: f64,
    pub gap: f64,
    pub relative_gap: f64,
    pub utility: f64,
}

/// `M - E(P, V(P,M))` through the canonical IUF and EF handles.
pub fn duality_gap(session: &WheelSession, pi: &PriceIncome) -> Result<GapReport> {
    let (p, m) = (pi.prices(), pi.income());
    let v = session.handle(NodeId::Iuf)?.iuf()?(p, m)?;
    let e = session.handle(NodeId::Ef)?.ef()?(p, v)?;
    let gap = m - e;
    Ok(GapReport {
        p_star: m,
        d_star: e,
        gap,
        relative_gap: gap.abs() / m,
        utility: v,
    })
}

/// Bundles probed by [`demo_information_loss`]: a symmetric interior
/// point, lopsided points near each axis, and points along the diagonal.
pub const INFO_LOSS_PROBES: [[f64; 2]; 6] = [
    [1.0, 1.0],
    [1.5, 0.2],
    [0.2, 1.5],
    [2.0, 2.0],
    [0.5, 0.5],
    [1.2, 0.8],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoLossReport {
    pub utility: String,
    pub probes: Vec<Vec<f64>>,
    pub original_u_values: Vec<f64>,
    pub recovered_u_values: Vec<f64>,
    /// Index pairs into `probes` whose preference order differs.
    pub ranking_flips: Vec<(usize, usize)>,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub convexified: bool,
    /// Inversions that failed; their recovered value falls back to the
    /// dual-pair minimum `min { V(p,1) : p.q = 1 }`.
    pub inversion_errors: Vec<EntryError>,
}

/// The built-in non-convex demonstration `q1^2 + q2^2`.
pub fn demo_information_loss() -> Result<InfoLossReport> {
    let session = WheelSession::new(Family::NonconvexDemo.utility()?, Default::default());
    information_loss(&session)
}

/// Recovers utility through DUF -> MDF -> DUF at the fixed probes and
/// compares rankings with the original function.
pub fn information_loss(session: &WheelSession) -> Result<InfoLossReport> {
    const TOL: f64 = 1e-3;
    if session.n_goods() != 2 {
        return Err(Error::Invalid("the information-loss probes are two-good bundles".into()));
    }
    let trace = session.execute_path(NodeId::Duf, &SHORT_LOOP, None)?;
    if let Some(e) = trace.error {
        return Err(e);
    }
    let recovered = trace
        .handle
        .ok_or_else(|| Error::Invalid("loop produced no handle".into()))?;
    let probes: Vec<Vec<f64>> = INFO_LOSS_PROBES.iter().map(|q| q.to_vec()).collect();
    let results: Vec<(f64, Result<f64>)> = probes
        .par_iter()
        .map(|q| {
            let orig = session.utility().eval(q).unwrap_or(f64::NAN);
            let pt = EvalPoint::default().with_bundle(q);
            (orig, recovered.evaluate(&pt).and_then(scalar))
        })
        .collect();

    let mut original_u_values = vec![];
    let mut recovered_u_values = vec![];
    let mut inversion_errors = vec![];
    for (q, (orig, rec)) in probes.iter().zip(results) {
        original_u_values.push(orig);
        let value = match rec {
            Ok(v) => v,
            Err(e) => {
                inversion_errors.push(EntryError {
                    identity: "loop_closure_short".into(),
                    point: EvalPoint::default().with_bundle(q),
                    kind: e.kind().into(),
                    message: e.to_string(),
                });
                check_dual_pair_duf_iuf(session, q)?.dual
            }
        };
        recovered_u_values.push(value);
    }

    let mut ranking_flips = vec![];
    for a in 0..probes.len() {
        for b in a + 1..probes.len() {
            let o = order(original_u_values[a], original_u_values[b]);
            let r = order(recovered_u_values[a], recovered_u_values[b]);
            if let (Some(o), Some(r)) = (o, r) {
                if o != r {
                    ranking_flips.push((a, b));
                }
            }
        }
    }
    let max_deviation = original_u_values
        .iter()
        .zip(&recovered_u_values)
        .map(|(o, r)| (o - r).abs() / o.abs().max(1.0))
        .fold(0.0, f64::max);
    Ok(InfoLossReport {
        utility: crate::expr::format_expr(session.utility()),
        probes,
        original_u_values,
        recovered_u_values,
        convexified: !ranking_flips.is_empty() || max_deviation > TOL,
        ranking_flips,
        max_deviation,
        tolerance: TOL,
        inversion_errors,
    })
}

/// Strict order of two values, `None` when they tie within 1e-6.
fn order(a: f64, b: f64) -> Option<std::cmp::Ordering> {
    if (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0) {
        None
    } else {
        a.partial_cmp(&b)
    }
}

/// For `q1 + ln(q2)` on the interior regime `M > P1`: good 2's Marshallian
/// and Hicksian demands coincide and do not respond to income.
pub fn check_quasilinear_coincidence(opts: &VerifyOptions) -> Result<ResidualReport> {
    let session = WheelSession::new(Family::Quasilinear.utility()?, Default::default());
    let name = "quasilinear_coincidence";
    let tol = opts.tolerance.unwrap_or(SUBSTITUTION_TOL);
    let mut report = ResidualReport::new(opts.seed, opts.samples, Some(tol));
    report.tolerances.insert(name.into(), tol);
    let mdf = session.handle(NodeId::Mdf)?.mdf()?.clone();
    let hdf = session.handle(NodeId::Hdf)?.hdf()?.clone();
    let rel = session.settings().solver_fd_step;
    let samples = draw_samples(2, opts.samples, opts.seed);
    let outcomes: Vec<Option<(EvalPoint, Result<(Value, Value)>)>> = samples
        .par_iter()
        .map(|s| {
            let (p, m) = (&s.prices, s.income);
            // corner regime: all income goes to good 2
            if m <= p[0] * (1.0 + 1e-3) {
                return None;
            }
            let pt = EvalPoint::default().with_prices(p).with_income(m);
            let r = (|| {
                let x = mdf(p, m)?;
                let v = session.utility().eval(&x)?;
                let xc = hdf(p, v)?;
                let h = rel * m;
                let slope = (mdf(p, m + h)?[1] - mdf(p, m - h)?[1]) / (2.0 * h);
                Ok((vector(vec![x[1], slope]), vector(vec![xc[1], 0.0])))
            })();
            Some((pt, r))
        })
        .collect();
    for o in outcomes {
        match o {
            None => *report.excluded.entry(name.into()).or_default() += 1,
            Some((point, Ok((lhs, rhs)))) => {
                let residual = relative_residual(&lhs.components(), &rhs.components());
                report.entries.push(ResidualEntry {
                    identity: name.into(),
                    point,
                    lhs: Some(lhs),
                    rhs: Some(rhs),
                    residual: Some(residual),
                    pass: residual <= tol,
                });
            }
            Some((point, Err(e))) => {
                report.errors.push(EntryError {
                    identity: name.into(),
                    point: point.clone(),
                    kind: e.kind().into(),
                    message: e.to_string(),
                });
                report.entries.push(ResidualEntry {
                    identity: name.into(),
                    point,
                    lhs: None,
                    rhs: None,
                    residual: None,
                    pass: false,
                });
            }
        }
    }
    report.summarize();
    Ok(report)
}

/// Combines reports, e.g. one per family.
pub fn merge_reports(mut base: ResidualReport, others: impl IntoIterator<Item = ResidualReport>) -> ResidualReport {
    for o in others {
        base.merge(o);
    }
    base
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}
