//! Function handles: one evaluable realization of a wheel node.

use std::fmt;
use std::sync::Arc;

use super::graph::{Method, NodeId};
use super::point::{EvalPoint, Value};
use crate::error::{Error, Result};

/// `q -> R`
pub type FnQ = Arc<dyn Fn(&[f64]) -> Result<f64> + Send + Sync>;
/// `(vector, scalar) -> R`, e.g. `(P,M)`, `(P,u)`, `(q,u)`.
pub type FnVs = Arc<dyn Fn(&[f64], f64) -> Result<f64> + Send + Sync>;
/// `(vector, scalar) -> R^n`
pub type FnVsV = Arc<dyn Fn(&[f64], f64) -> Result<Vec<f64>> + Send + Sync>;
/// `vector -> R^n`
pub type FnVV = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;
/// `(P,q) -> R`
pub type FnVvs = Arc<dyn Fn(&[f64], &[f64]) -> Result<f64> + Send + Sync>;
/// `(P,M,q) -> R`
pub type FnBc = Arc<dyn Fn(&[f64], f64, &[f64]) -> Result<f64> + Send + Sync>;

/// Typed callable behind a handle. Normalized variants take `p = P/M`.
#[derive(Clone)]
pub enum Kernel {
    Duf(FnQ),
    Iuf(FnVs),
    Ef(FnVs),
    Df(FnVs),
    Mdf(FnVsV),
    Hdf(FnVsV),
    Hidf(FnVV),
    Aidf(FnVsV),
    Eaf(FnVvs),
    Bc(FnBc),
    NormMdf(FnVV),
    NormHdf(FnVsV),
}

impl Kernel {
    pub fn node(&self) -> NodeId {
        match self {
            Kernel::Duf(_) => NodeId::Duf,
            Kernel::Iuf(_) => NodeId::Iuf,
            Kernel::Ef(_) => NodeId::Ef,
            Kernel::Df(_) => NodeId::Df,
            Kernel::Mdf(_) | Kernel::NormMdf(_) => NodeId::Mdf,
            Kernel::Hdf(_) | Kernel::NormHdf(_) => NodeId::Hdf,
            Kernel::Hidf(_) => NodeId::Hidf,
            Kernel::Aidf(_) => NodeId::Aidf,
            Kernel::Eaf(_) => NodeId::Eaf,
            Kernel::Bc(_) => NodeId::Bc,
        }
    }

    pub fn normalized(&self) -> bool {
        matches!(self, Kernel::NormMdf(_) | Kernel::NormHdf(_))
    }
}

/// An evaluable function for one node, with the chain of transitions that
/// produced it. Handles are immutable and cheap to clone.
#[derive(Clone)]
pub struct FunctionHandle {
    kernel: Kernel,
    provenance: Vec<Method>,
    derivation: String,
    n_goods: usize,
}

impl fmt::Debug for FunctionHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionHandle")
            .field("node", &self.node())
            .field("normalized", &self.normalized())
            .field("provenance", &self.provenance)
            .finish()
    }
}

macro_rules! accessor {
    ($name:ident, $variant:ident, $ty:ty) => {
        pub fn $name(&self) -> Result<&$ty> {
            match &self.kernel {
                Kernel::$variant(f) => Ok(f),
                _ => Err(Error::Invalid(format!(
                    "handle for {} is not a {}",
                    self.describe(),
                    stringify!($variant)
                ))),
            }
        }
    };
}

impl FunctionHandle {
    pub(crate) fn new(
        kernel: Kernel,
        provenance: Vec<Method>,
        derivation: String,
        n_goods: usize,
    ) -> Self {
        Self {
            kernel,
            provenance,
            derivation,
            n_goods,
        }
    }

    pub fn node(&self) -> NodeId {
        self.kernel.node()
    }

    pub fn normalized(&self) -> bool {
        self.kernel.normalized()
    }

    /// Transitions that produced this handle, starting from DUF.
    pub fn provenance(&self) -> &[Method] {
        &self.provenance
    }

    /// Full derivation including secondary sources; unique per handle.
    pub fn derivation(&self) -> &str {
        &self.derivation
    }

    /// Last transition applied, if any.
    pub fn method(&self) -> Option<Method> {
        self.provenance.last().copied()
    }

    pub fn n_goods(&self) -> usize {
        self.n_goods
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    fn describe(&self) -> String {
        if self.normalized() {
            format!("normalized {}", self.node())
        } else {
            self.node().to_string()
        }
    }

    accessor!(duf, Duf, FnQ);
    accessor!(iuf, Iuf, FnVs);
    accessor!(ef, Ef, FnVs);
    accessor!(df, Df, FnVs);
    accessor!(mdf, Mdf, FnVsV);
    accessor!(hdf, Hdf, FnVsV);
    accessor!(hidf, Hidf, FnVV);
    accessor!(aidf, Aidf, FnVsV);
    accessor!(eaf, Eaf, FnVvs);
    accessor!(bc, Bc, FnBc);
    accessor!(norm_mdf, NormMdf, FnVV);
    accessor!(norm_hdf, NormHdf, FnVsV);

    /// Names of the point fields this handle reads.
    pub fn arguments(&self) -> &'static [&'static str] {
        match &self.kernel {
            Kernel::Duf(_) | Kernel::Hidf(_) => &["q"],
            Kernel::Iuf(_) | Kernel::Mdf(_) => &["P", "M"],
            Kernel::Ef(_) | Kernel::Hdf(_) => &["P", "u"],
            Kernel::Df(_) | Kernel::Aidf(_) => &["q", "u"],
            Kernel::Eaf(_) => &["P", "q"],
            Kernel::Bc(_) => &["P", "M", "q"],
            Kernel::NormMdf(_) => &["p"],
            Kernel::NormHdf(_) => &["p", "u"],
        }
    }

    /// True when `pt` carries every field this handle reads.
    pub fn accepts(&self, pt: &EvalPoint) -> bool {
        self.arguments().iter().all(|a| match *a {
            "P" => pt.prices.is_some(),
            "M" => pt.income.is_some(),
            "u" => pt.utility.is_some(),
            "q" => pt.bundle.is_some(),
            "p" => pt.normalized.is_some(),
            _ => false,
        })
    }

    pub fn evaluate(&self, pt: &EvalPoint) -> Result<Value> {
        let vec_arg = |v: Result<&[f64]>, name: &str| -> Result<Vec<f64>> {
            let v = v?;
            if v.len() != self.n_goods {
                return Err(Error::Invalid(format!(
                    "'{name}' has {} components, expected {}",
                    v.len(),
                    self.n_goods
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Invalid(format!("'{name}' must be finite")));
            }
            Ok(v.to_vec())
        };
        let prices = || -> Result<Vec<f64>> {
            let p = vec_arg(pt.prices_or_err(), "P")?;
            if p.iter().any(|&x| x <= 0.0) {
                return Err(Error::domain("prices must be strictly positive"));
            }
            Ok(p)
        };
        let norm = || -> Result<Vec<f64>> {
            let p = vec_arg(pt.normalized_or_err(), "p")?;
            if p.iter().any(|&x| x <= 0.0) {
                return Err(Error::domain("normalized prices must be strictly positive"));
            }
            Ok(p)
        };
        let income = || -> Result<f64> {
            let m = pt.income_or_err()?;
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::domain("income must be positive and finite"));
            }
            Ok(m)
        };
        let bundle = || -> Result<Vec<f64>> {
            let q = vec_arg(pt.bundle_or_err(), "q")?;
            if q.iter().any(|&x| x < 0.0) {
                return Err(Error::domain("bundle components must be non-negative"));
            }
            Ok(q)
        };
        let utility = || -> Result<f64> {
            let u = pt.utility_or_err()?;
            if !u.is_finite() {
                return Err(Error::Invalid("'u' must be finite".into()));
            }
            Ok(u)
        };
        Ok(match &self.kernel {
            Kernel::Duf(f) => Value::Scalar(f(&bundle()?)?),
            Kernel::Iuf(f) => Value::Scalar(f(&prices()?, income()?)?),
            Kernel::Ef(f) => Value::Scalar(f(&prices()?, utility()?)?),
            Kernel::Df(f) => Value::Scalar(f(&bundle()?, utility()?)?),
            Kernel::Mdf(f) => Value::Vector(f(&prices()?, income()?)?),
            Kernel::Hdf(f) => Value::Vector(f(&prices()?, utility()?)?),
            Kernel::Hidf(f) => Value::Vector(f(&bundle()?)?),
            Kernel::Aidf(f) => Value::Vector(f(&bundle()?, utility()?)?),
            Kernel::Eaf(f) => Value::Scalar(f(&prices()?, &bundle()?)?),
            Kernel::Bc(f) => Value::Scalar(f(&prices()?, income()?, &bundle()?)?),
            Kernel::NormMdf(f) => Value::Vector(f(&norm()?)?),
            Kernel::NormHdf(f) => Value::Vector(f(&norm()?, utility()?)?),
        })
    }
}
