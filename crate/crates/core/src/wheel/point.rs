//! Evaluation points and values for wheel functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named arguments a wheel function may need. Each node reads the subset
/// matching its signature: `P` prices, `M` income, `u` utility level,
/// `q` bundle, `p` normalized prices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalPoint {
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub prices: Option<Vec<f64>>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub income: Option<f64>,
    #[serde(rename = "u", default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<f64>,
    #[serde(rename = "q", default, skip_serializing_if = "Option::is_none")]
    pub bundle: Option<Vec<f64>>,
    #[serde(rename = "p", default, skip_serializing_if = "Option::is_none")]
    pub normalized: Option<Vec<f64>>,
}

impl EvalPoint {
    pub fn with_prices(mut self, p: &[f64]) -> Self {
        self.prices = Some(p.to_vec());
        self
    }

    pub fn with_income(mut self, m: f64) -> Self {
        self.income = Some(m);
        self
    }

    pub fn with_utility(mut self, u: f64) -> Self {
        self.utility = Some(u);
        self
    }

    pub fn with_bundle(mut self, q: &[f64]) -> Self {
        self.bundle = Some(q.to_vec());
        self
    }

    pub fn with_normalized(mut self, p: &[f64]) -> Self {
        self.normalized = Some(p.to_vec());
        self
    }

    pub fn prices_or_err(&self) -> Result<&[f64]> {
        self.prices.as_deref().ok_or_else(|| missing("P"))
    }

    pub fn income_or_err(&self) -> Result<f64> {
        self.income.ok_or_else(|| missing("M"))
    }

    pub fn utility_or_err(&self) -> Result<f64> {
        self.utility.ok_or_else(|| missing("u"))
    }

    pub fn bundle_or_err(&self) -> Result<&[f64]> {
        self.bundle.as_deref().ok_or_else(|| missing("q"))
    }

    pub fn normalized_or_err(&self) -> Result<&[f64]> {
        self.normalized.as_deref().ok_or_else(|| missing("p"))
    }

    /// Parses the compact `key=v1,v2;key=v` form, e.g. `P=1,1;u=1`.
    pub fn parse_compact(text: &str) -> Result<Self> {
        let mut pt = EvalPoint::default();
        for part in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, vals) = part
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("expected key=value, got '{part}'")))?;
            let nums = vals
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Invalid(format!("not a number: '{}'", v.trim())))
                })
                .collect::<Result<Vec<f64>>>()?;
            let scalar = || -> Result<f64> {
                match nums.as_slice() {
                    [x] => Ok(*x),
                    _ => Err(Error::Invalid(format!("'{key}' takes a single number"))),
                }
            };
            match key.trim() {
                "P" => pt.prices = Some(nums.clone()),
                "M" => pt.income = Some(scalar()?),
                "u" => pt.utility = Some(scalar()?),
                "q" => pt.bundle = Some(nums.clone()),
                "p" => pt.normalized = Some(nums.clone()),
                other => return Err(Error::Invalid(format!("unknown point field '{other}'"))),
            }
        }
        Ok(pt)
    }
}

fn missing(field: &str) -> Error {
    Error::Invalid(format!("evaluation point is missing '{field}'"))
}

/// Result of evaluating a wheel function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Value {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(v) => Some(*v),
            Value::Vector(_) => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Value::Scalar(_) => None,
            Value::Vector(v) => Some(v),
        }
    }

    /// Components as a slice-like vector (a scalar is one component).
    pub fn components(&self) -> Vec<f64> {
        match self {
            Value::Scalar(v) => vec![*v],
            Value::Vector(v) => v.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_field_names() {
        let pt: EvalPoint = serde_json::from_str(r#"{"P":[1,1],"M":2}"#).unwrap();
        assert_eq!(pt.prices, Some(vec![1.0, 1.0]));
        assert_eq!(pt.income, Some(2.0));
        assert!(serde_json::from_str::<EvalPoint>(r#"{"X":1}"#).is_err());
        let s = serde_json::to_string(&EvalPoint::default().with_utility(1.5)).unwrap();
        assert_eq!(s, r#"{"u":1.5}"#);
    }

    #[test]
    fn compact_form() {
        let pt = EvalPoint::parse_compact("P=1,2; u=1").unwrap();
        assert_eq!(pt.prices, Some(vec![1.0, 2.0]));
        assert_eq!(pt.utility, Some(1.0));
        assert!(EvalPoint::parse_compact("u=1,2").is_err());
        assert!(EvalPoint::parse_compact("Z=1").is_err());
        assert_eq!(pt.income_or_err().unwrap_err().kind(), "InvalidArgument");
    }

    #[test]
    fn values_serialize_untagged() {
        assert_eq!(serde_json::to_string(&Value::Scalar(2.0)).unwrap(), "2.0");
        assert_eq!(serde_json::to_string(&Value::Vector(vec![1.0])).unwrap(), "[1.0]");
    }
}
