//! The wheel as a typed graph: ten nodes, four relationship kinds, and the
//! registry of named edges. Executable edges are transitions a session can
//! run; the remaining edges record relationships that are checked rather
//! than executed.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeId {
    #[serde(rename = "DUF")]
    Duf,
    #[serde(rename = "IUF")]
    Iuf,
    #[serde(rename = "EF")]
    Ef,
    #[serde(rename = "DF")]
    Df,
    #[serde(rename = "MDF")]
    Mdf,
    #[serde(rename = "HDF")]
    Hdf,
    #[serde(rename = "HIDF")]
    Hidf,
    #[serde(rename = "AIDF")]
    Aidf,
    #[serde(rename = "BC")]
    Bc,
    #[serde(rename = "EAF")]
    Eaf,
}

impl NodeId {
    pub const ALL: [NodeId; 10] = [
        NodeId::Duf,
        NodeId::Iuf,
        NodeId::Ef,
        NodeId::Df,
        NodeId::Mdf,
        NodeId::Hdf,
        NodeId::Hidf,
        NodeId::Aidf,
        NodeId::Bc,
        NodeId::Eaf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeId::Duf => "DUF",
            NodeId::Iuf => "IUF",
            NodeId::Ef => "EF",
            NodeId::Df => "DF",
            NodeId::Mdf => "MDF",
            NodeId::Hdf => "HDF",
            NodeId::Hidf => "HIDF",
            NodeId::Aidf => "AIDF",
            NodeId::Bc => "BC",
            NodeId::Eaf => "EAF",
        }
    }

    /// Argument roles and result, e.g. `(P,M) -> q`.
    pub fn signature(self) -> &'static str {
        match self {
            NodeId::Duf => "q -> U",
            NodeId::Iuf => "(P,M) -> V",
            NodeId::Ef => "(P,u) -> E",
            NodeId::Df => "(q,u) -> D",
            NodeId::Mdf => "(P,M) -> q",
            NodeId::Hdf => "(P,u) -> q",
            NodeId::Hidf => "q -> p",
            NodeId::Aidf => "(q,u) -> p",
            NodeId::Bc => "(P,M,q) -> M - P.q",
            NodeId::Eaf => "(P,q) -> P.q",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            NodeId::Duf => "Direct Utility Function",
            NodeId::Iuf => "Indirect Utility Function",
            NodeId::Ef => "Expenditure Function",
            NodeId::Df => "Distance Function",
            NodeId::Mdf => "Marshallian Demand Function",
            NodeId::Hdf => "Hicksian Demand Function",
            NodeId::Hidf => "Hotelling-style Inverse Demand Function",
            NodeId::Aidf => "Antonelli-style Inverse Demand Function",
            NodeId::Bc => "Budget Constraint",
            NodeId::Eaf => "Expenditure Amount Function",
        }
    }

    /// Whether the node sits on the primal (utility maximization) half.
    pub fn primal_side(self) -> bool {
        matches!(
            self,
            NodeId::Duf | NodeId::Iuf | NodeId::Mdf | NodeId::Hidf | NodeId::Bc
        )
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NodeId::ALL
            .into_iter()
            .find(|n| n.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Invalid(format!("unknown wheel node '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Dual,
    Inverse,
    Counterpart,
    Derivative,
}

macro_rules! methods {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// Named edge methods. The `t_` methods are executable transitions.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Method { $($variant),* }

        impl Method {
            pub const ALL: &'static [Method] = &[$(Method::$variant),*];

            pub fn name(self) -> &'static str {
                match self { $(Method::$variant => $name),* }
            }
        }
    };
}

methods! {
    PrimalSolve => "t_primal_solve",
    MdfToIuf => "t_mdf_to_iuf",
    Roy => "t_roy",
    NormRoy => "t_norm_roy",
    IufToEf => "t_iuf_to_ef",
    EfToIuf => "t_ef_to_iuf",
    DualSolve => "t_dual_solve",
    HdfToEf => "t_hdf_to_ef",
    Shephard => "t_shephard",
    NormShephard => "t_norm_shephard",
    HotellingWold => "t_hotelling_wold",
    HidfToMdf => "t_hidf_to_mdf",
    Antonelli => "t_antonelli",
    AidfToHdf => "t_aidf_to_hdf",
    DufToDf => "t_duf_to_df",
    DfToDuf => "t_df_to_duf",
    MdfToDuf => "t_mdf_to_duf",
    HdfToEaf => "t_hdf_to_eaf",
    IufToMdfViaHdf => "t_iuf_to_mdf_via_hdf",
    EfToHdfViaMdf => "t_ef_to_hdf_via_mdf",
    EafToBc => "t_eaf_to_bc",
    DualPairDufIuf => "check_dual_pair_duf_iuf",
    DualPairDfEf => "check_dual_pair_df_ef",
    Slutsky => "slutsky",
    CounterpartPrices => "counterpart_inverse_demands",
    PrimalProblem => "primal_problem",
    DualProblemDistance => "dual_problem_distance",
    DualProblemAmount => "dual_problem_amount",
}

impl Method {
    pub fn is_transition(self) -> bool {
        self.name().starts_with("t_")
    }

    /// Transitions whose result takes normalized prices.
    pub fn is_normalized(self) -> bool {
        matches!(self, Method::NormRoy | Method::NormShephard)
    }

    pub fn edge(self) -> &'static WheelEdge {
        registry()
            .iter()
            .find(|e| e.method == self)
            .expect("every method has a registry edge")
    }

    /// Source nodes besides the edge's `from` node.
    pub fn extra_sources(self) -> &'static [NodeId] {
        match self {
            Method::AidfToHdf => &[NodeId::Df],
            Method::MdfToDuf => &[NodeId::Iuf],
            Method::HdfToEaf => &[NodeId::Ef],
            Method::IufToMdfViaHdf => &[NodeId::Hdf],
            Method::EfToHdfViaMdf => &[NodeId::Mdf],
            _ => &[],
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Invalid(format!("unknown edge '{s}'")))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WheelEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
    pub method: Method,
    pub bidirectional: bool,
    pub executable: bool,
    pub label: &'static str,
    pub formula: &'static str,
}

const fn edge(
    from: NodeId,
    to: NodeId,
    kind: EdgeKind,
    method: Method,
    label: &'static str,
    formula: &'static str,
) -> WheelEdge {
    WheelEdge {
        from,
        to,
        kind,
        method,
        bidirectional: false,
        executable: true,
        label,
        formula,
    }
}

const fn relation(
    from: NodeId,
    to: NodeId,
    kind: EdgeKind,
    method: Method,
    bidirectional: bool,
    label: &'static str,
    formula: &'static str,
) -> WheelEdge {
    WheelEdge {
        from,
        to,
        kind,
        method,
        bidirectional,
        executable: false,
        label,
        formula,
    }
}

use EdgeKind::*;
use NodeId::*;

static REGISTRY: [WheelEdge; 28] = [
    edge(Duf, Mdf, Derivative, Method::PrimalSolve, "Utility maximization", "x^M(P,M) = argmax_q { U(q) | P.q <= M }"),
    edge(Mdf, Iuf, Derivative, Method::MdfToIuf, "Substitution of MDF into DUF", "V(P,M) = U(x^M(P,M))"),
    edge(Iuf, Mdf, Derivative, Method::Roy, "Roy's Identity", "x_i^M = -(dV/dP_i) / (dV/dM)"),
    edge(Iuf, Mdf, Derivative, Method::NormRoy, "Normalized Roy's Identity", "x_i^M(p) = (dV/dp_i) / sum_j p_j dV/dp_j"),
    edge(Iuf, Ef, Inverse, Method::IufToEf, "IUF vs. EF", "V(P, E(P,u)) = u"),
    edge(Ef, Iuf, Inverse, Method::EfToIuf, "EF vs. IUF", "E(P, V(P,M)) = M"),
    edge(Duf, Hdf, Derivative, Method::DualSolve, "Expenditure minimization", "x^c(P,u) = argmin_q { P.q | U(q) >= u }"),
    edge(Hdf, Ef, Derivative, Method::HdfToEf, "Substitution of HDF into EAF", "E(P,u) = P.x^c(P,u)"),
    edge(Ef, Hdf, Derivative, Method::Shephard, "Shephard's Lemma", "x_i^c = dE(P,u)/dP_i"),
    edge(Ef, Hdf, Derivative, Method::NormShephard, "Normalized Shephard's Lemma", "x_i^c(p,u) = dE(p,u)/dp_i"),
    edge(Duf, Hidf, Derivative, Method::HotellingWold, "Hotelling-Wold Identity", "phi_i(q) = (dU/dq_i) / sum_j (dU/dq_j) q_j"),
    edge(Hidf, Mdf, Inverse, Method::HidfToMdf, "Inversion of HIDF", "solve phi(q) = P/M for q"),
    edge(Df, Aidf, Derivative, Method::Antonelli, "Antonelli Equation", "psi_i(q,u) = dD(q,u)/dq_i"),
    edge(Aidf, Hdf, Inverse, Method::AidfToHdf, "Inversion of AIDF", "solve psi(q,u) = P/E with D(q,u) = 1"),
    edge(Duf, Df, Inverse, Method::DufToDf, "DUF vs. DF", "U(q / D(q,u)) = u"),
    edge(Df, Duf, Inverse, Method::DfToDuf, "DF vs. DUF", "U(q) = u such that D(q,u) = 1"),
    edge(Mdf, Duf, Derivative, Method::MdfToDuf, "Substitution of the inverse MDF into IUF", "U(q) = V(P(x^M), M)"),
    edge(Hdf, Eaf, Derivative, Method::HdfToEaf, "Substitution of the inverse HDF into EF", "E(P,q) = E(P(x^c), u)"),
    edge(Iuf, Mdf, Derivative, Method::IufToMdfViaHdf, "MDF from HDF", "x^M = x^c(P, V(P,M))"),
    edge(Ef, Hdf, Derivative, Method::EfToHdfViaMdf, "HDF from MDF", "x^c = x^M(P, E(P,u))"),
    edge(Eaf, Bc, Counterpart, Method::EafToBc, "Budget constraint from expenditure amount", "M - P.q >= 0"),
    relation(Duf, Iuf, Dual, Method::DualPairDufIuf, true, "DUF and IUF are dual", "U(q) = min_p { V(p) | p.q = 1 }"),
    relation(Df, Ef, Dual, Method::DualPairDfEf, true, "DF and EF are dual", "D(q,u) = min_p { p.q | E(p,u) = 1 }"),
    relation(Mdf, Hdf, Counterpart, Method::Slutsky, true, "Slutsky Equation", "dx_i^M/dP_j = dx_i^c/dP_j - (dx_i^M/dM) x_j"),
    relation(Hidf, Aidf, Counterpart, Method::CounterpartPrices, true, "Optimal normalized prices", "phi(x^M(P,M)) = P/M, psi(x^c(P,u),u) = P/E"),
    relation(Bc, Mdf, Derivative, Method::PrimalProblem, false, "Budget constraint of the primal problem", "P.q <= M"),
    relation(Df, Hdf, Derivative, Method::DualProblemDistance, false, "Dual problem with the distance constraint", "min_q { P.q | D(q,u) = 1 }"),
    relation(Eaf, Hdf, Derivative, Method::DualProblemAmount, false, "Expenditure amount as the dual objective", "min_q { E(P,q) | U(q) >= u }"),
];

pub fn registry() -> &'static [WheelEdge] {
    &REGISTRY
}

/// Unordered node pairs carrying an edge of `kind`.
pub fn kind_pairs(kind: EdgeKind) -> Vec<(NodeId, NodeId)> {
    let mut pairs: Vec<(NodeId, NodeId)> = registry()
        .iter()
        .filter(|e| e.kind == kind)
        .map(|e| if e.from <= e.to { (e.from, e.to) } else { (e.to, e.from) })
        .collect();
    pairs.sort();
    pairs.dedup();
    pairs
}

/// Shortest chain of executable transitions from `from` to `to`, by edge
/// count. Breadth-first; outgoing edges are explored in lexical order of
/// their method names, so the result is deterministic. Normalized-price
/// transitions are not used for planning.
pub fn plan_path(from: NodeId, to: NodeId) -> Result<Vec<&'static WheelEdge>> {
    if from == to {
        return Ok(vec![]);
    }
    let mut outgoing: HashMap<NodeId, Vec<&'static WheelEdge>> = HashMap::new();
    for e in registry()
        .iter()
        .filter(|e| e.executable && !e.method.is_normalized())
    {
        outgoing.entry(e.from).or_default().push(e);
    }
    for v in outgoing.values_mut() {
        v.sort_by_key(|e| e.method.name());
    }

    let mut parent: HashMap<NodeId, &'static WheelEdge> = HashMap::new();
    let mut queue = VecDeque::from([from]);
    while let Some(node) = queue.pop_front() {
        for e in outgoing.get(&node).map(Vec::as_slice).unwrap_or(&[]) {
            if e.to == from || parent.contains_key(&e.to) {
                continue;
            }
            parent.insert(e.to, e);
            if e.to == to {
                let mut path = vec![*e];
                let mut cur = e.from;
                while cur != from {
                    let p = parent[&cur];
                    path.push(p);
                    cur = p.from;
                }
                path.reverse();
                return Ok(path);
            }
            queue.push_back(e.to);
        }
    }
    Err(Error::NoPath {
        from: from.to_string(),
        to: to.to_string(),
    })
}

/// True when `methods` is a chain of transitions, each starting where the
/// previous one ended, beginning at `start`.
pub fn is_connected_path(start: NodeId, methods: &[Method]) -> bool {
    let mut at = start;
    for m in methods {
        let e = m.edge();
        if !e.executable || e.from != at {
            return false;
        }
        at = e.to;
    }
    true
}
