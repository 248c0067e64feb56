//! Request and response payloads, and the operations behind them. The CLI
//! and the HTTP service both go through these functions, so their JSON is
//! identical for identical inputs.

use duality_core::expr::format_expr;
use duality_core::families::Family;
use duality_core::numkit::{maximize_on_budget, minimize_expenditure, PriceIncome, SolveResult};
use duality_core::verify::{
    check_identities, check_slutsky, demo_information_loss, information_loss, relative_residual,
    verify_all, Identity, InfoLossReport, ResidualReport, VerifyOptions, DERIVATIVE_TOL,
    SUBSTITUTION_TOL,
};
use duality_core::wheel::{
    plan_path, registry, EdgeKind, EvalPoint, Method, NodeId, PathStep, Value, WheelEdge,
    WheelSession,
};
use duality_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Error payload: `{"error": {"kind", "message", "position"?}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
}

impl From<&Error> for ErrorBody {
    fn from(e: &Error) -> Self {
        Self {
            kind: e.kind().into(),
            message: e.to_string(),
            position: e.position(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub error: ErrorBody,
}

/// Where a session's utility comes from: literal text or a named family
/// such as `cobb_douglas:a1=0.3`.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub utility: Option<String>,
    pub family: Option<String>,
}

impl CreateSession {
    pub fn utility_text(&self) -> Result<String> {
        match (&self.utility, &self.family) {
            (Some(u), None) => Ok(u.clone()),
            (None, Some(f)) => Ok(f.parse::<Family>()?.utility_text()),
            (Some(_), Some(_)) => Err(Error::Invalid("give either utility or family, not both".into())),
            (None, None) => Err(Error::Invalid("a utility or a family is required".into())),
        }
    }

    pub fn build(&self) -> Result<WheelSession> {
        WheelSession::from_text(&self.utility_text()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingsPayload {
    pub fd_step: f64,
    pub solver_fd_step: f64,
    pub inversion_tol: f64,
    pub derivative_tolerance: f64,
    pub substitution_tolerance: f64,
}

impl SettingsPayload {
    pub fn of(session: &WheelSession) -> Self {
        let s = session.settings();
        Self {
            fd_step: s.fd_step,
            solver_fd_step: s.solver_fd_step,
            inversion_tol: s.inversion_tol,
            derivative_tolerance: DERIVATIVE_TOL,
            substitution_tolerance: SUBSTITUTION_TOL,
        }
    }
}

/// What a session was built from; `utility_text` re-parses to the
/// session's expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub n_goods: usize,
    pub utility_text: String,
    pub created_at: String,
    pub settings: SettingsPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodePayload {
    pub id: NodeId,
    pub title: &'static str,
    pub signature: &'static str,
    pub side: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgePayload {
    pub id: Method,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
    pub label: &'static str,
    pub formula: &'static str,
    pub bidirectional: bool,
    pub executable: bool,
    pub transition: bool,
}

impl From<&WheelEdge> for EdgePayload {
    fn from(e: &WheelEdge) -> Self {
        Self {
            id: e.method,
            from: e.from,
            to: e.to,
            kind: e.kind,
            label: e.label,
            formula: e.formula,
            bidirectional: e.bidirectional,
            executable: e.executable,
            transition: e.method.is_transition(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphPayload {
    pub nodes: Vec<NodePayload>,
    pub edges: Vec<EdgePayload>,
    pub kinds: [EdgeKind; 4],
}

pub fn graph() -> GraphPayload {
    GraphPayload {
        nodes: NodeId::ALL
            .iter()
            .map(|&id| NodePayload {
                id,
                title: id.title(),
                signature: id.signature(),
                side: if id.primal_side() { "primal" } else { "dual" },
            })
            .collect(),
        edges: registry().iter().map(EdgePayload::from).collect(),
        kinds: [
            EdgeKind::Dual,
            EdgeKind::Inverse,
            EdgeKind::Counterpart,
            EdgeKind::Derivative,
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateRequest {
    pub node: String,
    pub point: EvalPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluateResponse {
    pub node: NodeId,
    pub point: EvalPoint,
    pub value: Value,
    pub derivation: String,
    pub provenance: Vec<Method>,
}

pub fn evaluate(session: &WheelSession, req: &EvaluateRequest) -> Result<EvaluateResponse> {
    let node: NodeId = req.node.parse()?;
    let handle = session.handle(node)?;
    Ok(EvaluateResponse {
        node,
        point: req.point.clone(),
        value: handle.evaluate(&req.point)?,
        derivation: handle.derivation().into(),
        provenance: handle.provenance().to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionRequest {
    pub edge: String,
    #[serde(default)]
    pub point: Option<EvalPoint>,
}

/// The same node reached along the session's planned route.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteComparison {
    pub derivation: String,
    pub value: Value,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionResponse {
    pub edge: Method,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<EvalPoint>,
    pub value: Option<Value>,
    pub derivation: String,
    pub provenance: Vec<Method>,
    pub trace: Vec<PathStep>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<RouteComparison>,
}

pub fn transition(session: &WheelSession, req: &TransitionRequest) -> Result<TransitionResponse> {
    let method: Method = req.edge.parse()?;
    let edge = method.edge();
    if !method.is_transition() {
        return Err(Error::Invalid(format!("{method} is a relation, not an executable transition")));
    }
    let handle = session.transition(method)?;
    let point = req.point.as_ref();
    let value = point.map(|p| handle.evaluate(p)).transpose()?;
    let trace = session.execute_path(NodeId::Duf, handle.provenance(), point)?;
    if let Some(e) = trace.error {
        return Err(e);
    }
    let comparison = match (point, &value) {
        (Some(p), Some(v)) => {
            let canonical = session.handle(handle.node())?;
            if canonical.derivation() != handle.derivation() && canonical.accepts(p) {
                canonical.evaluate(p).ok().map(|c| RouteComparison {
                    derivation: canonical.derivation().into(),
                    residual: relative_residual(&v.components(), &c.components()),
                    value: c,
                })
            } else {
                None
            }
        }
        _ => None,
    };
    Ok(TransitionResponse {
        edge: method,
        from: edge.from,
        to: edge.to,
        kind: edge.kind,
        point: req.point.clone(),
        value,
        derivation: handle.derivation().into(),
        provenance: handle.provenance().to_vec(),
        trace: trace.steps,
        comparison,
    })
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRequest {
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub point: Option<EvalPoint>,
}

/// A planned path, executed when a point is given. Execution failures
/// leave the completed steps in `trace` and the cause in `error`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanResponse {
    pub from: NodeId,
    pub to: NodeId,
    pub path: Vec<Method>,
    pub edges: Vec<EdgePayload>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<EvalPoint>,
    pub trace: Vec<PathStep>,
    pub value: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

pub fn plan(session: &WheelSession, req: &PlanRequest) -> Result<PlanResponse> {
    let from: NodeId = req.from.parse()?;
    let to: NodeId = req.to.parse()?;
    let edges = plan_path(from, to)?;
    let path: Vec<Method> = edges.iter().map(|e| e.method).collect();
    let trace = session.execute_path(from, &path, req.point.as_ref())?;
    let value = match (&trace.error, &req.point, &trace.handle) {
        (None, Some(p), Some(h)) if path.is_empty() => Some(h.evaluate(p)?),
        (None, Some(_), _) => trace.steps.last().and_then(|s| s.value.clone()),
        _ => None,
    };
    Ok(PlanResponse {
        from,
        to,
        edges: edges.into_iter().map(EdgePayload::from).collect(),
        path,
        point: req.point.clone(),
        value,
        error: trace.error.as_ref().map(ErrorBody::from),
        trace: trace.steps,
    })
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyRequest {
    #[serde(default)]
    pub identities: Option<Vec<String>>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

impl Default for VerifyRequest {
    fn default() -> Self {
        Self {
            identities: None,
            samples: default_samples(),
            seed: default_seed(),
            tolerance: None,
        }
    }
}

fn default_samples() -> usize {
    25
}

fn default_seed() -> u64 {
    42
}

/// Upper bound on `samples`; keeps one request from monopolizing the service.
pub const MAX_SAMPLES: usize = 1000;

pub fn verify(session: &WheelSession, req: &VerifyRequest) -> Result<ResidualReport> {
    if req.samples == 0 || req.samples > MAX_SAMPLES {
        return Err(Error::Invalid(format!("samples must be in 1..={MAX_SAMPLES}, got {}", req.samples)));
    }
    if let Some(t) = req.tolerance {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Invalid(format!("tolerance must be positive, got {t}")));
        }
    }
    let opts = VerifyOptions {
        samples: req.samples,
        seed: req.seed,
        tolerance: req.tolerance,
        ..VerifyOptions::default()
    };
    Ok(match &req.identities {
        None => verify_all(session, &opts),
        Some(names) => {
            let ids = names.iter().map(|n| n.parse()).collect::<Result<Vec<Identity>>>()?;
            check_identities(session, &ids, &opts)
        }
    })
}

/// Goods are numbered from 1 on the wire.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlutskyRequest {
    #[serde(rename = "P")]
    pub prices: Vec<f64>,
    #[serde(rename = "M")]
    pub income: f64,
    pub i: usize,
    pub j: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlutskyResponse {
    #[serde(rename = "P")]
    pub prices: Vec<f64>,
    #[serde(rename = "M")]
    pub income: f64,
    pub i: usize,
    pub j: usize,
    /// `d x_i^M / d P_j`
    pub total_effect: f64,
    pub substitution_effect: f64,
    pub income_effect: f64,
    pub rhs: f64,
    pub residual: f64,
}

pub fn slutsky(session: &WheelSession, req: &SlutskyRequest) -> Result<SlutskyResponse> {
    if req.i == 0 || req.j == 0 {
        return Err(Error::Invalid("goods are numbered from 1".into()));
    }
    let pi = PriceIncome::new(req.prices.clone(), req.income)?;
    let c = check_slutsky(session, &pi, req.i - 1, req.j - 1)?;
    Ok(SlutskyResponse {
        prices: req.prices.clone(),
        income: req.income,
        i: req.i,
        j: req.j,
        total_effect: c.lhs,
        substitution_effect: c.substitution_effect,
        income_effect: c.income_effect,
        rhs: c.rhs,
        residual: c.residual,
    })
}

/// The non-convex demonstration next to the same procedure run on a
/// control utility.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoResponse {
    pub demo: InfoLossReport,
    pub control: Option<InfoLossReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control_error: Option<ErrorBody>,
}

pub fn demo_nonconvex(control: &WheelSession) -> Result<DemoResponse> {
    let demo = demo_information_loss()?;
    let (control, control_error) = match information_loss(control) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(ErrorBody::from(&e))),
    };
    Ok(DemoResponse {
        demo,
        control,
        control_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Primal,
    Dual,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResponse {
    pub utility: String,
    pub problem: Problem,
    #[serde(rename = "P")]
    pub prices: Vec<f64>,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub income: Option<f64>,
    #[serde(rename = "u", skip_serializing_if = "Option::is_none")]
    pub ulevel: Option<f64>,
    pub bundle: Vec<f64>,
    /// Utility for the primal problem, expenditure for the dual.
    pub objective_value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub active_constraint_residual: f64,
}

pub fn solve(
    session: &WheelSession,
    problem: Problem,
    prices: &[f64],
    income: Option<f64>,
    ulevel: Option<f64>,
) -> Result<SolveResponse> {
    let settings = session.settings().solver;
    let u = session.utility();
    let r: SolveResult = match (problem, income, ulevel) {
        (Problem::Primal, Some(m), None) => {
            maximize_on_budget(u, &PriceIncome::new(prices.to_vec(), m)?, &settings)?
        }
        (Problem::Dual, None, Some(level)) => minimize_expenditure(u, prices, level, &settings)?,
        (Problem::Primal, _, _) => return Err(Error::Invalid("the primal problem takes an income and no utility level".into())),
        (Problem::Dual, _, _) => return Err(Error::Invalid("the dual problem takes a utility level and no income".into())),
    };
    Ok(SolveResponse {
        utility: format_expr(u),
        problem,
        prices: prices.to_vec(),
        income,
        ulevel,
        bundle: r.argmin_or_argmax,
        objective_value: r.objective_value,
        converged: r.converged,
        iterations: r.iterations,
        active_constraint_residual: r.active_constraint_residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParseResponse {
    pub input: String,
    pub utility: String,
    pub n_goods: usize,
}

pub fn parse(text: &str) -> Result<ParseResponse> {
    let u = duality_core::expr::parse_utility(text)?;
    Ok(ParseResponse {
        input: text.into(),
        utility: format_expr(&u),
        n_goods: u.n_goods(),
    })
}
