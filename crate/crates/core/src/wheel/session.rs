//! Sessions: one utility function, its derived handles, and path execution.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use super::graph::{is_connected_path, plan_path, Method, NodeId, WheelEdge};
use super::handle::{FunctionHandle, Kernel};
use super::point::{EvalPoint, Value};
use super::transitions::build;
use super::WheelSettings;
use crate::error::{Error, Result};
use crate::expr::{parse_utility, UtilityExpr};

/// A direct utility function and every handle derived from it.
///
/// Handles are cached by derivation, so asking for the same transition
/// from the same sources twice returns the same handle. The canonical
/// handle of a node is the one produced by the planned path from DUF.
pub struct WheelSession {
    utility: Arc<UtilityExpr>,
    settings: WheelSettings,
    duf: Arc<FunctionHandle>,
    cache: Mutex<HashMap<String, Arc<FunctionHandle>>>,
}

/// One executed step of a path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathStep {
    pub method: Method,
    pub node: NodeId,
    pub provenance: Vec<Method>,
    /// Value at the requested point, when the point fits the node.
    pub value: Option<Value>,
}

/// Outcome of [`WheelSession::execute_path`]. On failure `error` is set
/// and `steps` holds the steps completed before it.
#[derive(Debug, Clone)]
pub struct PathTrace {
    pub steps: Vec<PathStep>,
    pub handle: Option<Arc<FunctionHandle>>,
    pub error: Option<Error>,
}

impl WheelSession {
    pub fn new(utility: UtilityExpr, settings: WheelSettings) -> Self {
        let utility = Arc::new(utility);
        let u = utility.clone();
        let n = utility.n_goods();
        let duf = Arc::new(FunctionHandle::new(
            Kernel::Duf(Arc::new(move |q| u.eval(q))),
            vec![],
            "DUF".into(),
            n,
        ));
        Self {
            utility,
            settings,
            duf,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Ok(Self::new(parse_utility(text)?, WheelSettings::default()))
    }

    pub fn utility(&self) -> &UtilityExpr {
        &self.utility
    }

    pub fn settings(&self) -> &WheelSettings {
        &self.settings
    }

    pub fn n_goods(&self) -> usize {
        self.utility.n_goods()
    }

    pub fn duf(&self) -> Arc<FunctionHandle> {
        self.duf.clone()
    }

    /// Canonical handle for `node`, derived along the planned path from DUF.
    pub fn handle(&self, node: NodeId) -> Result<Arc<FunctionHandle>> {
        if node == NodeId::Duf {
            return Ok(self.duf());
        }
        let path = plan_path(NodeId::Duf, node)?;
        let mut working = HashMap::new();
        let mut last = self.duf();
        for e in path {
            last = self.apply(e.method, &working)?;
            working.insert(e.to, last.clone());
        }
        Ok(last)
    }

    /// Applies one transition to the canonical handles of its sources.
    pub fn transition(&self, method: Method) -> Result<Arc<FunctionHandle>> {
        self.apply(method, &HashMap::new())
    }

    /// Applies a transition to the given sources, falling back to canonical
    /// handles for sources not in `working`.
    pub fn apply(
        &self,
        method: Method,
        working: &HashMap<NodeId, Arc<FunctionHandle>>,
    ) -> Result<Arc<FunctionHandle>> {
        let edge: &WheelEdge = method.edge();
        if !edge.executable {
            return Err(Error::Invalid(format!(
                "{method} is a relationship, not an executable transition"
            )));
        }
        let source = |node: NodeId| -> Result<Arc<FunctionHandle>> {
            match working.get(&node) {
                Some(h) => Ok(h.clone()),
                None => self.handle(node),
            }
        };
        let primary = source(edge.from)?;
        let extras = method
            .extra_sources()
            .iter()
            .map(|&n| source(n))
            .collect::<Result<Vec<_>>>()?;
        let mut derivation = format!("{method}({}", primary.derivation());
        for x in &extras {
            derivation.push_str(", ");
            derivation.push_str(x.derivation());
        }
        derivation.push(')');

        if let Some(h) = self.lock().get(&derivation) {
            return Ok(h.clone());
        }
        let kernel = build(method, &self.utility, &self.settings, &primary, &extras)?;
        let mut provenance = primary.provenance().to_vec();
        provenance.push(method);
        let handle = Arc::new(FunctionHandle::new(
            kernel,
            provenance,
            derivation.clone(),
            self.n_goods(),
        ));
        Ok(self
            .lock()
            .entry(derivation)
            .or_insert(handle)
            .clone())
    }

    /// Runs `methods` in order starting at `start`. Each step feeds the
    /// handles produced earlier in the same path, so a loop back to a node
    /// uses its re-derived realization. Steps are evaluated at `point`
    /// when it carries the fields the node needs.
    pub fn execute_path(
        &self,
        start: NodeId,
        methods: &[Method],
        point: Option<&EvalPoint>,
    ) -> Result<PathTrace> {
        if !is_connected_path(start, methods) {
            return Err(Error::Invalid(format!(
                "transitions {methods:?} do not form a path from {start}"
            )));
        }
        let mut working: HashMap<NodeId, Arc<FunctionHandle>> = HashMap::new();
        working.insert(start, self.handle(start)?);
        let mut trace = PathTrace {
            steps: vec![],
            handle: None,
            error: None,
        };
        for &m in methods {
            let handle = match self.apply(m, &working) {
                Ok(h) => h,
                Err(e) => {
                    trace.error = Some(e);
                    return Ok(trace);
                }
            };
            let value = match point.filter(|p| handle.accepts(p)) {
                Some(p) => match handle.evaluate(p) {
                    Ok(v) => Some(v),
                    Err(e) => {
                        trace.error = Some(e);
                        return Ok(trace);
                    }
                },
                None => None,
            };
            working.insert(handle.node(), handle.clone());
            trace.steps.push(PathStep {
                method: m,
                node: handle.node(),
                provenance: handle.provenance().to_vec(),
                value,
            });
            trace.handle = Some(handle);
        }
        if trace.handle.is_none() {
            trace.handle = working.get(&start).cloned();
        }
        Ok(trace)
    }

    /// Evaluates the canonical handle of `node` at `point`.
    pub fn evaluate(&self, node: NodeId, point: &EvalPoint) -> Result<Value> {
        self.handle(node)?.evaluate(point)
    }

    /// Number of cached derived handles.
    pub fn cached_handles(&self) -> usize {
        self.lock().len()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, Arc<FunctionHandle>>> {
        self.cache.lock().unwrap_or_else(|p| p.into_inner())
    }
}
