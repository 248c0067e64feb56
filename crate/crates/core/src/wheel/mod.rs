//! The wheel of duality: ten function nodes linked by dual, inverse,
//! counterpart and derivative relationships, and a session that derives
//! every node from a single direct utility function.

mod dual;
mod graph;
mod handle;
mod invert;
mod point;
mod session;
mod transitions;

pub use dual::{check_dual_pair_df_ef, check_dual_pair_duf_iuf, DualPairCheck};
pub use graph::{is_connected_path, kind_pairs, plan_path, registry, EdgeKind, Method, NodeId, WheelEdge};
pub use handle::{FnBc, FnQ, FnVV, FnVs, FnVsV, FnVvs, FunctionHandle, Kernel};
pub use point::{EvalPoint, Value};
pub use session::{PathStep, PathTrace, WheelSession};

use crate::numkit::SolverSettings;
use invert::BalanceOptions;

/// Numerical settings shared by every handle a session derives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelSettings {
    pub solver: SolverSettings,
    /// Relative finite-difference step for expression-backed functions.
    pub fd_step: f64,
    /// Relative finite-difference step for solver-backed functions.
    pub solver_fd_step: f64,
    /// Grid size of the scan used by two-good inversions.
    pub inversion_divisions: usize,
    /// Smallest expenditure share an inversion considers.
    pub inversion_margin: f64,
    /// Relative mismatch accepted by an inversion.
    pub inversion_tol: f64,
    /// Lattice divisions for the dual-pair minimizations.
    pub dual_divisions: usize,
}

impl Default for WheelSettings {
    fn default() -> Self {
        Self {
            solver: SolverSettings::default(),
            fd_step: 1e-6,
            solver_fd_step: 1e-5,
            inversion_divisions: 40,
            inversion_margin: 1e-6,
            inversion_tol: 1e-7,
            dual_divisions: 100,
        }
    }
}

impl WheelSettings {
    fn balance_options(&self) -> BalanceOptions {
        BalanceOptions {
            divisions: self.inversion_divisions,
            margin: self.inversion_margin,
            tol: self.inversion_tol,
        }
    }
}
