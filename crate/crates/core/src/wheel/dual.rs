//! Dual-pair relationships. These are checked, not executed: each side is
//! computed independently and the gap is reported.

use serde::Serialize;

use super::graph::NodeId;
use super::session::WheelSession;
use crate::error::{Error, Result};
use crate::numkit::minimize_on_simplex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualPairCheck {
    /// Value from the node's own handle.
    pub direct: f64,
    /// Value recovered through the dual minimization.
    pub dual: f64,
}

impl DualPairCheck {
    /// `|direct - dual| / max(1, |direct|)`.
    pub fn gap(&self) -> f64 {
        (self.direct - self.dual).abs() / self.direct.abs().max(1.0)
    }
}

fn positive_bundle(q: &[f64]) -> Result<()> {
    if q.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::domain("dual pair checks need a strictly positive bundle"));
    }
    Ok(())
}

/// `U(q)` against `min { V(p, 1) : p.q = 1 }`, the minimum taken over
/// price directions `p = w / q` on the simplex.
pub fn check_dual_pair_duf_iuf(session: &WheelSession, q: &[f64]) -> Result<DualPairCheck> {
    positive_bundle(q)?;
    let direct = session.utility().eval(q)?;
    let v = session.handle(NodeId::Iuf)?.iuf()?.clone();
    let s = session.settings();
    let f = |w: &[f64]| {
        let p: Vec<f64> = w.iter().zip(q).map(|(w, q)| w / q).collect();
        if p.iter().any(|&x| x <= 0.0) {
            return f64::INFINITY;
        }
        v(&p, 1.0).unwrap_or(f64::INFINITY)
    };
    let r = minimize_on_simplex(f, q.len(), s.dual_divisions, s.solver.tie_tol, s.solver.nelder_mead);
    if !r.value.is_finite() {
        return Err(Error::Convergence("dual minimization found no finite value".into()));
    }
    Ok(DualPairCheck {
        direct,
        dual: r.value,
    })
}

/// `D(q,u)` against `min { p.q / E(p,u) }` over price directions
/// `p = w / q`, i.e. prices rescaled so that `E(p,u) = 1`.
pub fn check_dual_pair_df_ef(session: &WheelSession, q: &[f64], u: f64) -> Result<DualPairCheck> {
    positive_bundle(q)?;
    let direct = session.handle(NodeId::Df)?.df()?(q, u)?;
    let e = session.handle(NodeId::Ef)?.ef()?.clone();
    let s = session.settings();
    let f = |w: &[f64]| {
        let p: Vec<f64> = w.iter().zip(q).map(|(w, q)| w / q).collect();
        if p.iter().any(|&x| x <= 0.0) {
            return f64::INFINITY;
        }
        match e(&p, u) {
            Ok(cost) if cost > 0.0 => 1.0 / cost,
            _ => f64::INFINITY,
        }
    };
    let r = minimize_on_simplex(f, q.len(), s.dual_divisions, s.solver.tie_tol, s.solver.nelder_mead);
    if !r.value.is_finite() {
        return Err(Error::Convergence("dual minimization found no finite value".into()));
    }
    Ok(DualPairCheck {
        direct,
        dual: r.value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cobb_douglas_pairs_close() {
        let s = WheelSession::from_text("q1^0.3 * q2^0.7").unwrap();
        let c = check_dual_pair_duf_iuf(&s, &[2.0, 1.5]).unwrap();
        assert!(c.gap() < 1e-6, "{c:?}");
        let c = check_dual_pair_df_ef(&s, &[2.0, 1.5], 1.2).unwrap();
        assert!(c.gap() < 1e-6, "{c:?}");
    }

    #[test]
    fn nonconvex_pair_has_a_gap() {
        let s = WheelSession::from_text("q1^2 + q2^2").unwrap();
        let c = check_dual_pair_duf_iuf(&s, &[1.0, 1.0]).unwrap();
        // U = 2, while the dual value is the quasi-convexified 4
        assert!((c.direct - 2.0).abs() < 1e-12);
        assert!((c.dual - 4.0).abs() < 1e-4, "{c:?}");
    }

    #[test]
    fn zero_component_rejected() {
        let s = WheelSession::from_text("q1 + q2").unwrap();
        assert_eq!(
            check_dual_pair_duf_iuf(&s, &[0.0, 1.0]).unwrap_err().kind(),
            "DomainError"
        );
    }
}
