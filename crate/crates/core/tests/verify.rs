use duality_core::families::Family;
use duality_core::numkit::PriceIncome;
use duality_core::verify::*;
use duality_core::wheel::{EvalPoint, Method, NodeId, WheelSession};

fn session(f: &Family) -> WheelSession {
    WheelSession::new(f.utility().unwrap(), Default::default())
}

fn cd() -> WheelSession {
    WheelSession::from_text("q1^0.5 * q2^0.5").unwrap()
}

fn opts() -> VerifyOptions {
    VerifyOptions::default()
}

#[test]
fn roy_passes_on_cobb_douglas() {
    let r = check_identity(&cd(), "roy", &opts()).unwrap();
    assert_eq!(r.summary.total, 25);
    assert_eq!(r.summary.failed, 0, "{}", r.to_table());
    assert!(r.entries.iter().all(|e| e.residual.unwrap() <= 1e-3));
}

#[test]
fn hotelling_wold_on_every_convex_family() {
    for f in Family::defaults().iter().filter(|f| f.convex()) {
        let r = check_identity(&session(f), "hotelling_wold", &opts()).unwrap();
        assert_eq!(r.summary.failed, 0, "{}: {}", f.name(), r.to_table());
        assert_eq!(r.summary.total + r.summary.excluded, 25);
    }
}

#[test]
fn distance_of_own_level_is_one() {
    let r = check_identity(&cd(), "duf_df_inverse", &opts()).unwrap();
    assert_eq!(r.summary.failed, 0);
    for e in &r.entries {
        assert!((e.lhs.as_ref().unwrap().components()[0] - 1.0).abs() < 1e-9);
    }
}

#[test]
fn unknown_identity_is_rejected() {
    assert_eq!(check_identity(&cd(), "roys", &opts()).unwrap_err().kind(), "InvalidArgument");
}

#[test]
fn reports_are_deterministic() {
    let ids = [Identity::Roy, Identity::Slutsky, Identity::DualityGap];
    let a = serde_json::to_string(&check_identities(&cd(), &ids, &opts())).unwrap();
    let b = serde_json::to_string(&check_identities(&cd(), &ids, &opts())).unwrap();
    assert_eq!(a, b);
    let other = VerifyOptions { seed: 43, ..opts() };
    assert_ne!(a, serde_json::to_string(&check_identities(&cd(), &ids, &other)).unwrap());
}

#[test]
fn tolerance_override_applies_everywhere() {
    let o = VerifyOptions {
        tolerance: Some(1e-300),
        samples: 5,
        ..opts()
    };
    let r = check_identities(&cd(), &[Identity::Roy, Identity::NormRoy], &o);
    assert!(r.tolerances.values().all(|t| *t == 1e-300));
    assert!(r.summary.failed > 0);
}

#[test]
fn verify_all_cobb_douglas_is_clean() {
    let r = verify_all(&cd(), &opts());
    assert_eq!(r.summary.failed, 0, "{}", r.to_table());
    assert!(r.errors.is_empty());
    assert_eq!(r.bonus_identities, vec!["slutsky_symmetry".to_string()]);
    for id in Identity::ALL {
        assert!(r.entries_for(id.name()).count() > 0, "{id} missing");
    }
}

#[test]
fn nonconvex_failure_signature() {
    let r = verify_all(&session(&Family::NonconvexDemo), &opts());
    let failed: Vec<&str> = r.summary.failed_identities.iter().map(String::as_str).collect();
    assert_eq!(
        failed,
        ["dual_pair_df_ef", "dual_pair_duf_iuf", "hidf_inversion", "loop_closure_short"],
        "{}",
        r.to_table()
    );
    assert!(r.entries_for("duality_gap").all(|e| e.pass));
    // every derivative identity needs an interior optimum, and there is none
    assert_eq!(r.excluded.get("roy"), Some(&25));
}

#[test]
fn slutsky_decomposition_at_symmetric_point() {
    // U = q1 q2, P = (1,1), M = 2: x1 = M/(2 P1), V = M^2/(4 P1 P2),
    // x1^c = sqrt(u P2 / P1)
    let (p1, p2, m) = (1.0f64, 1.0f64, 2.0f64);
    let x1 = m / (2.0 * p1);
    let u = m * m / (4.0 * p1 * p2);
    let total = -m / (2.0 * p1 * p1);
    let subst = -0.5 * (u * p2).sqrt() * p1.powf(-1.5);
    let income = -(1.0 / (2.0 * p1)) * x1;
    assert_eq!((total, subst, income), (-1.0, -0.5, -0.5));

    let s = WheelSession::from_text("q1*q2").unwrap();
    let c = check_slutsky(&s, &PriceIncome::new(vec![p1, p2], m).unwrap(), 0, 0).unwrap();
    assert!((c.lhs - total).abs() < 1e-3, "{c:?}");
    assert!((c.substitution_effect - subst).abs() < 1e-3);
    assert!((c.income_effect - income).abs() < 1e-3);
    assert!(c.residual < 1e-3);
    assert!(check_slutsky(&s, &PriceIncome::new(vec![1.0, 1.0], 2.0).unwrap(), 0, 2).is_err());
}

#[test]
fn slutsky_holds_on_every_convex_family() {
    for f in Family::defaults().iter().filter(|f| f.convex()) {
        let r = check_identities(&session(f), &[Identity::Slutsky, Identity::SlutskySymmetry], &opts());
        assert_eq!(r.summary.failed, 0, "{}: {}", f.name(), r.to_table());
    }
}

#[test]
fn duality_gap_closes_at_interior_and_corner_optima() {
    let ces = session(&Family::ces([0.3, 0.7], -1.0).unwrap());
    let g = duality_gap(&ces, &PriceIncome::new(vec![1.7, 0.4], 13.0).unwrap()).unwrap();
    assert!(g.relative_gap < 1e-5, "{g:?}");
    // q1^2 + q2^2 at P = (1,1), M = 2: V = 4 at a corner, E(P, 4) = 2
    let nc = session(&Family::NonconvexDemo);
    let g = duality_gap(&nc, &PriceIncome::new(vec![1.0, 1.0], 2.0).unwrap()).unwrap();
    assert!((g.utility - 4.0).abs() < 1e-9 && (g.d_star - 2.0).abs() < 1e-6, "{g:?}");
    assert!(g.relative_gap < 1e-5);
}

#[test]
fn loop_closure_over_explicit_probes() {
    let probes: Vec<EvalPoint> = draw_samples(2, 10, 3)
        .into_iter()
        .map(|s| EvalPoint::default().with_bundle(&s.bundle))
        .collect();
    let r = check_loop_closure(&cd(), NodeId::Duf, &SHORT_LOOP, &probes, 1e-3).unwrap();
    assert_eq!(r.summary.passed, 10, "{}", r.to_table());
    let r = check_loop_closure(&cd(), NodeId::Duf, &LONG_LOOP, &probes[..3], 1e-2).unwrap();
    assert_eq!(r.summary.passed, 3, "{}", r.to_table());

    let open = [Method::PrimalSolve, Method::MdfToIuf];
    assert!(check_loop_closure(&cd(), NodeId::Duf, &open, &probes, 1e-3).is_err());
    let broken = [Method::PrimalSolve, Method::HdfToEf];
    assert!(check_loop_closure(&cd(), NodeId::Duf, &broken, &probes, 1e-3).is_err());
}

#[test]
fn short_loop_fails_for_nonconvex_preferences() {
    let probes = [EvalPoint::default().with_bundle(&[1.0, 1.0])];
    let s = session(&Family::NonconvexDemo);
    match check_loop_closure(&s, NodeId::Duf, &SHORT_LOOP, &probes, 1e-3) {
        Ok(r) => assert_eq!(r.summary.passed, 0),
        Err(e) => assert!(["ConvergenceError", "AmbiguityError"].contains(&e.kind())),
    }
}

#[test]
fn information_loss_under_nonconvexity() {
    let r = demo_information_loss().unwrap();
    assert!(r.convexified);
    assert!(!r.ranking_flips.is_empty());
    assert_eq!(r.original_u_values[0], 2.0);
    // (1,1) is ranked by the convexified value, far from 2
    assert!((r.recovered_u_values[0] - 2.0).abs() > 0.1, "{r:?}");
    assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&demo_information_loss().unwrap()).unwrap());

    let control = information_loss(&cd()).unwrap();
    assert!(!control.convexified, "{control:?}");
    assert!(control.ranking_flips.is_empty() && control.inversion_errors.is_empty());
}

#[test]
fn quasilinear_coincidence_on_interior_regime() {
    let r = check_quasilinear_coincidence(&opts()).unwrap();
    assert_eq!(r.summary.failed, 0, "{}", r.to_table());
    assert_eq!(r.summary.total + r.summary.excluded, 25);
    // x2 = P1/P2 on the interior regime
    let s = session(&Family::Quasilinear);
    for (p, m, x2) in [([1.0, 1.0], 5.0, 1.0), ([2.0, 1.0], 10.0, 2.0)] {
        let x = s
            .evaluate(NodeId::Mdf, &EvalPoint::default().with_prices(&p).with_income(m))
            .unwrap()
            .components();
        assert!((x[1] - x2).abs() < 1e-5);
    }
}

#[test]
fn dual_pairs_recover_on_cobb_douglas() {
    let o = VerifyOptions { samples: 10, ..opts() };
    let r = check_identities(&cd(), &[Identity::DualPairDufIuf, Identity::DualPairDfEf], &o);
    assert_eq!(r.summary.total, 20);
    assert_eq!(r.summary.failed, 0, "{}", r.to_table());
}
