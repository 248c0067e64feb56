//! Engine output against closed forms written out here, independently of
//! the library's own family oracles.

use duality_core::expr::parse_utility;
use duality_core::families::Family;
use duality_core::numkit::{grid_oracle_budget, maximize_on_budget, PriceIncome, SolverSettings};
use duality_core::verify::draw_samples;
use duality_core::wheel::{EvalPoint, NodeId, WheelSession};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn vec_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max)
}

fn pm(p: &[f64], m: f64) -> EvalPoint {
    EvalPoint::default().with_prices(p).with_income(m)
}

fn pu(p: &[f64], u: f64) -> EvalPoint {
    EvalPoint::default().with_prices(p).with_utility(u)
}

/// `q1^a q2^(1-a)`: `x_i = a_i M / P_i`, `V = M prod (a_i/P_i)^a_i`.
fn cd_closed(a: f64, p: &[f64], m: f64) -> (Vec<f64>, f64) {
    let x = vec![a * m / p[0], (1.0 - a) * m / p[1]];
    let v = m * (a / p[0]).powf(a) * ((1.0 - a) / p[1]).powf(1.0 - a);
    (x, v)
}

/// `(a1 q1^r + a2 q2^r)^(1/r)` with `s = 1/(1-r)`:
/// `x_i = M a_i^s P_i^-s / sum_j a_j^s P_j^(1-s)`.
fn ces_demand(a: [f64; 2], r: f64, p: &[f64], m: f64) -> Vec<f64> {
    let s = 1.0 / (1.0 - r);
    let denom: f64 = (0..2).map(|j| a[j].powf(s) * p[j].powf(1.0 - s)).sum();
    (0..2).map(|i| m * a[i].powf(s) * p[i].powf(-s) / denom).collect()
}

#[test]
fn cobb_douglas_demand_and_indirect_utility_match_closed_form() {
    for k in 1..=9 {
        let a = k as f64 / 10.0;
        let fam = Family::cobb_douglas(vec![a, 1.0 - a]).unwrap();
        let s = WheelSession::new(fam.utility().unwrap(), Default::default());
        for smp in draw_samples(2, 10, 100 + k) {
            let (x, v) = cd_closed(a, &smp.prices, smp.income);
            let pt = pm(&smp.prices, smp.income);
            let got = s.evaluate(NodeId::Mdf, &pt).unwrap().components();
            assert!(vec_rel(&got, &x) < 1e-4, "a={a} {smp:?}: {got:?} vs {x:?}");
            let got_v = s.evaluate(NodeId::Iuf, &pt).unwrap().as_scalar().unwrap();
            assert!(rel(got_v, v) < 1e-4, "V {got_v} vs {v}");
        }
    }
}

#[test]
fn cobb_douglas_dual_side_matches_closed_form() {
    // U = q1^0.3 q2^0.7: E = u prod (P_i/a_i)^a_i, x^c_i = a_i E / P_i
    let a = 0.3;
    let s = WheelSession::from_text("q1^0.3 * q2^0.7").unwrap();
    for smp in draw_samples(2, 10, 5) {
        let p = &smp.prices;
        let u = 0.5 + smp.income / 10.0;
        let e = u * (p[0] / a).powf(a) * (p[1] / (1.0 - a)).powf(1.0 - a);
        let got_e = s.evaluate(NodeId::Ef, &pu(p, u)).unwrap().as_scalar().unwrap();
        assert!(rel(got_e, e) < 1e-4, "{got_e} vs {e}");
        let xc = [a * e / p[0], (1.0 - a) * e / p[1]];
        let got = s.evaluate(NodeId::Hdf, &pu(p, u)).unwrap().components();
        assert!(vec_rel(&got, &xc) < 1e-4);
        // D(q,u) = U(q)/u for a linearly homogeneous U
        let q = &smp.bundle;
        let d = q[0].powf(a) * q[1].powf(1.0 - a) / u;
        let got_d = s
            .evaluate(NodeId::Df, &EvalPoint::default().with_bundle(q).with_utility(u))
            .unwrap()
            .as_scalar()
            .unwrap();
        assert!(rel(got_d, d) < 1e-6, "{got_d} vs {d}");
        // phi(q) = grad U / (grad U . q) = (a/q1, (1-a)/q2)
        let phi = [a / q[0], (1.0 - a) / q[1]];
        let got = s
            .evaluate(NodeId::Hidf, &EvalPoint::default().with_bundle(q))
            .unwrap()
            .components();
        assert!(vec_rel(&got, &phi) < 1e-6);
    }
}

#[test]
fn ces_demand_matches_closed_form() {
    for rho in [-1.0, 0.5] {
        let fam = Family::ces([0.4, 0.6], rho).unwrap();
        let s = WheelSession::new(fam.utility().unwrap(), Default::default());
        for smp in draw_samples(2, 25, 11) {
            let x = ces_demand([0.4, 0.6], rho, &smp.prices, smp.income);
            let got = s
                .evaluate(NodeId::Mdf, &pm(&smp.prices, smp.income))
                .unwrap()
                .components();
            assert!(vec_rel(&got, &x) < 1e-4, "rho={rho} {got:?} vs {x:?}");
        }
    }
}

#[test]
fn quasilinear_regimes() {
    let s = WheelSession::from_text("q1 + ln(q2)").unwrap();
    // interior: x2 = P1/P2, x1 = M/P1 - 1
    let x = s.evaluate(NodeId::Mdf, &pm(&[2.0, 1.0], 10.0)).unwrap().components();
    assert!(vec_rel(&x, &[4.0, 2.0]) < 1e-6, "{x:?}");
    // corner: all income to good 2 when M <= P1
    let x = s.evaluate(NodeId::Mdf, &pm(&[1.0, 1.0], 0.5)).unwrap().components();
    assert!(x[0].abs() < 1e-6 && rel(x[1], 0.5) < 1e-6, "{x:?}");
}

#[test]
fn library_oracles_agree_with_local_closed_forms() {
    let fam = Family::cobb_douglas(vec![0.25, 0.75]).unwrap();
    let (x, v) = cd_closed(0.25, &[2.0, 3.0], 12.0);
    let got = fam.oracle(NodeId::Mdf, &pm(&[2.0, 3.0], 12.0)).unwrap().components();
    assert!(vec_rel(&got, &x) < 1e-12);
    let got_v = fam.oracle(NodeId::Iuf, &pm(&[2.0, 3.0], 12.0)).unwrap().as_scalar().unwrap();
    assert!(rel(got_v, v) < 1e-12);
    let fam = Family::ces([0.4, 0.6], -1.0).unwrap();
    let x = ces_demand([0.4, 0.6], -1.0, &[2.0, 3.0], 12.0);
    let got = fam.oracle(NodeId::Mdf, &pm(&[2.0, 3.0], 12.0)).unwrap().components();
    assert!(vec_rel(&got, &x) < 1e-12);
}

#[test]
fn solver_never_falls_below_grid_floor() {
    let cases: Vec<(String, Vec<f64>, f64)> = vec![
        ("q1^0.5 * q2^0.5".into(), vec![1.0, 2.0], 10.0),
        ("(0.5*q1^0.5 + 0.5*q2^0.5)^2".into(), vec![3.0, 0.5], 7.0),
        ("(0.3*q1^-1 + 0.7*q2^-1)^-1".into(), vec![0.2, 4.0], 3.0),
        ("q1 + ln(q2)".into(), vec![1.0, 1.0], 0.5),
        ("q1 + ln(q2)".into(), vec![2.0, 1.0], 10.0),
        ("q1^2 + q2^2".into(), vec![1.0, 1.0], 2.0),
        ("q1^2 + q2^2".into(), vec![2.0, 1.0], 4.0),
    ];
    for (text, p, m) in cases {
        let u = parse_utility(&text).unwrap();
        let pi = PriceIncome::new(p, m).unwrap();
        let solved = maximize_on_budget(&u, &pi, &SolverSettings::default()).unwrap();
        let floor = grid_oracle_budget(&u, &pi, 10_000).unwrap();
        assert!(
            solved.objective_value >= floor.objective_value - 1e-6,
            "{text}: {} < {}",
            solved.objective_value,
            floor.objective_value
        );
    }
}

#[test]
fn nonconvex_demand_is_the_lexicographically_first_corner() {
    let s = WheelSession::from_text("q1^2 + q2^2").unwrap();
    let x = s.evaluate(NodeId::Mdf, &pm(&[1.0, 1.0], 2.0)).unwrap().components();
    assert!(vec_rel(&x, &[0.0, 2.0]) < 1e-9, "{x:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn demand_is_homogeneous_of_degree_zero(
        p1 in 0.2f64..5.0, p2 in 0.2f64..5.0, m in 1.0f64..50.0, t in 0.5f64..4.0
    ) {
        let s = WheelSession::from_text("(0.5*q1^0.5 + 0.5*q2^0.5)^2").unwrap();
        let x = s.evaluate(NodeId::Mdf, &pm(&[p1, p2], m)).unwrap().components();
        let y = s.evaluate(NodeId::Mdf, &pm(&[t * p1, t * p2], t * m)).unwrap().components();
        prop_assert!(vec_rel(&x, &y) < 1e-6);
    }

    #[test]
    fn demand_exhausts_the_budget(p1 in 0.2f64..5.0, p2 in 0.2f64..5.0, m in 1.0f64..50.0) {
        let s = WheelSession::from_text("q1^0.4 * q2^0.6").unwrap();
        let x = s.evaluate(NodeId::Mdf, &pm(&[p1, p2], m)).unwrap().components();
        prop_assert!(rel(p1 * x[0] + p2 * x[1], m) < 1e-9);
    }

    #[test]
    fn expenditure_inverts_indirect_utility(p1 in 0.2f64..5.0, p2 in 0.2f64..5.0, m in 1.0f64..50.0) {
        let s = WheelSession::from_text("q1 + ln(q2)").unwrap();
        let v = s.evaluate(NodeId::Iuf, &pm(&[p1, p2], m)).unwrap().as_scalar().unwrap();
        let e = s.evaluate(NodeId::Ef, &pu(&[p1, p2], v)).unwrap().as_scalar().unwrap();
        prop_assert!(rel(e, m) < 1e-5, "E = {} vs M = {}", e, m);
    }

    #[test]
    fn indirect_utility_rises_with_income(p1 in 0.2f64..5.0, p2 in 0.2f64..5.0, m in 1.0f64..50.0) {
        let s = WheelSession::from_text("q1^0.5 * q2^0.5").unwrap();
        let lo = s.evaluate(NodeId::Iuf, &pm(&[p1, p2], m)).unwrap().as_scalar().unwrap();
        let hi = s.evaluate(NodeId::Iuf, &pm(&[p1, p2], 1.5 * m)).unwrap().as_scalar().unwrap();
        prop_assert!(hi > lo);
    }
}
