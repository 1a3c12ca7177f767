mod common;

use std::sync::Arc;

use common::log_grid;
use expanderlab::perturbations::*;
use expanderlab::radial::{Profile, RadialGrid};
use expanderlab::soliton::*;
use expanderlab::LabError;
use proptest::prelude::*;

fn gauss() -> SolitonData {
    gaussian(2, &RadialGrid::default_grid()).unwrap()
}

fn clause<'a>(r: &'a ConditionReport, name: &str) -> &'a Witness {
    r.witnesses.iter().find(|w| w.clause == name).unwrap_or_else(|| panic!("no clause {name}"))
}

#[test]
fn linear_in_f_on_gaussian_scales_the_metric() {
    let s = gauss();
    for alpha in [0.5, -0.5] {
        let d = make_linear_in_f(&s, alpha).unwrap();
        assert_eq!(d.params, Perturbation::LinearInF { alpha });
        let m = s.metric.perturbed(&d.psi0).unwrap();
        for i in 0..m.lam_perp.len() {
            assert!((m.lam_perp.at(i) - (1.0 + alpha)).abs() < 1e-8, "alpha {alpha} node {i}");
            assert!((m.lam_rad.at(i) - (1.0 + alpha)).abs() < 1e-8);
        }
    }
}

#[test]
fn linear_in_f_below_minus_one_is_rejected() {
    let s = gauss();
    match make_linear_in_f(&s, -1.5) {
        Err(LabError::Rejected { reason, .. }) => assert!(reason.contains("node"), "{reason}"),
        other => panic!("{other:?}"),
    }
    assert!(make_linear_in_f(&s, f64::NAN).is_err());
}

#[test]
fn linear_in_f_composes_to_identity() {
    let g = log_grid(1e-1, 1e2, 64);
    let s = gaussian(2, &g).unwrap();
    for alpha in [0.5, -0.5, 2.0] {
        let beta = -alpha / (1.0 + alpha);
        let m1 = s.metric.perturbed(&s.f.scale(alpha)).unwrap();
        // i∂∂̄ f = g on the Gaussian, so β·f applied to (1+α)g scales it by 1 + β.
        let m2 = m1.perturbed(&s.f.scale(beta * (1.0 + alpha))).unwrap();
        for i in 0..m2.lam_perp.len() {
            assert!((m2.lam_perp.at(i) - 1.0).abs() < 1e-12);
            assert!((m2.lam_rad.at(i) - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_amplitude_bump_is_zero_and_condition_two() {
    let s = gauss();
    let d = make_compact_bump(&s, 1.0, 0.5, 0.0).unwrap();
    assert!(d.psi0.values().iter().all(|&v| v == 0.0));
    let r = check_condition(&d, &s, Condition::II).unwrap();
    assert!(r.passed, "{r:?}");
}

#[test]
fn bump_has_exact_compact_support() {
    let s = gauss();
    let d = make_compact_bump(&s, 1.0, 0.5, 0.05).unwrap();
    let lo = 10f64.powf(-0.5);
    let hi = 10f64.powf(0.5);
    for (u, v) in s.grid().nodes().iter().zip(d.psi0.values()) {
        if *u <= lo || *u >= hi {
            assert_eq!(*v, 0.0);
        } else {
            assert!(*v > 0.0);
        }
    }
    assert!((d.psi0.max() - 0.05).abs() < 1e-4);
}

#[test]
fn gaussian_bump_passes_condition_two_for_both_signs() {
    let s = gauss();
    let big = make_compact_bump(&s, 1.0, 0.5, 0.05).unwrap();
    assert!(check_condition(&big, &s, Condition::II).unwrap().passed);
    // The negative bump of the same size is not Kähler.
    assert!(matches!(make_compact_bump(&s, 1.0, 0.5, -0.05), Err(LabError::Rejected { .. })));
    let plus = make_compact_bump(&s, 1.0, 0.5, 0.02).unwrap();
    let minus = make_compact_bump(&s, 1.0, 0.5, -0.02).unwrap();
    let rp = check_condition(&plus, &s, Condition::II).unwrap();
    let rm = check_condition(&minus, &s, Condition::II).unwrap();
    assert!(rp.passed, "{rp:?}");
    assert_eq!(rp.status, rm.status);
    assert_eq!(rp.witnesses.len(), rm.witnesses.len());
    for (a, b) in rp.witnesses.iter().zip(&rm.witnesses) {
        assert_eq!(a.clause, b.clause);
        assert_eq!(a.status, b.status);
        assert_eq!(a.floor_hit, b.floor_hit);
    }
}

#[test]
fn bump_outside_the_inner_region_is_a_domain_error() {
    let s = gauss();
    assert!(matches!(make_compact_bump(&s, 1e-2, 0.5, 0.01), Err(LabError::Domain(_))));
    assert!(matches!(make_compact_bump(&s, 1e3, 0.5, 0.01), Err(LabError::Domain(_))));
    assert!(matches!(make_compact_bump(&s, 1.0, -0.5, 0.01), Err(LabError::Domain(_))));
}

#[test]
fn oversized_bump_reports_admissible_amplitude() {
    let s = gauss();
    match make_compact_bump(&s, 1.0, 0.5, 5.0) {
        Err(LabError::Rejected { max_admissible_amplitude: Some(m), .. }) => {
            assert!(m > 0.0 && m < 5.0);
            assert!(make_compact_bump(&s, 1.0, 0.5, m).is_ok());
            assert!(make_compact_bump(&s, 1.0, 0.5, m * 1.001).is_err());
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn linear_in_f_passes_condition_two_with_constant_drift_clause() {
    let s = gauss();
    let d = make_linear_in_f(&s, 0.3).unwrap();
    let r = check_condition(&d, &s, Condition::II).unwrap();
    assert!(r.passed, "{r:?}");
    assert!(r.witnesses.iter().filter(|w| w.clause.starts_with("soliton_defect")).all(|w| w.floor_hit));
    assert!((r.bi_lipschitz_constant - 1.3).abs() < 1e-8);
}

#[test]
fn quadratic_potential_fails_linear_growth() {
    let s = gauss();
    let d = make_custom(&s, Profile::from_fn(s.grid(), |u| u * u), "u^2").unwrap();
    let r = check_condition(&d, &s, Condition::I).unwrap();
    assert!(!r.passed);
    assert_eq!(r.status, Status::Fail);
    let w = clause(&r, "psi0_growth");
    assert_eq!(w.status, Status::Fail);
    assert!(w.exponent_measured.unwrap() < -0.9);
}

#[test]
fn short_grid_is_inconclusive() {
    let g = log_grid(1.0, 10.0, 128);
    let s = gaussian(2, &g).unwrap();
    let d = make_linear_in_f(&s, 0.3).unwrap();
    let r = check_condition(&d, &s, Condition::II).unwrap();
    assert_eq!(r.status, Status::Inconclusive);
    assert!(!r.passed);
}

#[test]
fn passed_iff_every_clause_passes() {
    let s = gauss();
    for d in [
        make_linear_in_f(&s, 0.3).unwrap(),
        make_custom(&s, Profile::from_fn(s.grid(), |u| u * u), "u^2").unwrap(),
        make_asymptotically_linear(&s, 0.2, 1.0, 0.5).unwrap(),
    ] {
        for c in [Condition::I, Condition::II] {
            let r = check_condition(&d, &s, c).unwrap();
            assert_eq!(r.passed, r.witnesses.iter().all(|w| w.status == Status::Pass));
        }
    }
}

#[test]
fn report_serializes_clause_array() {
    let s = gauss();
    let d = make_linear_in_f(&s, 0.3).unwrap();
    let r = check_condition(&d, &s, Condition::II).unwrap();
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    let clauses = v["clauses"].as_array().unwrap();
    assert!(!clauses.is_empty());
    for key in ["clause", "exponent_required", "exponent_measured", "floor_hit", "status"] {
        assert!(clauses[0].get(key).is_some(), "missing {key}");
    }
    let back: ConditionReport = serde_json::from_value(v).unwrap();
    assert_eq!(back, r);
}

#[test]
fn mismatched_grid_is_rejected() {
    let s = gauss();
    let other = log_grid(1e-2, 1e2, 64);
    assert!(make_custom(&s, Profile::zeros(&other), "x").is_err());
}

fn arbitrary_data(s: &SolitonData, kind: u8, p: f64, q: f64) -> Option<InitialData> {
    match kind {
        0 => make_linear_in_f(s, p).ok(),
        1 => make_compact_bump(s, 10f64.powf(q), 0.5, 0.05 * p).ok(),
        _ => make_asymptotically_linear(s, p, 10f64.powf(q), 0.4).ok(),
    }
}

fn shared_gaussian() -> Arc<SolitonData> {
    use std::sync::OnceLock;
    static S: OnceLock<Arc<SolitonData>> = OnceLock::new();
    S.get_or_init(|| Arc::new(gauss())).clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn condition_two_implies_condition_one(kind in 0u8..3, p in -0.6f64..1.0, q in -0.5f64..0.5) {
        let s = shared_gaussian();
        if let Some(d) = arbitrary_data(&s, kind, p, q) {
            let r2 = check_condition(&d, &s, Condition::II).unwrap();
            if r2.passed {
                let r1 = check_condition(&d, &s, Condition::I).unwrap();
                prop_assert!(r1.passed, "{:?}", r1);
            }
        }
    }

    #[test]
    fn accepted_data_have_finite_bi_lipschitz_constant(kind in 0u8..3, p in -0.6f64..1.0, q in -0.5f64..0.5) {
        let s = shared_gaussian();
        if let Some(d) = arbitrary_data(&s, kind, p, q) {
            let r = check_condition(&d, &s, Condition::I).unwrap();
            prop_assert!(r.bi_lipschitz_constant.is_finite() && r.bi_lipschitz_constant >= 1.0);
            prop_assert_eq!(clause(&r, "bi_lipschitz").bound, Some(r.bi_lipschitz_constant));
        }
    }
}

#[test]
fn cao_linear_data_pass_both_conditions() {
    let s = cao(2.0, 2, &RadialGrid::default_grid(), 1e-12).unwrap();
    let d = make_linear_in_f(&s, 0.3).unwrap();
    for c in [Condition::I, Condition::II] {
        let r = check_condition(&d, &s, c).unwrap();
        assert!(r.passed, "{c:?}: {r:?}");
    }
}
