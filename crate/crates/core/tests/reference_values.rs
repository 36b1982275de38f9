//! Reference values checked through the public API, module by module.

use approx::assert_relative_eq;

use cvpq_core::behaviors::{
    FamilyKind, MonomialQuery, SettingVector, behavior_2mode, behavior_mmode, check_no_signaling, signaling_example,
};
use cvpq_core::cfrd::{cfrd_evaluate, family_cfrd_coefficient, sign_counts_closed, sign_counts_recursive, violation_slope};
use cvpq_core::measures::{MixtureMeasure, mix, normal_measure};
use cvpq_core::montecarlo::{estimate_moment, ns_statistical_test};
use cvpq_core::rswitness::{
    JointChoice, covariance_matrix, rs_min_eigenvalue, rs_test, rs_threshold_2mode, rs_threshold_family,
    symplectic_form,
};
use cvpq_core::scan::{GridRange, Label, ScanConfig, classify_point, scan_region};

fn odd_three_mode(l: f64, sigma: f64) -> MixtureMeasure {
    MixtureMeasure::uniform(
        vec![vec![l, l, -l], vec![l, -l, l], vec![-l, l, l], vec![-l, -l, -l]],
        sigma,
    )
    .unwrap()
}

#[test]
fn normal_measures_and_mixtures() {
    let n = normal_measure(vec![0.0, 0.0, 0.0], 1.0).unwrap();
    assert_eq!(n.len(), 1);
    assert!(normal_measure(vec![0.0], -1.0).is_err());

    let (l, s) = (0.7, 0.3);
    let m = mix(&[(0.5, normal_measure(vec![l], s).unwrap()), (0.5, normal_measure(vec![-l], s).unwrap())]).unwrap();
    assert_eq!(m.canonical(), odd_three_mode(l, s).marginalize(&[0]).unwrap().canonical());
    assert!(mix(&[(0.5, n.clone()), (0.6, n)]).is_err());
}

#[test]
fn three_mode_measure_moments_and_marginals() {
    let (l, s) = (1.3, 0.4);
    let m = odd_three_mode(l, s);
    assert_relative_eq!(m.moment(&[1, 1, 1]).unwrap(), -l.powi(3), max_relative = 1e-12);
    assert_relative_eq!(m.moment(&[2, 2, 2]).unwrap(), (l * l + s * s).powi(3), max_relative = 1e-12);
    let pair = m.marginalize(&[0, 1]).unwrap();
    assert_eq!(pair.len(), 4);
    assert!(pair.components().iter().all(|(w, c)| *w == 0.25 && c.center().iter().all(|x| x.abs() == l)));
}

#[test]
fn densities() {
    let std = normal_measure(vec![0.0], 1.0).unwrap();
    assert_relative_eq!(std.density_at(&[0.0]).unwrap(), 0.398_942_280_401_432_7, max_relative = 1e-12);
    let two = MixtureMeasure::uniform(vec![vec![1.0], vec![-1.0]], 1.0).unwrap();
    assert_relative_eq!(two.density_at(&[0.0]).unwrap(), 0.241_970_724_519_143_37, max_relative = 1e-12);
    assert!(normal_measure(vec![1.0], 0.0).unwrap().density_at(&[1.0]).is_err());
}

#[test]
fn behavior_correlators() {
    let (l, s) = (0.8, 0.35);
    for m in 2..=6 {
        let b = behavior_mmode(m, l, s).unwrap();
        let ones = SettingVector::all_ones(m).unwrap();
        assert_relative_eq!(b.correlator(&MonomialQuery::uniform(ones, 1)).unwrap(), -l.powi(m as i32), max_relative = 1e-12);
        for settings in SettingVector::all(m).filter(|v| !v.is_all_ones()) {
            assert_relative_eq!(b.correlator(&MonomialQuery::uniform(settings, 1)).unwrap(), l.powi(m as i32), max_relative = 1e-12);
            assert_relative_eq!(
                b.correlator(&MonomialQuery::uniform(settings, 2)).unwrap(),
                (l * l + s * s).powi(m as i32),
                max_relative = 1e-12
            );
        }
    }
    let b = behavior_2mode(l, s).unwrap();
    let q = |bits| MonomialQuery::uniform(SettingVector::from_bits(2, bits).unwrap(), 1);
    assert_relative_eq!(b.correlator(&q(0)).unwrap(), l * l, max_relative = 1e-12);
    assert_relative_eq!(b.correlator(&q(3)).unwrap(), -l * l, max_relative = 1e-12);
}

#[test]
fn no_signaling_reference_behaviors() {
    assert!(check_no_signaling(&behavior_mmode(3, 1.0, 0.5).unwrap()).ok);
    assert!(check_no_signaling(&behavior_2mode(1.0, 0.5).unwrap()).ok);
    let bad = check_no_signaling(&signaling_example(1.0, 0.5).unwrap());
    assert!(!bad.ok);
    assert_relative_eq!(bad.worst_violation, 2.0, max_relative = 1e-12);
}

#[test]
fn sign_counts_and_coefficients() {
    assert_eq!(sign_counts_recursive(1).unwrap(), (0, 0));
    assert_eq!(sign_counts_closed(1).unwrap(), (0, 0));
    assert_eq!(sign_counts_closed(3).unwrap(), (3, 1));
    assert_eq!(sign_counts_recursive(4).unwrap(), (6, 4));
    assert_eq!(sign_counts_closed(12).unwrap(), sign_counts_recursive(12).unwrap());
    assert_eq!(family_cfrd_coefficient(2).unwrap(), 8.0);
    assert_eq!(family_cfrd_coefficient(3).unwrap(), 20.0);
    assert_eq!(family_cfrd_coefficient(7).unwrap(), 100.0);
    assert_relative_eq!(violation_slope(3).unwrap().unwrap(), 0.5976, epsilon = 1e-4);
    assert_relative_eq!(violation_slope(2).unwrap().unwrap(), 0.6436, epsilon = 1e-4);
    assert_eq!(violation_slope(7).unwrap(), None);
}

#[test]
fn cfrd_at_the_dirac_limit() {
    let v = cfrd_evaluate(&behavior_mmode(3, 1.0, 0.0).unwrap()).unwrap();
    assert_relative_eq!(v.margin, -12.0, max_relative = 1e-12);
    assert!(v.violated());
}

#[test]
fn covariance_matrices() {
    let (l, s, c) = (0.6, 0.4, 0.3);
    let cm = covariance_matrix(&behavior_mmode(3, l, s).unwrap(), JointChoice::new(c).unwrap()).unwrap();
    let v = l * l + s * s;
    for i in 0..6 {
        for j in 0..6 {
            let want = if i == j { v } else if i / 2 == j / 2 { c } else { 0.0 };
            assert_relative_eq!(cm.entries()[(i, j)], want, epsilon = 1e-12);
        }
    }
    let cm = covariance_matrix(&behavior_2mode(l, s).unwrap(), JointChoice::product()).unwrap();
    let e = cm.entries();
    assert_relative_eq!(e[(0, 2)], l * l, epsilon = 1e-12);
    assert_relative_eq!(e[(1, 3)], -l * l, epsilon = 1e-12);
    assert!(covariance_matrix(&signaling_example(l, s).unwrap(), JointChoice::product()).is_err());

    let omega = symplectic_form(1);
    assert_eq!(omega.entries().as_slice(), &[0.0, -1.0, 1.0, 0.0]);
}

#[test]
fn rs_reference_points() {
    let cm = covariance_matrix(&behavior_mmode(3, 0.6, 0.4).unwrap(), JointChoice::product()).unwrap();
    assert_relative_eq!(rs_min_eigenvalue(&cm).unwrap(), -0.48, epsilon = 1e-12);
    assert!(rs_test(&cm).unwrap().violated);
    let cm = covariance_matrix(&behavior_mmode(3, 1.0, 1.0).unwrap(), JointChoice::product()).unwrap();
    assert_relative_eq!(rs_min_eigenvalue(&cm).unwrap(), 1.0, epsilon = 1e-12);
    assert!(!rs_test(&cm).unwrap().violated);

    assert_eq!(rs_threshold_family(3, 0.0).unwrap(), 1.0);
    assert_relative_eq!(rs_threshold_family(3, 1.0).unwrap(), 2f64.sqrt());
    assert_relative_eq!(rs_threshold_2mode(1.0, 0.0), 3f64.sqrt());
    assert_eq!(rs_threshold_2mode(0.0, 0.0), 1.0);
    assert_relative_eq!(rs_threshold_2mode(1.0, 1.0), 6f64.sqrt());
}

#[test]
fn monte_carlo_reference_moments() {
    let m = odd_three_mode(1.0, 0.5);
    let r = estimate_moment(&m, &[1, 1, 1], 1_000_000, 11).unwrap();
    assert!((r.estimate + 1.0).abs() <= 5.0 * r.std_error, "{r:?}");
    let r = estimate_moment(&m, &[2, 2, 2], 1_000_000, 12).unwrap();
    assert!((r.estimate - 1.953125).abs() <= 5.0 * r.std_error, "{r:?}");

    assert!(ns_statistical_test(&behavior_mmode(3, 1.0, 0.5).unwrap(), &[0], 100_000, 1).unwrap().pass);
    assert!(ns_statistical_test(&behavior_2mode(1.0, 0.3).unwrap(), &[1], 100_000, 1).unwrap().pass);
    assert!(!ns_statistical_test(&signaling_example(1.0, 0.3).unwrap(), &[0], 100_000, 1).unwrap().pass);
}

#[test]
fn classification_reference_points() {
    assert_eq!(classify_point(3, FamilyKind::Mmode, 0.9, 0.1, 0.0).unwrap().label, Label::PostQuantum);
    assert_eq!(classify_point(3, FamilyKind::Mmode, 0.9, 0.9, 0.0).unwrap().label, Label::NoViolationDetected);
    assert_eq!(classify_point(2, FamilyKind::TwoMode, 2.0, 0.1, 0.0).unwrap().label, Label::PostQuantum);
}

#[test]
fn seven_modes_never_violate_cfrd() {
    let mut cfg = ScanConfig::new(7, FamilyKind::Mmode);
    cfg.l = GridRange::new(0.0, 1.5, 0.1).unwrap();
    cfg.sigma = GridRange::new(0.0, 1.0, 0.1).unwrap();
    let result = scan_region(&cfg).unwrap();
    assert_eq!(result.summary.cfrd_violating, 0);
    assert_eq!(result.summary.expected_cfrd_slope, None);
}
