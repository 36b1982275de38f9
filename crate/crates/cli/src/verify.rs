//! Built-in self checks: analytic oracles and Monte-Carlo cross-checks.

use serde::Serialize;

use cvpq_core::behaviors::{
    FamilyKind, behavior_2mode, behavior_mmode, check_no_signaling, signaling_example,
};
use cvpq_core::cfrd::{
    cfrd_evaluate, expand_complex_product, family_cfrd_coefficient, family_closed_form,
    sign_counts_closed, sign_counts_recursive, violation_slope,
};
use cvpq_core::montecarlo::{check_moment_cases, ns_statistical_test, random_moment_cases};
use cvpq_core::rswitness::{JointChoice, covariance_matrix, rs_min_eigenvalue, rs_threshold_2mode, rs_threshold_family};
use cvpq_core::scan::{Engine, Label, classify_point_with};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    All,
    Oracles,
    Montecarlo,
}

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub checks: Vec<Check>,
}

pub struct McOptions {
    pub samples: usize,
    pub seed: u64,
}

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300)
}

fn err(e: cvpq_core::Error) -> String {
    e.to_string()
}

pub fn run(suite: Suite, mc: &McOptions) -> VerifyReport {
    let mut checks = Vec::new();
    let mut record = |name: &'static str, outcome: Outcome| {
        let (pass, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        log::info!("{name}: {}", if pass { "pass" } else { "FAIL" });
        checks.push(Check { name, pass, detail });
    };
    if matches!(suite, Suite::All | Suite::Oracles) {
        record("sign-counts", sign_counts());
        record("cfrd-coefficients", coefficients());
        record("cfrd-generic-vs-closed", cfrd_generic_vs_closed());
        record("rs-thresholds", rs_thresholds());
        record("classification-examples", classification_examples());
        record("no-signaling", no_signaling());
    }
    if matches!(suite, Suite::All | Suite::Montecarlo) {
        record("mc-moments", mc_moments(mc));
        record("mc-no-signaling", mc_no_signaling(mc));
    }
    VerifyReport { pass: checks.iter().all(|c| c.pass), checks }
}

fn sign_counts() -> Outcome {
    for m in 1..=16 {
        let direct = expand_complex_product(m).map_err(err)?.negative_counts();
        let rec = sign_counts_recursive(m).map_err(err)?;
        let closed = sign_counts_closed(m).map_err(err)?;
        ensure(direct == rec && rec == closed, || {
            format!("m={m}: expansion {direct:?}, recursion {rec:?}, closed {closed:?}")
        })?;
    }
    Ok("expansion, recursion and closed form agree for 1 <= m <= 16".into())
}

fn coefficients() -> Outcome {
    for (m, want) in [(2, 8.0), (3, 20.0), (7, 100.0)] {
        let got = family_cfrd_coefficient(m).map_err(err)?;
        ensure(got == want, || format!("alpha_{m} = {got}, expected {want}"))?;
    }
    let mut absent = Vec::new();
    for m in 2..=12 {
        if violation_slope(m).map_err(err)?.is_none() {
            absent.push(m);
        }
    }
    ensure(absent == [7, 8, 9], || format!("no violation for m in {absent:?}, expected [7, 8, 9]"))?;
    Ok("alpha_2 = 8, alpha_3 = 20, alpha_7 = 100; no violation for m in {7, 8, 9}".into())
}

const POINTS: [(f64, f64); 5] = [(0.3, 0.1), (0.9, 0.1), (0.9, 0.9), (1.4, 0.05), (0.05, 0.7)];

fn cfrd_generic_vs_closed() -> Outcome {
    for m in 2..=8 {
        for (l, s) in POINTS {
            let generic = cfrd_evaluate(&behavior_mmode(m, l, s).map_err(err)?).map_err(err)?;
            let closed = family_closed_form(m, l, s).map_err(err)?;
            ensure(rel_close(generic.lhs, closed.lhs) && rel_close(generic.rhs, closed.rhs), || {
                format!("m={m} (l, sigma)=({l}, {s}): generic {generic:?}, closed {closed:?}")
            })?;
        }
    }
    Ok(format!("{} points agree", 7 * POINTS.len()))
}

fn rs_thresholds() -> Outcome {
    let mut n = 0;
    for m in 2..=5 {
        for c in [0.0, 0.5, 1.0] {
            for (l, s) in POINTS {
                let b = if m == 2 { behavior_2mode(l, s) } else { behavior_mmode(m, l, s) }.map_err(err)?;
                let eig = rs_min_eigenvalue(&covariance_matrix(&b, JointChoice::new(c).map_err(err)?).map_err(err)?)
                    .map_err(err)?;
                let threshold = if m == 2 { rs_threshold_2mode(l, c) } else { rs_threshold_family(m, c).map_err(err)? };
                let margin = l * l + s * s - threshold;
                if margin.abs() > 1e-9 {
                    ensure((eig < 0.0) == (margin < 0.0), || {
                        format!("m={m} c={c} (l, sigma)=({l}, {s}): min eigenvalue {eig}, threshold margin {margin}")
                    })?;
                    n += 1;
                }
            }
        }
    }
    Ok(format!("{n} eigenvalue signs match the thresholds"))
}

fn classification_examples() -> Outcome {
    let cases = [
        (3, FamilyKind::Mmode, 0.9, 0.1, Label::PostQuantum),
        (3, FamilyKind::Mmode, 0.9, 0.9, Label::NoViolationDetected),
        (2, FamilyKind::TwoMode, 2.0, 0.1, Label::PostQuantum),
    ];
    for (m, family, l, s, want) in cases {
        for engine in [Engine::Generic, Engine::ClosedForm] {
            let got = classify_point_with(engine, m, family, l, s, 0.0).map_err(err)?.label;
            ensure(got == want, || format!("m={m} {family} ({l}, {s}) {engine:?}: {got}, expected {want}"))?;
        }
    }
    Ok("reference points labelled as expected by both engines".into())
}

fn no_signaling() -> Outcome {
    for m in 2..=6 {
        let report = check_no_signaling(&behavior_mmode(m, 0.8, 0.3).map_err(err)?);
        ensure(report.ok, || format!("m={m} family flagged as signaling: {report:?}"))?;
    }
    let report = check_no_signaling(&behavior_2mode(0.8, 0.3).map_err(err)?);
    ensure(report.ok, || format!("two-mode family flagged as signaling: {report:?}"))?;
    let report = check_no_signaling(&signaling_example(0.8, 0.3).map_err(err)?);
    ensure(!report.ok, || "signaling example passed the no-signaling check".into())?;
    Ok("families pass; signaling example is rejected".into())
}

fn mc_moments(mc: &McOptions) -> Outcome {
    let cases = random_moment_cases(50, 6, mc.seed);
    let checks = check_moment_cases(&cases, mc.samples, mc.seed).map_err(err)?;
    let agree = checks.iter().filter(|c| c.agrees).count();
    ensure(agree >= 48, || format!("{agree}/50 moment cases within 5 standard errors"))?;
    Ok(format!("{agree}/50 moment cases within 5 standard errors at n = {}", mc.samples))
}

fn mc_no_signaling(mc: &McOptions) -> Outcome {
    let n = (mc.samples / 10).max(1000);
    let r = ns_statistical_test(&behavior_mmode(3, 1.0, 0.5).map_err(err)?, &[0], n, mc.seed).map_err(err)?;
    ensure(r.pass, || format!("three-mode family failed: worst z {}", r.worst_z))?;
    let r = ns_statistical_test(&behavior_2mode(1.0, 0.3).map_err(err)?, &[0], n, mc.seed).map_err(err)?;
    ensure(r.pass, || format!("two-mode family failed: worst z {}", r.worst_z))?;
    let r = ns_statistical_test(&signaling_example(1.0, 0.3).map_err(err)?, &[0], n, mc.seed).map_err(err)?;
    ensure(!r.pass, || "signaling example passed the statistical test".into())?;
    Ok(format!("families pass and signaling example fails at n = {n} per setting"))
}
