//! Classification of `(l, σ)` parameter points and grid scans over them.
//!
//! Each point is labelled by two independent tests: the CFRD margin (negative
//! means nonlocal) and the minimum eigenvalue of `V + iΩ` (below `-tol` means
//! the covariance matrix is not quantum-realizable). Points failing both are
//! post-quantum. Satisfying the RS relation is never taken as evidence of
//! quantumness.

use std::io::Write;

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use serde_json::json;

use crate::behaviors::{FamilyKind, behavior_family};
use crate::cfrd::{cfrd_evaluate, family_closed_form, violation_slope};
use crate::error::{Error, Result};
use crate::montecarlo::{NsStatReport, ns_statistical_test};
use crate::rswitness::{
    JointChoice, RS_REL_TOL, covariance_matrix, rs_test, rs_threshold_2mode, rs_threshold_family,
};

/// Default grid step for both axes.
pub const DEFAULT_STEP: f64 = 0.01;

/// Samples per setting for the optional Monte-Carlo no-signaling cross-check.
pub const MC_CHECK_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NoViolationDetected,
    NonlocalOnly,
    RsViolatingOnly,
    PostQuantum,
}

impl Label {
    pub const ALL: [Label; 4] =
        [Label::NoViolationDetected, Label::NonlocalOnly, Label::RsViolatingOnly, Label::PostQuantum];

    pub fn from_tests(cfrd_violated: bool, rs_violated: bool) -> Self {
        match (cfrd_violated, rs_violated) {
            (false, false) => Label::NoViolationDetected,
            (true, false) => Label::NonlocalOnly,
            (false, true) => Label::RsViolatingOnly,
            (true, true) => Label::PostQuantum,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::NoViolationDetected => "no-violation-detected",
            Label::NonlocalOnly => "nonlocal-only",
            Label::RsViolatingOnly => "rs-violating-only",
            Label::PostQuantum => "post-quantum",
        }
    }

    pub fn is_nonlocal(&self) -> bool {
        matches!(self, Label::NonlocalOnly | Label::PostQuantum)
    }

    pub fn is_rs_violating(&self) -> bool {
        matches!(self, Label::RsViolatingOnly | Label::PostQuantum)
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Engine {
    /// Closed-form family formulas.
    #[serde(rename = "closed-form")]
    ClosedForm,
    /// Expansion plus moment engine, covariance matrix plus eigenvalues.
    #[serde(rename = "generic")]
    Generic,
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed-form" => Ok(Engine::ClosedForm),
            "generic" => Ok(Engine::Generic),
            other => Err(Error::InvalidParameter(format!("unknown engine '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    pub cfrd_margin: f64,
    pub rs_min_eig: f64,
    pub rs_tol: f64,
    pub label: Label,
}

impl Classification {
    fn new(cfrd_margin: f64, rs_min_eig: f64, rs_tol: f64) -> Self {
        let label = Label::from_tests(cfrd_margin < 0.0, rs_min_eig < -rs_tol);
        Self { cfrd_margin, rs_min_eig, rs_tol, label }
    }
}

fn check_point(modes: usize, family: FamilyKind, l: f64, sigma: f64, c: f64) -> Result<()> {
    if !(l.is_finite() && sigma.is_finite() && c.is_finite()) {
        return Err(Error::InvalidParameter("l, sigma and c must be finite".into()));
    }
    if l < 0.0 || sigma < 0.0 {
        return Err(Error::InvalidParameter(format!("need l >= 0 and sigma >= 0, got ({l}, {sigma})")));
    }
    match family {
        FamilyKind::TwoMode if modes != 2 => Err(Error::ModesOutOfRange { modes, min: 2, max: 2 }),
        _ if modes < 2 => Err(Error::ModesOutOfRange { modes, min: 2, max: usize::MAX }),
        _ => Ok(()),
    }
}

/// Labels one point using the generic engine.
pub fn classify_point(modes: usize, family: FamilyKind, l: f64, sigma: f64, c: f64) -> Result<Classification> {
    classify_point_with(Engine::Generic, modes, family, l, sigma, c)
}

pub fn classify_point_with(
    engine: Engine,
    modes: usize,
    family: FamilyKind,
    l: f64,
    sigma: f64,
    c: f64,
) -> Result<Classification> {
    check_point(modes, family, l, sigma, c)?;
    match engine {
        Engine::Generic => {
            let b = behavior_family(family, modes, l, sigma)?;
            let cfrd = cfrd_evaluate(&b)?;
            let cm = covariance_matrix(&b, JointChoice::new(c)?)?;
            let rs = rs_test(&cm)?;
            Ok(Classification::new(cfrd.margin, rs.min_eigenvalue, rs.tolerance))
        }
        Engine::ClosedForm => {
            // Both families coincide at m = 2.
            let cfrd = family_closed_form(modes, l, sigma)?;
            let v = l * l + sigma * sigma;
            let threshold = if modes == 2 {
                rs_threshold_2mode(l, c)
            } else {
                rs_threshold_family(modes, c)?
            };
            Ok(Classification::new(cfrd.margin, v - threshold, RS_REL_TOL * (1.0 + v)))
        }
    }
}

/// Inclusive arithmetic range `start, start + step, …, ≤ end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRange {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl GridRange {
    pub fn new(start: f64, end: f64, step: f64) -> Result<Self> {
        let r = Self { start, end, step };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.end.is_finite() && self.step.is_finite()) {
            return Err(Error::InvalidConfig("range bounds must be finite".into()));
        }
        if self.step <= 0.0 {
            return Err(Error::InvalidConfig(format!("step must be > 0, got {}", self.step)));
        }
        if self.end < self.start {
            return Err(Error::InvalidConfig(format!("empty range {}:{}", self.start, self.end)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.start + i as f64 * self.step).collect()
    }
}

impl std::str::FromStr for GridRange {
    type Err = Error;

    /// Parses `start:end:step`, or `start:end` with the default step, or a single value.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad number '{p}' in range '{s}'")))
        };
        match parts.as_slice() {
            [v] => {
                let v = num(v)?;
                GridRange::new(v, v, DEFAULT_STEP)
            }
            [a, b] => GridRange::new(num(a)?, num(b)?, DEFAULT_STEP),
            [a, b, c] => GridRange::new(num(a)?, num(b)?, num(c)?),
            _ => Err(Error::InvalidConfig(format!("range '{s}' is not start:end[:step]"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OutputFormat {
    #[serde(rename = "csv")]
    Csv,
    #[serde(rename = "json")]
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::InvalidConfig(format!("unknown format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanConfig {
    pub modes: usize,
    pub family: FamilyKind,
    pub l: GridRange,
    pub sigma: GridRange,
    pub c: f64,
    pub engine: Engine,
    pub format: OutputFormat,
    /// When set, a Monte-Carlo no-signaling check runs at the grid's central point.
    pub seed: Option<u64>,
}

impl ScanConfig {
    /// `l ∈ [0, 1.5]`, `σ ∈ [0, 1]`, step 0.01, `c = 0`, generic engine, CSV.
    pub fn new(modes: usize, family: FamilyKind) -> Self {
        Self {
            modes,
            family,
            l: GridRange { start: 0.0, end: 1.5, step: DEFAULT_STEP },
            sigma: GridRange { start: 0.0, end: 1.0, step: DEFAULT_STEP },
            c: 0.0,
            engine: Engine::Generic,
            format: OutputFormat::Csv,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.l.validate()?;
        self.sigma.validate()?;
        if self.l.start < 0.0 || self.sigma.start < 0.0 {
            return Err(Error::InvalidConfig("l and sigma ranges must be non-negative".into()));
        }
        if !self.c.is_finite() {
            return Err(Error::InvalidConfig("c must be finite".into()));
        }
        check_point(self.modes, self.family, 0.0, 0.0, self.c).map_err(|e| Error::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub l: f64,
    pub sigma: f64,
    #[serde(flatten)]
    pub classification: Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelCounts {
    #[serde(rename = "no-violation-detected")]
    pub no_violation_detected: usize,
    #[serde(rename = "nonlocal-only")]
    pub nonlocal_only: usize,
    #[serde(rename = "rs-violating-only")]
    pub rs_violating_only: usize,
    #[serde(rename = "post-quantum")]
    pub post_quantum: usize,
}

impl LabelCounts {
    pub fn get(&self, label: Label) -> usize {
        match label {
            Label::NoViolationDetected => self.no_violation_detected,
            Label::NonlocalOnly => self.nonlocal_only,
            Label::RsViolatingOnly => self.rs_violating_only,
            Label::PostQuantum => self.post_quantum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanSummary {
    pub counts: LabelCounts,
    pub cfrd_violating: usize,
    pub rs_violating: usize,
    /// Least-squares slope (through the origin) of the CFRD boundary.
    pub fitted_cfrd_slope: Option<f64>,
    pub boundary_points: usize,
    /// Analytic boundary slope of the family, for comparison.
    pub expected_cfrd_slope: Option<f64>,
    pub mc_no_signaling: Option<NsStatReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    pub config: ScanConfig,
    /// Row-major: `l` outer, `σ` inner.
    pub cells: Vec<Cell>,
    pub summary: ScanSummary,
}

pub fn scan_region(cfg: &ScanConfig) -> Result<ScanResult> {
    cfg.validate()?;
    let ls = cfg.l.points();
    let sigmas = cfg.sigma.points();
    let grid: Vec<(f64, f64)> = ls.iter().flat_map(|&l| sigmas.iter().map(move |&s| (l, s))).collect();
    let cells = grid
        .par_iter()
        .map(|&(l, sigma)| {
            classify_point_with(cfg.engine, cfg.modes, cfg.family, l, sigma, cfg.c)
                .map(|classification| Cell { l, sigma, classification })
        })
        .collect::<Result<Vec<_>>>()?;

    let count = |label| cells.iter().filter(|c| c.classification.label == label).count();
    let counts = LabelCounts {
        no_violation_detected: count(Label::NoViolationDetected),
        nonlocal_only: count(Label::NonlocalOnly),
        rs_violating_only: count(Label::RsViolatingOnly),
        post_quantum: count(Label::PostQuantum),
    };
    let boundary = cfrd_boundary(&cells, sigmas.len());
    let mc_no_signaling = match cfg.seed {
        Some(seed) => {
            let (l, s) = grid[grid.len() / 2];
            let b = behavior_family(cfg.family, cfg.modes, l, s)?;
            Some(ns_statistical_test(&b, &[0], MC_CHECK_SAMPLES, seed)?)
        }
        None => None,
    };
    let summary = ScanSummary {
        cfrd_violating: counts.nonlocal_only + counts.post_quantum,
        rs_violating: counts.rs_violating_only + counts.post_quantum,
        counts,
        fitted_cfrd_slope: fit_slope_through_origin(&boundary),
        boundary_points: boundary.len(),
        expected_cfrd_slope: violation_slope(cfg.modes)?,
        mc_no_signaling,
    };
    Ok(ScanResult { config: cfg.clone(), cells, summary })
}

/// Points `(l, σ_b)` where the CFRD verdict flips between neighbouring cells
/// of a row; `σ_b` is the midpoint of the two cells.
pub fn cfrd_boundary(cells: &[Cell], row_len: usize) -> Vec<(f64, f64)> {
    cells
        .chunks(row_len)
        .flat_map(|row| {
            row.windows(2).filter_map(|w| {
                let (a, b) = (&w[0], &w[1]);
                let flips = a.classification.label.is_nonlocal() != b.classification.label.is_nonlocal();
                flips.then(|| (a.l, 0.5 * (a.sigma + b.sigma)))
            })
        })
        .collect()
}

pub fn fit_slope_through_origin(points: &[(f64, f64)]) -> Option<f64> {
    let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Formats like C's `%.9g`.
pub fn fmt_sig9(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= DIGITS {
        let mantissa = strip_zeros(mantissa);
        format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        strip_zeros(&format!("{:.*}", (DIGITS - 1 - exp) as usize, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.') } else { s }
}

pub const CSV_HEADER: &str = "l,sigma,cfrd_margin,rs_min_eig,label";

pub fn write_csv<W: Write>(result: &ScanResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for cell in &result.cells {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_sig9(cell.l),
            fmt_sig9(cell.sigma),
            fmt_sig9(cell.classification.cfrd_margin),
            fmt_sig9(cell.classification.rs_min_eig),
            cell.classification.label
        )?;
    }
    Ok(())
}

pub fn to_json(result: &ScanResult) -> serde_json::Value {
    let cfg = &result.config;
    json!({
        "meta": {
            "modes": cfg.modes,
            "family": cfg.family,
            "c": cfg.c,
            "engine": cfg.engine,
            "ranges": { "l": cfg.l, "sigma": cfg.sigma },
            "tol": { "rs_relative": RS_REL_TOL, "rs_scale": "1 + max diagonal entry", "cfrd": "margin < 0" },
            "seed": cfg.seed,
            "version": env!("CARGO_PKG_VERSION"),
        },
        "cells": result.cells,
        "summary": result.summary,
    })
}
