//! Covariance matrices of Bell behaviors and the Robertson-Schrödinger test.
//!
//! Quadratures are ordered `(q₁, p₁, …, q_m, p_m)`; index `2i + s` is mode `i`
//! measured with setting `s`. A behavior only fixes the statistics of one
//! setting per mode at a time, so the within-mode `q`/`p` covariance is an
//! external choice ([`JointChoice`]). A covariance matrix that fails
//! `V + iΩ ≥ 0` cannot come from any quantum state.
//!
//! The minimum eigenvalue of the Hermitian `V + iΩ` is computed from the real
//! symmetric embedding `[[V, -Ω], [Ω, V]]`, whose spectrum is that of `V + iΩ`
//! with every eigenvalue doubled.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::behaviors::{BellBehavior, MonomialQuery, check_no_signaling};
use crate::error::{Error, Result};

/// Symmetry tolerance for covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Relative tolerance of the RS test; scaled by `1 + max diagonal entry`.
pub const RS_REL_TOL: f64 = 1e-9;

/// Value of the symmetrized single-mode cross moment `½⟨{q, p}⟩ - ⟨q⟩⟨p⟩`,
/// shared by every mode. Zero corresponds to the product joint distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointChoice {
    c: f64,
}

impl JointChoice {
    pub fn new(c: f64) -> Result<Self> {
        if c.is_finite() {
            Ok(Self { c })
        } else {
            Err(Error::InvalidParameter(format!("joint choice c must be finite, got {c}")))
        }
    }

    pub fn product() -> Self {
        Self { c: 0.0 }
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    modes: usize,
    entries: DMatrix<f64>,
    means: DVector<f64>,
}

impl CovarianceMatrix {
    pub fn new(modes: usize, entries: DMatrix<f64>, means: DVector<f64>) -> Result<Self> {
        let n = 2 * modes;
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: entries.nrows().max(entries.ncols()) });
        }
        if means.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: means.len() });
        }
        let asym = max_asymmetry(&entries);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        if let Some(d) = entries.diagonal().iter().find(|d| **d < 0.0) {
            return Err(Error::InvalidParameter(format!("negative variance {d}")));
        }
        Ok(Self { modes, entries, means })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn means(&self) -> &DVector<f64> {
        &self.means
    }

    pub fn max_diagonal(&self) -> f64 {
        self.entries.diagonal().max()
    }
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}

/// Block-diagonal `⊕ [[0, 1], [-1, 0]]` over `modes` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticForm {
    entries: DMatrix<f64>,
}

impl SymplecticForm {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

pub fn symplectic_form(modes: usize) -> SymplecticForm {
    let mut entries = DMatrix::zeros(2 * modes, 2 * modes);
    for i in 0..modes {
        entries[(2 * i, 2 * i + 1)] = 1.0;
        entries[(2 * i + 1, 2 * i)] = -1.0;
    }
    SymplecticForm { entries }
}

/// Covariance matrix of `b` with within-mode cross term `jc`.
///
/// Fails on signaling behaviors, whose marginals (and hence whose covariance
/// entries) depend on the settings of the other modes.
pub fn covariance_matrix(b: &BellBehavior, jc: JointChoice) -> Result<CovarianceMatrix> {
    let ns = check_no_signaling(b);
    if !ns.ok {
        return Err(Error::Signaling(ns.worst_violation));
    }
    let (mut v, means) = b.covariance_base.get_or_init(|| covariance_base(b)).clone()?;
    for i in 0..b.modes() {
        v[(2 * i, 2 * i + 1)] = jc.c;
        v[(2 * i + 1, 2 * i)] = jc.c;
    }
    CovarianceMatrix::new(b.modes(), v, means)
}

/// Covariances of the marginal moments with the within-mode entries left at
/// zero, plus the means. Shared by every joint choice.
pub(crate) fn covariance_base(b: &BellBehavior) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let m = b.modes();
    let n = 2 * m;

    let mut means = DVector::zeros(n);
    let mut second = DVector::zeros(n);
    for i in 0..m {
        for s in 0..2u8 {
            let idx = 2 * i + usize::from(s);
            means[idx] = b.correlator(&MonomialQuery::sparse(m, &[(i, s, 1)])?)?;
            second[idx] = b.correlator(&MonomialQuery::sparse(m, &[(i, s, 2)])?)?;
        }
    }

    let mut v = DMatrix::zeros(n, n);
    for i in 0..m {
        for s in 0..2u8 {
            let a = 2 * i + usize::from(s);
            v[(a, a)] = second[a] - means[a] * means[a];
        }
        for j in i + 1..m {
            for s in 0..2u8 {
                for t in 0..2u8 {
                    let (a, c) = (2 * i + usize::from(s), 2 * j + usize::from(t));
                    let q = MonomialQuery::sparse(m, &[(i, s, 1), (j, t, 1)])?;
                    let cov = b.correlator(&q)? - means[a] * means[c];
                    v[(a, c)] = cov;
                    v[(c, a)] = cov;
                }
            }
        }
    }
    Ok((v, means))
}

/// Minimum eigenvalue of `V + iΩ` for a symmetric `2m × 2m` matrix `V`.
pub fn min_eigenvalue_with_symplectic(v: &DMatrix<f64>) -> Result<f64> {
    let n = v.nrows();
    if n != v.ncols() || n % 2 != 0 {
        return Err(Error::DimensionMismatch { expected: n + n % 2, found: v.ncols() });
    }
    let asym = max_asymmetry(v);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let omega = symplectic_form(n / 2).entries;
    let mut embed = DMatrix::zeros(2 * n, 2 * n);
    embed.view_mut((0, 0), (n, n)).copy_from(v);
    embed.view_mut((n, n), (n, n)).copy_from(v);
    embed.view_mut((0, n), (n, n)).copy_from(&(-&omega));
    embed.view_mut((n, 0), (n, n)).copy_from(&omega);
    Ok(embed.symmetric_eigenvalues().min())
}

pub fn rs_min_eigenvalue(v: &CovarianceMatrix) -> Result<f64> {
    min_eigenvalue_with_symplectic(&v.entries)
}

/// Tolerance below zero before the RS test counts as violated.
pub fn rs_tolerance(v: &CovarianceMatrix) -> f64 {
    RS_REL_TOL * (1.0 + v.max_diagonal())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RsVerdict {
    /// Not quantum-realizable under the stated covariance assumptions.
    #[serde(rename = "not-quantum-realizable")]
    Violated,
    /// The relation holds, which is necessary but not sufficient in general.
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RsReport {
    pub min_eigenvalue: f64,
    pub tolerance: f64,
    pub violated: bool,
    pub verdict: RsVerdict,
}

pub fn rs_test(v: &CovarianceMatrix) -> Result<RsReport> {
    let min_eigenvalue = rs_min_eigenvalue(v)?;
    let tolerance = rs_tolerance(v);
    let violated = min_eigenvalue < -tolerance;
    Ok(RsReport {
        min_eigenvalue,
        tolerance,
        violated,
        verdict: if violated { RsVerdict::Violated } else { RsVerdict::Inconclusive },
    })
}

/// The parity family (`m ≥ 3`) violates RS iff `l² + σ² < sqrt(1 + c²)`.
pub fn rs_threshold_family(modes: usize, c: f64) -> Result<f64> {
    if modes < 3 {
        return Err(Error::ModesOutOfRange { modes, min: 3, max: usize::MAX });
    }
    Ok((1.0 + c * c).sqrt())
}

/// The two-mode behavior violates RS iff `l² + σ² < sqrt(1 + l⁴ + (l² + |c|)²)`.
///
/// At `c = 0` this is `sqrt(1 + 2l⁴)`.
pub fn rs_threshold_2mode(l: f64, c: f64) -> f64 {
    let l2 = l * l;
    (1.0 + l2 * l2 + (l2 + c.abs()).powi(2)).sqrt()
}
