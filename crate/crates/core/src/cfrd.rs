//! CFRD inequalities for `m` modes with two quadrature settings each.
//!
//! The product `∏_k (X₀ᵏ + i·X₁ᵏ)` is expanded into its real part `X̃_m` and
//! imaginary part `Ỹ_m`; a behavior violates the inequality when
//! `⟨X̃_m⟩² + ⟨Ỹ_m⟩² > ⟨∏_k ((X₀ᵏ)² + (X₁ᵏ)²)⟩`. [`cfrd_evaluate`] works on any
//! behavior through the moment engine. The sign-count recursions and the
//! family coefficient formulas are kept alongside as independent cross-checks.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::behaviors::{BellBehavior, MonomialQuery, SettingVector};
use crate::error::{Error, Result};

/// Largest mode count for the explicit expansion (`2^24` monomials).
pub const MAX_EXPANSION_MODES: usize = 24;

/// Largest mode count for which the closed forms are exact in `f64`.
pub const MAX_CLOSED_FORM_MODES: usize = 52;

/// Accepted distance from an integer before rounding a closed-form value.
pub const INTEGER_RESIDUE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignedMonomial {
    pub sign: i8,
    /// Setting used by each mode; every mode appears with degree one.
    pub settings: SettingVector,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfrdExpansion {
    pub modes: usize,
    pub x_terms: Vec<SignedMonomial>,
    pub y_terms: Vec<SignedMonomial>,
}

impl CfrdExpansion {
    /// Number of negative terms in the real and imaginary parts.
    pub fn negative_counts(&self) -> (u64, u64) {
        let neg = |t: &[SignedMonomial]| t.iter().filter(|m| m.sign < 0).count() as u64;
        (neg(&self.x_terms), neg(&self.y_terms))
    }
}

/// Expands `∏_{k<m} (X₀ᵏ + i·X₁ᵏ)` term by term.
pub fn expand_complex_product(modes: usize) -> Result<CfrdExpansion> {
    if !(1..=MAX_EXPANSION_MODES).contains(&modes) {
        return Err(Error::ModesOutOfRange { modes, min: 1, max: MAX_EXPANSION_MODES });
    }
    // Each term is (power of i mod 4, momentum bitmask).
    let mut terms: Vec<(u8, u32)> = vec![(0, 0)];
    for k in 0..modes {
        let mut next = Vec::with_capacity(terms.len() * 2);
        for &(unit, bits) in &terms {
            next.push((unit, bits));
            next.push(((unit + 1) % 4, bits | 1 << k));
        }
        terms = next;
    }

    let mut x_terms = Vec::with_capacity(terms.len() / 2);
    let mut y_terms = Vec::with_capacity(terms.len() / 2);
    for (unit, bits) in terms {
        let settings = SettingVector::from_bits(modes, bits)?;
        let (part, sign) = match unit {
            0 => (&mut x_terms, 1),
            1 => (&mut y_terms, 1),
            2 => (&mut x_terms, -1),
            _ => (&mut y_terms, -1),
        };
        part.push(SignedMonomial { sign, settings });
    }
    Ok(CfrdExpansion { modes, x_terms, y_terms })
}

/// Negative-term counts `(a_m, b_m)` from
/// `a_m = 2^{m-2} + a_{m-1} - b_{m-1}`, `b_m = a_{m-1} + b_{m-1}`, `(a₁, b₁) = (0, 0)`.
pub fn sign_counts_recursive(modes: usize) -> Result<(u64, u64)> {
    if !(1..=63).contains(&modes) {
        return Err(Error::ModesOutOfRange { modes, min: 1, max: 63 });
    }
    let (mut a, mut b) = (0u64, 0u64);
    for m in 2..=modes {
        (a, b) = ((1u64 << (m - 2)) + a - b, a + b);
    }
    Ok((a, b))
}

/// Negative-term counts from `½[2^{m-1} - 2^{m/2}·cos(mπ/4)]` and the sine analogue.
pub fn sign_counts_closed(modes: usize) -> Result<(u64, u64)> {
    check_closed_form_modes(modes, 1)?;
    let m = modes as f64;
    let half = 2f64.powf(m - 1.0);
    let root = 2f64.powf(m / 2.0);
    let angle = m * PI / 4.0;
    let a = round_integer(0.5 * (half - root * angle.cos()))?;
    let b = round_integer(0.5 * (half - root * angle.sin()))?;
    Ok((a as u64, b as u64))
}

fn check_closed_form_modes(modes: usize, min: usize) -> Result<()> {
    if (min..=MAX_CLOSED_FORM_MODES).contains(&modes) {
        Ok(())
    } else {
        Err(Error::ModesOutOfRange { modes, min, max: MAX_CLOSED_FORM_MODES })
    }
}

pub(crate) fn round_integer(value: f64) -> Result<f64> {
    let r = value.round();
    let residue = (value - r).abs();
    if residue < INTEGER_RESIDUE_TOL {
        Ok(r)
    } else {
        Err(Error::IntegerResidue { value, residue })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CfrdValue {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; negative means the inequality is violated.
    pub margin: f64,
}

impl CfrdValue {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, margin: rhs - lhs }
    }

    pub fn violated(&self) -> bool {
        self.margin < 0.0
    }
}

fn signed_sum(b: &BellBehavior, terms: &[SignedMonomial]) -> Result<f64> {
    let values = terms
        .par_iter()
        .map(|t| {
            b.correlator(&MonomialQuery::uniform(t.settings, 1))
                .map(|v| f64::from(t.sign) * v)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.iter().sum())
}

/// `(⟨X̃_m⟩, ⟨Ỹ_m⟩)` for an arbitrary behavior.
pub fn cfrd_expectations(b: &BellBehavior) -> Result<(f64, f64)> {
    let expansion = expand_complex_product(b.modes())?;
    Ok((signed_sum(b, &expansion.x_terms)?, signed_sum(b, &expansion.y_terms)?))
}

/// Evaluates both sides of the CFRD inequality on `b`.
///
/// Every monomial is evaluated under its own setting vector; the right-hand
/// side sums the all-squares correlator over every setting vector. Sums run
/// in a fixed order, so the result does not depend on the thread count.
pub fn cfrd_evaluate(b: &BellBehavior) -> Result<CfrdValue> {
    let (x, y) = cfrd_expectations(b)?;
    let settings: Vec<SettingVector> = SettingVector::all(b.modes()).collect();
    let squares = settings
        .par_iter()
        .map(|&s| b.correlator(&MonomialQuery::uniform(s, 2)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(CfrdValue::new(x * x + y * y, squares.iter().sum()))
}

/// Which part of the expansion holds the all-momentum monomial, and its sign:
/// `(-1)^{m/2}` in `X̃_m` for even `m`, `(-1)^{(m-1)/2}` in `Ỹ_m` for odd `m`.
pub fn all_momentum_term(modes: usize) -> (Part, i8) {
    if modes % 2 == 0 {
        (Part::Real, if (modes / 2) % 2 == 0 { 1 } else { -1 })
    } else {
        (Part::Imaginary, if ((modes - 1) / 2) % 2 == 0 { 1 } else { -1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Real,
    Imaginary,
}

/// `(⟨X̃_m⟩, ⟨Ỹ_m⟩)` for the parity family from the sign counts: every monomial
/// contributes `±l^m` except the all-momentum one, whose correlator is `-l^m`.
pub fn family_expectations(modes: usize, l: f64) -> Result<(f64, f64)> {
    check_closed_form_modes(modes, 2)?;
    let (a, b) = sign_counts_recursive(modes)?;
    let half = 2f64.powi(modes as i32 - 1);
    let lm = l.powi(modes as i32);
    let x = half - 2.0 * a as f64;
    let y = half - 2.0 * b as f64;
    let (part, sign) = all_momentum_term(modes);
    let correction = -2.0 * f64::from(sign);
    Ok(match part {
        Part::Real => ((x + correction) * lm, y * lm),
        Part::Imaginary => (x * lm, (y + correction) * lm),
    })
}

/// Coefficient `α_m` of the family inequality `α_m·l^{2m} ≤ 2^m·(l²+σ²)^m`.
pub fn family_cfrd_coefficient(modes: usize) -> Result<f64> {
    check_closed_form_modes(modes, 2)?;
    let m = modes as f64;
    let root = 2f64.powf(m / 2.0);
    let angle = m * PI / 4.0;
    let alpha = if modes % 2 == 0 {
        let sign = if (modes / 2 + 1) % 2 == 0 { 1.0 } else { -1.0 };
        (root * angle.cos() + sign * 2.0).powi(2) + 2f64.powf(m) * angle.sin().powi(2)
    } else {
        let sign = if ((modes - 1) / 2 + 1) % 2 == 0 { 1.0 } else { -1.0 };
        (root * angle.sin() + sign * 2.0).powi(2) + 2f64.powf(m) * angle.cos().powi(2)
    };
    round_integer(alpha)
}

/// Both sides of the family inequality in closed form.
pub fn family_closed_form(modes: usize, l: f64, sigma: f64) -> Result<CfrdValue> {
    let alpha = family_cfrd_coefficient(modes)?;
    let m = modes as i32;
    Ok(CfrdValue::new(
        alpha * l.powi(2 * m),
        2f64.powi(m) * (l * l + sigma * sigma).powi(m),
    ))
}

/// Slope `τ_m` of the violation boundary: the family violates the inequality
/// iff `σ < τ_m·l`. `None` when no parameters violate it.
pub fn violation_slope(modes: usize) -> Result<Option<f64>> {
    let alpha = family_cfrd_coefficient(modes)?;
    let radicand = alpha.powf(1.0 / modes as f64) / 2.0 - 1.0;
    Ok((radicand > 0.0).then(|| radicand.sqrt()))
}
