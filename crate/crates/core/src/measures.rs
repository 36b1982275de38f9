//! Finite mixtures of isotropic Gaussian measures on ℝ^k.
//!
//! Every outcome distribution in this crate is a [`MixtureMeasure`]: a weighted
//! list of [`GaussianComponent`]s that share a dimension. Each component has a
//! single width used for every coordinate, and a width of zero is a point mass.
//! Moments are exact (closed-form recursion); densities are only defined when
//! every component has a positive width.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, weighted::WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the total weight of a mixture.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// One isotropic normal measure: every coordinate has the same width `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    center: Vec<f64>,
    sigma: f64,
}

impl GaussianComponent {
    pub fn new(center: Vec<f64>, sigma: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidParameter("center must have at least one coordinate".into()));
        }
        if let Some(x) = center.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite center coordinate {x}")));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        Ok(Self { center, sigma })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn is_point_mass(&self) -> bool {
        self.sigma == 0.0
    }

    fn moment(&self, exponents: &[u32]) -> f64 {
        self.center
            .iter()
            .zip(exponents)
            .map(|(&a, &n)| normal_moment(n, a, self.sigma))
            .product()
    }
}

/// Non-central moment E[X^n] of X ~ N(a, sigma²).
///
/// Uses M_0 = 1, M_1 = a, M_n = a·M_{n-1} + (n-1)·sigma²·M_{n-2}.
pub fn normal_moment(n: u32, a: f64, sigma: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => a,
        _ => {
            let var = sigma * sigma;
            let (mut prev, mut cur) = (1.0, a);
            for k in 2..=n {
                let next = a * cur + f64::from(k - 1) * var * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// A weighted finite mixture of [`GaussianComponent`]s of a common dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureMeasure {
    dim: usize,
    components: Vec<(f64, GaussianComponent)>,
}

impl MixtureMeasure {
    /// Builds a mixture, checking dimensions, weight range and the weight sum.
    pub fn from_components(components: Vec<(f64, GaussianComponent)>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidParameter("mixture needs at least one component".into()))?;
        let dim = first.1.dim();
        let mut total = 0.0;
        for (w, c) in &components {
            if !(w.is_finite() && *w > 0.0 && *w <= 1.0 + WEIGHT_SUM_TOL) {
                return Err(Error::InvalidParameter(format!("weight {w} outside (0, 1]")));
            }
            if c.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: c.dim() });
            }
            total += w;
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::WeightSum(total));
        }
        Ok(Self { dim, components })
    }

    /// Uniform mixture of equal-width components at the given centers.
    pub fn uniform(centers: Vec<Vec<f64>>, sigma: f64) -> Result<Self> {
        let w = 1.0 / centers.len() as f64;
        let components = centers
            .into_iter()
            .map(|c| GaussianComponent::new(c, sigma).map(|g| (w, g)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_components(components)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[(f64, GaussianComponent)] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn has_point_mass(&self) -> bool {
        self.components.iter().any(|(_, c)| c.is_point_mass())
    }

    /// Projects every component onto the coordinates in `keep` (in that order).
    ///
    /// Components whose projected center and width coincide exactly are merged;
    /// the merged component keeps the position of its first occurrence.
    pub fn marginalize(&self, keep: &[usize]) -> Result<Self> {
        self.check_keep(keep)?;

        let mut slot: HashMap<(Vec<u64>, u64), usize> = HashMap::new();
        let mut out: Vec<(f64, GaussianComponent)> = Vec::new();
        for (w, c) in &self.components {
            // +0.0 folds -0.0 into 0.0 so they merge.
            let center: Vec<f64> = keep.iter().map(|&i| c.center[i] + 0.0).collect();
            let key = (center.iter().map(|x| x.to_bits()).collect(), c.sigma.to_bits());
            match slot.get(&key) {
                Some(&j) => out[j].0 += w,
                None => {
                    slot.insert(key, out.len());
                    out.push((*w, GaussianComponent { center, sigma: c.sigma }));
                }
            }
        }
        Ok(Self { dim: keep.len(), components: out })
    }

    /// Exact product moment E[∏ x_i^{n_i}].
    pub fn moment(&self, exponents: &[u32]) -> Result<f64> {
        if exponents.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: exponents.len() });
        }
        Ok(self.components.iter().map(|(w, c)| w * c.moment(exponents)).sum())
    }

    pub fn density_at(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: point.len() });
        }
        if self.has_point_mass() {
            return Err(Error::UndefinedDensity);
        }
        let k = self.dim as i32;
        Ok(self
            .components
            .iter()
            .map(|(w, c)| {
                let s = c.sigma;
                let dist2: f64 = c.center.iter().zip(point).map(|(a, x)| (a - x) * (a - x)).sum();
                w * (s * (2.0 * PI).sqrt()).powi(-k) * (-dist2 / (2.0 * s * s)).exp()
            })
            .sum())
    }

    /// Draws `count` points, reproducibly for a given `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let sampler = Sampler::new(self);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let mut p = vec![0.0; self.dim];
                sampler.draw_into(&mut rng, &mut p);
                p
            })
            .collect()
    }

    /// Merged, lexicographically sorted copy used for equality comparisons.
    pub fn canonical(&self) -> Self {
        let all: Vec<usize> = (0..self.dim).collect();
        self.canonical_marginal(&all).expect("identity projection is valid")
    }

    /// Canonical form of the marginal on `keep`: projected, sorted by center
    /// then width, with exactly coinciding components merged.
    pub fn canonical_marginal(&self, keep: &[usize]) -> Result<Self> {
        self.check_keep(keep)?;
        let k = keep.len();
        let stride = k + 1;
        let mut keys = Vec::with_capacity(self.components.len() * stride);
        for (_, c) in &self.components {
            keys.extend(keep.iter().map(|&i| ordered_bits(c.center[i] + 0.0)));
            keys.push(ordered_bits(c.sigma));
        }
        let key = |j: usize| &keys[j * stride..(j + 1) * stride];
        let mut order: Vec<usize> = (0..self.components.len()).collect();
        order.sort_by(|&a, &b| key(a).cmp(key(b)));
        let mut out: Vec<(f64, GaussianComponent)> = Vec::new();
        let mut prev: Option<usize> = None;
        for j in order {
            let (w, c) = &self.components[j];
            match prev {
                Some(p) if key(p) == key(j) => out.last_mut().expect("previous component").0 += w,
                _ => {
                    let center = keep.iter().map(|&i| c.center[i] + 0.0).collect();
                    out.push((*w, GaussianComponent { center, sigma: c.sigma }));
                    prev = Some(j);
                }
            }
        }
        Ok(Self { dim: k, components: out })
    }

    fn check_keep(&self, keep: &[usize]) -> Result<()> {
        if keep.is_empty() {
            return Err(Error::InvalidSubset("keep set is empty".into()));
        }
        let mut seen = vec![false; self.dim];
        for &i in keep {
            if i >= self.dim {
                return Err(Error::InvalidSubset(format!("index {i} out of range for dimension {}", self.dim)));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidSubset(format!("index {i} repeated")));
            }
        }
        Ok(())
    }

    /// Largest elementwise weight/center/width difference between the canonical
    /// forms of two mixtures; infinite when their shapes differ.
    pub fn discrepancy(&self, other: &Self) -> f64 {
        canonical_discrepancy(&self.canonical(), &other.canonical())
    }
}

/// [`MixtureMeasure::discrepancy`] for mixtures already in canonical form.
pub(crate) fn canonical_discrepancy(a: &MixtureMeasure, b: &MixtureMeasure) -> f64 {
    if a.dim != b.dim || a.len() != b.len() {
        return f64::INFINITY;
    }
    a.components
        .iter()
        .zip(&b.components)
        .map(|((wa, ca), (wb, cb))| {
            let dc = ca
                .center
                .iter()
                .zip(&cb.center)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            (wa - wb).abs().max(dc).max((ca.sigma - cb.sigma).abs())
        })
        .fold(0.0, f64::max)
}

/// Integer image of a float whose ordering matches `f64::total_cmp`.
fn ordered_bits(x: f64) -> i64 {
    let bits = x.to_bits() as i64;
    bits ^ (((bits >> 63) as u64) >> 1) as i64
}

/// Single normal measure with weight 1.
pub fn normal_measure(center: Vec<f64>, sigma: f64) -> Result<MixtureMeasure> {
    MixtureMeasure::from_components(vec![(1.0, GaussianComponent::new(center, sigma)?)])
}

/// Flattens a weighted list of mixtures into one mixture.
///
/// Weights must already sum to 1; nothing is renormalized.
pub fn mix(entries: &[(f64, MixtureMeasure)]) -> Result<MixtureMeasure> {
    let first = entries
        .first()
        .ok_or_else(|| Error::InvalidParameter("mix needs at least one entry".into()))?;
    let dim = first.1.dim();
    let mut total = 0.0;
    for (w, m) in entries {
        if !(w.is_finite() && *w > 0.0) {
            return Err(Error::InvalidParameter(format!("mixing weight {w} must be positive")));
        }
        if m.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: m.dim() });
        }
        total += w;
    }
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::WeightSum(total));
    }
    let components = entries
        .iter()
        .flat_map(|(w, m)| m.components.iter().map(move |(v, c)| (w * v, c.clone())))
        .collect();
    MixtureMeasure::from_components(components)
}

/// Reusable draw machinery for one measure.
pub(crate) struct Sampler<'a> {
    measure: &'a MixtureMeasure,
    picker: Option<WeightedIndex<f64>>,
}

impl<'a> Sampler<'a> {
    pub(crate) fn new(measure: &'a MixtureMeasure) -> Self {
        let picker = (measure.len() > 1).then(|| {
            WeightedIndex::new(measure.components.iter().map(|(w, _)| *w))
                .expect("validated mixture weights")
        });
        Self { measure, picker }
    }

    pub(crate) fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let idx = self.picker.as_ref().map_or(0, |p| p.sample(rng));
        let c = &self.measure.components[idx].1;
        if c.sigma == 0.0 {
            out.copy_from_slice(&c.center);
            return;
        }
        for (o, a) in out.iter_mut().zip(&c.center) {
            let z: f64 = StandardNormal.sample(rng);
            *o = a + c.sigma * z;
        }
    }
}
