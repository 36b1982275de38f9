//! Multi-mode Bell behaviors: one outcome measure per global setting vector.
//!
//! Each of the `m` modes chooses between two settings (0 = position,
//! 1 = momentum), so a behavior holds `2^m` mixtures over ℝ^m. The two
//! families built here place uniform weight on sign patterns `(±l, …, ±l)`
//! of fixed parity: odd parity for the all-momentum setting, even parity for
//! every other setting.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{MixtureMeasure, canonical_discrepancy};

/// Largest mode count a setting vector can address.
pub const MAX_MODES: usize = 24;

/// Above this mode count family behaviors are generated on demand and the
/// no-signaling check only inspects marginals on one or two modes.
pub const EXTENSIONAL_MAX_MODES: usize = 12;

/// Tolerance for comparing canonicalized marginals.
pub const NS_TOL: f64 = 1e-12;

fn check_modes(modes: usize, min: usize) -> Result<()> {
    if (min..=MAX_MODES).contains(&modes) {
        Ok(())
    } else {
        Err(Error::ModesOutOfRange { modes, min, max: MAX_MODES })
    }
}

/// One measurement setting per mode, packed as bits (bit `i` is mode `i`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SettingVector {
    modes: u8,
    bits: u32,
}

impl SettingVector {
    pub fn new(settings: &[u8]) -> Result<Self> {
        check_modes(settings.len(), 1)?;
        let mut bits = 0u32;
        for (i, &s) in settings.iter().enumerate() {
            match s {
                0 => {}
                1 => bits |= 1 << i,
                _ => return Err(Error::InvalidParameter(format!("setting {s} is not 0 or 1"))),
            }
        }
        Ok(Self { modes: settings.len() as u8, bits })
    }

    pub fn from_bits(modes: usize, bits: u32) -> Result<Self> {
        check_modes(modes, 1)?;
        if modes < 32 && bits >> modes != 0 {
            return Err(Error::InvalidParameter(format!("bits {bits:#b} exceed {modes} modes")));
        }
        Ok(Self { modes: modes as u8, bits })
    }

    pub fn zeros(modes: usize) -> Result<Self> {
        Self::from_bits(modes, 0)
    }

    pub fn all_ones(modes: usize) -> Result<Self> {
        check_modes(modes, 1)?;
        Ok(Self { modes: modes as u8, bits: full_mask(modes) })
    }

    pub fn modes(&self) -> usize {
        usize::from(self.modes)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn get(&self, mode: usize) -> u8 {
        ((self.bits >> mode) & 1) as u8
    }

    pub fn with(self, mode: usize, setting: u8) -> Self {
        let bits = (self.bits & !(1 << mode)) | (u32::from(setting & 1) << mode);
        Self { bits, ..self }
    }

    pub fn is_all_ones(&self) -> bool {
        self.bits == full_mask(self.modes())
    }

    pub fn to_vec(&self) -> Vec<u8> {
        (0..self.modes()).map(|i| self.get(i)).collect()
    }

    /// Every setting vector for `modes` modes, in increasing bit order.
    pub fn all(modes: usize) -> impl Iterator<Item = SettingVector> {
        let m = modes as u8;
        (0..=full_mask(modes)).map(move |bits| SettingVector { modes: m, bits })
    }
}

fn full_mask(modes: usize) -> u32 {
    if modes >= 32 { u32::MAX } else { (1u32 << modes) - 1 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Odd,
    Even,
}

/// All sign patterns of `(±l, …, ±l)` in ℝ^m with a fixed parity of minus signs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedCenterFamily {
    pub modes: usize,
    pub l: f64,
    pub parity: Parity,
}

impl SignedCenterFamily {
    /// The `2^{m-1}` centers, ordered by the bitmask of their minus signs.
    pub fn centers(&self) -> Vec<Vec<f64>> {
        let want_odd = self.parity == Parity::Odd;
        (0..=full_mask(self.modes))
            .filter(|mask| (mask.count_ones() % 2 == 1) == want_odd)
            .map(|mask| {
                (0..self.modes)
                    .map(|i| if mask >> i & 1 == 1 { -self.l } else { self.l })
                    .collect()
            })
            .collect()
    }

    pub fn measure(&self, sigma: f64) -> Result<MixtureMeasure> {
        MixtureMeasure::uniform(self.centers(), sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyKind {
    #[serde(rename = "mmode")]
    Mmode,
    #[serde(rename = "2mode")]
    TwoMode,
}

impl std::fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FamilyKind::Mmode => "mmode",
            FamilyKind::TwoMode => "2mode",
        })
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mmode" => Ok(FamilyKind::Mmode),
            "2mode" => Ok(FamilyKind::TwoMode),
            other => Err(Error::InvalidParameter(format!("unknown family '{other}'"))),
        }
    }
}

/// Where a behavior came from; families remember their parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Family { kind: FamilyKind, l: f64, sigma: f64 },
    Custom,
}

#[derive(Debug, Clone)]
enum Table {
    /// One measure per setting vector, indexed by its bits.
    Explicit(Vec<Arc<MixtureMeasure>>),
    /// Parity family, materialized on first use.
    Lazy {
        odd: SignedCenterFamily,
        even: SignedCenterFamily,
        sigma: f64,
        odd_measure: OnceLock<Arc<MixtureMeasure>>,
        even_measure: OnceLock<Arc<MixtureMeasure>>,
    },
}

#[derive(Debug, Clone)]
pub struct BellBehavior {
    modes: usize,
    provenance: Provenance,
    table: Table,
    no_signaling: OnceLock<NoSignalingReport>,
    pub(crate) covariance_base: OnceLock<Result<(DMatrix<f64>, DVector<f64>)>>,
}

impl BellBehavior {
    /// Behavior from an explicit table indexed by setting bits.
    pub fn from_table(modes: usize, table: Vec<MixtureMeasure>) -> Result<Self> {
        check_modes(modes, 1)?;
        if modes > EXTENSIONAL_MAX_MODES {
            return Err(Error::ModesOutOfRange { modes, min: 1, max: EXTENSIONAL_MAX_MODES });
        }
        if table.len() != 1usize << modes {
            return Err(Error::InvalidParameter(format!(
                "table has {} entries, expected {}",
                table.len(),
                1usize << modes
            )));
        }
        if let Some(bad) = table.iter().find(|m| m.dim() != modes) {
            return Err(Error::DimensionMismatch { expected: modes, found: bad.dim() });
        }
        Ok(Self {
            modes,
            provenance: Provenance::Custom,
            table: Table::Explicit(table.into_iter().map(Arc::new).collect()),
            no_signaling: OnceLock::new(),
            covariance_base: OnceLock::new(),
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn is_lazy(&self) -> bool {
        matches!(self.table, Table::Lazy { .. })
    }

    pub fn measure(&self, settings: SettingVector) -> Result<Arc<MixtureMeasure>> {
        if settings.modes() != self.modes {
            return Err(Error::DimensionMismatch { expected: self.modes, found: settings.modes() });
        }
        Ok(match &self.table {
            Table::Explicit(t) => Arc::clone(&t[settings.bits() as usize]),
            Table::Lazy { odd, even, sigma, odd_measure, even_measure } => {
                let (family, cell) = if settings.is_all_ones() {
                    (odd, odd_measure)
                } else {
                    (even, even_measure)
                };
                Arc::clone(cell.get_or_init(|| {
                    Arc::new(family.measure(*sigma).expect("family parameters validated"))
                }))
            }
        })
    }

    /// Moment of the measure selected by the query's settings.
    pub fn correlator(&self, query: &MonomialQuery) -> Result<f64> {
        if query.modes() != self.modes {
            return Err(Error::MalformedQuery(format!(
                "query covers {} modes, behavior has {}",
                query.modes(),
                self.modes
            )));
        }
        self.measure(query.settings)?.moment(&query.exponents)
    }

    pub fn to_document(&self) -> Result<BehaviorDocument> {
        let (family, l, sigma) = match self.provenance {
            Provenance::Family { kind, l, sigma } => (kind.to_string(), Some(l), Some(sigma)),
            Provenance::Custom => ("custom".to_string(), None, None),
        };
        let table = SettingVector::all(self.modes)
            .map(|s| {
                let m = self.measure(s)?;
                Ok(TableEntry {
                    settings: s.to_vec(),
                    components: m
                        .components()
                        .iter()
                        .map(|(w, c)| ComponentEntry {
                            weight: *w,
                            center: c.center().to_vec(),
                            sigma: c.sigma(),
                        })
                        .collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BehaviorDocument { modes: self.modes, l, sigma, family, table })
    }
}

fn check_family_params(l: f64, sigma: f64) -> Result<()> {
    if !l.is_finite() {
        return Err(Error::InvalidParameter(format!("l must be finite, got {l}")));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    Ok(())
}

/// The parity family on `m ≥ 2` modes: odd-parity centers for the
/// all-momentum setting, even-parity centers for every other setting.
pub fn behavior_mmode(modes: usize, l: f64, sigma: f64) -> Result<BellBehavior> {
    check_modes(modes, 2)?;
    check_family_params(l, sigma)?;
    if l < 0.0 {
        return Err(Error::InvalidParameter(format!("l must be >= 0, got {l}")));
    }
    let odd = SignedCenterFamily { modes, l, parity: Parity::Odd };
    let even = SignedCenterFamily { modes, l, parity: Parity::Even };
    let provenance = Provenance::Family { kind: FamilyKind::Mmode, l, sigma };

    let table = if modes <= EXTENSIONAL_MAX_MODES {
        let odd_m = Arc::new(odd.measure(sigma)?);
        let even_m = Arc::new(even.measure(sigma)?);
        Table::Explicit(
            SettingVector::all(modes)
                .map(|s| Arc::clone(if s.is_all_ones() { &odd_m } else { &even_m }))
                .collect(),
        )
    } else {
        Table::Lazy {
            odd,
            even,
            sigma,
            odd_measure: OnceLock::new(),
            even_measure: OnceLock::new(),
        }
    };
    Ok(BellBehavior {
        modes,
        provenance,
        table,
        no_signaling: OnceLock::new(),
        covariance_base: OnceLock::new(),
    })
}

/// The two-mode behavior: correlated centers `(l,l),(-l,-l)` except for the
/// momentum-momentum setting, which is anti-correlated.
pub fn behavior_2mode(l: f64, sigma: f64) -> Result<BellBehavior> {
    check_family_params(l, sigma)?;
    let same = Arc::new(MixtureMeasure::uniform(vec![vec![l, l], vec![-l, -l]], sigma)?);
    let flip = Arc::new(MixtureMeasure::uniform(vec![vec![l, -l], vec![-l, l]], sigma)?);
    Ok(BellBehavior {
        modes: 2,
        provenance: Provenance::Family { kind: FamilyKind::TwoMode, l, sigma },
        table: Table::Explicit(vec![Arc::clone(&same), Arc::clone(&same), same, flip]),
        no_signaling: OnceLock::new(),
            covariance_base: OnceLock::new(),
    })
}

pub fn behavior_family(kind: FamilyKind, modes: usize, l: f64, sigma: f64) -> Result<BellBehavior> {
    match kind {
        FamilyKind::Mmode => behavior_mmode(modes, l, sigma),
        FamilyKind::TwoMode if modes == 2 => behavior_2mode(l, sigma),
        FamilyKind::TwoMode => Err(Error::ModesOutOfRange { modes, min: 2, max: 2 }),
    }
}

/// A deliberately signaling two-mode behavior: mode 0 sees `N(l)` when mode 1
/// measures position and `N(-l)` when mode 1 measures momentum.
pub fn signaling_example(l: f64, sigma: f64) -> Result<BellBehavior> {
    check_family_params(l, sigma)?;
    let near = MixtureMeasure::uniform(vec![vec![l, l]], sigma)?;
    let far = MixtureMeasure::uniform(vec![vec![-l, l]], sigma)?;
    // bits: (s0, s1) = 00, 10, 01, 11
    BellBehavior::from_table(2, vec![near.clone(), near, far.clone(), far])
}

/// A product moment `⟨∏ (X^k_{s_k})^{n_k}⟩`: one setting and one exponent per mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialQuery {
    settings: SettingVector,
    exponents: Vec<u32>,
}

impl MonomialQuery {
    pub fn new(terms: &[(u8, u32)]) -> Result<Self> {
        let bits: Vec<u8> = terms.iter().map(|t| t.0).collect();
        let settings =
            SettingVector::new(&bits).map_err(|e| Error::MalformedQuery(e.to_string()))?;
        Ok(Self { settings, exponents: terms.iter().map(|t| t.1).collect() })
    }

    pub fn from_parts(settings: SettingVector, exponents: Vec<u32>) -> Result<Self> {
        if exponents.len() != settings.modes() {
            return Err(Error::MalformedQuery(format!(
                "{} exponents for {} settings",
                exponents.len(),
                settings.modes()
            )));
        }
        Ok(Self { settings, exponents })
    }

    /// Same exponent on every mode.
    pub fn uniform(settings: SettingVector, exponent: u32) -> Self {
        Self { settings, exponents: vec![exponent; settings.modes()] }
    }

    /// Exponents on a few modes, zero elsewhere (whose settings are taken as 0).
    pub fn sparse(modes: usize, terms: &[(usize, u8, u32)]) -> Result<Self> {
        let mut settings = SettingVector::zeros(modes)?;
        let mut exponents = vec![0; modes];
        for &(mode, s, n) in terms {
            if mode >= modes || s > 1 {
                return Err(Error::MalformedQuery(format!("term ({mode}, {s}, {n}) invalid for {modes} modes")));
            }
            settings = settings.with(mode, s);
            exponents[mode] = n;
        }
        Ok(Self { settings, exponents })
    }

    pub fn modes(&self) -> usize {
        self.settings.modes()
    }

    pub fn settings(&self) -> SettingVector {
        self.settings
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoSignalingReport {
    pub ok: bool,
    pub worst_violation: f64,
    /// False when only marginals on one or two modes were compared.
    pub exhaustive: bool,
}

/// Checks that every marginal on a nonempty proper subset of modes is
/// independent of the settings outside that subset. The report is computed
/// once per behavior and cached.
pub fn check_no_signaling(b: &BellBehavior) -> NoSignalingReport {
    *b.no_signaling.get_or_init(|| compute_no_signaling(b))
}

fn compute_no_signaling(b: &BellBehavior) -> NoSignalingReport {
    let m = b.modes;
    if m < 2 {
        return NoSignalingReport { ok: true, worst_violation: 0.0, exhaustive: true };
    }
    let worst = match &b.table {
        Table::Explicit(table) => explicit_discrepancy(table, m),
        Table::Lazy { .. } => {
            log::warn!(
                "no-signaling check for {m} modes restricted to marginals on at most two modes"
            );
            let odd = b.measure(SettingVector::all_ones(m).expect("valid modes")).expect("valid");
            let even = b.measure(SettingVector::zeros(m).expect("valid modes")).expect("valid");
            let mut worst = 0.0f64;
            for i in 0..m {
                worst = worst.max(lazy_discrepancy(&odd, &even, &[i]));
                for j in i + 1..m {
                    worst = worst.max(lazy_discrepancy(&odd, &even, &[i, j]));
                }
            }
            worst
        }
    };
    NoSignalingReport {
        ok: worst <= NS_TOL,
        worst_violation: worst,
        exhaustive: !b.is_lazy(),
    }
}

fn lazy_discrepancy(odd: &MixtureMeasure, even: &MixtureMeasure, keep: &[usize]) -> f64 {
    let a = odd.canonical_marginal(keep).expect("valid subset");
    let b = even.canonical_marginal(keep).expect("valid subset");
    canonical_discrepancy(&a, &b)
}

/// Tables with at most this many distinct measures are checked level by
/// level, deriving each marginal from an already merged parent marginal.
const LAYERED_MAX_DISTINCT: usize = 16;

fn explicit_discrepancy(table: &[Arc<MixtureMeasure>], modes: usize) -> f64 {
    let mut ids: HashMap<*const MixtureMeasure, usize> = HashMap::new();
    let mut distinct: Vec<&MixtureMeasure> = Vec::new();
    let id_of: Vec<usize> = table
        .iter()
        .map(|m| {
            *ids.entry(Arc::as_ptr(m)).or_insert_with(|| {
                distinct.push(m);
                distinct.len() - 1
            })
        })
        .collect();
    if distinct.len() == 1 {
        return 0.0;
    }
    if distinct.len() > LAYERED_MAX_DISTINCT {
        return (1..full_mask(modes))
            .map(|subset| explicit_subset_discrepancy(table, modes, subset))
            .fold(0.0, f64::max);
    }
    let full = full_mask(modes);
    let mut worst = 0.0f64;
    let mut upper: HashMap<u32, Vec<MixtureMeasure>> =
        HashMap::from([(full, distinct.iter().map(|m| m.canonical()).collect())]);
    for size in (1..modes).rev() {
        let mut level = HashMap::new();
        for subset in (1..full).filter(|s| s.count_ones() as usize == size) {
            // Dropping the highest missing coordinate keeps the parent's
            // sorted order nearly intact, so the re-sort is cheap.
            let parent = subset | (1 << (31 - (!subset & full).leading_zeros()));
            let parent_keep: Vec<usize> = (0..modes).filter(|i| parent >> i & 1 == 1).collect();
            let positions: Vec<usize> = parent_keep
                .iter()
                .enumerate()
                .filter(|(_, &i)| subset >> i & 1 == 1)
                .map(|(p, _)| p)
                .collect();
            let marginals: Vec<MixtureMeasure> = upper[&parent]
                .iter()
                .map(|m| m.canonical_marginal(&positions).expect("valid subset"))
                .collect();
            let mut pairs: Vec<(usize, usize)> = Vec::new();
            for bits in 0..=full {
                let (a, b) = (id_of[bits as usize], id_of[(bits & subset) as usize]);
                if a != b && !pairs.contains(&(a, b)) {
                    pairs.push((a, b));
                    worst = worst.max(canonical_discrepancy(&marginals[a], &marginals[b]));
                }
            }
            level.insert(subset, marginals);
        }
        upper = level;
    }
    worst
}

/// Worst discrepancy between the marginal on `subset` of each setting and the
/// marginal of the setting that agrees on `subset` and is 0 elsewhere.
fn explicit_subset_discrepancy(table: &[Arc<MixtureMeasure>], modes: usize, subset: u32) -> f64 {
    let keep: Vec<usize> = (0..modes).filter(|i| subset >> i & 1 == 1).collect();
    let mut cache: HashMap<*const MixtureMeasure, MixtureMeasure> = HashMap::new();
    let mut marginal = |m: &Arc<MixtureMeasure>| -> *const MixtureMeasure {
        let key = Arc::as_ptr(m);
        cache
            .entry(key)
            .or_insert_with(|| m.canonical_marginal(&keep).expect("valid subset"));
        key
    };
    let mut worst = 0.0f64;
    let mut pairs = Vec::new();
    for bits in 0..=full_mask(modes) {
        let rep = bits & subset;
        if rep == bits {
            continue;
        }
        let (a, b) = (&table[bits as usize], &table[rep as usize]);
        if Arc::ptr_eq(a, b) {
            continue;
        }
        let pair = (marginal(a), marginal(b));
        if pair.0 != pair.1 && !pairs.contains(&pair) {
            pairs.push(pair);
        }
    }
    for (a, b) in pairs {
        worst = worst.max(canonical_discrepancy(&cache[&a], &cache[&b]));
    }
    worst
}

/// JSON form of a behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorDocument {
    pub modes: usize,
    pub l: Option<f64>,
    pub sigma: Option<f64>,
    pub family: String,
    pub table: Vec<TableEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub settings: Vec<u8>,
    pub components: Vec<ComponentEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentEntry {
    pub weight: f64,
    pub center: Vec<f64>,
    pub sigma: f64,
}
