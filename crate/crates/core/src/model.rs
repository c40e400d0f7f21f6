//! Core domain types: stratified observed laws, arm bounds, preferences and
//! policies.
//!
//! Outcome, treatment and instrument are all binary and coded as [`Sign`]
//! (`-1`/`+1`). Each covariate stratum carries the conditional law
//! `p_{y,a,z} = Pr(Y = y, A = a | Z = z, X = x)` as eight cells plus its
//! population weight `Pr(X = x)`.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for the per-slice normalization check.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Global tolerance for equality of two numbers (ties, boundary cases).
pub const COMPARISON_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("z={z} slice sums to zero and cannot be renormalized")]
    DegenerateSlice { z: Sign },
    #[error("invalid observed table in stratum {stratum}: {report}")]
    InvalidTable {
        stratum: StratumId,
        report: ValidationReport,
    },
    #[error("stratum weights sum to {0}, expected 1")]
    WeightsNotNormalized(f64),
    #[error("duplicate stratum id {0}")]
    DuplicateStratum(StratumId),
    #[error("study has no strata")]
    EmptyStudy,
    #[error("pooling requires Z independent of X, which was not asserted for this study")]
    PoolingNotAsserted,
    #[error("probability {value} for stratum {stratum} is outside [0, 1]")]
    ProbabilityOutOfRange { stratum: StratumId, value: f64 },
}

/// A binary level coded as `-1`/`+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "-1")]
    Minus,
    #[serde(rename = "+1")]
    Plus,
}

/// Treatment/action level.
pub type Action = Sign;

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Minus, Sign::Plus];

    pub fn value(self) -> i8 {
        match self {
            Sign::Minus => -1,
            Sign::Plus => 1,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Minus => Sign::Plus,
            Sign::Plus => Sign::Minus,
        }
    }

    pub fn is_plus(self) -> bool {
        self == Sign::Plus
    }

    /// `0` for `-1`, `1` for `+1`.
    pub fn bit(self) -> usize {
        self as usize
    }

    pub fn from_pm1(v: i64) -> Option<Sign> {
        match v {
            -1 => Some(Sign::Minus),
            1 => Some(Sign::Plus),
            _ => None,
        }
    }

    /// 0/1 coding, `0 -> -1`.
    pub fn from_01(v: i64) -> Option<Sign> {
        match v {
            0 => Some(Sign::Minus),
            1 => Some(Sign::Plus),
            _ => None,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Minus => "-1",
            Sign::Plus => "+1",
        })
    }
}

impl FromStr for Sign {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "-1" => Ok(Sign::Minus),
            "1" | "+1" => Ok(Sign::Plus),
            other => Err(format!("expected -1 or +1, got {other:?}")),
        }
    }
}

/// Covariate stratum identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StratumId(pub String);

impl StratumId {
    pub fn new(id: impl Into<String>) -> Self {
        StratumId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StratumId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for StratumId {
    fn from(s: &str) -> Self {
        StratumId(s.to_owned())
    }
}

/// Conditional law of `(Y, A)` given `Z` for one stratum, plus `Pr(X = x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedTable {
    cells: [f64; 8],
    pub weight: f64,
}

impl ObservedTable {
    fn index(y: Sign, a: Sign, z: Sign) -> usize {
        (z.bit() << 2) | (y.bit() << 1) | a.bit()
    }

    /// All-zero table with the given weight; fill with [`ObservedTable::set`].
    pub fn zeros(weight: f64) -> Self {
        ObservedTable {
            cells: [0.0; 8],
            weight,
        }
    }

    /// Build from a function of `(y, a, z)`.
    pub fn from_fn(weight: f64, mut f: impl FnMut(Sign, Sign, Sign) -> f64) -> Self {
        let mut t = Self::zeros(weight);
        for z in Sign::BOTH {
            for y in Sign::BOTH {
                for a in Sign::BOTH {
                    t.set(y, a, z, f(y, a, z));
                }
            }
        }
        t
    }

    /// Build from two slices ordered `(y,a) = (-,-), (-,+), (+,-), (+,+)`.
    pub fn from_slices(weight: f64, z_minus: [f64; 4], z_plus: [f64; 4]) -> Self {
        let mut cells = [0.0; 8];
        cells[..4].copy_from_slice(&z_minus);
        cells[4..].copy_from_slice(&z_plus);
        ObservedTable { cells, weight }
    }

    /// `Pr(Y = y, A = a | Z = z)`.
    pub fn p(&self, y: Sign, a: Sign, z: Sign) -> f64 {
        self.cells[Self::index(y, a, z)]
    }

    pub fn set(&mut self, y: Sign, a: Sign, z: Sign, value: f64) {
        self.cells[Self::index(y, a, z)] = value;
    }

    /// The four cells of one z-slice in `(y,a)` order `(-,-), (-,+), (+,-), (+,+)`.
    pub fn slice(&self, z: Sign) -> [f64; 4] {
        let o = z.bit() * 4;
        [
            self.cells[o],
            self.cells[o + 1],
            self.cells[o + 2],
            self.cells[o + 3],
        ]
    }

    pub fn slice_sum(&self, z: Sign) -> f64 {
        self.slice(z).iter().sum()
    }

    pub fn cells(&self) -> &[f64; 8] {
        &self.cells
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }
}

/// Outcome of [`validate_observed`]: pass, or the first violated invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationReport {
    Pass,
    NegativeProbability {
        y: Sign,
        a: Sign,
        z: Sign,
        value: f64,
    },
    NotNormalized {
        z: Sign,
        sum: f64,
    },
    WeightOutOfRange(f64),
    NonFinite {
        y: Sign,
        a: Sign,
        z: Sign,
    },
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        matches!(self, ValidationReport::Pass)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationReport::Pass => write!(f, "pass"),
            ValidationReport::NegativeProbability { y, a, z, value } => {
                write!(f, "negative probability {value} at y={y},a={a},z={z}")
            }
            ValidationReport::NotNormalized { z, sum } => {
                write!(f, "z={z} slice sums to {sum}")
            }
            ValidationReport::WeightOutOfRange(w) => write!(f, "weight {w} outside [0, 1]"),
            ValidationReport::NonFinite { y, a, z } => {
                write!(f, "non-finite cell at y={y},a={a},z={z}")
            }
        }
    }
}

/// Check cell non-negativity, per-slice normalization within `tol`, and the weight range.
pub fn validate_observed(table: &ObservedTable, tol: f64) -> ValidationReport {
    for z in Sign::BOTH {
        for y in Sign::BOTH {
            for a in Sign::BOTH {
                let v = table.p(y, a, z);
                if !v.is_finite() {
                    return ValidationReport::NonFinite { y, a, z };
                }
                if v < 0.0 {
                    return ValidationReport::NegativeProbability { y, a, z, value: v };
                }
            }
        }
    }
    for z in Sign::BOTH {
        let sum = table.slice_sum(z);
        if (sum - 1.0).abs() > tol {
            return ValidationReport::NotNormalized { z, sum };
        }
    }
    if !(0.0..=1.0).contains(&table.weight) {
        return ValidationReport::WeightOutOfRange(table.weight);
    }
    ValidationReport::Pass
}

/// Divide each z-slice by its sum. Slices already summing to 1 up to a few
/// ulps are returned unchanged.
pub fn renormalize(table: &ObservedTable) -> Result<ObservedTable, ModelError> {
    let mut out = *table;
    for z in Sign::BOTH {
        let sum = table.slice_sum(z);
        if sum <= 0.0 || sum.is_nan() {
            return Err(ModelError::DegenerateSlice { z });
        }
        if (sum - 1.0).abs() <= 4.0 * f64::EPSILON {
            continue;
        }
        for y in Sign::BOTH {
            for a in Sign::BOTH {
                out.set(y, a, z, table.p(y, a, z) / sum);
            }
        }
    }
    Ok(out)
}

/// An ordered collection of strata with their observed laws.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyTable {
    strata: Vec<(StratumId, ObservedTable)>,
    /// Whether the caller asserts `Z` independent of `X`, which licenses
    /// [`pool_strata`].
    pub z_independent_of_x: bool,
}

impl StudyTable {
    /// Validate and build. Weights must sum to 1 within [`NORMALIZATION_TOL`].
    pub fn new(strata: Vec<(StratumId, ObservedTable)>) -> Result<Self, ModelError> {
        if strata.is_empty() {
            return Err(ModelError::EmptyStudy);
        }
        let mut seen = std::collections::HashSet::new();
        for (id, table) in &strata {
            if !seen.insert(id.clone()) {
                return Err(ModelError::DuplicateStratum(id.clone()));
            }
            let report = validate_observed(table, NORMALIZATION_TOL);
            if !report.is_pass() {
                return Err(ModelError::InvalidTable {
                    stratum: id.clone(),
                    report,
                });
            }
        }
        let total: f64 = strata.iter().map(|(_, t)| t.weight).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(ModelError::WeightsNotNormalized(total));
        }
        Ok(StudyTable {
            strata,
            z_independent_of_x: true,
        })
    }

    pub fn single(id: impl Into<StratumId>, table: ObservedTable) -> Result<Self, ModelError> {
        Self::new(vec![(id.into(), table.with_weight(1.0))])
    }

    pub fn strata(&self) -> &[(StratumId, ObservedTable)] {
        &self.strata
    }

    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }

    pub fn get(&self, id: &StratumId) -> Option<&ObservedTable> {
        self.strata.iter().find(|(s, _)| s == id).map(|(_, t)| t)
    }

    pub fn ids(&self) -> impl Iterator<Item = &StratumId> {
        self.strata.iter().map(|(id, _)| id)
    }
}

impl From<String> for StratumId {
    fn from(s: String) -> Self {
        StratumId(s)
    }
}

/// Weight-average the strata into one table with weight 1.
///
/// This is the marginal law of `(Y, A) | Z` only when `Z` is independent of
/// `X`, so the study must carry that assertion.
pub fn pool_strata(study: &StudyTable) -> Result<ObservedTable, ModelError> {
    if !study.z_independent_of_x {
        return Err(ModelError::PoolingNotAsserted);
    }
    let mut pooled = ObservedTable::zeros(1.0);
    for (_, table) in study.strata() {
        for (acc, cell) in pooled.cells.iter_mut().zip(table.cells.iter()) {
            *acc += table.weight * cell;
        }
    }
    Ok(pooled)
}

/// A closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    /// `0` lies strictly inside `(lo, hi)`.
    pub fn straddles_zero(&self) -> bool {
        self.lo < 0.0 && 0.0 < self.hi
    }
}

/// Bounds on the two counterfactual means and on their contrast.
///
/// The contrast bounds are always composed from the arm bounds:
/// `cate_lo = lo_plus - hi_minus`, `cate_hi = hi_plus - lo_minus`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmBounds {
    pub lo_minus: f64,
    pub hi_minus: f64,
    pub lo_plus: f64,
    pub hi_plus: f64,
    pub cate_lo: f64,
    pub cate_hi: f64,
}

impl ArmBounds {
    pub fn from_arms(lo_minus: f64, hi_minus: f64, lo_plus: f64, hi_plus: f64) -> Self {
        ArmBounds {
            lo_minus,
            hi_minus,
            lo_plus,
            hi_plus,
            cate_lo: lo_plus - hi_minus,
            cate_hi: hi_plus - lo_minus,
        }
    }

    /// Degenerate boxes at the given means.
    pub fn point(mu_minus: f64, mu_plus: f64) -> Self {
        Self::from_arms(mu_minus, mu_minus, mu_plus, mu_plus)
    }

    pub fn cate(&self) -> Interval {
        Interval::new(self.cate_lo, self.cate_hi)
    }

    pub fn lo(&self, arm: Action) -> f64 {
        match arm {
            Sign::Minus => self.lo_minus,
            Sign::Plus => self.lo_plus,
        }
    }

    pub fn hi(&self, arm: Action) -> f64 {
        match arm {
            Sign::Minus => self.hi_minus,
            Sign::Plus => self.hi_plus,
        }
    }

    /// Exchange the arms; the contrast interval is negated and flipped.
    pub fn swap_arms(&self) -> Self {
        Self::from_arms(self.lo_plus, self.hi_plus, self.lo_minus, self.hi_minus)
    }

    /// Checks ordering, range and composition invariants.
    pub fn is_valid(&self) -> bool {
        let in_unit = [self.lo_minus, self.hi_minus, self.lo_plus, self.hi_plus]
            .iter()
            .all(|v| (-COMPARISON_TOL..=1.0 + COMPARISON_TOL).contains(v));
        in_unit
            && self.lo_minus <= self.hi_minus + COMPARISON_TOL
            && self.lo_plus <= self.hi_plus + COMPARISON_TOL
            && self.cate_lo == self.lo_plus - self.hi_minus
            && self.cate_hi == self.hi_plus - self.lo_minus
    }
}

/// Decision criterion with its index, one per classical rule plus the
/// preference inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PreferenceSpec {
    Maximax,
    Maximin,
    MinimaxRegret,
    Hurwicz(f64),
    Healthcare,
    TreatmentPreference(f64),
    UtilityPreference(f64),
    RandomizedMinimax,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreferenceParseError {
    #[error("unknown criterion {0:?}")]
    Unknown(String),
    #[error("criterion {name} requires an index in [0, 1], got {value:?}")]
    BadIndex { name: String, value: String },
}

impl PreferenceSpec {
    pub fn index(&self) -> Option<f64> {
        match *self {
            PreferenceSpec::Hurwicz(v)
            | PreferenceSpec::TreatmentPreference(v)
            | PreferenceSpec::UtilityPreference(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.index().is_none_or(|v| (0.0..=1.0).contains(&v))
    }
}

impl fmt::Display for PreferenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PreferenceSpec::Maximax => write!(f, "maximax"),
            PreferenceSpec::Maximin => write!(f, "maximin"),
            PreferenceSpec::MinimaxRegret => write!(f, "minimax-regret"),
            PreferenceSpec::Hurwicz(a) => write!(f, "hurwicz:{a}"),
            PreferenceSpec::Healthcare => write!(f, "healthcare"),
            PreferenceSpec::TreatmentPreference(b) => write!(f, "pref-treatment:{b}"),
            PreferenceSpec::UtilityPreference(b) => write!(f, "pref-utility:{b}"),
            PreferenceSpec::RandomizedMinimax => write!(f, "randomized"),
        }
    }
}

impl FromStr for PreferenceSpec {
    type Err = PreferenceParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let index = |ctor: fn(f64) -> PreferenceSpec| {
            let raw = arg.unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if (0.0..=1.0).contains(&v) => Ok(ctor(v)),
                _ => Err(PreferenceParseError::BadIndex {
                    name: name.to_owned(),
                    value: raw.to_owned(),
                }),
            }
        };
        let plain = |spec: PreferenceSpec| match arg {
            None => Ok(spec),
            Some(_) => Err(PreferenceParseError::Unknown(s.to_owned())),
        };
        match name {
            "maximax" => plain(PreferenceSpec::Maximax),
            "maximin" => plain(PreferenceSpec::Maximin),
            "minimax-regret" => plain(PreferenceSpec::MinimaxRegret),
            "healthcare" => plain(PreferenceSpec::Healthcare),
            "randomized" => plain(PreferenceSpec::RandomizedMinimax),
            "hurwicz" => index(PreferenceSpec::Hurwicz),
            "pref-treatment" => index(PreferenceSpec::TreatmentPreference),
            "pref-utility" => index(PreferenceSpec::UtilityPreference),
            _ => Err(PreferenceParseError::Unknown(s.to_owned())),
        }
    }
}

/// A decision rule over strata: a fixed action, or a probability of `+1`.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Deterministic(IndexMap<StratumId, Action>),
    Stochastic(IndexMap<StratumId, f64>),
}

impl Policy {
    /// Same action in every listed stratum.
    pub fn constant<'a>(ids: impl IntoIterator<Item = &'a StratumId>, action: Action) -> Self {
        Policy::Deterministic(ids.into_iter().map(|id| (id.clone(), action)).collect())
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Policy::Deterministic(_))
    }

    /// Probability of assigning `+1` in the stratum.
    pub fn prob_plus(&self, id: &StratumId) -> Option<f64> {
        match self {
            Policy::Deterministic(m) => m.get(id).map(|a| if a.is_plus() { 1.0 } else { 0.0 }),
            Policy::Stochastic(m) => m.get(id).copied(),
        }
    }

    pub fn action(&self, id: &StratumId) -> Option<Action> {
        match self {
            Policy::Deterministic(m) => m.get(id).copied(),
            Policy::Stochastic(_) => None,
        }
    }

    pub fn ids(&self) -> Vec<&StratumId> {
        match self {
            Policy::Deterministic(m) => m.keys().collect(),
            Policy::Stochastic(m) => m.keys().collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Policy::Deterministic(m) => m.len(),
            Policy::Stochastic(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Probabilities in `[0, 1]`.
    pub fn is_valid(&self) -> bool {
        match self {
            Policy::Deterministic(_) => true,
            Policy::Stochastic(m) => m.values().all(|p| (0.0..=1.0).contains(p)),
        }
    }

    /// View as a stochastic policy (deterministic actions become 0/1).
    pub fn to_stochastic(&self) -> IndexMap<StratumId, f64> {
        match self {
            Policy::Deterministic(m) => m
                .iter()
                .map(|(k, a)| (k.clone(), if a.is_plus() { 1.0 } else { 0.0 }))
                .collect(),
            Policy::Stochastic(m) => m.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_table(weight: f64) -> ObservedTable {
        ObservedTable::from_slices(weight, [0.25; 4], [0.25; 4])
    }

    #[test]
    fn validate_passes_well_formed() {
        assert!(validate_observed(&uniform_table(1.0), 1e-9).is_pass());
    }

    #[test]
    fn validate_reports_unnormalized_slice() {
        let t = ObservedTable::from_slices(1.0, [0.25; 4], [0.245; 4]);
        match validate_observed(&t, 1e-9) {
            ValidationReport::NotNormalized { z, sum } => {
                assert_eq!(z, Sign::Plus);
                assert!((sum - 0.98).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validate_reports_negative_cell() {
        let t = ObservedTable::from_slices(1.0, [-0.01, 0.26, 0.5, 0.25], [0.25; 4]);
        assert!(matches!(
            validate_observed(&t, 1e-9),
            ValidationReport::NegativeProbability { .. }
        ));
    }

    #[test]
    fn renormalize_fixed_point_and_inverse() {
        let t = ObservedTable::from_slices(1.0, [0.1, 0.2, 0.3, 0.4], [0.4, 0.3, 0.2, 0.1]);
        assert_eq!(renormalize(&t).unwrap(), t);

        let scaled = ObservedTable::from_fn(1.0, |y, a, z| {
            let v = t.p(y, a, z);
            if z.is_plus() {
                v * 1.02
            } else {
                v
            }
        });
        let back = renormalize(&scaled).unwrap();
        for (x, y) in back.cells().iter().zip(t.cells()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn renormalize_rejects_zero_slice() {
        let t = ObservedTable::from_slices(1.0, [0.0; 4], [0.25; 4]);
        assert_eq!(
            renormalize(&t),
            Err(ModelError::DegenerateSlice { z: Sign::Minus })
        );
    }

    #[test]
    fn pool_single_and_identical_strata() {
        let t = ObservedTable::from_slices(1.0, [0.1, 0.2, 0.3, 0.4], [0.4, 0.3, 0.2, 0.1]);
        let single = StudyTable::single("x", t).unwrap();
        assert_eq!(pool_strata(&single).unwrap(), t);

        let two = StudyTable::new(vec![
            ("a".into(), t.with_weight(0.5)),
            ("b".into(), t.with_weight(0.5)),
        ])
        .unwrap();
        let pooled = pool_strata(&two).unwrap();
        assert_eq!(pooled.weight, 1.0);
        for (x, y) in pooled.cells().iter().zip(t.cells()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn pooling_requires_assertion() {
        let mut s = StudyTable::single("x", uniform_table(1.0)).unwrap();
        s.z_independent_of_x = false;
        assert_eq!(pool_strata(&s), Err(ModelError::PoolingNotAsserted));
    }

    #[test]
    fn study_rejects_bad_weights_and_duplicates() {
        let t = uniform_table(0.4);
        assert!(matches!(
            StudyTable::new(vec![("a".into(), t), ("b".into(), t)]),
            Err(ModelError::WeightsNotNormalized(_))
        ));
        let t = uniform_table(0.5);
        assert!(matches!(
            StudyTable::new(vec![("a".into(), t), ("a".into(), t)]),
            Err(ModelError::DuplicateStratum(_))
        ));
    }

    #[test]
    fn parse_criteria() {
        assert_eq!("maximax".parse(), Ok(PreferenceSpec::Maximax));
        assert_eq!("hurwicz:0.5".parse(), Ok(PreferenceSpec::Hurwicz(0.5)));
        assert_eq!(
            "pref-utility:1".parse(),
            Ok(PreferenceSpec::UtilityPreference(1.0))
        );
        assert!("hurwicz:1.5".parse::<PreferenceSpec>().is_err());
        assert!("hurwicz".parse::<PreferenceSpec>().is_err());
        assert!("maximin:0.2".parse::<PreferenceSpec>().is_err());
        assert!("bogus".parse::<PreferenceSpec>().is_err());
        for spec in [
            PreferenceSpec::Maximax,
            PreferenceSpec::RandomizedMinimax,
            PreferenceSpec::TreatmentPreference(0.25),
        ] {
            assert_eq!(spec.to_string().parse(), Ok(spec));
        }
    }

    #[test]
    fn swap_arms_negates_contrast() {
        let ab = ArmBounds::from_arms(0.1, 0.8, 0.3, 0.5);
        let s = ab.swap_arms();
        assert_eq!(s.cate_lo, -ab.cate_hi);
        assert_eq!(s.cate_hi, -ab.cate_lo);
    }
}
