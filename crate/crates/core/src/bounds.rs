//! Counterfactual-mean bounds per stratum.
//!
//! The Balke-Pearl bounds for a binary outcome, treatment and instrument are
//! the max (lower) or min (upper) of four linear expressions in the observed
//! cells. Exactly those four candidates are evaluated per arm, in the order
//! they are conventionally listed, so each line can be audited by eye.

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    ArmBounds, Interval, ObservedTable, Sign, StratumId, StudyTable, COMPARISON_TOL,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("observed law falsifies the IV model: arm {arm} bounds cross (lo {lo} > hi {hi})")]
    FalsifiedIvModel { arm: Sign, lo: f64, hi: f64 },
    #[error("stratum {stratum}: {source}")]
    InStratum {
        stratum: StratumId,
        #[source]
        source: Box<BoundsError>,
    },
}

impl BoundsError {
    /// The underlying crossing, with any stratum context stripped.
    pub fn root(&self) -> &BoundsError {
        match self {
            BoundsError::InStratum { source, .. } => source.root(),
            other => other,
        }
    }
}

/// What to do when an arm's lower bound exceeds its upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossingPolicy {
    /// Report [`BoundsError::FalsifiedIvModel`].
    #[default]
    Fail,
    /// Collapse the crossed arm to the midpoint of the two values.
    Clamp,
}

/// A bound family: maps one stratum's observed law to arm bounds.
pub trait BoundProvider: Sync {
    fn name(&self) -> &'static str;
    fn arm_bounds(&self, table: &ObservedTable) -> Result<ArmBounds, BoundsError>;
}

/// Sharp bounds under the binary IV model.
#[derive(Debug, Clone, Copy, Default)]
pub struct BalkePearl;

impl BoundProvider for BalkePearl {
    fn name(&self) -> &'static str {
        "balke-pearl"
    }

    fn arm_bounds(&self, table: &ObservedTable) -> Result<ArmBounds, BoundsError> {
        arm_bounds_balke_pearl(table)
    }
}

/// The four candidates for each of `lo_minus`, `hi_minus`, `lo_plus`, `hi_plus`.
pub fn balke_pearl_candidates(t: &ObservedTable) -> [[f64; 4]; 4] {
    use Sign::{Minus as M, Plus as P};
    let p = |y, a, z| t.p(y, a, z);
    let lo_minus = [
        p(P, M, P),
        p(P, M, M),
        p(P, M, M) + p(P, P, M) - p(M, M, P) - p(P, P, P),
        p(M, P, M) + p(P, M, M) - p(M, M, P) - p(M, P, P),
    ];
    let hi_minus = [
        1.0 - p(M, M, P),
        1.0 - p(M, M, M),
        p(M, P, M) + p(P, M, M) + p(P, M, P) + p(P, P, P),
        p(P, M, M) + p(P, P, M) + p(M, P, P) + p(P, M, P),
    ];
    let lo_plus = [
        p(P, P, M),
        p(P, P, P),
        -p(M, M, M) - p(M, P, M) + p(M, M, P) + p(P, P, P),
        -p(M, P, M) - p(P, M, M) + p(P, M, P) + p(P, P, P),
    ];
    let hi_plus = [
        1.0 - p(M, P, P),
        1.0 - p(M, P, M),
        p(M, M, M) + p(P, P, M) + p(P, M, P) + p(P, P, P),
        p(P, M, M) + p(P, P, M) + p(M, M, P) + p(P, P, P),
    ];
    [lo_minus, hi_minus, lo_plus, hi_plus]
}

fn max4(v: [f64; 4]) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn min4(v: [f64; 4]) -> f64 {
    v.into_iter().fold(f64::INFINITY, f64::min)
}

/// Balke-Pearl bounds for one stratum; crossing arms are a falsified model.
pub fn arm_bounds_balke_pearl(table: &ObservedTable) -> Result<ArmBounds, BoundsError> {
    let ab = arm_bounds_unchecked(table);
    check_crossing(&ab)?;
    Ok(ab)
}

/// Balke-Pearl bounds without the crossing check.
pub fn arm_bounds_unchecked(table: &ObservedTable) -> ArmBounds {
    let [lm, hm, lp, hp] = balke_pearl_candidates(table);
    ArmBounds::from_arms(max4(lm), min4(hm), max4(lp), min4(hp))
}

fn check_crossing(ab: &ArmBounds) -> Result<(), BoundsError> {
    for arm in Sign::BOTH {
        let (lo, hi) = (ab.lo(arm), ab.hi(arm));
        if lo > hi + COMPARISON_TOL {
            return Err(BoundsError::FalsifiedIvModel { arm, lo, hi });
        }
    }
    Ok(())
}

fn clamp_crossing(ab: ArmBounds) -> ArmBounds {
    let fix = |lo: f64, hi: f64| {
        if lo > hi {
            let mid = 0.5 * (lo + hi);
            (mid, mid)
        } else {
            (lo, hi)
        }
    };
    let (lm, hm) = fix(ab.lo_minus, ab.hi_minus);
    let (lp, hp) = fix(ab.lo_plus, ab.hi_plus);
    ArmBounds::from_arms(lm, hm, lp, hp)
}

/// `[lo_plus - hi_minus, hi_plus - lo_minus]`.
pub fn cate_bounds(ab: &ArmBounds) -> Interval {
    Interval::new(ab.lo_plus - ab.hi_minus, ab.hi_plus - ab.lo_minus)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileEntry {
    pub stratum: StratumId,
    pub weight: f64,
    pub bounds: ArmBounds,
}

/// Per-stratum arm bounds with the stratum weights of the source study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsProfile {
    entries: Vec<ProfileEntry>,
}

impl BoundsProfile {
    pub fn new(entries: Vec<ProfileEntry>) -> Self {
        BoundsProfile { entries }
    }

    /// Build from `(id, weight, bounds)` triples.
    pub fn from_parts(parts: impl IntoIterator<Item = (StratumId, f64, ArmBounds)>) -> Self {
        BoundsProfile {
            entries: parts
                .into_iter()
                .map(|(stratum, weight, bounds)| ProfileEntry {
                    stratum,
                    weight,
                    bounds,
                })
                .collect(),
        }
    }

    pub fn entries(&self) -> &[ProfileEntry] {
        &self.entries
    }

    pub fn get(&self, id: &StratumId) -> Option<&ProfileEntry> {
        self.entries.iter().find(|e| &e.stratum == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &StratumId> {
        self.entries.iter().map(|e| &e.stratum)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Balke-Pearl bounds for every stratum, failing on the first crossing.
pub fn bounds_profile(study: &StudyTable) -> Result<BoundsProfile, BoundsError> {
    bounds_profile_with(study, &BalkePearl, CrossingPolicy::Fail)
}

pub fn bounds_profile_with(
    study: &StudyTable,
    provider: &dyn BoundProvider,
    crossing: CrossingPolicy,
) -> Result<BoundsProfile, BoundsError> {
    let mut entries = Vec::with_capacity(study.len());
    for (id, table) in study.strata() {
        let bounds = match (provider.arm_bounds(table), crossing) {
            (Ok(ab), _) => ab,
            (Err(BoundsError::FalsifiedIvModel { .. }), CrossingPolicy::Clamp) => {
                clamp_crossing(arm_bounds_unchecked(table))
            }
            (Err(e), _) => {
                return Err(BoundsError::InStratum {
                    stratum: id.clone(),
                    source: Box::new(e),
                })
            }
        };
        entries.push(ProfileEntry {
            stratum: id.clone(),
            weight: table.weight,
            bounds,
        });
    }
    Ok(BoundsProfile { entries })
}
