//! Decision criteria over arm bounds.
//!
//! Every rule maximizes a lower bound of the value function
//!
//! ```text
//! (1 - w) [L * I{D = +1} + L_{-1}] + w [-U * I{D = -1} + L_{+1}]
//! ```
//!
//! for some weight `w` in `[0, 1]`. The classical rules (maximax, maximin,
//! minimax regret, Hurwicz, healthcare) are implemented through their
//! closed-form comparisons; the weight only appears explicitly in
//! [`lower_bound_value`]. The randomized minimax rule assigns `+1` with the
//! probability that equalizes the worst-case regret of both arms.

use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

use crate::bounds::BoundsProfile;
use crate::model::{
    Action, ArmBounds, Interval, Policy, PreferenceSpec, Sign, StratumId, COMPARISON_TOL,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CriteriaError {
    #[error("no preference given for stratum {0}")]
    MissingPreference(StratumId),
    #[error("policy has no assignment for stratum {0}")]
    MissingAssignment(StratumId),
    #[error("preference index outside [0, 1] in {0}")]
    InvalidIndex(PreferenceSpec),
}

/// Output of a rule for one stratum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ActionChoice {
    Deterministic(Action),
    Stochastic {
        p_plus: f64,
    },
    /// The criterion is indifferent; `action` is the tie-break.
    Tie {
        action: Action,
        note: &'static str,
    },
}

impl ActionChoice {
    /// Probability of `+1`.
    pub fn p_plus(&self) -> f64 {
        match *self {
            ActionChoice::Deterministic(a) | ActionChoice::Tie { action: a, .. } => {
                if a.is_plus() {
                    1.0
                } else {
                    0.0
                }
            }
            ActionChoice::Stochastic { p_plus } => p_plus,
        }
    }

    /// The action taken with certainty, if any.
    pub fn action(&self) -> Option<Action> {
        match *self {
            ActionChoice::Deterministic(a) | ActionChoice::Tie { action: a, .. } => Some(a),
            ActionChoice::Stochastic { p_plus } if p_plus == 1.0 => Some(Sign::Plus),
            ActionChoice::Stochastic { p_plus } if p_plus == 0.0 => Some(Sign::Minus),
            ActionChoice::Stochastic { .. } => None,
        }
    }
}

/// A choice together with the rule branch that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    pub choice: ActionChoice,
    pub branch: String,
}

/// `+1` if `diff > tol`, `-1` if `diff < -tol`, otherwise `None`.
fn sign_of(diff: f64) -> Option<Action> {
    if diff > COMPARISON_TOL {
        Some(Sign::Plus)
    } else if diff < -COMPARISON_TOL {
        Some(Sign::Minus)
    } else {
        None
    }
}

fn compare(diff: f64, tie_break: Action, note: &'static str) -> ActionChoice {
    match sign_of(diff) {
        Some(a) => ActionChoice::Deterministic(a),
        None => ActionChoice::Tie {
            action: tie_break,
            note,
        },
    }
}

/// Hurwicz score of an arm: `(1 - alpha) * lo + alpha * hi`.
fn hurwicz_score(ab: &ArmBounds, arm: Action, alpha: f64) -> f64 {
    (1.0 - alpha) * ab.lo(arm) + alpha * ab.hi(arm)
}

/// Lower-bound integrand for one stratum and action with weight `w`.
pub fn lower_bound_integrand(ab: &ArmBounds, action: Action, w: f64) -> f64 {
    let plus = if action.is_plus() { 1.0 } else { 0.0 };
    let minus = 1.0 - plus;
    (1.0 - w) * (ab.cate_lo * plus + ab.lo_minus) + w * (-ab.cate_hi * minus + ab.lo_plus)
}

pub fn decide(pref: PreferenceSpec, ab: &ArmBounds, tie_break: Action) -> ActionChoice {
    explain(pref, ab, tie_break).choice
}

/// [`decide`] plus the name of the branch that fired.
pub fn explain(pref: PreferenceSpec, ab: &ArmBounds, tie_break: Action) -> Decision {
    let iv = ab.cate();
    let (choice, branch) = match pref {
        PreferenceSpec::Maximax => (
            compare(ab.hi_plus - ab.hi_minus, tie_break, "equal upper bounds"),
            "maximax: compare U_{+1} with U_{-1}".to_owned(),
        ),
        PreferenceSpec::Maximin => (
            compare(ab.lo_plus - ab.lo_minus, tie_break, "equal lower bounds"),
            "maximin: compare L_{+1} with L_{-1}".to_owned(),
        ),
        PreferenceSpec::MinimaxRegret => {
            // worst-case regret of +1 is max(-L, 0), of -1 is max(U, 0)
            let regret_plus = (-iv.lo).max(0.0);
            let regret_minus = iv.hi.max(0.0);
            let branch = if iv.lo > 0.0 {
                "minimax regret: L > 0"
            } else if iv.hi < 0.0 {
                "minimax regret: U < 0"
            } else {
                "minimax regret: 0 in (L, U), compare |U| with |L|"
            };
            (
                compare(regret_minus - regret_plus, tie_break, "|L| = |U|"),
                branch.to_owned(),
            )
        }
        PreferenceSpec::Hurwicz(alpha) => (
            compare(
                hurwicz_score(ab, Sign::Plus, alpha) - hurwicz_score(ab, Sign::Minus, alpha),
                tie_break,
                "equal Hurwicz scores",
            ),
            format!("hurwicz({alpha}): compare (1-a)L + aU per arm"),
        ),
        PreferenceSpec::Healthcare => {
            let choice = if iv.lo > COMPARISON_TOL {
                ActionChoice::Deterministic(Sign::Plus)
            } else {
                ActionChoice::Deterministic(Sign::Minus)
            };
            (choice, "healthcare: +1 only if L > 0".to_owned())
        }
        PreferenceSpec::TreatmentPreference(beta) => (
            compare(
                lower_bound_integrand(ab, Sign::Plus, beta)
                    - lower_bound_integrand(ab, Sign::Minus, beta),
                tie_break,
                "equal lower-bound objective",
            ),
            format!("treatment preference: maximize lower bound with w = {beta}"),
        ),
        PreferenceSpec::UtilityPreference(beta) => (
            compare(
                hurwicz_score(ab, Sign::Plus, beta) - hurwicz_score(ab, Sign::Minus, beta),
                tie_break,
                "equal optimism-weighted scores",
            ),
            format!("utility preference: coefficient of optimism {beta}"),
        ),
        PreferenceSpec::RandomizedMinimax => {
            let p = minimax_mixing_probability(iv);
            let branch = if iv.lo >= 0.0 {
                "randomized minimax: L >= 0, p* = 1"
            } else if iv.hi <= 0.0 {
                "randomized minimax: U <= 0, p* = 0"
            } else {
                "randomized minimax: L < 0 < U, p* = U/(U-L)"
            };
            (ActionChoice::Stochastic { p_plus: p }, branch.to_owned())
        }
    };
    Decision { choice, branch }
}

/// Probability of `+1` minimizing `max((1-p) max(U,0), p max(-L,0))`.
///
/// Closed branches go to the sign-identified cases: `L = 0` gives 1 and
/// `U = 0` gives 0 (checked in that order, so `L = U = 0` gives 1).
pub fn minimax_mixing_probability(iv: Interval) -> f64 {
    if iv.lo >= 0.0 {
        1.0
    } else if iv.hi <= 0.0 {
        0.0
    } else {
        iv.hi / (iv.hi - iv.lo)
    }
}

/// Worst-case regret of the randomized rule: `-L U / (U - L)` when `L < 0 < U`, else 0.
pub fn randomized_worst_regret(iv: Interval) -> f64 {
    if iv.straddles_zero() {
        -iv.lo * iv.hi / (iv.hi - iv.lo)
    } else {
        0.0
    }
}

/// Per-stratum preferences, or one preference for all strata.
#[derive(Debug, Clone, PartialEq)]
pub enum Preferences {
    Broadcast(PreferenceSpec),
    PerStratum(IndexMap<StratumId, PreferenceSpec>),
}

impl Preferences {
    fn get(&self, id: &StratumId) -> Option<PreferenceSpec> {
        match self {
            Preferences::Broadcast(p) => Some(*p),
            Preferences::PerStratum(m) => m.get(id).copied(),
        }
    }
}

/// Per-stratum decisions with their branch names, in profile order.
pub fn decisions_for_profile(
    profile: &BoundsProfile,
    prefs: &Preferences,
    tie_break: Action,
) -> Result<Vec<(StratumId, PreferenceSpec, Decision)>, CriteriaError> {
    profile
        .entries()
        .iter()
        .map(|e| {
            let pref = prefs
                .get(&e.stratum)
                .ok_or_else(|| CriteriaError::MissingPreference(e.stratum.clone()))?;
            if !pref.is_valid() {
                return Err(CriteriaError::InvalidIndex(pref));
            }
            Ok((e.stratum.clone(), pref, explain(pref, &e.bounds, tie_break)))
        })
        .collect()
}

/// One policy from per-stratum preferences; stochastic if any stratum uses
/// the randomized rule.
pub fn policy_from_preferences(
    profile: &BoundsProfile,
    prefs: &Preferences,
    tie_break: Action,
) -> Result<Policy, CriteriaError> {
    let decisions = decisions_for_profile(profile, prefs, tie_break)?;
    let stochastic = decisions
        .iter()
        .any(|(_, pref, _)| *pref == PreferenceSpec::RandomizedMinimax);
    Ok(if stochastic {
        Policy::Stochastic(
            decisions
                .into_iter()
                .map(|(id, _, d)| (id, d.choice.p_plus()))
                .collect(),
        )
    } else {
        Policy::Deterministic(
            decisions
                .into_iter()
                .map(|(id, _, d)| {
                    let action = d.choice.action().expect("deterministic rule");
                    (id, action)
                })
                .collect(),
        )
    })
}

/// The lower-bound objective of a policy under per-stratum weights `w`.
///
/// Stochastic policies average the integrand over their action probability.
pub fn lower_bound_value(
    policy: &Policy,
    profile: &BoundsProfile,
    w: &IndexMap<StratumId, f64>,
) -> Result<f64, CriteriaError> {
    let mut total = 0.0;
    for e in profile.entries() {
        let p = policy
            .prob_plus(&e.stratum)
            .ok_or_else(|| CriteriaError::MissingAssignment(e.stratum.clone()))?;
        let wx = *w
            .get(&e.stratum)
            .ok_or_else(|| CriteriaError::MissingPreference(e.stratum.clone()))?;
        let v = p * lower_bound_integrand(&e.bounds, Sign::Plus, wx)
            + (1.0 - p) * lower_bound_integrand(&e.bounds, Sign::Minus, wx);
        total += e.weight * v;
    }
    Ok(total)
}
