//! Worst-case utility, regret and misclassification of policies.
//!
//! Per stratum the counterfactual means range independently over the arm
//! boxes, so every worst case is a closed form in the six bound values.
//! Regret is measured against the oracle rule that picks the better arm
//! under the (unknown) feasible law. [`grid_worst_case`] is a brute-force
//! check of the closed forms.

use serde::{Serialize, Serializer};

use crate::bounds::BoundsProfile;
use crate::criteria::{decide, minimax_mixing_probability, randomized_worst_regret, CriteriaError};
use crate::model::{ArmBounds, Policy, PreferenceSpec, Sign, StratumId, COMPARISON_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StratumWorstCase {
    pub min_utility: f64,
    pub max_regret: f64,
    /// 1 if some feasible law makes the policy pick the worse arm with
    /// positive probability.
    pub max_misclassification: f64,
    /// Largest probability of picking the worse arm over feasible laws.
    pub expected_misclassification: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCaseReport {
    pub rule: String,
    pub min_utility: f64,
    pub max_regret: f64,
    pub max_misclassification: f64,
    pub expected_misclassification: f64,
    #[serde(serialize_with = "per_stratum_objects")]
    pub per_stratum: Vec<(StratumId, StratumWorstCase)>,
}

fn per_stratum_objects<S: Serializer>(
    rows: &[(StratumId, StratumWorstCase)],
    s: S,
) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Row<'a> {
        stratum: &'a StratumId,
        #[serde(flatten)]
        worst: &'a StratumWorstCase,
    }
    s.collect_seq(rows.iter().map(|(stratum, worst)| Row { stratum, worst }))
}

impl WorstCaseReport {
    fn aggregate(
        rule: impl Into<String>,
        profile: &BoundsProfile,
        per: Vec<StratumWorstCase>,
    ) -> Self {
        let mut r = WorstCaseReport {
            rule: rule.into(),
            min_utility: 0.0,
            max_regret: 0.0,
            max_misclassification: 0.0,
            expected_misclassification: 0.0,
            per_stratum: Vec::with_capacity(per.len()),
        };
        // fixed stratum order for reproducible sums
        for (e, s) in profile.entries().iter().zip(per) {
            r.min_utility += e.weight * s.min_utility;
            r.max_regret += e.weight * s.max_regret;
            r.max_misclassification += e.weight * s.max_misclassification;
            r.expected_misclassification += e.weight * s.expected_misclassification;
            r.per_stratum.push((e.stratum.clone(), s));
        }
        r
    }
}

/// Closed-form worst case of assigning `+1` with probability `p`.
pub fn stratum_worst_case(ab: &ArmBounds, p: f64) -> StratumWorstCase {
    let (lo, hi) = (ab.cate_lo, ab.cate_hi);
    let min_utility = p * ab.lo_plus + (1.0 - p) * ab.lo_minus;
    let max_regret = ((1.0 - p) * hi.max(0.0)).max(p * (-lo).max(0.0));
    // choosing -1 is wrong under a law with positive contrast, +1 under negative
    let wrong_minus = if hi > 0.0 { 1.0 - p } else { 0.0 };
    let wrong_plus = if lo < 0.0 { p } else { 0.0 };
    let expected = wrong_minus.max(wrong_plus);
    StratumWorstCase {
        min_utility,
        max_regret,
        max_misclassification: if expected > 0.0 { 1.0 } else { 0.0 },
        expected_misclassification: expected,
    }
}

pub fn policy_worst_case(
    policy: &Policy,
    profile: &BoundsProfile,
) -> Result<WorstCaseReport, CriteriaError> {
    let per = profile
        .entries()
        .iter()
        .map(|e| {
            policy
                .prob_plus(&e.stratum)
                .map(|p| stratum_worst_case(&e.bounds, p))
                .ok_or_else(|| CriteriaError::MissingAssignment(e.stratum.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rule = if policy.is_deterministic() {
        "deterministic policy"
    } else {
        "stochastic policy"
    };
    Ok(WorstCaseReport::aggregate(rule, profile, per))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NamedRule {
    Maximin,
    Minimax,
    RandomizedMinimax,
}

impl NamedRule {
    pub fn name(self) -> &'static str {
        match self {
            NamedRule::Maximin => "maximin",
            NamedRule::Minimax => "minimax",
            NamedRule::RandomizedMinimax => "randomized-minimax",
        }
    }

    pub fn preference(self) -> PreferenceSpec {
        match self {
            NamedRule::Maximin => PreferenceSpec::Maximin,
            NamedRule::Minimax => PreferenceSpec::MinimaxRegret,
            NamedRule::RandomizedMinimax => PreferenceSpec::RandomizedMinimax,
        }
    }
}

fn ambiguous(ab: &ArmBounds) -> bool {
    ab.cate_lo < 0.0 && 0.0 < ab.cate_hi
}

/// Worst case of a named rule from its own closed forms.
///
/// Ties in the rule (equal lower bounds for maximin, `|L| = |U|` for
/// minimax) resolve to `-1`, the default tie-break, and the formulas use the
/// term of that arm.
pub fn named_rule_worst_case(rule: NamedRule, profile: &BoundsProfile) -> WorstCaseReport {
    let per = profile
        .entries()
        .iter()
        .map(|e| {
            let ab = &e.bounds;
            let (lo, hi) = (ab.cate_lo, ab.cate_hi);
            let amb = ambiguous(ab);
            let best_lower = ab.lo_minus.max(ab.lo_plus);
            let (min_utility, max_regret) = match rule {
                NamedRule::Maximin => {
                    let regret = if !amb {
                        0.0
                    } else if ab.lo_plus - ab.lo_minus > COMPARISON_TOL {
                        lo.abs()
                    } else {
                        hi.abs()
                    };
                    (best_lower, regret)
                }
                NamedRule::Minimax => {
                    if amb {
                        let u = if hi.abs() - lo.abs() > COMPARISON_TOL {
                            ab.lo_plus
                        } else {
                            ab.lo_minus
                        };
                        (u, lo.abs().min(hi.abs()))
                    } else {
                        (best_lower, 0.0)
                    }
                }
                NamedRule::RandomizedMinimax => {
                    if amb {
                        let u = ab.lo_plus * hi / (hi - lo) + ab.lo_minus * (-lo) / (hi - lo);
                        (u, -lo * hi / (hi - lo))
                    } else {
                        (best_lower, 0.0)
                    }
                }
            };
            let expected = match rule {
                NamedRule::RandomizedMinimax if amb => {
                    let p = minimax_mixing_probability(ab.cate());
                    p.max(1.0 - p)
                }
                _ if amb => 1.0,
                _ => 0.0,
            };
            StratumWorstCase {
                min_utility,
                max_regret,
                max_misclassification: if amb { 1.0 } else { 0.0 },
                expected_misclassification: expected,
            }
        })
        .collect();
    WorstCaseReport::aggregate(rule.name(), profile, per)
}

/// The policy a named rule induces, with `-1` as tie-break.
pub fn named_rule_policy(rule: NamedRule, profile: &BoundsProfile) -> Policy {
    let pref = rule.preference();
    match rule {
        NamedRule::RandomizedMinimax => Policy::Stochastic(
            profile
                .entries()
                .iter()
                .map(|e| {
                    (
                        e.stratum.clone(),
                        decide(pref, &e.bounds, Sign::Minus).p_plus(),
                    )
                })
                .collect(),
        ),
        _ => Policy::Deterministic(
            profile
                .entries()
                .iter()
                .map(|e| {
                    let a = decide(pref, &e.bounds, Sign::Minus)
                        .action()
                        .expect("deterministic rule");
                    (e.stratum.clone(), a)
                })
                .collect(),
        ),
    }
}

/// Worst case over all rules maximizing some lower bound: the envelope.
pub fn envelope_worst_case(profile: &BoundsProfile) -> WorstCaseReport {
    let per = profile
        .entries()
        .iter()
        .map(|e| {
            let ab = &e.bounds;
            let amb = ambiguous(ab);
            let (min_utility, max_regret) = if amb {
                (
                    ab.lo_minus.min(ab.lo_plus),
                    ab.cate_lo.abs().max(ab.cate_hi.abs()),
                )
            } else {
                (ab.lo_minus.max(ab.lo_plus), 0.0)
            };
            let m = if amb { 1.0 } else { 0.0 };
            StratumWorstCase {
                min_utility,
                max_regret,
                max_misclassification: m,
                expected_misclassification: m,
            }
        })
        .collect();
    WorstCaseReport::aggregate("envelope", profile, per)
}

/// Regret guarantee of the randomized minimax policy.
pub fn theorem1_bound(profile: &BoundsProfile) -> f64 {
    profile
        .entries()
        .iter()
        .map(|e| e.weight * randomized_worst_regret(e.bounds.cate()))
        .sum()
}

/// Brute-force worst case over a `points x points` grid of the arm boxes.
pub fn grid_worst_case(ab: &ArmBounds, p: f64, points: usize) -> StratumWorstCase {
    assert!(points >= 2);
    let axis = |lo: f64, hi: f64| -> Vec<f64> {
        (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect()
    };
    let minus = axis(ab.lo_minus, ab.hi_minus);
    let plus = axis(ab.lo_plus, ab.hi_plus);
    let mut out = StratumWorstCase {
        min_utility: f64::INFINITY,
        max_regret: f64::NEG_INFINITY,
        max_misclassification: 0.0,
        expected_misclassification: 0.0,
    };
    for &m in &minus {
        for &q in &plus {
            let value = p * q + (1.0 - p) * m;
            let best = m.max(q);
            out.min_utility = out.min_utility.min(value);
            out.max_regret = out.max_regret.max(best - value);
            let wrong = if q > m {
                1.0 - p
            } else if q < m {
                p
            } else {
                0.0
            };
            out.expected_misclassification = out.expected_misclassification.max(wrong);
            if wrong > 0.0 {
                out.max_misclassification = 1.0;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slot_profile() -> BoundsProfile {
        BoundsProfile::from_parts([("x".into(), 1.0, ArmBounds::from_arms(0.1, 0.8, 0.3, 0.5))])
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn slot_machine_deterministic_plus() {
        let prof = slot_profile();
        let pol = Policy::constant(prof.ids(), Sign::Plus);
        let r = policy_worst_case(&pol, &prof).unwrap();
        assert!(close(r.min_utility, 0.3));
        assert!(close(r.max_regret, 0.5));
        assert_eq!(r.max_misclassification, 1.0);
    }

    #[test]
    fn slot_machine_stochastic() {
        let prof = slot_profile();
        let pol = Policy::Stochastic([("x".into(), 4.0 / 9.0)].into_iter().collect());
        let r = policy_worst_case(&pol, &prof).unwrap();
        assert!(close(r.min_utility, 4.0 / 9.0 * 0.3 + 5.0 / 9.0 * 0.1));
        assert!((r.min_utility - 0.18889).abs() < 1e-5);
        assert!(close(r.max_regret, 0.2 / 0.9));
    }

    #[test]
    fn slot_machine_named_rules() {
        let prof = slot_profile();
        let mm = named_rule_worst_case(NamedRule::Maximin, &prof);
        assert!(close(mm.min_utility, 0.3) && close(mm.max_regret, 0.5));
        let mx = named_rule_worst_case(NamedRule::Minimax, &prof);
        assert!(close(mx.max_regret, 0.4));
        let rd = named_rule_worst_case(NamedRule::RandomizedMinimax, &prof);
        assert!(close(rd.max_regret, 0.2 / 0.9));
        let env = envelope_worst_case(&prof);
        assert!(close(env.min_utility, 0.1) && close(env.max_regret, 0.5));
        assert_eq!(env.max_misclassification, 1.0);
    }

    #[test]
    fn point_identified_better_arm_has_no_regret() {
        let prof = BoundsProfile::from_parts([("x".into(), 1.0, ArmBounds::point(0.2, 0.7))]);
        let r = policy_worst_case(&Policy::constant(prof.ids(), Sign::Plus), &prof).unwrap();
        assert_eq!(r.max_regret, 0.0);
        assert_eq!(r.max_misclassification, 0.0);
        let env = envelope_worst_case(&prof);
        assert_eq!(
            (env.min_utility, env.max_regret, env.max_misclassification),
            (0.7, 0.0, 0.0)
        );
    }

    #[test]
    fn theorem1_symmetric_and_identified() {
        let c = 0.3;
        let prof = BoundsProfile::from_parts([(
            "x".into(),
            1.0,
            ArmBounds::from_arms(0.4 - c / 2.0, 0.4 + c / 2.0, 0.4 - c / 2.0, 0.4 + c / 2.0),
        )]);
        assert!(close(theorem1_bound(&prof), c / 2.0));
        let prof = BoundsProfile::from_parts([(
            "x".into(),
            1.0,
            ArmBounds::from_arms(0.1, 0.2, 0.3, 0.4),
        )]);
        assert_eq!(theorem1_bound(&prof), 0.0);
    }

    #[test]
    fn missing_assignment() {
        let prof = slot_profile();
        let pol = Policy::constant([&StratumId::new("y")], Sign::Plus);
        assert!(matches!(
            policy_worst_case(&pol, &prof),
            Err(CriteriaError::MissingAssignment(_))
        ));
    }

    #[test]
    fn grid_matches_closed_form_on_slot_machine() {
        let ab = ArmBounds::from_arms(0.1, 0.8, 0.3, 0.5);
        for p in [0.0, 0.25, 4.0 / 9.0, 1.0] {
            let g = grid_worst_case(&ab, p, 101);
            let c = stratum_worst_case(&ab, p);
            assert!((g.min_utility - c.min_utility).abs() < 1e-12);
            assert!((g.max_regret - c.max_regret).abs() < 1e-12);
            assert_eq!(g.max_misclassification, c.max_misclassification);
        }
    }
}
