mod common;

use common::{arm_bounds, oracle_table, profile, random_dgp, study};
use indexmap::IndexMap;
use pid_engine::bounds::{
    arm_bounds_balke_pearl, balke_pearl_candidates, bounds_profile, cate_bounds,
};
use pid_engine::criteria::{
    decide, lower_bound_value, minimax_mixing_probability, randomized_worst_regret, ActionChoice,
};
use pid_engine::diagnostics::{
    envelope_worst_case, grid_worst_case, named_rule_policy, named_rule_worst_case,
    policy_worst_case, stratum_worst_case, NamedRule,
};
use pid_engine::ingest::{estimate_study, SmoothingSpec};
use pid_engine::model::{
    pool_strata, renormalize, validate_observed, ArmBounds, Interval, ObservedTable, Policy,
    PreferenceSpec, Sign, StratumId, StudyTable,
};
use pid_engine::simulate::{
    implied_study, improve_policy, true_arm_means, true_cate, value_of, Record, Records,
};
use proptest::prelude::*;

const TIE_GAP: f64 = 1e-9;

fn action(pref: PreferenceSpec, ab: &ArmBounds) -> Sign {
    decide(pref, ab, Sign::Minus)
        .action()
        .expect("deterministic rule")
}

fn sign(x: f64) -> Sign {
    if x > 0.0 {
        Sign::Plus
    } else {
        Sign::Minus
    }
}

fn regret_profile(iv: Interval, p: f64) -> f64 {
    ((1.0 - p) * iv.hi.max(0.0)).max(p * (-iv.lo).max(0.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn renormalized_tables_validate(cells in prop::array::uniform8(0.001..1.0f64)) {
        let t = ObservedTable::from_slices(
            1.0,
            cells[..4].try_into().unwrap(),
            cells[4..].try_into().unwrap(),
        );
        let r = renormalize(&t).unwrap();
        prop_assert!(validate_observed(&r, 1e-9).is_pass());
        for z in Sign::BOTH {
            prop_assert!((r.slice_sum(z) - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn pooling_preserves_normalization(s in study(5)) {
        let pooled = pool_strata(&s).unwrap();
        for z in Sign::BOTH {
            prop_assert!((pooled.slice_sum(z) - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn pooling_is_weight_linear(t in oracle_table(), w in 0.0..=1.0f64) {
        let s = StudyTable::new(vec![
            ("a".into(), t.with_weight(w)),
            ("b".into(), t.with_weight(1.0 - w)),
        ]).unwrap();
        let pooled = pool_strata(&s).unwrap();
        for (x, y) in pooled.cells().iter().zip(t.cells()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn contrast_composes_from_arms(t in oracle_table()) {
        let ab = arm_bounds_balke_pearl(&t).unwrap();
        let iv = cate_bounds(&ab);
        prop_assert_eq!(iv.lo.to_bits(), (ab.lo_plus - ab.hi_minus).to_bits());
        prop_assert_eq!(iv.hi.to_bits(), (ab.hi_plus - ab.lo_minus).to_bits());
        prop_assert_eq!(ab.cate_lo.to_bits(), iv.lo.to_bits());
        prop_assert_eq!(ab.cate_hi.to_bits(), iv.hi.to_bits());
    }

    #[test]
    fn extra_candidates_never_loosen(t in oracle_table()) {
        let [lm, hm, lp, hp] = balke_pearl_candidates(&t);
        let ab = arm_bounds_balke_pearl(&t).unwrap();
        prop_assert!(ab.lo_minus >= lm[0].max(lm[1]));
        prop_assert!(ab.hi_minus <= hm[0].min(hm[1]));
        prop_assert!(ab.lo_plus >= lp[0].max(lp[1]));
        prop_assert!(ab.hi_plus <= hp[0].min(hp[1]));
    }

    #[test]
    fn named_rules_match_induced_policies(p in profile(4)) {
        let rules = [NamedRule::Maximin, NamedRule::Minimax, NamedRule::RandomizedMinimax];
        for rule in rules {
            let named = named_rule_worst_case(rule, &p);
            let generic = policy_worst_case(&named_rule_policy(rule, &p), &p).unwrap();
            prop_assert!((named.min_utility - generic.min_utility).abs() <= 1e-12);
            prop_assert!((named.max_regret - generic.max_regret).abs() <= 1e-12);
            prop_assert!(
                (named.max_misclassification - generic.max_misclassification).abs() <= 1e-12
            );
        }
        let m: Vec<f64> = rules
            .iter()
            .map(|&r| named_rule_worst_case(r, &p).max_misclassification)
            .collect();
        prop_assert!(m.iter().all(|&v| v == m[0]));
    }

    #[test]
    fn dominance_ordering(p in profile(4)) {
        let rand = named_rule_worst_case(NamedRule::RandomizedMinimax, &p);
        let mini = named_rule_worst_case(NamedRule::Minimax, &p);
        let env = envelope_worst_case(&p);
        prop_assert!(rand.max_regret <= mini.max_regret + 1e-12);
        prop_assert!(mini.max_regret <= env.max_regret + 1e-12);
        for (i, e) in p.entries().iter().enumerate() {
            let iv = e.bounds.cate();
            let (r, m, v) = (
                rand.per_stratum[i].1.max_regret,
                mini.per_stratum[i].1.max_regret,
                env.per_stratum[i].1.max_regret,
            );
            if iv.lo < -TIE_GAP && iv.hi > TIE_GAP {
                prop_assert!(r < m);
                if (iv.hi + iv.lo).abs() > TIE_GAP {
                    prop_assert!(m < v);
                }
            }
        }
    }

    #[test]
    fn truths_lie_in_implied_boxes(seed in any::<u64>()) {
        let dgp = random_dgp(seed);
        let prof = bounds_profile(&implied_study(&dgp).unwrap()).unwrap();
        for e in prof.entries() {
            let (m, p) = true_arm_means(&dgp, &e.stratum).unwrap();
            let b = &e.bounds;
            prop_assert!(b.lo_minus - 1e-12 <= m && m <= b.hi_minus + 1e-12);
            prop_assert!(b.lo_plus - 1e-12 <= p && p <= b.hi_plus + 1e-12);
        }
    }

    #[test]
    fn improvement_never_hurts(seed in any::<u64>(), bits in any::<u8>()) {
        let dgp = random_dgp(seed);
        let prof = bounds_profile(&implied_study(&dgp).unwrap()).unwrap();
        let baseline = Policy::Deterministic(
            dgp.ids()
                .enumerate()
                .map(|(i, id)| (id.clone(), Sign::from_01(((bits >> i) & 1) as i64).unwrap()))
                .collect(),
        );
        let report = improve_policy(&baseline, &prof).unwrap();
        let before = value_of(&dgp, &baseline).unwrap();
        let after = value_of(&dgp, &report.policy()).unwrap();
        prop_assert!(after >= before - 1e-15);
        for s in &report.switches {
            let cate = true_cate(&dgp, &s.stratum).unwrap();
            prop_assert!(cate * s.to.value() as f64 > 0.0);
        }
    }

    #[test]
    fn estimated_tables_validate(
        rows in prop::collection::vec((0usize..3, any::<bool>(), any::<bool>(), any::<bool>()), 1..200),
        pc in 0.01..2.0f64,
    ) {
        let pm = |b: bool| if b { Sign::Plus } else { Sign::Minus };
        let records = Records {
            strata: vec!["0".into(), "1".into(), "2".into()],
            rows: rows
                .into_iter()
                .map(|(x, z, a, y)| Record { stratum: x, z: pm(z), a: pm(a), y: pm(y) })
                .collect(),
        };
        let s = estimate_study(&records, SmoothingSpec { pseudo_count: pc }).unwrap();
        for (_, t) in s.strata() {
            prop_assert!(validate_observed(t, 1e-9).is_pass());
            for z in Sign::BOTH {
                prop_assert!((t.slice_sum(z) - 1.0).abs() <= 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn criterion_coincidences(ab in arm_bounds(), beta in 0.0..=1.0f64) {
        let (lo, hi) = (ab.cate_lo, ab.cate_hi);
        if (lo + hi).abs() > TIE_GAP {
            prop_assert_eq!(
                action(PreferenceSpec::Hurwicz(0.5), &ab),
                action(PreferenceSpec::MinimaxRegret, &ab)
            );
        }
        if (ab.lo_plus - ab.lo_minus).abs() > TIE_GAP {
            prop_assert_eq!(
                action(PreferenceSpec::Hurwicz(0.0), &ab),
                action(PreferenceSpec::Maximin, &ab)
            );
        }
        if (ab.hi_plus - ab.hi_minus).abs() > TIE_GAP {
            prop_assert_eq!(
                action(PreferenceSpec::Hurwicz(1.0), &ab),
                action(PreferenceSpec::Maximax, &ab)
            );
        }
        prop_assert_eq!(
            decide(PreferenceSpec::UtilityPreference(beta), &ab, Sign::Minus),
            decide(PreferenceSpec::Hurwicz(beta), &ab, Sign::Minus)
        );
    }

    #[test]
    fn point_identification_collapses_every_criterion(
        mu_minus in 0.0..=1.0f64,
        mu_plus in 0.0..=1.0f64,
        param in 0.0..=1.0f64,
    ) {
        prop_assume!((mu_plus - mu_minus).abs() > TIE_GAP);
        let ab = ArmBounds::point(mu_minus, mu_plus);
        let truth = sign(mu_plus - mu_minus);
        for pref in [
            PreferenceSpec::Maximax,
            PreferenceSpec::Maximin,
            PreferenceSpec::MinimaxRegret,
            PreferenceSpec::Hurwicz(param),
            PreferenceSpec::Healthcare,
            PreferenceSpec::TreatmentPreference(param),
            PreferenceSpec::UtilityPreference(param),
            PreferenceSpec::RandomizedMinimax,
        ] {
            for tie in Sign::BOTH {
                prop_assert_eq!(decide(pref, &ab, tie).action(), Some(truth), "{}", pref);
            }
        }
    }

    #[test]
    fn mixing_probability_is_optimal(lo in -1.0..-1e-6f64, hi in 1e-6..1.0f64) {
        let iv = Interval::new(lo, hi);
        let p = minimax_mixing_probability(iv);
        let g_star = regret_profile(iv, p);
        prop_assert!((g_star - randomized_worst_regret(iv)).abs() <= 1e-12);
        for k in 0..=1000 {
            let q = k as f64 / 1000.0;
            prop_assert!(g_star <= regret_profile(iv, q) + 1e-12);
        }
        prop_assert!(randomized_worst_regret(iv) < (-lo).min(hi));
    }

    #[test]
    fn swapping_arms_negates_actions(ab in arm_bounds(), alpha in 0.0..=1.0f64) {
        let sw = ab.swap_arms();
        prop_assert_eq!(sw.cate_lo, -ab.cate_hi);
        prop_assert_eq!(sw.cate_hi, -ab.cate_lo);
        let gaps = [
            (PreferenceSpec::Maximax, ab.hi_plus - ab.hi_minus),
            (PreferenceSpec::Maximin, ab.lo_plus - ab.lo_minus),
            (PreferenceSpec::MinimaxRegret, ab.cate_lo + ab.cate_hi),
            (
                PreferenceSpec::Hurwicz(alpha),
                (1.0 - alpha) * (ab.lo_plus - ab.lo_minus) + alpha * (ab.hi_plus - ab.hi_minus),
            ),
        ];
        for (pref, gap) in gaps {
            if gap.abs() > TIE_GAP {
                prop_assert_eq!(action(pref, &sw), action(pref, &ab).flip(), "{}", pref);
            }
        }
        let p = decide(PreferenceSpec::RandomizedMinimax, &ab, Sign::Minus).p_plus();
        let q = decide(PreferenceSpec::RandomizedMinimax, &sw, Sign::Minus).p_plus();
        prop_assert!((p + q - 1.0).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn lower_bound_chain(
        p in profile(4),
        bits in any::<u8>(),
        ws in prop::collection::vec(0.0..=1.0f64, 4),
        stochastic in any::<bool>(),
        probs in prop::collection::vec(0.0..=1.0f64, 4),
    ) {
        let ids: Vec<StratumId> = p.ids().cloned().collect();
        let policy = if stochastic {
            Policy::Stochastic(ids.iter().cloned().zip(probs.iter().copied()).collect())
        } else {
            Policy::Deterministic(
                ids.iter()
                    .enumerate()
                    .map(|(i, id)| (id.clone(), Sign::from_01(((bits >> i) & 1) as i64).unwrap()))
                    .collect(),
            )
        };
        let w: IndexMap<StratumId, f64> = ids.iter().cloned().zip(ws.iter().copied()).collect();
        let lhs = lower_bound_value(&policy, &p, &w).unwrap();
        let rhs: f64 = p
            .entries()
            .iter()
            .map(|e| {
                let q = policy.prob_plus(&e.stratum).unwrap();
                e.weight * (q * e.bounds.lo_plus + (1.0 - q) * e.bounds.lo_minus)
            })
            .sum();
        prop_assert!(lhs <= rhs + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn grid_oracle_agrees(p in profile(3), q in 0.0..=1.0f64) {
        for e in p.entries() {
            let closed = stratum_worst_case(&e.bounds, q);
            let grid = grid_worst_case(&e.bounds, q, 101);
            prop_assert!((closed.min_utility - grid.min_utility).abs() <= 0.02);
            prop_assert!((closed.max_regret - grid.max_regret).abs() <= 0.02);
            prop_assert!(grid.max_regret <= closed.max_regret + 1e-12);
            prop_assert!(grid.min_utility >= closed.min_utility - 1e-12);
        }
    }
}

#[test]
fn deterministic_choices_are_not_stochastic() {
    let ab = ArmBounds::from_arms(0.1, 0.8, 0.3, 0.5);
    assert!(matches!(
        decide(PreferenceSpec::MinimaxRegret, &ab, Sign::Minus),
        ActionChoice::Deterministic(Sign::Minus)
    ));
}
