mod common;

use common::{dirichlet_table, random_dgp};
use pid_engine::bounds::{arm_bounds_balke_pearl, BoundsError};
use pid_engine::ingest::{estimate_study, SmoothingSpec};
use pid_engine::oracle::{
    derive_seed, sharp_bounds_lp, sharpness_audit_with, validity_audit_with, LatentSampling,
    OracleError,
};
use pid_engine::simulate::{draw_dataset, implied_study, paradox_dgp, DgpSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn falsification_matches_lp_infeasibility() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut infeasible, mut mismatches) = (0, Vec::new());
    for i in 0..1_000 {
        let t = dirichlet_table(&mut rng);
        let lp = sharp_bounds_lp(&t);
        let closed = arm_bounds_balke_pearl(&t);
        let lp_infeasible = matches!(lp, Err(OracleError::InfeasibleObservedLaw(_)));
        let crossed = matches!(closed, Err(BoundsError::FalsifiedIvModel { .. }));
        infeasible += lp_infeasible as usize;
        if lp_infeasible != crossed {
            mismatches.push(i);
        }
        if let (Ok(lp), Ok(_)) = (&lp, &closed) {
            lp.verify(&t).unwrap();
        }
    }
    assert!(
        mismatches.is_empty(),
        "disagreement on tables {mismatches:?}"
    );
    assert!(infeasible > 0 && infeasible < 1_000);
}

#[test]
fn sparse_laws_stay_sharp_and_valid() {
    let sparse = LatentSampling::Sparse { max_k: 4 };
    let sharp = sharpness_audit_with(500, 17, sparse);
    assert_eq!(sharp.samples, 500);
    assert_eq!(sharp.violations, 0, "{sharp:?}");
    let valid = validity_audit_with(2_000, 17, sparse);
    assert_eq!(valid.violations, 0, "{valid:?}");
    assert!(valid.worst_slack >= -1e-12);
}

#[test]
fn audits_are_reproducible_and_seed_sensitive() {
    let a = validity_audit_with(3_000, 5, LatentSampling::Uniform);
    let b = validity_audit_with(3_000, 5, LatentSampling::Uniform);
    assert_eq!(a, b);
    let c = validity_audit_with(3_000, 6, LatentSampling::Uniform);
    assert_ne!(a.worst_slack, c.worst_slack);
    let json = serde_json::to_value(a).unwrap();
    let keys: Vec<&str> = json
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .collect();
    assert_eq!(keys, ["samples", "violations", "worst_slack", "seed"]);
    let empty = serde_json::to_value(validity_audit_with(0, 5, LatentSampling::Uniform)).unwrap();
    assert!(empty["worst_slack"].is_null());
}

fn max_cell_deviation(dgp: &DgpSpec, n: usize, seed: u64) -> f64 {
    let truth = implied_study(dgp).unwrap();
    let est = estimate_study(
        &draw_dataset(dgp, n, seed).unwrap(),
        SmoothingSpec::default(),
    )
    .unwrap();
    est.strata()
        .iter()
        .zip(truth.strata())
        .flat_map(|((_, e), (_, t))| e.cells().iter().zip(t.cells()).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn estimates_tighten_with_sample_size() {
    let dgp = paradox_dgp();
    let monotone = (0..100u64)
        .filter(|&r| {
            let devs: Vec<f64> = [1_000, 10_000, 100_000]
                .iter()
                .enumerate()
                .map(|(k, &n)| max_cell_deviation(&dgp, n, derive_seed(r, k as u64)))
                .collect();
            devs[0] >= devs[1] && devs[1] >= devs[2]
        })
        .count();
    assert!(
        monotone >= 95,
        "only {monotone} of 100 replicates were monotone"
    );
}

#[test]
fn implied_studies_of_random_models_are_consistent() {
    for seed in 0..200 {
        let dgp = random_dgp(seed);
        let study = implied_study(&dgp).unwrap();
        for (_, t) in study.strata() {
            arm_bounds_balke_pearl(t).unwrap();
        }
    }
}
