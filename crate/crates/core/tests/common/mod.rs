//! Generators shared by the integration tests.
#![allow(dead_code)]

use pid_engine::bounds::BoundsProfile;
use pid_engine::model::{ArmBounds, ObservedTable, StratumId, StudyTable};
use pid_engine::oracle::{observed_from_latent, sample_latent};
use pid_engine::simulate::{DgpSpec, DgpStratum};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Arm boxes with independent uniform endpoints inside `[0, 1]`.
pub fn arm_bounds() -> impl Strategy<Value = ArmBounds> {
    (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64)
        .prop_map(|(a, b, c, d)| ArmBounds::from_arms(a.min(b), a.max(b), c.min(d), c.max(d)))
}

/// Profiles of 1 to `max` strata with normalized positive weights.
pub fn profile(max: usize) -> impl Strategy<Value = BoundsProfile> {
    prop::collection::vec((arm_bounds(), 0.05..1.0f64), 1..=max).prop_map(|parts| {
        let total: f64 = parts.iter().map(|p| p.1).sum();
        BoundsProfile::from_parts(
            parts
                .into_iter()
                .enumerate()
                .map(|(i, (ab, w))| (StratumId::new(i.to_string()), w / total, ab)),
        )
    })
}

/// Observed law implied by an oracle-sampled latent law.
pub fn oracle_table() -> impl Strategy<Value = ObservedTable> {
    any::<u64>().prop_map(|s| observed_from_latent(&sample_latent(s)))
}

/// Studies of 1 to `max` IV-consistent strata with normalized weights.
pub fn study(max: usize) -> impl Strategy<Value = StudyTable> {
    prop::collection::vec((oracle_table(), 0.05..1.0f64), 1..=max).prop_map(|parts| {
        let total: f64 = parts.iter().map(|p| p.1).sum();
        let mut strata: Vec<_> = parts
            .into_iter()
            .enumerate()
            .map(|(i, (t, w))| (StratumId::new(i.to_string()), t.with_weight(w / total)))
            .collect();
        // absorb rounding so the weights sum to 1 exactly enough
        let drift: f64 = 1.0 - strata.iter().map(|(_, t)| t.weight).sum::<f64>();
        let last = strata.last_mut().unwrap();
        last.1 = last.1.with_weight(last.1.weight + drift);
        StudyTable::new(strata).unwrap()
    })
}

/// A random unconfounded model with 1 to 4 strata.
pub fn random_dgp(seed: u64) -> DgpSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(1..=4);
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut strata: Vec<DgpStratum> = raw
        .iter()
        .enumerate()
        .map(|(i, w)| DgpStratum {
            id: StratumId::new(i.to_string()),
            weight: w / total,
            y_plus: [rng.gen(), rng.gen()],
            a_plus: [rng.gen(), rng.gen()],
            z_plus: None,
        })
        .collect();
    let drift = 1.0 - strata.iter().map(|s| s.weight).sum::<f64>();
    strata.last_mut().unwrap().weight += drift;
    DgpSpec {
        strata,
        z_plus: rng.gen_range(0.05..0.95),
        hidden: None,
    }
}

/// A table with independent uniform cells normalized per slice; usually not
/// IV-consistent.
pub fn dirichlet_table(rng: &mut impl Rng) -> ObservedTable {
    let mut cells = [0.0; 8];
    for v in cells.iter_mut() {
        *v = -(1.0 - rng.gen::<f64>()).ln();
    }
    let (lo, hi) = cells.split_at_mut(4);
    for half in [lo, hi] {
        let s: f64 = half.iter().sum();
        half.iter_mut().for_each(|v| *v /= s);
    }
    ObservedTable::from_slices(
        1.0,
        cells[..4].try_into().unwrap(),
        cells[4..].try_into().unwrap(),
    )
}
