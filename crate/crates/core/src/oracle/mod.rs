//! Ground truth for the bounds: latent response-type laws and an exact LP.
//!
//! With binary `Z`, `A`, `Y` every unit has a compliance type
//! `(A(z=-1), A(z=+1))` and a response type `(Y(a=-1), Y(a=+1))`, giving 16
//! principal strata. A distribution `q` over them, with the instrument
//! independent of the type, generates the observed law
//! `p_{y,a,z} = sum q_t I{A_t(z) = a} I{Y_t(a) = y}` and the counterfactual
//! means `mu_a = sum q_t I{Y_t(a) = +1}`. Bounds are valid when they contain
//! `mu_a` for every such law, and sharp when they equal the extremes of `mu_a`
//! over all `q` consistent with the observed law.

pub mod lp;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::bounds::arm_bounds_balke_pearl;
use crate::model::{ArmBounds, ObservedTable, Sign};
use crate::parallel;

pub use lp::{Certificate, LpResult, Problem, Sense};

pub const N_TYPES: usize = 16;

/// Allowed shortfall of a bound below the truth.
pub const VALIDITY_SLACK: f64 = -1e-12;
/// Allowed LP-vs-closed-form gap.
pub const SHARPNESS_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("no latent law reproduces the observed table (phase-one residual {0})")]
    InfeasibleObservedLaw(f64),
    #[error("linear program failed: {0}")]
    Solver(lp::LpError),
}

/// A response type: treatment under each instrument value and outcome under
/// each treatment value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResponseType {
    pub treatment: [Sign; 2],
    pub outcome: [Sign; 2],
}

impl ResponseType {
    pub fn from_index(t: usize) -> Self {
        let s = |bit: usize| {
            if t >> bit & 1 == 1 {
                Sign::Plus
            } else {
                Sign::Minus
            }
        };
        ResponseType {
            treatment: [s(3), s(2)],
            outcome: [s(1), s(0)],
        }
    }

    pub fn index(&self) -> usize {
        self.treatment[0].bit() << 3
            | self.treatment[1].bit() << 2
            | self.outcome[0].bit() << 1
            | self.outcome[1].bit()
    }

    pub fn treatment_under(&self, z: Sign) -> Sign {
        self.treatment[z.bit()]
    }

    pub fn outcome_under(&self, a: Sign) -> Sign {
        self.outcome[a.bit()]
    }
}

/// Distribution over the 16 response types plus `Pr(Z = +1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentLaw {
    pub q: [f64; N_TYPES],
    pub iv_p: f64,
}

impl LatentLaw {
    /// All mass on one type.
    pub fn degenerate(t: ResponseType, iv_p: f64) -> Self {
        let mut q = [0.0; N_TYPES];
        q[t.index()] = 1.0;
        LatentLaw { q, iv_p }
    }

    pub fn is_valid(&self) -> bool {
        self.q.iter().all(|&v| v >= 0.0)
            && (self.q.iter().sum::<f64>() - 1.0).abs() <= 1e-12
            && self.iv_p > 0.0
            && self.iv_p < 1.0
    }
}

/// Independent per-sample seed for index `i` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, i: u64) -> u64 {
    let mut z = seed ^ i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn exponential(rng: &mut impl Rng) -> f64 {
    -(1.0 - rng.gen::<f64>()).ln()
}

fn iv_probability(rng: &mut impl Rng) -> f64 {
    0.05 + 0.9 * rng.gen::<f64>()
}

/// Uniform on the 16-simplex (normalized exponentials); `iv_p` uniform on `[0.05, 0.95]`.
pub fn sample_latent(seed: u64) -> LatentLaw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = [0.0; N_TYPES];
    for v in q.iter_mut() {
        *v = exponential(&mut rng);
    }
    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= total);
    LatentLaw {
        q,
        iv_p: iv_probability(&mut rng),
    }
}

/// Sparse law: `k` distinct types active with normalized exponential mass.
pub fn sample_sparse_latent(seed: u64, k: usize) -> LatentLaw {
    assert!((1..=N_TYPES).contains(&k));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let active = rand::seq::index::sample(&mut rng, N_TYPES, k);
    let mut q = [0.0; N_TYPES];
    for t in active.iter() {
        q[t] = exponential(&mut rng);
    }
    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= total);
    LatentLaw {
        q,
        iv_p: iv_probability(&mut rng),
    }
}

pub fn observed_from_latent(law: &LatentLaw) -> ObservedTable {
    let mut t = ObservedTable::zeros(1.0);
    for (idx, &mass) in law.q.iter().enumerate() {
        let rt = ResponseType::from_index(idx);
        for z in Sign::BOTH {
            let a = rt.treatment_under(z);
            let y = rt.outcome_under(a);
            t.set(y, a, z, t.p(y, a, z) + mass);
        }
    }
    t
}

/// `(E[Y_{-1} = +1], E[Y_{+1} = +1])` under the law.
pub fn truths_from_latent(law: &LatentLaw) -> (f64, f64) {
    let mut mu = [0.0; 2];
    for (idx, &mass) in law.q.iter().enumerate() {
        let rt = ResponseType::from_index(idx);
        for a in Sign::BOTH {
            if rt.outcome_under(a).is_plus() {
                mu[a.bit()] += mass;
            }
        }
    }
    (mu[0], mu[1])
}

/// How audit laws are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LatentSampling {
    #[default]
    Uniform,
    /// Sample `i` activates `1 + i % max_k` types, hitting polytope vertices.
    Sparse { max_k: usize },
}

impl LatentSampling {
    pub fn draw(self, seed: u64, i: u64) -> LatentLaw {
        let s = derive_seed(seed, i);
        match self {
            LatentSampling::Uniform => sample_latent(s),
            LatentSampling::Sparse { max_k } => sample_sparse_latent(s, 1 + (i as usize) % max_k),
        }
    }
}

fn serialize_slack<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

/// Summary of an audit run. `worst_slack` is the smallest margin observed
/// (`null` in JSON for an empty run).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditReport {
    pub samples: u64,
    pub violations: u64,
    #[serde(serialize_with = "serialize_slack")]
    pub worst_slack: f64,
    pub seed: u64,
}

impl AuditReport {
    pub fn empty(seed: u64) -> Self {
        AuditReport {
            samples: 0,
            violations: 0,
            worst_slack: f64::INFINITY,
            seed,
        }
    }

    fn single(seed: u64, slack: f64, violated: bool) -> Self {
        AuditReport {
            samples: 1,
            violations: violated as u64,
            worst_slack: slack,
            seed,
        }
    }

    /// Associative merge; integer sums and a float minimum are exact.
    pub fn merge(self, other: AuditReport) -> AuditReport {
        AuditReport {
            samples: self.samples + other.samples,
            violations: self.violations + other.violations,
            worst_slack: self.worst_slack.min(other.worst_slack),
            seed: self.seed,
        }
    }
}

/// Smallest margin by which the arm boxes contain the truths.
pub fn containment_slack(ab: &ArmBounds, truths: (f64, f64)) -> f64 {
    let (mu_minus, mu_plus) = truths;
    (mu_minus - ab.lo_minus)
        .min(ab.hi_minus - mu_minus)
        .min(mu_plus - ab.lo_plus)
        .min(ab.hi_plus - mu_plus)
}

fn validity_one(law: &LatentLaw, seed: u64) -> AuditReport {
    let table = observed_from_latent(law);
    match arm_bounds_balke_pearl(&table) {
        Ok(ab) => {
            let slack = containment_slack(&ab, truths_from_latent(law));
            AuditReport::single(seed, slack, slack < VALIDITY_SLACK)
        }
        Err(_) => AuditReport::single(seed, f64::NEG_INFINITY, true),
    }
}

/// Draw `n` laws and check the Balke-Pearl boxes contain their truths.
pub fn validity_audit(n: u64, seed: u64) -> AuditReport {
    validity_audit_with(n, seed, LatentSampling::Uniform)
}

pub fn validity_audit_with(n: u64, seed: u64, sampling: LatentSampling) -> AuditReport {
    parallel::install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| validity_one(&sampling.draw(seed, i), seed))
            .reduce(|| AuditReport::empty(seed), AuditReport::merge)
    })
}

/// LP optima of both arms with certificates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharpLpBounds {
    pub bounds: ArmBounds,
    pub lo_minus: LpResult,
    pub hi_minus: LpResult,
    pub lo_plus: LpResult,
    pub hi_plus: LpResult,
}

impl SharpLpBounds {
    pub fn results(&self) -> [(&LpResult, Sign, Sense); 4] {
        [
            (&self.lo_minus, Sign::Minus, Sense::Minimize),
            (&self.hi_minus, Sign::Minus, Sense::Maximize),
            (&self.lo_plus, Sign::Plus, Sense::Minimize),
            (&self.hi_plus, Sign::Plus, Sense::Maximize),
        ]
    }

    /// Re-verify all four certificates; returns the largest deviation of a
    /// certified optimum from the reported one.
    pub fn verify(&self, table: &ObservedTable) -> Result<f64, lp::CertificateError> {
        let mut worst: f64 = 0.0;
        for (res, arm, sense) in self.results() {
            let opt = res
                .certificate
                .verify(&response_type_lp(table, arm, sense))?;
            worst = worst.max((opt - res.optimum).abs());
        }
        Ok(worst)
    }
}

/// The LP over response-type distributions for one arm mean.
///
/// Eight equalities, one per observed cell; their z-slices both sum to
/// `sum q`, so one row is redundant.
pub fn response_type_lp(table: &ObservedTable, arm: Sign, sense: Sense) -> Problem {
    let mut a = Vec::with_capacity(8);
    let mut b = Vec::with_capacity(8);
    for z in Sign::BOTH {
        for y in Sign::BOTH {
            for act in Sign::BOTH {
                let row = (0..N_TYPES)
                    .map(|t| {
                        let rt = ResponseType::from_index(t);
                        let hit = rt.treatment_under(z) == act && rt.outcome_under(act) == y;
                        if hit {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect();
                a.push(row);
                b.push(table.p(y, act, z));
            }
        }
    }
    let c = (0..N_TYPES)
        .map(|t| {
            if ResponseType::from_index(t).outcome_under(arm).is_plus() {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Problem { a, b, c, sense }
}

fn solve_one(table: &ObservedTable, arm: Sign, sense: Sense) -> Result<LpResult, OracleError> {
    lp::solve(&response_type_lp(table, arm, sense)).map_err(|e| match e {
        lp::LpError::Infeasible(r) => OracleError::InfeasibleObservedLaw(r),
        other => OracleError::Solver(other),
    })
}

/// Sharp arm bounds by linear programming over the 16 response types.
pub fn sharp_bounds_lp(table: &ObservedTable) -> Result<SharpLpBounds, OracleError> {
    let lo_minus = solve_one(table, Sign::Minus, Sense::Minimize)?;
    let hi_minus = solve_one(table, Sign::Minus, Sense::Maximize)?;
    let lo_plus = solve_one(table, Sign::Plus, Sense::Minimize)?;
    let hi_plus = solve_one(table, Sign::Plus, Sense::Maximize)?;
    Ok(SharpLpBounds {
        bounds: ArmBounds::from_arms(
            lo_minus.optimum,
            hi_minus.optimum,
            lo_plus.optimum,
            hi_plus.optimum,
        ),
        lo_minus,
        hi_minus,
        lo_plus,
        hi_plus,
    })
}

/// Largest componentwise gap between two sets of arm bounds.
pub fn arm_gap(x: &ArmBounds, y: &ArmBounds) -> f64 {
    (x.lo_minus - y.lo_minus)
        .abs()
        .max((x.hi_minus - y.hi_minus).abs())
        .max((x.lo_plus - y.lo_plus).abs())
        .max((x.hi_plus - y.hi_plus).abs())
}

fn sharpness_one(law: &LatentLaw, seed: u64) -> AuditReport {
    let table = observed_from_latent(law);
    let closed = match arm_bounds_balke_pearl(&table) {
        Ok(ab) => ab,
        Err(_) => return AuditReport::single(seed, f64::NEG_INFINITY, true),
    };
    let lp = match sharp_bounds_lp(&table) {
        Ok(lp) => lp,
        Err(_) => return AuditReport::single(seed, f64::NEG_INFINITY, true),
    };
    let certified = lp.verify(&table);
    let gap = arm_gap(&closed, &lp.bounds);
    let ok = matches!(certified, Ok(d) if d <= lp::GAP_TOL) && gap <= SHARPNESS_TOL;
    AuditReport::single(seed, -gap, !ok)
}

/// Compare LP optima with the closed-form bounds on `n` oracle tables.
///
/// A violation is a gap above [`SHARPNESS_TOL`] or a certificate that fails
/// re-verification; `worst_slack` is minus the largest gap.
pub fn sharpness_audit(n: u64, seed: u64) -> AuditReport {
    sharpness_audit_with(n, seed, LatentSampling::Uniform)
}

pub fn sharpness_audit_with(n: u64, seed: u64, sampling: LatentSampling) -> AuditReport {
    parallel::install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| sharpness_one(&sampling.draw(seed, i), seed))
            .reduce(|| AuditReport::empty(seed), AuditReport::merge)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Sign::{Minus as M, Plus as P};

    fn rt(t0: Sign, t1: Sign, y0: Sign, y1: Sign) -> ResponseType {
        ResponseType {
            treatment: [t0, t1],
            outcome: [y0, y1],
        }
    }

    #[test]
    fn type_index_round_trips() {
        for t in 0..N_TYPES {
            assert_eq!(ResponseType::from_index(t).index(), t);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_valid() {
        assert_eq!(sample_latent(7), sample_latent(7));
        assert_ne!(sample_latent(7).q[0], sample_latent(8).q[0]);
        for s in 0..1000 {
            assert!(sample_latent(s).is_valid());
        }
        for k in 1..=3 {
            let law = sample_sparse_latent(3, k);
            assert!(law.is_valid());
            assert_eq!(law.q.iter().filter(|&&v| v > 0.0).count(), k);
        }
    }

    #[test]
    fn degenerate_always_taker_always_recover() {
        let law = LatentLaw::degenerate(rt(P, P, P, P), 0.5);
        let t = observed_from_latent(&law);
        assert_eq!(t.p(P, P, M), 1.0);
        assert_eq!(t.p(P, P, P), 1.0);
        assert_eq!(truths_from_latent(&law), (1.0, 1.0));
    }

    #[test]
    fn complier_law() {
        let law = LatentLaw::degenerate(rt(M, P, M, P), 0.5);
        let t = observed_from_latent(&law);
        assert_eq!(t.p(P, P, P), 1.0);
        assert_eq!(t.p(M, M, M), 1.0);
        assert_eq!(truths_from_latent(&law), (0.0, 1.0));
        let ab = arm_bounds_balke_pearl(&t).unwrap();
        assert!(containment_slack(&ab, (0.0, 1.0)) >= VALIDITY_SLACK);
    }

    #[test]
    fn uniform_law_is_symmetric() {
        let law = LatentLaw {
            q: [1.0 / 16.0; N_TYPES],
            iv_p: 0.5,
        };
        let t = observed_from_latent(&law);
        for z in Sign::BOTH {
            assert!((t.slice_sum(z) - 1.0).abs() < 1e-15);
        }
        assert_eq!(truths_from_latent(&law), (0.5, 0.5));
    }

    #[test]
    fn empty_and_tiny_audits() {
        let r = validity_audit(0, 3);
        assert_eq!((r.samples, r.violations), (0, 0));
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"samples":0,"violations":0,"worst_slack":null,"seed":3}"#
        );
        let r = validity_audit(50, 3);
        assert_eq!((r.samples, r.violations), (50, 0));
    }

    #[test]
    fn lp_matches_closed_form_on_complier_table() {
        let law = LatentLaw::degenerate(rt(M, P, M, P), 0.5);
        let t = observed_from_latent(&law);
        let lp = sharp_bounds_lp(&t).unwrap();
        let closed = arm_bounds_balke_pearl(&t).unwrap();
        assert!(arm_gap(&lp.bounds, &closed) < 1e-12);
        assert!(lp.verify(&t).unwrap() < 1e-12);
    }
}
