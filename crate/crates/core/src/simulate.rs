//! Structural models with known truths: closed-form observed laws and policy
//! values, seeded unit-level draws, the paradox model and its three-way
//! strategy comparison, and baseline policy improvement.
//!
//! A model has strata `X` with weights, `Z ~ Bernoulli(z_plus)` independent
//! of an optional hidden state `U`, then `A | X, Z, U` and `Y | X, A, U`.
//! Without a hidden state the model is unconfounded and the counterfactual
//! means are read directly off `Pr(Y = +1 | X, A)`.

use std::ops::Range;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{bounds_profile, BoundsError, BoundsProfile};
use crate::criteria::{decide, CriteriaError};
use crate::model::{
    pool_strata, Action, Interval, ModelError, ObservedTable, Policy, PreferenceSpec, Sign,
    StratumId, StudyTable, COMPARISON_TOL,
};
use crate::parallel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("unknown stratum {0}")]
    UnknownStratum(StratumId),
    #[error("policy has no assignment for stratum {0}")]
    MissingAssignment(StratumId),
    #[error("baseline policy must be deterministic")]
    NotDeterministic,
    #[error("invalid model: {0}")]
    InvalidDgp(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

impl From<CriteriaError> for SimError {
    fn from(e: CriteriaError) -> Self {
        match e {
            CriteriaError::MissingAssignment(id) | CriteriaError::MissingPreference(id) => {
                SimError::MissingAssignment(id)
            }
            CriteriaError::InvalidIndex(p) => SimError::InvalidDgp(format!("bad index {p}")),
        }
    }
}

/// One covariate stratum of a structural model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpStratum {
    pub id: StratumId,
    pub weight: f64,
    /// `Pr(Y = +1 | A = -1)`, `Pr(Y = +1 | A = +1)`.
    pub y_plus: [f64; 2],
    /// `Pr(A = +1 | Z = -1)`, `Pr(A = +1 | Z = +1)`.
    pub a_plus: [f64; 2],
    /// Per-stratum `Pr(Z = +1)`, overriding the model-wide value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_plus: Option<f64>,
}

/// A hidden confounder state: its mass and state-specific models, one entry
/// per stratum in stratum order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HiddenState {
    pub weight: f64,
    pub y_plus: Vec<[f64; 2]>,
    pub a_plus: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub strata: Vec<DgpStratum>,
    pub z_plus: f64,
    /// When present, replaces the stratum-level `y_plus`/`a_plus`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<HiddenState>>,
}

fn unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

impl DgpSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidDgp(m));
        if self.strata.is_empty() {
            return bad("no strata".into());
        }
        let total: f64 = self.strata.iter().map(|s| s.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("stratum weights sum to {total}"));
        }
        if !unit(self.z_plus) {
            return bad(format!("z_plus {} outside [0, 1]", self.z_plus));
        }
        for s in &self.strata {
            let probs = [s.weight, s.y_plus[0], s.y_plus[1], s.a_plus[0], s.a_plus[1]];
            if !probs.iter().all(|&v| unit(v)) || !s.z_plus.is_none_or(unit) {
                return bad(format!("stratum {} has a probability outside [0, 1]", s.id));
            }
        }
        let mut ids = std::collections::HashSet::new();
        if !self.strata.iter().all(|s| ids.insert(&s.id)) {
            return bad("duplicate stratum id".into());
        }
        if let Some(hidden) = &self.hidden {
            let mass: f64 = hidden.iter().map(|h| h.weight).sum();
            if hidden.is_empty() || (mass - 1.0).abs() > 1e-12 {
                return bad(format!("hidden-state weights sum to {mass}"));
            }
            for h in hidden {
                if h.y_plus.len() != self.strata.len() || h.a_plus.len() != self.strata.len() {
                    return bad("hidden state must list one model per stratum".into());
                }
                let ok =
                    unit(h.weight) && h.y_plus.iter().chain(&h.a_plus).flatten().all(|&v| unit(v));
                if !ok {
                    return bad("hidden state has a probability outside [0, 1]".into());
                }
            }
        }
        Ok(())
    }

    pub fn index_of(&self, id: &StratumId) -> Result<usize, SimError> {
        self.strata
            .iter()
            .position(|s| &s.id == id)
            .ok_or_else(|| SimError::UnknownStratum(id.clone()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &StratumId> {
        self.strata.iter().map(|s| &s.id)
    }

    pub fn z_plus_in(&self, x: usize) -> f64 {
        self.strata[x].z_plus.unwrap_or(self.z_plus)
    }

    /// `(mass, y_plus, a_plus)` per hidden state of stratum `x`.
    fn states(&self, x: usize) -> Vec<(f64, [f64; 2], [f64; 2])> {
        match &self.hidden {
            None => vec![(1.0, self.strata[x].y_plus, self.strata[x].a_plus)],
            Some(h) => h
                .iter()
                .map(|s| (s.weight, s.y_plus[x], s.a_plus[x]))
                .collect(),
        }
    }
}

/// The paradox model with `0 -> -1` recoding of `Z` and `A`:
///
/// ```text
/// Pr(Y = 1 | X, A) = X/16 + A/5 + 1/15
/// Pr(A = 1 | X, Z) = X/16 + 2Z/5 + 1/2
/// Z ~ Bernoulli(1/2),  X uniform on {0, 1}
/// ```
pub fn paradox_dgp() -> DgpSpec {
    let stratum = |x: f64| DgpStratum {
        id: StratumId::new(format!("{x}")),
        weight: 0.5,
        y_plus: [x / 16.0 + 1.0 / 15.0, x / 16.0 + 1.0 / 5.0 + 1.0 / 15.0],
        a_plus: [x / 16.0 + 1.0 / 2.0, x / 16.0 + 2.0 / 5.0 + 1.0 / 2.0],
        z_plus: None,
    };
    DgpSpec {
        strata: vec![stratum(0.0), stratum(1.0)],
        z_plus: 0.5,
        hidden: None,
    }
}

fn bern(p: f64, s: Sign) -> f64 {
    if s.is_plus() {
        p
    } else {
        1.0 - p
    }
}

/// Closed-form observed law of the model.
pub fn implied_study(dgp: &DgpSpec) -> Result<StudyTable, SimError> {
    dgp.validate()?;
    let strata = (0..dgp.strata.len())
        .map(|x| {
            let states = dgp.states(x);
            let table = ObservedTable::from_fn(dgp.strata[x].weight, |y, a, z| {
                states
                    .iter()
                    .map(|(m, yp, ap)| m * bern(yp[a.bit()], y) * bern(ap[z.bit()], a))
                    .sum()
            });
            (dgp.strata[x].id.clone(), table)
        })
        .collect();
    let mut study = StudyTable::new(strata)?;
    study.z_independent_of_x = dgp.strata.iter().all(|s| s.z_plus.is_none());
    Ok(study)
}

/// `(E[Y_{-1} = +1 | X], E[Y_{+1} = +1 | X])`.
pub fn true_arm_means(dgp: &DgpSpec, stratum: &StratumId) -> Result<(f64, f64), SimError> {
    let x = dgp.index_of(stratum)?;
    Ok(arm_means_at(dgp, x))
}

fn arm_means_at(dgp: &DgpSpec, x: usize) -> (f64, f64) {
    dgp.states(x).iter().fold((0.0, 0.0), |(m, p), (w, yp, _)| {
        (m + w * yp[0], p + w * yp[1])
    })
}

pub fn true_cate(dgp: &DgpSpec, stratum: &StratumId) -> Result<f64, SimError> {
    let (m, p) = true_arm_means(dgp, stratum)?;
    Ok(p - m)
}

/// The oracle rule: `+1` where the true contrast is positive, else `-1`.
pub fn optimal_policy(dgp: &DgpSpec) -> Policy {
    Policy::Deterministic(
        (0..dgp.strata.len())
            .map(|x| {
                let (m, p) = arm_means_at(dgp, x);
                let a = if p - m > 0.0 { Sign::Plus } else { Sign::Minus };
                (dgp.strata[x].id.clone(), a)
            })
            .collect(),
    )
}

/// `E[Y_{D(X)}] = sum_x w_x [p_x mu_+(x) + (1 - p_x) mu_-(x)]`.
pub fn value_of(dgp: &DgpSpec, policy: &Policy) -> Result<f64, SimError> {
    let mut v = 0.0;
    for (x, s) in dgp.strata.iter().enumerate() {
        let p = policy
            .prob_plus(&s.id)
            .ok_or_else(|| SimError::MissingAssignment(s.id.clone()))?;
        let (m, q) = arm_means_at(dgp, x);
        v += s.weight * (p * q + (1.0 - p) * m);
    }
    Ok(v)
}

pub fn regret_of(dgp: &DgpSpec, policy: &Policy) -> Result<f64, SimError> {
    Ok(value_of(dgp, &optimal_policy(dgp))? - value_of(dgp, policy)?)
}

/// One unit: stratum index and `(z, a, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Record {
    pub stratum: usize,
    pub z: Sign,
    pub a: Sign,
    pub y: Sign,
}

/// Unit-level data; `Record::stratum` indexes `strata`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Records {
    pub strata: Vec<StratumId>,
    pub rows: Vec<Record>,
}

impl Records {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// 32-bit words of the ChaCha stream consumed per unit (five `f64` draws).
const WORDS_PER_ROW: u128 = 10;
const SHARD_ROWS: usize = 1 << 16;

fn pick(weights: impl Iterator<Item = f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Rows `range` of the dataset drawn with `seed`.
///
/// Row `i` always reads words `[10 i, 10 i + 10)` of the seeded stream, so
/// any sharding of the index range reproduces the sequential draw.
pub fn draw_rows(dgp: &DgpSpec, range: Range<usize>, seed: u64) -> Vec<Record> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(range.start as u128 * WORDS_PER_ROW);
    let states: Vec<_> = (0..dgp.strata.len()).map(|x| dgp.states(x)).collect();
    range
        .map(|_| {
            let u: [f64; 5] = std::array::from_fn(|_| rng.gen::<f64>());
            let x = pick(dgp.strata.iter().map(|s| s.weight), u[0]);
            let st = &states[x];
            let (_, yp, ap) = st[pick(st.iter().map(|s| s.0), u[1])];
            let z = if u[2] < dgp.z_plus_in(x) {
                Sign::Plus
            } else {
                Sign::Minus
            };
            let a = if u[3] < ap[z.bit()] {
                Sign::Plus
            } else {
                Sign::Minus
            };
            let y = if u[4] < yp[a.bit()] {
                Sign::Plus
            } else {
                Sign::Minus
            };
            Record {
                stratum: x,
                z,
                a,
                y,
            }
        })
        .collect()
}

/// `n` units sampled `X -> U -> Z -> A -> Y`; deterministic given `seed`.
pub fn draw_dataset(dgp: &DgpSpec, n: usize, seed: u64) -> Result<Records, SimError> {
    dgp.validate()?;
    let shards: Vec<Range<usize>> = (0..n)
        .step_by(SHARD_ROWS)
        .map(|s| s..(s + SHARD_ROWS).min(n))
        .collect();
    let rows = parallel::install(|| {
        shards
            .into_par_iter()
            .map(|r| draw_rows(dgp, r, seed))
            .collect::<Vec<_>>()
    })
    .concat();
    Ok(Records {
        strata: dgp.ids().cloned().collect(),
        rows,
    })
}

/// Monte Carlo estimate with its plug-in binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Value and regret estimates from one intervention run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McPolicyEstimate {
    pub value: McEstimate,
    pub regret: McEstimate,
}

/// Intervene with the (possibly stochastic) policy on `n` seeded units.
///
/// Each unit's potential outcomes share one uniform, so the regret estimate
/// is the mean paired difference `Y_{D*(X)} - Y_{D(X)}`. Standard errors use
/// the plug-in binomial variance per `(stratum, arm)` cell.
pub fn monte_carlo_policy(
    dgp: &DgpSpec,
    policy: &Policy,
    n: usize,
    seed: u64,
) -> Result<McPolicyEstimate, SimError> {
    dgp.validate()?;
    let probs = dgp
        .strata
        .iter()
        .map(|s| {
            policy
                .prob_plus(&s.id)
                .ok_or_else(|| SimError::MissingAssignment(s.id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let oracle = optimal_policy(dgp);
    let best: Vec<Sign> = dgp
        .strata
        .iter()
        .map(|s| oracle.action(&s.id).expect("oracle covers every stratum"))
        .collect();
    let states: Vec<_> = (0..dgp.strata.len()).map(|x| dgp.states(x)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // per (stratum, arm): units, successes under the policy
    let mut cells = vec![[(0u64, 0u64); 2]; dgp.strata.len()];
    let mut regret_sum = 0i64;
    for _ in 0..n {
        let u: [f64; 4] = std::array::from_fn(|_| rng.gen::<f64>());
        let x = pick(dgp.strata.iter().map(|s| s.weight), u[0]);
        let st = &states[x];
        let (_, yp, _) = st[pick(st.iter().map(|s| s.0), u[1])];
        let a = if u[2] < probs[x] {
            Sign::Plus
        } else {
            Sign::Minus
        };
        let y = u[3] < yp[a.bit()];
        let y_best = u[3] < yp[best[x].bit()];
        let cell = &mut cells[x][a.bit()];
        cell.0 += 1;
        cell.1 += y as u64;
        regret_sum += y_best as i64 - y as i64;
    }
    if n == 0 {
        let empty = McEstimate {
            mean: 0.0,
            std_error: f64::INFINITY,
            n,
        };
        return Ok(McPolicyEstimate {
            value: empty,
            regret: empty,
        });
    }
    let nf = n as f64;
    let hits: u64 = cells.iter().flatten().map(|c| c.1).sum();
    let variance: f64 = cells
        .iter()
        .flatten()
        .filter(|c| c.0 > 0)
        .map(|&(m, k)| {
            let p = k as f64 / m as f64;
            let share = m as f64 / nf;
            share * share * p * (1.0 - p) / m as f64
        })
        .sum();
    let std_error = variance.sqrt();
    Ok(McPolicyEstimate {
        value: McEstimate {
            mean: hits as f64 / nf,
            std_error,
            n,
        },
        regret: McEstimate {
            mean: regret_sum as f64 / nf,
            std_error,
            n,
        },
    })
}

/// The three analyses compared on the paradox model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Strategy {
    /// Sign of the structural contrast per stratum (a correctly specified,
    /// unconfounded regression).
    #[serde(rename = "unconfounded-cate")]
    UnconfoundedCate,
    /// Minimax regret on bounds for the pooled population, applied to all.
    #[serde(rename = "pooled-minimax-regret")]
    PooledMinimaxRegret,
    /// Minimax regret on per-stratum bounds.
    #[serde(rename = "stratified-minimax-regret")]
    StratifiedMinimaxRegret,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::UnconfoundedCate,
        Strategy::PooledMinimaxRegret,
        Strategy::StratifiedMinimaxRegret,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::UnconfoundedCate => "unconfounded-cate",
            Strategy::PooledMinimaxRegret => "pooled-minimax-regret",
            Strategy::StratifiedMinimaxRegret => "stratified-minimax-regret",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyRow {
    pub stratum: StratumId,
    pub strategy: Strategy,
    pub action: Action,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyComparison {
    pub rows: Vec<StrategyRow>,
    pub pooled_cate: Interval,
    pub profile: BoundsProfile,
}

impl StrategyComparison {
    pub fn row(&self, stratum: &StratumId, strategy: Strategy) -> Option<&StrategyRow> {
        self.rows
            .iter()
            .find(|r| &r.stratum == stratum && r.strategy == strategy)
    }
}

/// Decisions of each strategy per stratum, scored against the oracle rule.
///
/// A stratum with zero true contrast counts every action as correct.
pub fn strategy_table(dgp: &DgpSpec) -> Result<StrategyComparison, SimError> {
    let study = implied_study(dgp)?;
    let profile = bounds_profile(&study)?;
    let pooled = crate::bounds::arm_bounds_balke_pearl(&pool_strata(&study)?)?;
    let tie = Sign::Minus;
    let pooled_action = decide(PreferenceSpec::MinimaxRegret, &pooled, tie)
        .action()
        .expect("deterministic rule");
    let mut rows = Vec::new();
    for (x, s) in dgp.strata.iter().enumerate() {
        let (m, p) = arm_means_at(dgp, x);
        let cate = p - m;
        let truth = if cate > 0.0 { Sign::Plus } else { Sign::Minus };
        let stratified = decide(
            PreferenceSpec::MinimaxRegret,
            &profile.entries()[x].bounds,
            tie,
        )
        .action()
        .expect("deterministic rule");
        for (strategy, action) in [
            (Strategy::UnconfoundedCate, truth),
            (Strategy::PooledMinimaxRegret, pooled_action),
            (Strategy::StratifiedMinimaxRegret, stratified),
        ] {
            rows.push(StrategyRow {
                stratum: s.id.clone(),
                strategy,
                action,
                correct: action == truth || cate.abs() <= COMPARISON_TOL,
            });
        }
    }
    Ok(StrategyComparison {
        rows,
        pooled_cate: pooled.cate(),
        profile,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Switch {
    pub stratum: StratumId,
    pub from: Action,
    pub to: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImprovementReport {
    pub improved: IndexMap<StratumId, Action>,
    pub switches: Vec<Switch>,
    /// Strata whose contrast is identified positive (`L > 0`).
    pub lower_positive: usize,
    /// Strata whose contrast is identified negative (`U < 0`).
    pub upper_negative: usize,
}

impl ImprovementReport {
    pub fn policy(&self) -> Policy {
        Policy::Deterministic(self.improved.clone())
    }
}

/// Switch a baseline only where the bounds identify the better arm:
/// `-1` with `L > 0` becomes `+1`, `+1` with `U < 0` becomes `-1`.
pub fn improve_policy(
    baseline: &Policy,
    profile: &BoundsProfile,
) -> Result<ImprovementReport, SimError> {
    if !baseline.is_deterministic() {
        return Err(SimError::NotDeterministic);
    }
    let mut improved = IndexMap::new();
    let mut switches = Vec::new();
    let (mut lower_positive, mut upper_negative) = (0, 0);
    for e in profile.entries() {
        let from = baseline
            .action(&e.stratum)
            .ok_or_else(|| SimError::MissingAssignment(e.stratum.clone()))?;
        let identified_plus = e.bounds.cate_lo > COMPARISON_TOL;
        let identified_minus = e.bounds.cate_hi < -COMPARISON_TOL;
        lower_positive += identified_plus as usize;
        upper_negative += identified_minus as usize;
        let to = match from {
            Sign::Minus if identified_plus => Sign::Plus,
            Sign::Plus if identified_minus => Sign::Minus,
            a => a,
        };
        if to != from {
            switches.push(Switch {
                stratum: e.stratum.clone(),
                from,
                to,
            });
        }
        improved.insert(e.stratum.clone(), to);
    }
    Ok(ImprovementReport {
        improved,
        switches,
        lower_positive,
        upper_negative,
    })
}
