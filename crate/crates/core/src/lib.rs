//! Individualized treatment decisions under partial identification with a
//! binary instrument.
//!
//! The pipeline is: an observed [`model::StudyTable`] of per-stratum laws,
//! sharp counterfactual-mean bounds from [`bounds`], a decision rule from
//! [`criteria`], and worst-case reports from [`diagnostics`]. The [`oracle`]
//! module certifies the bounds independently and [`simulate`] provides
//! structural models with known truths.

pub mod bounds;
pub mod cli;
pub mod criteria;
pub mod diagnostics;
pub mod format;
pub mod ingest;
pub mod model;
pub mod oracle;
pub mod parallel;
pub mod simulate;

pub use bounds::{arm_bounds_balke_pearl, bounds_profile, cate_bounds, BoundsError, BoundsProfile};
pub use criteria::{decide, minimax_mixing_probability, randomized_worst_regret, ActionChoice};
pub use model::{
    Action, ArmBounds, Interval, ObservedTable, Policy, PreferenceSpec, Sign, StratumId, StudyTable,
};
