//! Power analysis and minimal sample-size determination for balanced 1-, 2-,
//! and 3-way ANOVA models with fixed and random factors.
//!
//! The crate evaluates the exact F-test of the fixed factor A for every
//! catalogued crossed/nested/mixed classification: noncentrality parameters
//! in the form `lambda = R * S / T`, worst-case (guaranteed) power from a
//! minimum detectable difference, pivot-parameter minimal sample sizes, and a
//! seeded Monte Carlo engine with a Satterthwaite quasi-F test for the two
//! classifications that only admit an approximate F-test.
//!
//! ```
//! use anova_power::model::FactorName::{A, B, C};
//! use anova_power::{plan_for, Component, DesignPoint, VarianceSpec, WorstCaseInput};
//!
//! // Guaranteed power of the A-test in a doubly nested random chain.
//! let plan = plan_for("A > B~ > C~")?;
//! let design = DesignPoint::integer(&[(A, 6), (B, 6), (C, 2)], 2)?;
//! let variance = VarianceSpec::components(&[
//!     (Component::family(&[A, B]), 1.0 / 18.0),
//!     (Component::family(&[A, B, C]), 1.0 / 9.0),
//!     (Component::Error, 1.0 / 6.0),
//! ])?;
//! let wc = WorstCaseInput::new(1.0, variance)?;
//! let res = anova_power::guaranteed_power(&plan, &design, &wc, 0.05)?;
//! assert!((res.power - 0.897849).abs() < 5e-6);
//!
//! // Smallest integer design reaching 95% guaranteed power.
//! let req = anova_power::SizeRequest {
//!     model: plan.model.clone(),
//!     alpha: 0.05,
//!     required_power: 0.95,
//!     worst_case: wc,
//!     fixed_levels: vec![(A, 6)],
//!     minima: vec![],
//!     mode: anova_power::Mode::Integer,
//! };
//! let res = anova_power::min_size_integer(&req)?;
//! assert_eq!(res.design.level(B)?, 8.0);
//! # Ok::<(), anova_power::Error>(())
//! ```

// Negated float comparisons like `!(x > 0.0)` are used throughout the input
// validation so that NaN is rejected along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod catalog;
pub mod dist;
pub mod error;
pub mod model;
pub mod root;
pub mod simulate;
pub mod sizing;

pub use bounds::{guaranteed_power, PowerResult, Provenance, WorstCaseInput};
pub use catalog::{lookup, plan_for, Component, DesignPoint, Mode, Param, TestPlan, VarianceSpec};
pub use error::{Error, Result};
pub use model::{FactorName, ModelSpec};
pub use sizing::{min_size_integer, min_size_real, SizeRequest, SizeResult};
