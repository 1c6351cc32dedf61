//! Worst-case (least favorable) noncentrality and guaranteed power.
//!
//! Given a minimum detectable difference `delta` between the largest and
//! smallest A-effects, the sum of squared effects is bounded below by
//! `delta^2 / 2`, raised by `m/(m-1)` when A is nested in one factor
//! (`m = max(v, a)`) and by `m2 m3 / ((m2-1)(m3-1))` when nested in two
//! (`m1 <= m2 <= m3` the sorted level counts). Evaluating the test at this
//! least favorable effect configuration yields power that is guaranteed for
//! *any* effects with range `delta`.
//!
//! The variance side has two information levels. With named component values
//! the denominator `T` is evaluated exactly. With only the total variance
//! `sigma_y^2` known, the least favorable splitting puts the entire total on
//! the first `T` term (coefficient 1), so `T = sigma_y^2`.

use serde::{Deserialize, Serialize};

use crate::catalog::{Component, DesignPoint, EffectSumKind, TestPlan, VarianceSpec};
use crate::dist::{power_from_lambda, FParams};
use crate::error::{Error, Result};

/// Inputs for the guaranteed (worst-case) analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCaseInput {
    /// Minimum difference to be detected between the largest and smallest
    /// A-effects. Zero is allowed and gives the null power `alpha`.
    pub delta: f64,
    /// Componentwise variances, or the total variance only.
    pub variance: VarianceSpec,
}

impl WorstCaseInput {
    pub fn new(delta: f64, variance: VarianceSpec) -> Result<WorstCaseInput> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidInput(format!("delta must be >= 0, got {delta}")));
        }
        Ok(WorstCaseInput { delta, variance })
    }
}

/// Sharp lower bound for the sum of squared A-effects over all zero-margin
/// configurations with range `delta`.
///
/// `dims` are the effect-array axis lengths: `[a]`, `[v, a]`, or `[u, v, a]`.
/// Every dimension must be at least 2 (real values are accepted; the sizing
/// search evaluates the bound along real-relaxed axes).
pub fn min_effect_sum(kind: EffectSumKind, delta: f64, dims: &[f64]) -> Result<f64> {
    let expected = match kind {
        EffectSumKind::Single => 1,
        EffectSumKind::Double => 2,
        EffectSumKind::Triple => 3,
    };
    if dims.len() != expected {
        return Err(Error::InvalidInput(format!("expected {expected} dims for {kind:?}, got {}", dims.len())));
    }
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!("delta must be >= 0, got {delta}")));
    }
    for &d in dims {
        if !(d >= 2.0) {
            return Err(Error::Domain(format!("effect-array dimension {d} must be at least 2")));
        }
    }
    let mut sorted = dims.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut bound = 0.5 * delta * delta;
    for &m in &sorted[1..] {
        bound *= m / (m - 1.0);
    }
    Ok(bound)
}

fn effect_dims_real(plan: &TestPlan, design: &DesignPoint) -> Result<Vec<f64>> {
    plan.effect_sum.axes(&plan.model).iter().map(|&f| design.level(f)).collect()
}

/// Least favorable noncentrality for the given design and worst-case input.
///
/// With componentwise variances: `R * S_min / T` with `T` evaluated from the
/// given components (the worst case runs over effect configurations only).
/// With total variance only: `R * S_min / sigma_y^2`, the sharp bound over
/// both effect configurations and variance splittings.
pub fn lambda_min(plan: &TestPlan, design: &DesignPoint, input: &WorstCaseInput) -> Result<f64> {
    let exact = plan.exact()?;
    let s_min = min_effect_sum(plan.effect_sum, input.delta, &effect_dims_real(plan, design)?)?;
    let denom = match &input.variance {
        VarianceSpec::Components(map) => exact.t_value(&plan.model, design, map)?,
        VarianceSpec::TotalOnly { sigma_y_sq } => *sigma_y_sq,
    };
    if !(denom > 0.0) {
        return Err(Error::Domain("variance denominator must be positive".into()));
    }
    Ok(exact.r.eval(design)? * s_min / denom)
}

/// The two displayed lower bounds: `(R/2) delta^2 / sigma_y^2` (flat) and
/// `(R/2) delta^2 / sigma_{y,active}^2` (refined to the components that occur
/// in T), both carrying the nested-model raising factor. Requires
/// componentwise variances for the refined bound.
pub fn lambda_lower_bounds(
    plan: &TestPlan,
    design: &DesignPoint,
    delta: f64,
    variance: &VarianceSpec,
) -> Result<(f64, f64)> {
    let exact = plan.exact()?;
    let s_min = min_effect_sum(plan.effect_sum, delta, &effect_dims_real(plan, design)?)?;
    let r = exact.r.eval(design)?;
    match variance {
        VarianceSpec::TotalOnly { sigma_y_sq } => Ok((r * s_min / sigma_y_sq, r * s_min / sigma_y_sq)),
        VarianceSpec::Components(map) => {
            let mut total = 0.0;
            let mut active = 0.0;
            for (comp, v) in map {
                total += v;
                if exact.t_terms.iter().any(|t| t.component == *comp) {
                    active += v;
                }
            }
            for term in &exact.t_terms {
                if !map.contains_key(&term.component) {
                    return Err(Error::MissingComponent(format!(
                        "component {} is required by the denominator T",
                        term.component.key(&plan.model)
                    )));
                }
            }
            if !(active > 0.0) {
                return Err(Error::Domain("active variance must be positive".into()));
            }
            Ok((r * s_min / total, r * s_min / active))
        }
    }
}

/// Most favorable noncentrality under a known total variance, or `None` when
/// the model has inactive components (then the favorable splitting pushes the
/// noncentrality to infinity).
///
/// For all-active models the best splitting puts the whole total on the last
/// T term, whose coefficient is the smallest.
pub fn lambda_best(plan: &TestPlan, design: &DesignPoint, delta: f64, sigma_y_sq: f64) -> Result<Option<f64>> {
    let exact = plan.exact()?;
    if !(sigma_y_sq > 0.0) {
        return Err(Error::Domain(format!("total variance must be positive, got {sigma_y_sq}")));
    }
    let active: Vec<Component> = exact.active_components();
    let model_comps = crate::catalog::model_components(&plan.model);
    if model_comps.iter().any(|c| !active.contains(c)) {
        return Ok(None);
    }
    let s_min = min_effect_sum(plan.effect_sum, delta, &effect_dims_real(plan, design)?)?;
    let min_coeff = exact
        .t_terms
        .iter()
        .map(|t| t.coefficient(design))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok(Some(exact.r.eval(design)? * s_min / (min_coeff * sigma_y_sq)))
}

/// How a power figure was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// Analytic power at the exact noncentrality of explicit effects.
    ExactAnalytic,
    /// Analytic power at the least favorable noncentrality.
    WorstCaseBound,
    /// Empirical rejection rate.
    MonteCarlo { replications: u64, seed: u64, ci_halfwidth: f64 },
}

/// A power evaluation with its test geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    pub df1: f64,
    pub df2: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub power: f64,
    pub provenance: Provenance,
}

/// Guaranteed power: the exact test evaluated at the least favorable
/// noncentrality for `(delta, variance)`.
pub fn guaranteed_power(
    plan: &TestPlan,
    design: &DesignPoint,
    input: &WorstCaseInput,
    alpha: f64,
) -> Result<PowerResult> {
    let (df1, df2) = plan.degrees_of_freedom(design)?;
    let lambda = lambda_min(plan, design, input)?;
    let power = power_from_lambda(alpha, FParams::new(df1, df2, lambda)?)?;
    Ok(PowerResult { df1, df2, lambda, alpha, power, provenance: Provenance::WorstCaseBound })
}

/// Analytic power at the exact noncentrality of explicit effects and named
/// variance components.
pub fn exact_power(
    plan: &TestPlan,
    design: &DesignPoint,
    effects: &[f64],
    variance: &VarianceSpec,
    alpha: f64,
) -> Result<PowerResult> {
    let (df1, df2) = plan.degrees_of_freedom(design)?;
    let lambda = plan.lambda_exact(design, effects, variance)?;
    let power = power_from_lambda(alpha, FParams::new(df1, df2, lambda)?)?;
    Ok(PowerResult { df1, df2, lambda, alpha, power, provenance: Provenance::ExactAnalytic })
}

/// Convenience: the worst-case variance splitting as an explicit component
/// map (everything on the first T term, zero elsewhere).
pub fn worst_case_split(plan: &TestPlan, sigma_y_sq: f64) -> Result<VarianceSpec> {
    let exact = plan.exact()?;
    let first = exact.t_terms.first().expect("T is nonempty for exact plans").component;
    let pairs: Vec<(Component, f64)> = exact
        .t_terms
        .iter()
        .map(|t| (t.component, if t.component == first { sigma_y_sq } else { 0.0 }))
        .collect();
    VarianceSpec::components(&pairs)
}
