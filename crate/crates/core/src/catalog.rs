//! The classification catalog: every balanced 1-, 2-, and 3-way model with
//! an exact F-test of the fixed factor A, plus the two classifications that
//! only admit an approximate test.
//!
//! Each exact entry carries the numerator and denominator degrees of freedom,
//! the noncentrality decomposition `lambda = R * S / T` (R a product of
//! design parameters, S the sum of squared A-effects, T a positive linear
//! combination of variance components), the denominator stratum, and the
//! pivot parameter. Ditto abbreviations in the source table are expanded to
//! one explicit entry per classification; a unit test guards the
//! transcription block by block.
//!
//! One asymmetry is intentional and worth flagging for verification against
//! the source: `A x (B > C~)` has `df2 = (a-1)b(c-1)` while its neighbours
//! `A > B > C~` and `(A x B) > C~` have `df2 = ab(c-1)`. The denominator
//! stratum of `A x (B > C~)` is the A-by-C-within-B interaction, whose
//! degrees of freedom are `(a-1)b(c-1)`, so the transcribed value is
//! consistent with the stratum structure.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::model::{Factor, FactorName, FactorSet, ModelSpec, NameMap, RawStructure};

// ---------------------------------------------------------------------------
// Design parameters and symbolic expressions
// ---------------------------------------------------------------------------

/// A design parameter: the level count of a factor, or the replicate count n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Param {
    Level(FactorName),
    Reps,
}

impl Param {
    pub fn symbol(self) -> char {
        match self {
            Param::Level(f) => f.level_symbol(),
            Param::Reps => 'n',
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// One multiplicative term of a df/R expression: `p` or `(p - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExprTerm {
    pub param: Param,
    pub minus_one: bool,
}

/// A product of parameters and `(parameter - 1)` terms.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Expr(pub Vec<ExprTerm>);

impl Expr {
    pub fn eval(&self, design: &DesignPoint) -> Result<f64> {
        let mut prod = 1.0;
        for t in &self.0 {
            let v = design.value(t.param)?;
            prod *= if t.minus_one { v - 1.0 } else { v };
        }
        Ok(prod)
    }

    /// Parameters referenced by the expression.
    pub fn params(&self) -> impl Iterator<Item = Param> + '_ {
        self.0.iter().map(|t| t.param)
    }

    fn translate(&self, map: &NameMap) -> Expr {
        Expr(self.0.iter().map(|t| ExprTerm { param: translate_param(t.param, map), minus_one: t.minus_one }).collect())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for t in &self.0 {
            if t.minus_one {
                write!(f, "({}-1)", t.param)?;
            } else {
                write!(f, "{}", t.param)?;
            }
        }
        Ok(())
    }
}

fn translate_param(p: Param, map: &NameMap) -> Param {
    match p {
        Param::Level(f) => Param::Level(map.apply(f)),
        Param::Reps => Param::Reps,
    }
}

// ---------------------------------------------------------------------------
// Variance components
// ---------------------------------------------------------------------------

/// Identifies one variance component of a model: the residual error, or the
/// random-effect family spanning a set of factors.
///
/// A family is fully identified by the set of factors it involves (live
/// factors plus nesting parents); e.g. in `A > B~` the set `{A, B}` is the
/// B-within-A family, while in `A x B~` the same set is the AB interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    Error,
    Family(FactorSet),
}

impl Component {
    pub fn family(factors: &[FactorName]) -> Component {
        Component::Family(FactorSet::from_slice(factors))
    }

    fn translate(self, map: &NameMap) -> Component {
        match self {
            Component::Error => Component::Error,
            Component::Family(set) => Component::Family(map.apply_set(set)),
        }
    }

    /// Canonical key for CLI/serialized use, resolved against a model:
    /// `"se"` for the error term, otherwise `s` + effect letters of the live
    /// factors + upper-case letters of the nesting parents. Examples:
    /// `sbA` for B-within-A, `sgAB` for C-within-(A,B), `sab` for an AB
    /// interaction, `snu` for the main effect of V.
    pub fn key(self, model: &ModelSpec) -> String {
        match self {
            Component::Error => "se".to_string(),
            Component::Family(set) => {
                let parents = family_parents(model, set);
                let mut s = String::from("s");
                for f in set.iter() {
                    if !parents.contains(f) {
                        s.push_str(f.effect_symbol());
                    }
                }
                for f in parents.iter() {
                    s.push(f.letter());
                }
                s
            }
        }
    }

    /// Flat alias accepted on input: `s` + effect letters of every factor in
    /// the family, nesting ignored (`sab` for `{A, B}` however nested).
    pub fn flat_alias(self) -> String {
        match self {
            Component::Error => "se".to_string(),
            Component::Family(set) => {
                let mut s = String::from("s");
                for f in set.iter() {
                    s.push_str(f.effect_symbol());
                }
                s
            }
        }
    }
}

/// Union of the parents of the family's live factors, restricted to the set.
fn family_parents(model: &ModelSpec, set: FactorSet) -> FactorSet {
    let mut parents = FactorSet::EMPTY;
    for f in set.iter() {
        if let Some(info) = model.factor(f) {
            parents = parents.union(info.parents);
        }
    }
    // Only members of the family count as parents in the display.
    FactorSet::from_slice(&set.iter().filter(|f| parents.contains(*f)).collect::<Vec<_>>())
}

/// Looks up a component of `model` by its canonical key or flat alias.
pub fn component_from_key(model: &ModelSpec, key: &str) -> Result<Component> {
    for comp in model_components(model) {
        if comp.key(model) == key || comp.flat_alias().eq_ignore_ascii_case(key) {
            return Ok(comp);
        }
    }
    let known: Vec<String> = model_components(model).into_iter().map(|c| c.key(model)).collect();
    Err(Error::MissingComponent(format!(
        "unknown component '{key}' for model {model}; known components: {}",
        known.join(", ")
    )))
}

/// Every variance component of the model: one per random-effect family (any
/// ancestrally closed factor subset whose live factors include a random one)
/// plus the error term.
pub fn model_components(model: &ModelSpec) -> Vec<Component> {
    let mut out: Vec<Component> = closed_subsets(model.factors())
        .into_iter()
        .filter(|&set| family_is_random(model.factors(), set))
        .map(Component::Family)
        .collect();
    out.push(Component::Error);
    out
}

/// All nonempty ancestrally closed subsets of the factors, in mask order.
/// These are exactly the effect families (strata) of the classification.
pub(crate) fn closed_subsets(factors: &[Factor]) -> Vec<FactorSet> {
    let all: Vec<FactorName> = factors.iter().map(|f| f.name).collect();
    let k = all.len();
    let mut out = Vec::new();
    for bits in 1u32..(1 << k) {
        let mut set = FactorSet::EMPTY;
        for (i, &f) in all.iter().enumerate() {
            if bits & (1 << i) != 0 {
                set = set.with(f);
            }
        }
        let closed = factors.iter().all(|f| !set.contains(f.name) || f.parents.is_subset_of(set));
        if closed {
            out.push(set);
        }
    }
    out.sort();
    out.dedup();
    out
}

/// A family is a random-effect family when a live (non-parent) member is a
/// random factor.
pub(crate) fn family_is_random(factors: &[Factor], set: FactorSet) -> bool {
    let parents = {
        let mut p = FactorSet::EMPTY;
        for f in factors {
            if set.contains(f.name) {
                p = p.union(f.parents);
            }
        }
        p
    };
    factors.iter().any(|f| set.contains(f.name) && !parents.contains(f.name) && f.random)
}

/// Nonnegative variance component values, keyed by component.
pub type ComponentMap = BTreeMap<Component, f64>;

/// Variance specification: named component values, or only the total
/// variance (for the guaranteed worst-case analysis).
#[derive(Debug, Clone, PartialEq)]
pub enum VarianceSpec {
    Components(ComponentMap),
    TotalOnly { sigma_y_sq: f64 },
}

impl VarianceSpec {
    pub fn components(pairs: &[(Component, f64)]) -> Result<VarianceSpec> {
        let mut map = ComponentMap::new();
        for &(c, v) in pairs {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("variance component value must be >= 0, got {v}")));
            }
            map.insert(c, v);
        }
        Ok(VarianceSpec::Components(map))
    }

    pub fn total(sigma_y_sq: f64) -> Result<VarianceSpec> {
        if !(sigma_y_sq > 0.0) || !sigma_y_sq.is_finite() {
            return Err(Error::InvalidInput(format!("total variance must be positive, got {sigma_y_sq}")));
        }
        Ok(VarianceSpec::TotalOnly { sigma_y_sq })
    }
}

// ---------------------------------------------------------------------------
// Design points
// ---------------------------------------------------------------------------

/// Whether a design holds integer level counts or real-valued relaxations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Integer,
    Real,
}

/// Level counts for each factor plus the replicate count n.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignPoint {
    levels: BTreeMap<FactorName, f64>,
    n: f64,
    mode: Mode,
}

impl DesignPoint {
    /// Integer design; every count must be an integer >= 2.
    pub fn integer(levels: &[(FactorName, u64)], n: u64) -> Result<DesignPoint> {
        let mut map = BTreeMap::new();
        for &(f, v) in levels {
            if v < 2 {
                return Err(Error::InvalidInput(format!("level count {} = {v} must be >= 2", f.level_symbol())));
            }
            map.insert(f, v as f64);
        }
        if n < 2 {
            return Err(Error::InvalidInput(format!("replicate count n = {n} must be >= 2")));
        }
        Ok(DesignPoint { levels: map, n: n as f64, mode: Mode::Integer })
    }

    /// Real-valued design; every count must exceed 1 so each `(p - 1)`
    /// degrees-of-freedom term stays positive.
    pub fn real(levels: &[(FactorName, f64)], n: f64) -> Result<DesignPoint> {
        let mut map = BTreeMap::new();
        for &(f, v) in levels {
            if !(v > 1.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("level count {} = {v} must exceed 1", f.level_symbol())));
            }
            map.insert(f, v);
        }
        if !(n > 1.0) || !n.is_finite() {
            return Err(Error::InvalidInput(format!("replicate count n = {n} must exceed 1")));
        }
        Ok(DesignPoint { levels: map, n, mode: Mode::Real })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn level(&self, f: FactorName) -> Result<f64> {
        self.levels
            .get(&f)
            .copied()
            .ok_or_else(|| Error::MissingParameter(format!("level count {}", f.level_symbol())))
    }

    pub fn value(&self, p: Param) -> Result<f64> {
        match p {
            Param::Level(f) => self.level(f),
            Param::Reps => Ok(self.n),
        }
    }

    pub fn levels(&self) -> impl Iterator<Item = (FactorName, f64)> + '_ {
        self.levels.iter().map(|(&f, &v)| (f, v))
    }

    /// Copy with one parameter replaced.
    #[must_use]
    pub fn with_value(&self, p: Param, v: f64) -> DesignPoint {
        let mut d = self.clone();
        match p {
            Param::Level(f) => {
                d.levels.insert(f, v);
            }
            Param::Reps => d.n = v,
        }
        d
    }

    /// Integer level count, for shaping data arrays.
    pub fn level_usize(&self, f: FactorName) -> Result<usize> {
        let v = self.level(f)?;
        if self.mode != Mode::Integer || v.fract() != 0.0 {
            return Err(Error::InvalidInput(format!("level count {} = {v} must be an integer here", f.level_symbol())));
        }
        Ok(v as usize)
    }

    /// Total experiment size: the product of every level count and n.
    pub fn size(&self) -> f64 {
        self.levels.values().product::<f64>() * self.n
    }
}

impl fmt::Display for DesignPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (name, v) in &self.levels {
            if !first {
                write!(f, " ")?;
            }
            first = false;
            if self.mode == Mode::Integer {
                write!(f, "{}={}", name.level_symbol(), *v as u64)?;
            } else {
                write!(f, "{}={}", name.level_symbol(), v)?;
            }
        }
        if !first {
            write!(f, " ")?;
        }
        if self.mode == Mode::Integer {
            write!(f, "n={}", self.n as u64)
        } else {
            write!(f, "n={}", self.n)
        }
    }
}

// ---------------------------------------------------------------------------
// Effect sums
// ---------------------------------------------------------------------------

/// Index shape of the fixed factor's effect array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EffectSumKind {
    /// `sum_i alpha_i^2` — A not nested in anything.
    Single,
    /// `sum_{i,j} alpha_{i(j)}^2` — A nested in one factor (canonical V).
    Double,
    /// `sum_{i,j,k} alpha_{i(jk)}^2` — A nested in two factors (U, V).
    Triple,
}

impl EffectSumKind {
    /// Axis factors of the effect array in layout order (outer to inner),
    /// ending with A. Uses the model's letters.
    pub fn axes(self, model: &ModelSpec) -> Vec<FactorName> {
        let map = model.name_map();
        match self {
            EffectSumKind::Single => vec![FactorName::A],
            EffectSumKind::Double => vec![map.apply(FactorName::V), FactorName::A],
            EffectSumKind::Triple => vec![map.apply(FactorName::U), map.apply(FactorName::V), FactorName::A],
        }
    }
}

/// Checks the zero-mean identifiability constraints: every one-dimensional
/// margin of the effect array sums to zero (tolerance 1e-9, scaled by the
/// largest effect magnitude).
pub fn validate_effects(kind: EffectSumKind, dims: &[usize], effects: &[f64]) -> Result<()> {
    let expected: usize = dims.iter().product();
    if effects.len() != expected {
        return Err(Error::InvalidInput(format!(
            "effect array has {} entries but the design implies {expected} (dims {dims:?})",
            effects.len()
        )));
    }
    let naxes = match kind {
        EffectSumKind::Single => 1,
        EffectSumKind::Double => 2,
        EffectSumKind::Triple => 3,
    };
    if dims.len() != naxes {
        return Err(Error::InvalidInput(format!("expected {naxes} effect axes, got {}", dims.len())));
    }
    let scale = effects.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    let tol = 1e-9 * scale;
    let mut failures = Vec::new();
    // Sum along each axis with the remaining indices fixed.
    for axis in 0..dims.len() {
        let stride: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        let inner = stride;
        for o in 0..outer {
            for i in 0..inner {
                let mut sum = 0.0;
                for l in 0..dims[axis] {
                    sum += effects[o * dims[axis] * stride + l * stride + i];
                }
                if sum.abs() > tol {
                    failures.push(format!("axis {axis} margin (outer {o}, inner {i}) sums to {sum:.3e}"));
                }
            }
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::ConstraintViolation(failures.join("; ")))
    }
}

/// The effect configuration attaining the minimal sum of squares for a given
/// range `delta`: a zero-mean two-point vector on the smallest axis, spread
/// across the other axes by vectors `(1, -1/(m-1), ..., -1/(m-1))`.
///
/// Margins are zero in every direction, the range is exactly `delta`, and
/// the sum of squares equals the sharp lower bound for the shape.
pub fn extremal_effects(delta: f64, dims: &[usize]) -> Vec<f64> {
    assert!(!dims.is_empty() && dims.len() <= 3);
    assert!(dims.iter().all(|&d| d >= 2));
    // Sort axes by length; the shortest carries the (1, -1, 0, ...) pattern.
    let mut order: Vec<usize> = (0..dims.len()).collect();
    order.sort_by_key(|&i| dims[i]);
    let mut axis_vecs: Vec<Vec<f64>> = vec![Vec::new(); dims.len()];
    for (rank, &axis) in order.iter().enumerate() {
        let m = dims[axis];
        axis_vecs[axis] = if rank == 0 {
            let mut v = vec![0.0; m];
            v[0] = 1.0;
            v[1] = -1.0;
            v
        } else {
            let mut v = vec![-1.0 / (m as f64 - 1.0); m];
            v[0] = 1.0;
            v
        };
    }
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut val = 0.5 * delta;
        for axis in (0..dims.len()).rev() {
            let idx = rem % dims[axis];
            rem /= dims[axis];
            val *= axis_vecs[axis][idx];
        }
        out.push(val);
    }
    out
}

// ---------------------------------------------------------------------------
// Test plans
// ---------------------------------------------------------------------------

/// One term of the noncentrality denominator T: `component / product(denom)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TTerm {
    pub component: Component,
    /// Parameters dividing the component; empty means coefficient 1.
    pub denom: Vec<Param>,
}

impl TTerm {
    pub fn coefficient(&self, design: &DesignPoint) -> Result<f64> {
        let mut denom = 1.0;
        for &p in &self.denom {
            denom *= design.value(p)?;
        }
        Ok(1.0 / denom)
    }
}

/// Everything the exact F-test of A needs for one classification.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactPlan {
    pub df2: Expr,
    /// The parameter product R in `lambda = R * S / T`.
    pub r: Expr,
    pub t_terms: Vec<TTerm>,
    /// The most power-effective design parameter.
    pub pivot: Param,
    /// Stratum whose mean square is the F denominator (`Component::Error`
    /// when the denominator is the residual mean square).
    pub denominator: Component,
}

impl ExactPlan {
    /// Evaluates T from named components. Errors if an active component is
    /// missing; inactive components of the model are ignored.
    pub fn t_value(&self, model: &ModelSpec, design: &DesignPoint, components: &ComponentMap) -> Result<f64> {
        let mut t = 0.0;
        for term in &self.t_terms {
            let v = components.get(&term.component).copied().ok_or_else(|| {
                Error::MissingComponent(format!(
                    "component {} is required by the denominator T",
                    term.component.key(model)
                ))
            })?;
            t += term.coefficient(design)? * v;
        }
        Ok(t)
    }

    /// Components appearing in T (always includes the error term).
    pub fn active_components(&self) -> Vec<Component> {
        self.t_terms.iter().map(|t| t.component).collect()
    }

    /// Renders T like `sbA + (1/c) sgAB + (1/(cn)) se`.
    pub fn t_display(&self, model: &ModelSpec) -> String {
        let mut parts = Vec::new();
        for term in &self.t_terms {
            let key = term.component.key(model);
            if term.denom.is_empty() {
                parts.push(key);
            } else {
                let denom: String = term.denom.iter().map(|p| p.symbol()).collect();
                if denom.len() == 1 {
                    parts.push(format!("(1/{denom}) {key}"));
                } else {
                    parts.push(format!("(1/({denom})) {key}"));
                }
            }
        }
        parts.join(" + ")
    }
}

/// The catalog entry for a model, with parameters renamed to the model's own
/// letters.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPlan {
    pub model: ModelSpec,
    pub df1: Expr,
    pub effect_sum: EffectSumKind,
    exact: Option<ExactPlan>,
}

impl TestPlan {
    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// The exact-test data, or an error naming the operation for the two
    /// approximate classifications.
    pub fn exact(&self) -> Result<&ExactPlan> {
        self.exact.as_ref().ok_or_else(|| {
            Error::ApproximateModel(
                self.model.formula(),
                "only Monte Carlo estimation via the quasi-F test applies".into(),
            )
        })
    }

    /// Numerator and denominator degrees of freedom at a design.
    pub fn degrees_of_freedom(&self, design: &DesignPoint) -> Result<(f64, f64)> {
        let df1 = self.df1.eval(design)?;
        let df2 = self.exact()?.df2.eval(design)?;
        if !(df1 > 0.0) || !(df2 > 0.0) {
            return Err(Error::InvalidInput(format!("degrees of freedom must be positive, got ({df1}, {df2})")));
        }
        Ok((df1, df2))
    }

    /// Effect-array axis lengths for this model at an integer design.
    pub fn effect_dims(&self, design: &DesignPoint) -> Result<Vec<usize>> {
        self.effect_sum.axes(&self.model).iter().map(|&f| design.level_usize(f)).collect()
    }

    /// Exact noncentrality `lambda = R * S / T` from explicit effects and
    /// componentwise variances.
    pub fn lambda_exact(&self, design: &DesignPoint, effects: &[f64], variance: &VarianceSpec) -> Result<f64> {
        let exact = self.exact()?;
        let components = match variance {
            VarianceSpec::Components(map) => map,
            VarianceSpec::TotalOnly { .. } => {
                return Err(Error::InvalidInput(
                    "lambda_exact needs componentwise variances; use the worst-case bound for total-only input".into(),
                ));
            }
        };
        let dims = self.effect_dims(design)?;
        validate_effects(self.effect_sum, &dims, effects)?;
        let s: f64 = effects.iter().map(|e| e * e).sum();
        let t = exact.t_value(&self.model, design, components)?;
        if !(t > 0.0) {
            return Err(Error::Domain("denominator T evaluates to zero; at least one active component must be positive".into()));
        }
        Ok(exact.r.eval(design)? * s / t)
    }
}

/// Returns the catalog row for a parsed model.
pub fn lookup(model: &ModelSpec) -> TestPlan {
    let row = &catalog().rows[model.row()];
    let map = model.name_map();
    TestPlan {
        model: model.clone(),
        df1: row.df1.translate(map),
        effect_sum: row.sum_kind,
        exact: row.exact.as_ref().map(|e| ExactPlan {
            df2: e.df2.translate(map),
            r: e.r.translate(map),
            t_terms: e
                .t_terms
                .iter()
                .map(|t| TTerm {
                    component: t.component.translate(map),
                    denom: t.denom.iter().map(|&p| translate_param(p, map)).collect(),
                })
                .collect(),
            pivot: translate_param(e.pivot, map),
            denominator: e.denominator.translate(map),
        }),
    }
}

/// Parses a formula and returns its plan in one step.
pub fn plan_for(formula: &str) -> Result<TestPlan> {
    Ok(lookup(&ModelSpec::parse(formula)?))
}

// ---------------------------------------------------------------------------
// Equivalences for the approximate-test models
// ---------------------------------------------------------------------------

/// If an approximate-test model has the interaction component that blocks the
/// exact test equal to zero, it is equivalent (same dfs, same noncentrality)
/// to an exact-test classification. Returns that model plus the carried-over
/// component values.
///
/// Cases: `A x B~ x C~` with `sag = 0` maps to `(A x B~) > C~` (with
/// `sab = 0`, to `(A x C~) > B~`); `(A > B~) x C~` with `sbA = 0` maps to
/// `(A x C~) > B~`, and with `sag = 0` to `A > B~ > C~`.
pub fn equivalent_exact_model(model: &ModelSpec, components: &ComponentMap) -> Option<(ModelSpec, ComponentMap)> {
    if lookup(model).is_exact() {
        return None;
    }
    let map = model.name_map();
    let b = map.apply(FactorName::B);
    let c = map.apply(FactorName::C);
    let fam = |fs: &[FactorName]| Component::family(fs);
    let zero = |comp: Component| components.get(&comp).is_none_or(|&v| v == 0.0);

    let all_crossed = model.factor(b).map(|f| f.parents.is_empty()).unwrap_or(false)
        && model.factor(c).map(|f| f.parents.is_empty()).unwrap_or(false);

    let target_formula = if all_crossed {
        // A x B~ x C~
        if zero(fam(&[FactorName::A, c])) {
            format!("(A x {b}~) > {c}~")
        } else if zero(fam(&[FactorName::A, b])) {
            format!("(A x {c}~) > {b}~")
        } else {
            return None;
        }
    } else {
        // (A > B~) x C~
        if zero(fam(&[FactorName::A, b])) {
            format!("(A x {c}~) > {b}~")
        } else if zero(fam(&[FactorName::A, c])) {
            format!("A > {b}~ > {c}~")
        } else {
            return None;
        }
    };
    let target = ModelSpec::parse(&target_formula).ok()?;
    // Carry over the values of every family the target model also has.
    let target_families: Vec<Component> = model_components(&target);
    let mut mapped = ComponentMap::new();
    for comp in target_families {
        match comp {
            Component::Error => {
                mapped.insert(Component::Error, components.get(&Component::Error).copied().unwrap_or(0.0));
            }
            Component::Family(set) => {
                if let Some(&v) = components.get(&Component::Family(set)) {
                    mapped.insert(comp, v);
                }
            }
        }
    }
    Some((target, mapped))
}

// ---------------------------------------------------------------------------
// Catalog rows
// ---------------------------------------------------------------------------

pub(crate) struct Row {
    pub formula: &'static str,
    pub structure: Vec<Factor>,
    pub df1: Expr,
    pub sum_kind: EffectSumKind,
    pub exact: Option<RowExact>,
}

pub(crate) struct RowExact {
    pub df2: Expr,
    pub r: Expr,
    pub t_terms: Vec<TTerm>,
    pub pivot: Param,
    pub denominator: Component,
}

pub(crate) struct Catalog {
    pub rows: Vec<Row>,
    index: std::collections::HashMap<[u8; 5], usize>,
}

pub(crate) fn catalog() -> &'static Catalog {
    static CATALOG: OnceLock<Catalog> = OnceLock::new();
    CATALOG.get_or_init(build_catalog)
}

/// Number of catalog entries (exact, approximate).
pub fn entry_counts() -> (usize, usize) {
    let rows = &catalog().rows;
    let exact = rows.iter().filter(|r| r.exact.is_some()).count();
    (exact, rows.len() - exact)
}

/// Iterates all catalog entries as plans over their canonical letters.
pub fn all_entries() -> Vec<TestPlan> {
    catalog()
        .rows
        .iter()
        .map(|r| lookup(&ModelSpec::parse(r.formula).expect("catalog formulas parse")))
        .collect()
}

pub(crate) fn render_formula(row: usize, map: &NameMap) -> String {
    catalog().rows[row]
        .formula
        .chars()
        .map(|ch| match FactorName::from_letter(ch) {
            Some(f) => map.apply(f).letter(),
            None => ch,
        })
        .collect()
}

fn structure_key(factors: &[Factor]) -> [u8; 5] {
    let mut key = [0u8; 5];
    for f in factors {
        let idx = FactorName::ALL.iter().position(|&x| x == f.name).unwrap();
        let mut parents_mask = 0u8;
        for (i, &p) in FactorName::ALL.iter().enumerate() {
            if f.parents.contains(p) {
                parents_mask |= 1 << i;
            }
        }
        key[idx] = 0b1000_0000 | ((f.random as u8) << 6) | parents_mask;
    }
    key
}

/// Finds the catalog entry matching a parsed structure, trying the allowed
/// letter assignments (`B`/`C` interchangeable, `U`/`V` interchangeable) and
/// preferring the identity. Returns the row index and the canonical-to-user
/// letter map.
pub(crate) fn resolve_structure(raw: &RawStructure) -> Result<(usize, NameMap)> {
    let a = raw
        .factor(FactorName::A)
        .ok_or_else(|| Error::UnsupportedModel("the fixed factor A must be present".into()))?;
    let above: Vec<FactorName> = [FactorName::U, FactorName::V]
        .into_iter()
        .filter(|&f| a.parents.contains(f))
        .collect();
    let below: Vec<FactorName> = [FactorName::B, FactorName::C]
        .into_iter()
        .filter(|&f| raw.factor(f).is_some())
        .collect();

    let above_assignments: Vec<Vec<(FactorName, FactorName)>> = match above.len() {
        0 => vec![vec![]],
        1 => vec![vec![(above[0], FactorName::V)]],
        _ => vec![
            vec![(above[0], FactorName::U), (above[1], FactorName::V)],
            vec![(above[0], FactorName::V), (above[1], FactorName::U)],
        ],
    };
    let below_assignments: Vec<Vec<(FactorName, FactorName)>> = match below.len() {
        0 => vec![vec![]],
        1 => vec![vec![(below[0], FactorName::B)]],
        _ => vec![
            vec![(below[0], FactorName::B), (below[1], FactorName::C)],
            vec![(below[0], FactorName::C), (below[1], FactorName::B)],
        ],
    };

    for ab in &above_assignments {
        for be in &below_assignments {
            // user -> canonical for this assignment
            let mut user_to_canon = NameMap::identity();
            let mut canon_to_user = NameMap::identity();
            for &(user, canon) in ab.iter().chain(be.iter()) {
                user_to_canon.set(user, canon);
                canon_to_user.set(canon, user);
            }
            let canonical: Vec<Factor> = {
                let mut v: Vec<Factor> = raw
                    .factors
                    .iter()
                    .map(|f| Factor {
                        name: user_to_canon.apply(f.name),
                        random: f.random,
                        parents: user_to_canon.apply_set(f.parents),
                    })
                    .collect();
                v.sort_by_key(|f| f.name);
                v
            };
            if let Some(&row) = catalog().index.get(&structure_key(&canonical)) {
                return Ok((row, canon_to_user));
            }
        }
    }
    let desc: Vec<String> = raw
        .factors
        .iter()
        .map(|f| {
            let r = if f.random { "~" } else { "" };
            if f.parents.is_empty() {
                format!("{}{r}", f.name)
            } else {
                format!("{}{r} in {}", f.name, f.parents)
            }
        })
        .collect();
    Err(Error::UnsupportedModel(format!(
        "no catalogued classification matches this structure: {}",
        desc.join(", ")
    )))
}

fn build_catalog() -> Catalog {
    use EffectSumKind::{Double, Single, Triple};
    use FactorName::{A, B, C, U, V};

    let fx = |name: FactorName, parents: &[FactorName]| Factor { name, random: false, parents: FactorSet::from_slice(parents) };
    let rn = |name: FactorName, parents: &[FactorName]| Factor { name, random: true, parents: FactorSet::from_slice(parents) };
    let lv = |p: FactorName| ExprTerm { param: Param::Level(p), minus_one: false };
    let m1 = |p: FactorName| ExprTerm { param: Param::Level(p), minus_one: true };
    let nn = ExprTerm { param: Param::Reps, minus_one: false };
    let n1 = ExprTerm { param: Param::Reps, minus_one: true };
    let pl = |p: FactorName| Param::Level(p);
    let err = Component::Error;
    let fam = |fs: &[FactorName]| Component::family(fs);
    let term = |component: Component, denom: &[Param]| TTerm { component, denom: denom.to_vec() };

    let exact = |df2: Vec<ExprTerm>, r: Vec<ExprTerm>, t_terms: Vec<TTerm>, pivot: Param, denominator: Component| {
        Some(RowExact { df2: Expr(df2), r: Expr(r), t_terms, pivot, denominator })
    };
    let row = |formula: &'static str,
               structure: Vec<Factor>,
               df1: Vec<ExprTerm>,
               sum_kind: EffectSumKind,
               exact: Option<RowExact>| Row { formula, structure, df1: Expr(df1), sum_kind, exact };

    // T denominators shared across blocks.
    let t_err_only = || vec![term(err, &[])];
    let t_ab_n = || vec![term(fam(&[A, B]), &[]), term(err, &[Param::Reps])];
    let t_abc_n = || vec![term(fam(&[A, B, C]), &[]), term(err, &[Param::Reps])];
    let t_ac_bn = || vec![term(fam(&[A, C]), &[]), term(err, &[pl(B), Param::Reps])];
    let t_ab_cn = || vec![term(fam(&[A, B]), &[]), term(err, &[pl(C), Param::Reps])];
    let t_ab_abc_cn = || {
        vec![
            term(fam(&[A, B]), &[]),
            term(fam(&[A, B, C]), &[pl(C)]),
            term(err, &[pl(C), Param::Reps]),
        ]
    };
    let t_vab_n = || vec![term(fam(&[V, A, B]), &[]), term(err, &[Param::Reps])];

    let rows = vec![
        // --- one-way ---------------------------------------------------
        row("A", vec![fx(A, &[])], vec![m1(A)], Single,
            exact(vec![lv(A), n1], vec![nn], t_err_only(), Param::Reps, err)),
        // --- two-way, B beside A ----------------------------------------
        row("A x B", vec![fx(A, &[]), fx(B, &[])], vec![m1(A)], Single,
            exact(vec![lv(A), lv(B), n1], vec![lv(B), nn], t_err_only(), Param::Reps, err)),
        row("A > B", vec![fx(A, &[]), fx(B, &[A])], vec![m1(A)], Single,
            exact(vec![lv(A), lv(B), n1], vec![lv(B), nn], t_err_only(), Param::Reps, err)),
        row("A x B~", vec![fx(A, &[]), rn(B, &[])], vec![m1(A)], Single,
            exact(vec![m1(A), m1(B)], vec![lv(B)], t_ab_n(), pl(B), fam(&[A, B]))),
        row("A > B~", vec![fx(A, &[]), rn(B, &[A])], vec![m1(A)], Single,
            exact(vec![lv(A), m1(B)], vec![lv(B)], t_ab_n(), pl(B), fam(&[A, B]))),
        // --- two-way, A nested in V -------------------------------------
        row("V > A", vec![fx(V, &[]), fx(A, &[V])], vec![lv(V), m1(A)], Double,
            exact(vec![lv(V), lv(A), n1], vec![nn], t_err_only(), Param::Reps, err)),
        row("V~ > A", vec![rn(V, &[]), fx(A, &[V])], vec![lv(V), m1(A)], Double,
            exact(vec![lv(V), lv(A), n1], vec![nn], t_err_only(), Param::Reps, err)),
        // --- three-way, B and C fixed ------------------------------------
        row("A x B x C", vec![fx(A, &[]), fx(B, &[]), fx(C, &[])], vec![m1(A)], Single,
            exact(vec![lv(A), lv(B), lv(C), n1], vec![lv(B), lv(C), nn], t_err_only(), Param::Reps, err)),
        row("A > B > C", vec![fx(A, &[]), fx(B, &[A]), fx(C, &[A, B])], vec![m1(A)], Single,
            exact(vec![lv(A), lv(B), lv(C), n1], vec![lv(B), lv(C), nn], t_err_only(), Param::Reps, err)),
        row("(A x B) > C", vec![fx(A, &[]), fx(B, &[]), fx(C, &[A, B])], vec![m1(A)], Single,
            exact(vec![lv(A), lv(B), lv(C), n1], vec![lv(B), lv(C), nn], t_err_only(), Param::Reps, err)),
        row("(A > B) x C", vec![fx(A, &[]), fx(B, &[A]), fx(C, &[])], vec![m1(A)], Single,
            exact(vec![lv(A), lv(B), lv(C), n1], vec![lv(B), lv(C), nn], t_err_only(), Param::Reps, err)),
        row("A x (B > C)", vec![fx(A, &[]), fx(B, &[]), fx(C, &[B])], vec![m1(A)], Single,
            exact(vec![lv(A), lv(B), lv(C), n1], vec![lv(B), lv(C), nn], t_err_only(), Param::Reps, err)),
        // --- three-way, C random ----------------------------------------
        row("A > B > C~", vec![fx(A, &[]), fx(B, &[A]), rn(C, &[A, B])], vec![m1(A)], Single,
            exact(vec![lv(A), lv(B), m1(C)], vec![lv(B), lv(C)], t_abc_n(), pl(C), fam(&[A, B, C]))),
        row("(A x B) > C~", vec![fx(A, &[]), fx(B, &[]), rn(C, &[A, B])], vec![m1(A)], Single,
            exact(vec![lv(A), lv(B), m1(C)], vec![lv(B), lv(C)], t_abc_n(), pl(C), fam(&[A, B, C]))),
        row("A x (B > C~)", vec![fx(A, &[]), fx(B, &[]), rn(C, &[B])], vec![m1(A)], Single,
            exact(vec![m1(A), lv(B), m1(C)], vec![lv(B), lv(C)], t_abc_n(), pl(C), fam(&[A, B, C]))),
        row("(A > B) x C~", vec![fx(A, &[]), fx(B, &[A]), rn(C, &[])], vec![m1(A)], Single,
            exact(vec![m1(A), m1(C)], vec![lv(C)], t_ac_bn(), pl(C), fam(&[A, C]))),
        // --- three-way, B random ----------------------------------------
        row("A x B~ x C", vec![fx(A, &[]), rn(B, &[]), fx(C, &[])], vec![m1(A)], Single,
            exact(vec![m1(A), m1(B)], vec![lv(B)], t_ab_cn(), pl(B), fam(&[A, B]))),
        row("(A x B~) > C", vec![fx(A, &[]), rn(B, &[]), fx(C, &[A, B])], vec![m1(A)], Single,
            exact(vec![m1(A), m1(B)], vec![lv(B)], t_ab_cn(), pl(B), fam(&[A, B]))),
        row("A x (B~ > C)", vec![fx(A, &[]), rn(B, &[]), fx(C, &[B])], vec![m1(A)], Single,
            exact(vec![m1(A), m1(B)], vec![lv(B)], t_ab_cn(), pl(B), fam(&[A, B]))),
        row("A > B~ > C", vec![fx(A, &[]), rn(B, &[A]), fx(C, &[A, B])], vec![m1(A)], Single,
            exact(vec![lv(A), m1(B)], vec![lv(B)], t_ab_cn(), pl(B), fam(&[A, B]))),
        row("(A > B~) x C", vec![fx(A, &[]), rn(B, &[A]), fx(C, &[])], vec![m1(A)], Single,
            exact(vec![lv(A), m1(B)], vec![lv(B)], t_ab_cn(), pl(B), fam(&[A, B]))),
        // --- three-way, B and C random ----------------------------------
        row("A > B~ > C~", vec![fx(A, &[]), rn(B, &[A]), rn(C, &[A, B])], vec![m1(A)], Single,
            exact(vec![lv(A), m1(B)], vec![lv(B)], t_ab_abc_cn(), pl(B), fam(&[A, B]))),
        row("(A x B~) > C~", vec![fx(A, &[]), rn(B, &[]), rn(C, &[A, B])], vec![m1(A)], Single,
            exact(vec![m1(A), m1(B)], vec![lv(B)], t_ab_abc_cn(), pl(B), fam(&[A, B]))),
        row("A x (B~ > C~)", vec![fx(A, &[]), rn(B, &[]), rn(C, &[B])], vec![m1(A)], Single,
            exact(vec![m1(A), m1(B)], vec![lv(B)], t_ab_abc_cn(), pl(B), fam(&[A, B]))),
        // --- three-way, A nested in V, B fixed ---------------------------
        row("V > A > B", vec![fx(V, &[]), fx(A, &[V]), fx(B, &[V, A])], vec![lv(V), m1(A)], Double,
            exact(vec![lv(V), lv(A), lv(B), n1], vec![lv(B), nn], t_err_only(), Param::Reps, err)),
        row("(V > A) x B", vec![fx(V, &[]), fx(A, &[V]), fx(B, &[])], vec![lv(V), m1(A)], Double,
            exact(vec![lv(V), lv(A), lv(B), n1], vec![lv(B), nn], t_err_only(), Param::Reps, err)),
        row("V~ > A > B", vec![rn(V, &[]), fx(A, &[V]), fx(B, &[V, A])], vec![lv(V), m1(A)], Double,
            exact(vec![lv(V), lv(A), lv(B), n1], vec![lv(B), nn], t_err_only(), Param::Reps, err)),
        row("(V~ > A) x B", vec![rn(V, &[]), fx(A, &[V]), fx(B, &[])], vec![lv(V), m1(A)], Double,
            exact(vec![lv(V), lv(A), lv(B), n1], vec![lv(B), nn], t_err_only(), Param::Reps, err)),
        // --- three-way, A nested in V, B random --------------------------
        row("V > A > B~", vec![fx(V, &[]), fx(A, &[V]), rn(B, &[V, A])], vec![lv(V), m1(A)], Double,
            exact(vec![lv(V), lv(A), m1(B)], vec![lv(B)], t_vab_n(), pl(B), fam(&[V, A, B]))),
        row("V~ > A > B~", vec![rn(V, &[]), fx(A, &[V]), rn(B, &[V, A])], vec![lv(V), m1(A)], Double,
            exact(vec![lv(V), lv(A), m1(B)], vec![lv(B)], t_vab_n(), pl(B), fam(&[V, A, B]))),
        row("(V > A) x B~", vec![fx(V, &[]), fx(A, &[V]), rn(B, &[])], vec![lv(V), m1(A)], Double,
            exact(vec![lv(V), m1(A), m1(B)], vec![lv(B)], t_vab_n(), pl(B), fam(&[V, A, B]))),
        row("(V~ > A) x B~", vec![rn(V, &[]), fx(A, &[V]), rn(B, &[])], vec![lv(V), m1(A)], Double,
            exact(vec![lv(V), m1(A), m1(B)], vec![lv(B)], t_vab_n(), pl(B), fam(&[V, A, B]))),
        // --- three-way, A nested in U and V -------------------------------
        row("U > V > A", vec![fx(U, &[]), fx(V, &[U]), fx(A, &[U, V])], vec![lv(U), lv(V), m1(A)], Triple,
            exact(vec![lv(U), lv(V), lv(A), n1], vec![nn], t_err_only(), Param::Reps, err)),
        row("(U x V) > A", vec![fx(U, &[]), fx(V, &[]), fx(A, &[U, V])], vec![lv(U), lv(V), m1(A)], Triple,
            exact(vec![lv(U), lv(V), lv(A), n1], vec![nn], t_err_only(), Param::Reps, err)),
        row("U~ > V > A", vec![rn(U, &[]), fx(V, &[U]), fx(A, &[U, V])], vec![lv(U), lv(V), m1(A)], Triple,
            exact(vec![lv(U), lv(V), lv(A), n1], vec![nn], t_err_only(), Param::Reps, err)),
        row("U > V~ > A", vec![fx(U, &[]), rn(V, &[U]), fx(A, &[U, V])], vec![lv(U), lv(V), m1(A)], Triple,
            exact(vec![lv(U), lv(V), lv(A), n1], vec![nn], t_err_only(), Param::Reps, err)),
        row("(U x V~) > A", vec![fx(U, &[]), rn(V, &[]), fx(A, &[U, V])], vec![lv(U), lv(V), m1(A)], Triple,
            exact(vec![lv(U), lv(V), lv(A), n1], vec![nn], t_err_only(), Param::Reps, err)),
        row("U~ > V~ > A", vec![rn(U, &[]), rn(V, &[U]), fx(A, &[U, V])], vec![lv(U), lv(V), m1(A)], Triple,
            exact(vec![lv(U), lv(V), lv(A), n1], vec![nn], t_err_only(), Param::Reps, err)),
        row("(U~ x V~) > A", vec![rn(U, &[]), rn(V, &[]), fx(A, &[U, V])], vec![lv(U), lv(V), m1(A)], Triple,
            exact(vec![lv(U), lv(V), lv(A), n1], vec![nn], t_err_only(), Param::Reps, err)),
        // --- approximate F-test only --------------------------------------
        row("A x B~ x C~", vec![fx(A, &[]), rn(B, &[]), rn(C, &[])], vec![m1(A)], Single, None),
        row("(A > B~) x C~", vec![fx(A, &[]), rn(B, &[A]), rn(C, &[])], vec![m1(A)], Single, None),
    ];

    let mut index = std::collections::HashMap::new();
    for (i, r) in rows.iter().enumerate() {
        let mut sorted = r.structure.clone();
        sorted.sort_by_key(|f| f.name);
        let prev = index.insert(structure_key(&sorted), i);
        assert!(prev.is_none(), "duplicate catalog structure for row {i} ({})", r.formula);
    }
    Catalog { rows, index }
}
