//! Balanced-design layout: effect strata, sums of squares, and expected mean
//! squares.
//!
//! The effect families (strata) of a classification are exactly the
//! nonempty, ancestrally closed subsets of its factors: a subset is a family
//! when it contains every nesting parent of its members. The live factors of
//! a family are its members that are not parents of other members; degrees
//! of freedom are `prod(live levels - 1) * prod(parent levels)`.

use std::collections::BTreeMap;

use crate::catalog::{closed_subsets, family_is_random, Component, DesignPoint};

use crate::error::{Error, Result};
use crate::model::{FactorName, FactorSet, ModelSpec};

/// One effect stratum of the decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stratum {
    /// Live factors plus nesting parents.
    pub set: FactorSet,
    pub live: FactorSet,
    pub random: bool,
    pub df: f64,
}

/// Index geometry of a balanced dataset: factors in layout order, replicates
/// innermost, observations in row-major order.
#[derive(Debug, Clone)]
pub struct Layout {
    factors: Vec<(FactorName, usize)>,
    n: usize,
    strata: Vec<Stratum>,
    n_obs: usize,
}

impl Layout {
    pub fn new(model: &ModelSpec, design: &DesignPoint) -> Result<Layout> {
        let mut factors = Vec::new();
        for f in model.factors() {
            factors.push((f.name, design.level_usize(f.name)?));
        }
        let n_f = design.n();
        if n_f.fract() != 0.0 || n_f < 2.0 {
            return Err(Error::InvalidInput(format!("replicate count n = {n_f} must be an integer >= 2 here")));
        }
        let n = n_f as usize;

        let mut strata = Vec::new();
        for set in closed_subsets(model.factors()) {
            let parents = set.iter().fold(FactorSet::EMPTY, |acc, f| {
                acc.union(model.factor(f).expect("member").parents)
            });
            let live = FactorSet::from_slice(&set.iter().filter(|f| !parents.contains(*f)).collect::<Vec<_>>());
            let mut df = 1.0;
            for (f, levels) in &factors {
                if live.contains(*f) {
                    df *= *levels as f64 - 1.0;
                } else if set.contains(*f) {
                    df *= *levels as f64;
                }
            }
            strata.push(Stratum { set, live, random: family_is_random(model.factors(), set), df });
        }
        let cells: usize = factors.iter().map(|&(_, l)| l).product();
        Ok(Layout { factors, n, strata, n_obs: cells * n })
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn factors(&self) -> &[(FactorName, usize)] {
        &self.factors
    }

    pub fn level_of(&self, f: FactorName) -> usize {
        self.factors.iter().find(|(name, _)| *name == f).map(|&(_, l)| l).expect("factor present")
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn stratum(&self, set: FactorSet) -> Option<&Stratum> {
        self.strata.iter().find(|s| s.set == set)
    }

    /// The stratum carrying the fixed A-effects (live factor A).
    pub fn a_stratum_set(&self) -> FactorSet {
        self.strata
            .iter()
            .find(|s| s.live == FactorSet::singleton(FactorName::A))
            .expect("A stratum always exists")
            .set
    }

    /// Number of distinct index combinations of a factor subset.
    pub fn cells_of(&self, set: FactorSet) -> usize {
        self.factors.iter().filter(|(f, _)| set.contains(*f)).map(|&(_, l)| l).product()
    }

    /// Per-observation strides for projecting an observation index onto the
    /// cells of a factor subset. The replicate axis always projects out.
    pub fn projector(&self, set: FactorSet) -> Projector {
        // Full-index layout: factors in order, replicate last.
        let mut dims: Vec<usize> = self.factors.iter().map(|&(_, l)| l).collect();
        dims.push(self.n);
        let mut full_strides = vec![0usize; dims.len()];
        let mut s = 1;
        for i in (0..dims.len()).rev() {
            full_strides[i] = s;
            s *= dims[i];
        }
        let mut axes = Vec::new();
        let mut out_stride = 1;
        for (i, &(f, l)) in self.factors.iter().enumerate().rev() {
            if set.contains(f) {
                axes.push(ProjAxis { full_stride: full_strides[i], levels: l, out_stride });
                out_stride *= l;
            }
        }
        Projector { axes }
    }
}

/// Maps a flat observation (or cell) index to the flat index of a subset's
/// cell.
#[derive(Debug, Clone)]
pub struct Projector {
    axes: Vec<ProjAxis>,
}

#[derive(Debug, Clone, Copy)]
struct ProjAxis {
    full_stride: usize,
    levels: usize,
    out_stride: usize,
}

impl Projector {
    #[inline]
    pub fn project(&self, full_index: usize) -> usize {
        let mut out = 0;
        for a in &self.axes {
            out += (full_index / a.full_stride % a.levels) * a.out_stride;
        }
        out
    }
}

/// Sums of squares, degrees of freedom, and mean squares per stratum.
#[derive(Debug, Clone)]
pub struct MeanSquares {
    pub strata: Vec<StratumMs>,
    pub error_ss: f64,
    pub error_df: f64,
    pub error_ms: f64,
    pub total_ss: f64,
    pub n_obs: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct StratumMs {
    pub set: FactorSet,
    pub live: FactorSet,
    pub random: bool,
    pub ss: f64,
    pub df: f64,
    pub ms: f64,
}

impl MeanSquares {
    /// Mean square of a stratum identified by its factor set, or the error
    /// mean square for `Component::Error`.
    pub fn ms(&self, component: Component) -> Result<f64> {
        match component {
            Component::Error => Ok(self.error_ms),
            Component::Family(set) => self
                .strata
                .iter()
                .find(|s| s.set == set)
                .map(|s| s.ms)
                .ok_or_else(|| Error::InvalidInput(format!("no stratum with factor set {set}"))),
        }
    }

    pub fn df(&self, component: Component) -> Result<f64> {
        match component {
            Component::Error => Ok(self.error_df),
            Component::Family(set) => self
                .strata
                .iter()
                .find(|s| s.set == set)
                .map(|s| s.df)
                .ok_or_else(|| Error::InvalidInput(format!("no stratum with factor set {set}"))),
        }
    }
}

/// Classic balanced-design decomposition via marginal cell means.
///
/// For each stratum, `SS = sum over subsets G of the live factors of
/// (-1)^(|live| - |G|) R(parents + G)`, where `R(F)` is the squared cell
/// totals of the margin over `F` divided by the observations per cell.
pub fn anova_decompose(model: &ModelSpec, design: &DesignPoint, data: &[f64]) -> Result<MeanSquares> {
    let layout = Layout::new(model, design)?;
    decompose_with_layout(&layout, data)
}

pub fn decompose_with_layout(layout: &Layout, data: &[f64]) -> Result<MeanSquares> {
    if data.len() != layout.n_obs() {
        return Err(Error::ShapeMismatch { expected: layout.n_obs(), got: data.len() });
    }
    let n_obs = layout.n_obs() as f64;

    // Marginal square-sums R(F) for every subset the strata need.
    let mut needed: Vec<FactorSet> = vec![FactorSet::EMPTY];
    for st in layout.strata() {
        let live: Vec<FactorName> = st.live.iter().collect();
        let parents = FactorSet::from_slice(&st.set.iter().filter(|f| !st.live.contains(*f)).collect::<Vec<_>>());
        for bits in 0u32..(1 << live.len()) {
            let mut sub = parents;
            for (i, &f) in live.iter().enumerate() {
                if bits & (1 << i) != 0 {
                    sub = sub.with(f);
                }
            }
            needed.push(sub);
        }
    }
    needed.sort();
    needed.dedup();

    let mut r_values: BTreeMap<FactorSet, f64> = BTreeMap::new();
    let mut sums_buf: Vec<f64> = Vec::new();
    for &set in &needed {
        let cells = layout.cells_of(set);
        sums_buf.clear();
        sums_buf.resize(cells, 0.0);
        let proj = layout.projector(set);
        for (i, &y) in data.iter().enumerate() {
            sums_buf[proj.project(i)] += y;
        }
        let per_cell = n_obs / cells as f64;
        let r: f64 = sums_buf.iter().map(|s| s * s).sum::<f64>() / per_cell;
        r_values.insert(set, r);
    }

    let total_sq: f64 = data.iter().map(|y| y * y).sum();
    let grand = r_values[&FactorSet::EMPTY];
    let total_ss = total_sq - grand;

    let mut strata_ms = Vec::with_capacity(layout.strata().len());
    let scale = total_sq.max(1.0);
    for st in layout.strata() {
        let live: Vec<FactorName> = st.live.iter().collect();
        let parents = FactorSet::from_slice(&st.set.iter().filter(|f| !st.live.contains(*f)).collect::<Vec<_>>());
        let mut ss = 0.0;
        for bits in 0u32..(1 << live.len()) {
            let mut sub = parents;
            let mut picked = 0;
            for (i, &f) in live.iter().enumerate() {
                if bits & (1 << i) != 0 {
                    sub = sub.with(f);
                    picked += 1;
                }
            }
            let sign = if (live.len() - picked).is_multiple_of(2) { 1.0 } else { -1.0 };
            ss += sign * r_values[&sub];
        }
        // Cancellation can leave a tiny negative residue.
        debug_assert!(ss > -1e-9 * scale, "negative SS {ss} for stratum {}", st.set);
        let ss = ss.max(0.0);
        strata_ms.push(StratumMs { set: st.set, live: st.live, random: st.random, ss, df: st.df, ms: ss / st.df });
    }

    let full_set = layout.factors().iter().fold(FactorSet::EMPTY, |s, &(f, _)| s.with(f));
    let error_ss = (total_sq - r_values[&full_set]).max(0.0);
    let cells = layout.cells_of(full_set) as f64;
    let error_df = cells * (layout.n() as f64 - 1.0);

    Ok(MeanSquares {
        strata: strata_ms,
        error_ss,
        error_df,
        error_ms: error_ss / error_df,
        total_ss,
        n_obs: layout.n_obs(),
    })
}

/// Centers `values` (a row-major array of shape `dims`) to zero sum along
/// each listed axis. The per-axis centering operators commute, so one pass
/// per axis projects exactly.
pub fn center_axes(dims: &[usize], axes: &[usize], values: &mut [f64]) {
    for &axis in axes {
        let stride: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        for o in 0..outer {
            for i in 0..stride {
                let mut mean = 0.0;
                for l in 0..dims[axis] {
                    mean += values[o * dims[axis] * stride + l * stride + i];
                }
                mean /= dims[axis] as f64;
                for l in 0..dims[axis] {
                    values[o * dims[axis] * stride + l * stride + i] -= mean;
                }
            }
        }
    }
}

/// Expected mean squares at given effects and variance components, under the
/// restricted mixed-model parameterization that the catalog's noncentrality
/// formulas encode (random-effect families sum to zero over the levels of
/// their live fixed factors).
///
/// `sigma_phi^2` enters `E(MS_theta)` when phi's factor set contains theta's
/// and every live factor of phi outside theta's set is random; the
/// coefficient is `N / prod(levels of phi)`. The A stratum additionally
/// carries `(N / prod(levels of theta)) * S / df_theta`. Missing component
/// values count as zero.
pub fn expected_mean_squares(
    model: &ModelSpec,
    design: &DesignPoint,
    effects: &[f64],
    components: &BTreeMap<Component, f64>,
) -> Result<Vec<(FactorSet, f64)>> {
    let layout = Layout::new(model, design)?;
    let n_obs = layout.n_obs() as f64;
    let error = components.get(&Component::Error).copied().unwrap_or(0.0);
    let s: f64 = effects.iter().map(|e| e * e).sum();
    let a_set = layout.a_stratum_set();

    let mut out = Vec::new();
    for st in layout.strata() {
        let mut ems = error;
        for other in layout.strata() {
            let extras_random = other
                .live
                .iter()
                .all(|f| st.set.contains(f) || model.factor(f).map(|x| x.random).unwrap_or(false));
            if other.random && st.set.is_subset_of(other.set) && extras_random {
                let var = components.get(&Component::Family(other.set)).copied().unwrap_or(0.0);
                ems += n_obs / layout.cells_of(other.set) as f64 * var;
            }
        }
        if st.set == a_set {
            ems += n_obs / layout.cells_of(st.set) as f64 * s / st.df;
        }
        out.push((st.set, ems));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::plan_for;
    use crate::model::FactorName::{A, B, C};

    fn layout_of(formula: &str, levels: &[(FactorName, u64)], n: u64) -> Layout {
        let model = ModelSpec::parse(formula).unwrap();
        let design = DesignPoint::integer(levels, n).unwrap();
        Layout::new(&model, &design).unwrap()
    }

    #[test]
    fn strata_sets_for_mixed_model() {
        // (A > B~) x C~ has strata A, C, B(A), AC, CB(A).
        let layout = layout_of("(A > B~) x C~", &[(A, 3), (B, 2), (C, 4)], 2);
        let sets: Vec<String> = layout.strata().iter().map(|s| s.set.to_string()).collect();
        assert_eq!(sets, vec!["A", "AB", "C", "AC", "ABC"]);
        let dfs: Vec<f64> = layout.strata().iter().map(|s| s.df).collect();
        assert_eq!(dfs, vec![2.0, 3.0, 3.0, 6.0, 9.0]);
        // Stratum dfs plus error df sum to N - 1.
        let total: f64 = dfs.iter().sum::<f64>() + (3 * 2 * 4) as f64 * (2.0 - 1.0);
        assert_eq!(total, (layout.n_obs() - 1) as f64);
    }

    #[test]
    fn stratum_dfs_match_plan_dfs() {
        for formula in ["A", "A x B~", "A > B~ > C~", "(A > B) x C~", "A x (B > C~)", "V~ > A", "(V~ > A) x B~", "(U x V~) > A"] {
            let plan = plan_for(formula).unwrap();
            let mut levels = Vec::new();
            for f in plan.model.factors() {
                levels.push((f.name, 2 + (f.name as u64)));
            }
            let design = DesignPoint::integer(&levels, 3).unwrap();
            let layout = Layout::new(&plan.model, &design).unwrap();
            let (df1, df2) = plan.degrees_of_freedom(&design).unwrap();
            let a_stratum = layout.stratum(layout.a_stratum_set()).unwrap();
            assert_eq!(a_stratum.df, df1, "{formula}");
            let denom = plan.exact().unwrap().denominator;
            let denom_df = match denom {
                Component::Error => layout.cells_of(layout.factors().iter().fold(FactorSet::EMPTY, |s, &(f, _)| s.with(f))) as f64 * (design.n() - 1.0),
                Component::Family(set) => layout.stratum(set).unwrap().df,
            };
            assert_eq!(denom_df, df2, "{formula}");
            let df_sum: f64 = layout.strata().iter().map(|s| s.df).sum();
            let full = layout.factors().iter().fold(FactorSet::EMPTY, |s, &(f, _)| s.with(f));
            let err_df = layout.cells_of(full) as f64 * (design.n() - 1.0);
            assert_eq!(df_sum + err_df, (layout.n_obs() - 1) as f64, "{formula}");
        }
    }

    #[test]
    fn one_way_hand_computation() {
        // A with a = 2, n = 2, data (0, 0, 1, 1): SS_A = 1, SS_error = 0.
        let model = ModelSpec::parse("A").unwrap();
        let design = DesignPoint::integer(&[(A, 2)], 2).unwrap();
        let ms = anova_decompose(&model, &design, &[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!((ms.strata[0].ss - 1.0).abs() < 1e-12);
        assert!(ms.error_ss.abs() < 1e-12);
        assert!((ms.total_ss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_data_has_zero_ss() {
        let model = ModelSpec::parse("A > B~ > C~").unwrap();
        let design = DesignPoint::integer(&[(A, 2), (B, 2), (C, 2)], 2).unwrap();
        let data = vec![3.25; 16];
        let ms = anova_decompose(&model, &design, &data).unwrap();
        for s in &ms.strata {
            assert!(s.ss.abs() < 1e-10, "stratum {} has SS {}", s.set, s.ss);
        }
        assert!(ms.error_ss.abs() < 1e-10);
    }

    #[test]
    fn strata_ss_sum_to_total() {
        let model = ModelSpec::parse("(A > B~) x C~").unwrap();
        let design = DesignPoint::integer(&[(A, 3), (B, 2), (C, 4)], 2).unwrap();
        let layout = Layout::new(&model, &design).unwrap();
        // Deterministic pseudo-random data.
        let data: Vec<f64> = (0..layout.n_obs())
            .map(|i| (i as f64 * 1.37).sin() * 10.0 + (i as f64 * 0.71).cos() * 3.0)
            .collect();
        let ms = decompose_with_layout(&layout, &data).unwrap();
        let sum: f64 = ms.strata.iter().map(|s| s.ss).sum::<f64>() + ms.error_ss;
        assert!((sum - ms.total_ss).abs() < 1e-9 * ms.total_ss.abs().max(1.0), "{sum} vs {}", ms.total_ss);
    }

    #[test]
    fn shape_mismatch_detected() {
        let model = ModelSpec::parse("A").unwrap();
        let design = DesignPoint::integer(&[(A, 2)], 2).unwrap();
        assert!(matches!(
            anova_decompose(&model, &design, &[1.0, 2.0]),
            Err(Error::ShapeMismatch { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn ems_reproduces_nested_chain_table() {
        // For A > B~ > C~: E(MS_A) = sigma^2 + n sgAB + c n sbA + (b c n / (a-1)) S
        // and E(MS_{B(A)}) = sigma^2 + n sgAB + c n sbA.
        let model = ModelSpec::parse("A > B~ > C~").unwrap();
        let design = DesignPoint::integer(&[(A, 3), (B, 4), (C, 2)], 5).unwrap();
        let effects = crate::catalog::extremal_effects(2.0, &[3]);
        let s: f64 = effects.iter().map(|e| e * e).sum();
        let mut comps = BTreeMap::new();
        comps.insert(Component::family(&[A, B]), 0.7);
        comps.insert(Component::family(&[A, B, C]), 0.3);
        comps.insert(Component::Error, 1.1);
        let ems = expected_mean_squares(&model, &design, &effects, &comps).unwrap();
        let (b, c, n) = (4.0, 2.0, 5.0);
        let find = |set: FactorSet| ems.iter().find(|(s, _)| *s == set).unwrap().1;
        let e_a = find(FactorSet::from_slice(&[A]));
        let e_ba = find(FactorSet::from_slice(&[A, B]));
        let e_cab = find(FactorSet::from_slice(&[A, B, C]));
        assert!((e_a - (1.1 + n * 0.3 + c * n * 0.7 + b * c * n * s / 2.0)).abs() < 1e-12);
        assert!((e_ba - (1.1 + n * 0.3 + c * n * 0.7)).abs() < 1e-12);
        assert!((e_cab - (1.1 + n * 0.3)).abs() < 1e-12);
    }

    #[test]
    fn lambda_matches_ems_ratio_identity() {
        // df1 * (E(MS_A) / E(MS_denominator) - 1) equals lambda = R S / T,
        // identically in the parameters.
        let plan = plan_for("A > B~ > C~").unwrap();
        for (a, b, c, n) in [(3u64, 2u64, 2u64, 2u64), (6, 5, 3, 4), (2, 7, 2, 9), (4, 3, 6, 2)] {
            let design = DesignPoint::integer(&[(A, a), (B, b), (C, c)], n).unwrap();
            let effects = crate::catalog::extremal_effects(1.4, &[a as usize]);
            let mut comps = BTreeMap::new();
            comps.insert(Component::family(&[A, B]), 0.21);
            comps.insert(Component::family(&[A, B, C]), 0.55);
            comps.insert(Component::Error, 0.92);
            let variance = crate::catalog::VarianceSpec::Components(comps.clone());
            let lambda = plan.lambda_exact(&design, &effects, &variance).unwrap();
            let ems = expected_mean_squares(&plan.model, &design, &effects, &comps).unwrap();
            let e_num = ems.iter().find(|(s, _)| *s == FactorSet::from_slice(&[A])).unwrap().1;
            let e_den = ems.iter().find(|(s, _)| *s == FactorSet::from_slice(&[A, B])).unwrap().1;
            let df1 = plan.df1.eval(&design).unwrap();
            let reconstructed = df1 * (e_num / e_den - 1.0);
            assert!(
                (lambda - reconstructed).abs() < 1e-10 * lambda.max(1.0),
                "({a},{b},{c},{n}): {lambda} vs {reconstructed}"
            );
        }
    }
}
