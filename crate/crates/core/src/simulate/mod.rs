//! Monte Carlo engine: balanced data generation, empirical power, the
//! Satterthwaite quasi-F test for the two approximate-test classifications,
//! and power surfaces over (b, c) grids.
//!
//! Replications are reproducible and order-independent: replication `i`
//! draws from an independent counter-based stream derived from
//! `(seed, stream index i)`, so serial and parallel runs produce identical
//! rejection counts. The worker thread count comes from the
//! `ANOVA_POWER_THREADS` environment variable (default: available
//! parallelism, capped at 8).

mod layout;

pub use layout::{
    anova_decompose, center_axes, decompose_with_layout, expected_mean_squares, Layout, MeanSquares, Projector,
    Stratum, StratumMs,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bounds::{guaranteed_power, Provenance, WorstCaseInput};
use crate::catalog::{
    equivalent_exact_model, extremal_effects, lookup, validate_effects, Component, ComponentMap, DesignPoint,
    TestPlan, VarianceSpec,
};
use crate::dist::{central_f_quantile, sample};
use crate::error::{Error, Result};
use crate::model::{FactorName, FactorSet, ModelSpec};

/// RNG for one replication stream. ChaCha8 keyed by the seed with the
/// replication index as the cipher stream, so streams never overlap.
pub fn replication_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A fully specified simulation.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub model: ModelSpec,
    pub design: DesignPoint,
    /// Fixed A-effects, laid out as the row-major effect array of the model
    /// (axes: enclosing factors outer, A innermost).
    pub effects: Vec<f64>,
    /// Variance per random-effect family; families not listed count as zero.
    pub variance: ComponentMap,
    pub alpha: f64,
    pub replications: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(
        model: ModelSpec,
        design: DesignPoint,
        effects: Vec<f64>,
        variance: ComponentMap,
        alpha: f64,
        replications: u64,
        seed: u64,
    ) -> Result<SimConfig> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha must be in (0, 1), got {alpha}")));
        }
        if replications < 1 {
            return Err(Error::InvalidInput("at least one replication is required".into()));
        }
        let plan = lookup(&model);
        let dims = plan.effect_dims(&design)?;
        validate_effects(plan.effect_sum, &dims, &effects)?;
        for (comp, v) in &variance {
            if !(*v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("variance component value must be >= 0, got {v}")));
            }
            if let Component::Family(set) = comp {
                let known = crate::catalog::model_components(&model);
                if !known.contains(comp) {
                    return Err(Error::MissingComponent(format!(
                        "{set} does not name a random-effect family of {model}"
                    )));
                }
            }
        }
        Ok(SimConfig { model, design, effects, variance, alpha, replications, seed })
    }

    /// Convenience: the least favorable effect configuration with range
    /// `delta` and zero margins.
    pub fn extremal(
        model: ModelSpec,
        design: DesignPoint,
        delta: f64,
        variance: ComponentMap,
        alpha: f64,
        replications: u64,
        seed: u64,
    ) -> Result<SimConfig> {
        let plan = lookup(&model);
        let dims = plan.effect_dims(&design)?;
        let effects = extremal_effects(delta, &dims);
        SimConfig::new(model, design, effects, variance, alpha, replications, seed)
    }
}

/// Precomputed generation and test machinery for a config.
pub struct Simulator {
    config: SimConfig,
    plan: TestPlan,
    layout: Layout,
    a_projector: Projector,
    random_strata: Vec<RandomStratum>,
    error_sd: f64,
}

struct RandomStratum {
    projector: Projector,
    cells: usize,
    sd: f64,
    /// Shape of the family's cell array in layout order.
    dims: Vec<usize>,
    /// Axes of live fixed factors, to be centered after drawing (the
    /// restricted mixed-model parameterization the catalog encodes).
    center_axes: Vec<usize>,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Simulator> {
        let plan = lookup(&config.model);
        let layout = Layout::new(&config.model, &config.design)?;
        let a_projector = layout.projector(layout.a_stratum_set());
        let mut random_strata = Vec::new();
        for st in layout.strata() {
            if st.random {
                let var = config.variance.get(&Component::Family(st.set)).copied().unwrap_or(0.0);
                let members: Vec<FactorName> = st.set.iter().collect();
                let dims: Vec<usize> = members.iter().map(|&f| layout.level_of(f)).collect();
                let center_axes: Vec<usize> = members
                    .iter()
                    .enumerate()
                    .filter(|(_, &f)| {
                        st.live.contains(f) && !config.model.factor(f).map(|x| x.random).unwrap_or(false)
                    })
                    .map(|(i, _)| i)
                    .collect();
                random_strata.push(RandomStratum {
                    projector: layout.projector(st.set),
                    cells: layout.cells_of(st.set),
                    sd: var.sqrt(),
                    dims,
                    center_axes,
                });
            }
        }
        let error_sd = config.variance.get(&Component::Error).copied().unwrap_or(0.0).sqrt();
        Ok(Simulator { config, plan, layout, a_projector, random_strata, error_sd })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// One balanced dataset: fixed A-effects plus one normal draw per level
    /// combination of each random family plus iid error. Family draws are
    /// centered over the axes of their live fixed factors, matching the
    /// restricted parameterization behind the catalog's noncentrality
    /// formulas.
    pub fn generate(&self, stream: u64) -> Vec<f64> {
        let mut rng = replication_rng(self.config.seed, stream);
        let mut family_draws: Vec<Vec<f64>> = Vec::with_capacity(self.random_strata.len());
        for rs in &self.random_strata {
            let mut draws = Vec::with_capacity(rs.cells);
            for _ in 0..rs.cells {
                draws.push(sample::normal(&mut rng, rs.sd));
            }
            if !rs.center_axes.is_empty() {
                layout::center_axes(&rs.dims, &rs.center_axes, &mut draws);
            }
            family_draws.push(draws);
        }
        let mut data = Vec::with_capacity(self.layout.n_obs());
        for idx in 0..self.layout.n_obs() {
            let mut y = self.config.effects[self.a_projector.project(idx)];
            for (rs, draws) in self.random_strata.iter().zip(&family_draws) {
                y += draws[rs.projector.project(idx)];
            }
            y += sample::normal(&mut rng, self.error_sd);
            data.push(y);
        }
        data
    }

    fn decompose(&self, data: &[f64]) -> Result<MeanSquares> {
        decompose_with_layout(&self.layout, data)
    }
}

/// Public wrapper matching the operation contract: one dataset for
/// `(config, stream index)`.
pub fn generate_dataset(config: &SimConfig, stream: u64) -> Result<Vec<f64>> {
    Ok(Simulator::new(config.clone())?.generate(stream))
}

/// Empirical power report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalPower {
    pub rate: f64,
    /// Halfwidth of the 95% normal-approximation binomial interval.
    pub ci_halfwidth: f64,
    pub rejections: u64,
    pub replications: u64,
    /// Mean Satterthwaite degrees of freedom, for the quasi-F path.
    pub quasi_dfs: Option<(f64, f64)>,
}

impl EmpiricalPower {
    fn from_counts(rejections: u64, replications: u64, quasi_dfs: Option<(f64, f64)>) -> EmpiricalPower {
        let rate = rejections as f64 / replications as f64;
        let ci_halfwidth = 1.96 * (rate * (1.0 - rate) / replications as f64).sqrt();
        EmpiricalPower { rate, ci_halfwidth, rejections, replications, quasi_dfs }
    }
}

fn thread_count() -> usize {
    if let Ok(v) = std::env::var("ANOVA_POWER_THREADS") {
        if let Ok(k) = v.trim().parse::<usize>() {
            return k.max(1);
        }
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(8)
}

/// Runs `reps` replication streams through `work`, reducing `(rejections,
/// df1 sum, df2 sum)` in fixed 1024-stream blocks so the totals do not
/// depend on the worker count.
fn run_replications<F>(reps: u64, work: F) -> Result<(u64, f64, f64)>
where
    F: Fn(u64) -> Result<(bool, f64, f64)> + Sync,
{
    type BlockResult = Option<Result<(u64, f64, f64)>>;
    const BLOCK: u64 = 1024;
    let blocks: u64 = reps.div_ceil(BLOCK);
    let partials: std::sync::Mutex<Vec<BlockResult>> = std::sync::Mutex::new(vec![None; blocks as usize]);

    let threads = thread_count().min(blocks as usize).max(1);
    let next = std::sync::atomic::AtomicU64::new(0);
    std::thread::scope(|scope| {
        let partials = &partials;
        let next = &next;
        let work = &work;
        for _ in 0..threads {
            scope.spawn(move || loop {
                let b = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if b >= blocks {
                    break;
                }
                let lo = b * BLOCK;
                let hi = (lo + BLOCK).min(reps);
                let mut count = 0u64;
                let mut s1 = 0.0;
                let mut s2 = 0.0;
                let mut result = None;
                for stream in lo..hi {
                    match work(stream) {
                        Ok((reject, d1, d2)) => {
                            count += reject as u64;
                            s1 += d1;
                            s2 += d2;
                        }
                        Err(e) => {
                            result = Some(Err(e));
                            break;
                        }
                    }
                }
                partials.lock().unwrap()[b as usize] = Some(result.unwrap_or(Ok((count, s1, s2))));
            });
        }
    });

    let mut total = 0u64;
    let mut sum1 = 0.0;
    let mut sum2 = 0.0;
    for p in partials.into_inner().unwrap() {
        let (c, s1, s2) = p.expect("every block computed")?;
        total += c;
        sum1 += s1;
        sum2 += s2;
    }
    Ok((total, sum1, sum2))
}

/// Empirical power of the exact F-test: the fraction of replications whose
/// F ratio exceeds the central critical value.
pub fn empirical_power_exact(config: &SimConfig) -> Result<EmpiricalPower> {
    let sim = Simulator::new(config.clone())?;
    let exact = sim.plan.exact()?;
    let (df1, df2) = sim.plan.degrees_of_freedom(&config.design)?;
    let crit = central_f_quantile(1.0 - config.alpha, df1, df2)?;
    let numerator = sim.layout.a_stratum_set();
    let denominator = exact.denominator;

    let (rejections, _, _) = run_replications(config.replications, |stream| {
        let data = sim.generate(stream);
        let ms = sim.decompose(&data)?;
        let f = ms.ms(Component::Family(numerator))? / ms.ms(denominator)?;
        Ok((f > crit, 0.0, 0.0))
    })?;
    Ok(EmpiricalPower::from_counts(rejections, config.replications, None))
}

/// Outcome of one Satterthwaite quasi-F test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiF {
    pub reject: bool,
    pub f_value: f64,
    pub df1: f64,
    pub df2: f64,
}

/// Satterthwaite quasi-F test of the A-effect for the two classifications
/// without an exact test.
///
/// Numerator `MS_A + MS(ABC family)`, denominator `MS(AB family) +
/// MS(AC family)`: both sides have equal expectation under the null. Each
/// side's degrees of freedom are `(sum MS)^2 / sum(MS^2 / df)`.
pub fn satterthwaite_test(model: &ModelSpec, ms: &MeanSquares, alpha: f64) -> Result<QuasiF> {
    let plan = lookup(model);
    if plan.is_exact() {
        return Err(Error::InvalidInput(format!(
            "{model} has an exact F-test; the quasi-F approximation is for the two classifications without one"
        )));
    }
    let map = model.name_map();
    let b = map.apply(FactorName::B);
    let c = map.apply(FactorName::C);
    let num_sets = [FactorSet::from_slice(&[FactorName::A]), FactorSet::from_slice(&[FactorName::A, b, c])];
    let den_sets = [FactorSet::from_slice(&[FactorName::A, b]), FactorSet::from_slice(&[FactorName::A, c])];

    let side = |sets: &[FactorSet]| -> Result<(f64, f64)> {
        let mut total = 0.0;
        let mut df_denom = 0.0;
        for &set in sets {
            let m = ms.ms(Component::Family(set))?;
            let df = ms.df(Component::Family(set))?;
            total += m;
            df_denom += m * m / df;
        }
        if !(total > 0.0) {
            return Err(Error::Degenerate(format!("combined mean square {total} is not positive")));
        }
        Ok((total, total * total / df_denom))
    };
    let (num, df1) = side(&num_sets)?;
    let (den, df2) = side(&den_sets)?;
    let f_value = num / den;
    let crit = central_f_quantile(1.0 - alpha, df1, df2)?;
    Ok(QuasiF { reject: f_value > crit, f_value, df1, df2 })
}

/// Empirical power of the quasi-F test, with mean approximate degrees of
/// freedom across replications.
pub fn empirical_power_approx(config: &SimConfig) -> Result<EmpiricalPower> {
    let sim = Simulator::new(config.clone())?;
    if sim.plan.is_exact() {
        return Err(Error::InvalidInput("use empirical_power_exact for exact-test models".into()));
    }
    let (rejections, s1, s2) = run_replications(config.replications, |stream| {
        let data = sim.generate(stream);
        let ms = sim.decompose(&data)?;
        let q = satterthwaite_test(&config.model, &ms, config.alpha)?;
        Ok((q.reject, q.df1, q.df2))
    })?;
    let reps = config.replications as f64;
    Ok(EmpiricalPower::from_counts(rejections, config.replications, Some((s1 / reps, s2 / reps))))
}

/// Dispatches on the model's exactness.
pub fn empirical_power(config: &SimConfig) -> Result<EmpiricalPower> {
    if lookup(&config.model).is_exact() {
        empirical_power_exact(config)
    } else {
        empirical_power_approx(config)
    }
}

/// A power-surface request over the (b, c) grid with n fixed.
#[derive(Debug, Clone)]
pub struct SurfaceRequest {
    pub model: ModelSpec,
    /// Level count of A and of any fixed factors other than B and C.
    pub fixed_levels: Vec<(FactorName, u64)>,
    pub n: u64,
    pub alpha: f64,
    pub delta: f64,
    pub variance: ComponentMap,
    pub b_range: (u64, u64),
    pub c_range: (u64, u64),
    /// Replications per grid point when the point needs simulation.
    pub replications: u64,
    pub seed: u64,
}

/// One grid point of a power surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub b: u64,
    pub c: u64,
    pub power: f64,
    pub size_product: u64,
    pub provenance: Provenance,
}

/// Guaranteed power over the grid. Exact models evaluate analytically; an
/// approximate model with the blocking interaction component at zero is
/// routed through its equivalent exact classification; otherwise each point
/// is simulated with the least favorable effects.
pub fn power_surface(req: &SurfaceRequest) -> Result<Vec<SurfacePoint>> {
    let plan = lookup(&req.model);
    // The grid addresses the user's literal letters: b varies factor B and
    // c varies factor C, whatever structural roles they play.
    let b_name = FactorName::B;
    let c_name = FactorName::C;
    if req.model.factor(b_name).is_none() || req.model.factor(c_name).is_none() {
        return Err(Error::InvalidInput("a power surface needs a three-factor model with both B and C".into()));
    }
    if req.b_range.0 < 2 || req.c_range.0 < 2 || req.b_range.1 < req.b_range.0 || req.c_range.1 < req.c_range.0 {
        return Err(Error::InvalidInput("grid ranges must be ascending and start at 2 or more".into()));
    }

    enum Route {
        Analytic(TestPlan),
        Equivalent(TestPlan, ComponentMap),
        Simulate,
    }
    let route = if plan.is_exact() {
        Route::Analytic(plan.clone())
    } else if let Some((target, mapped)) = equivalent_exact_model(&req.model, &req.variance) {
        Route::Equivalent(lookup(&target), mapped)
    } else {
        Route::Simulate
    };

    let mut out = Vec::new();
    for b in req.b_range.0..=req.b_range.1 {
        for c in req.c_range.0..=req.c_range.1 {
            let mut levels = req.fixed_levels.clone();
            levels.push((b_name, b));
            levels.push((c_name, c));
            let design = DesignPoint::integer(&levels, req.n)?;
            let point = match &route {
                Route::Analytic(p) => {
                    let wc = WorstCaseInput::new(req.delta, VarianceSpec::Components(req.variance.clone()))?;
                    let res = guaranteed_power(p, &design, &wc, req.alpha)?;
                    SurfacePoint { b, c, power: res.power, size_product: b * c, provenance: res.provenance }
                }
                Route::Equivalent(p, comps) => {
                    let wc = WorstCaseInput::new(req.delta, VarianceSpec::Components(comps.clone()))?;
                    let res = guaranteed_power(p, &design, &wc, req.alpha)?;
                    SurfacePoint { b, c, power: res.power, size_product: b * c, provenance: res.provenance }
                }
                Route::Simulate => {
                    let config = SimConfig::extremal(
                        req.model.clone(),
                        design,
                        req.delta,
                        req.variance.clone(),
                        req.alpha,
                        req.replications,
                        req.seed,
                    )?;
                    let emp = empirical_power_approx(&config)?;
                    SurfacePoint {
                        b,
                        c,
                        power: emp.rate,
                        size_product: b * c,
                        provenance: Provenance::MonteCarlo {
                            replications: req.replications,
                            seed: req.seed,
                            ci_halfwidth: emp.ci_halfwidth,
                        },
                    }
                }
            };
            out.push(point);
        }
    }
    Ok(out)
}

/// Renders a dataset as text: one observation per line, 1-based level
/// indices for each factor and the replicate, then the value.
pub fn format_dataset(layout: &Layout, data: &[f64]) -> Result<String> {
    if data.len() != layout.n_obs() {
        return Err(Error::ShapeMismatch { expected: layout.n_obs(), got: data.len() });
    }
    let mut out = String::new();
    out.push('#');
    for (f, _) in layout.factors() {
        out.push(' ');
        out.push(f.level_symbol());
    }
    out.push_str(" rep y\n");
    let mut dims: Vec<usize> = layout.factors().iter().map(|&(_, l)| l).collect();
    dims.push(layout.n());
    for (i, y) in data.iter().enumerate() {
        let mut rem = i;
        let mut idx = vec![0usize; dims.len()];
        for a in (0..dims.len()).rev() {
            idx[a] = rem % dims[a];
            rem /= dims[a];
        }
        for v in idx {
            out.push_str(&format!("{} ", v + 1));
        }
        out.push_str(&format!("{y:.9}\n"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FactorName::{A, B, C};

    fn nested_chain_config(reps: u64, seed: u64) -> SimConfig {
        let model = ModelSpec::parse("A > B~ > C~").unwrap();
        let design = DesignPoint::integer(&[(A, 6), (B, 2), (C, 2)], 6).unwrap();
        let mut variance = ComponentMap::new();
        variance.insert(Component::family(&[A, B]), 1.0 / 18.0);
        variance.insert(Component::family(&[A, B, C]), 1.0 / 9.0);
        variance.insert(Component::Error, 1.0 / 6.0);
        SimConfig::extremal(model, design, 1.0, variance, 0.05, reps, seed).unwrap()
    }

    #[test]
    fn zero_variance_zero_effects_gives_zero_data() {
        let model = ModelSpec::parse("A x B~").unwrap();
        let design = DesignPoint::integer(&[(A, 3), (B, 2)], 2).unwrap();
        let config =
            SimConfig::new(model, design, vec![0.0; 3], ComponentMap::new(), 0.05, 1, 42).unwrap();
        let data = generate_dataset(&config, 0).unwrap();
        assert!(data.iter().all(|&y| y == 0.0));
    }

    #[test]
    fn seed_and_stream_determinism() {
        let config = nested_chain_config(1, 99);
        let a = generate_dataset(&config, 3).unwrap();
        let b = generate_dataset(&config, 3).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&config, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_matches_reference_power() {
        // Published power 0.271516 at this configuration; 1e5 replications
        // give a 3-sigma binomial band of about 0.0042.
        let reps = 100_000u64;
        let config = nested_chain_config(reps, 20260201);
        let emp = empirical_power_exact(&config).unwrap();
        let band = 3.0 * (0.271516_f64 * (1.0 - 0.271516) / reps as f64).sqrt();
        assert!((emp.rate - 0.271516).abs() < band, "rate {}", emp.rate);
    }

    #[test]
    fn empirical_size_under_null() {
        let mut config = nested_chain_config(20_000, 7);
        config.effects = vec![0.0; 6];
        let emp = empirical_power_exact(&config).unwrap();
        assert!((emp.rate - 0.05).abs() < 0.006, "size {}", emp.rate);
    }

    #[test]
    fn rejection_count_is_thread_independent() {
        let config = nested_chain_config(4000, 11);
        std::env::set_var("ANOVA_POWER_THREADS", "1");
        let serial = empirical_power_exact(&config).unwrap();
        std::env::set_var("ANOVA_POWER_THREADS", "4");
        let parallel = empirical_power_exact(&config).unwrap();
        std::env::remove_var("ANOVA_POWER_THREADS");
        assert_eq!(serial.rejections, parallel.rejections);
    }

    #[test]
    fn quasi_f_requires_approximate_model() {
        let model = ModelSpec::parse("A > B~ > C~").unwrap();
        let design = DesignPoint::integer(&[(A, 3), (B, 2), (C, 2)], 2).unwrap();
        let data = vec![0.5; 24];
        let ms = anova_decompose(&model, &design, &data).unwrap();
        assert!(satterthwaite_test(&model, &ms, 0.05).is_err());
    }

    #[test]
    fn quasi_f_size_is_near_nominal() {
        // Under the null the quasi-F rejection rate should be close to alpha.
        let model = ModelSpec::parse("A x B~ x C~").unwrap();
        let design = DesignPoint::integer(&[(A, 4), (B, 3), (C, 3)], 2).unwrap();
        let mut variance = ComponentMap::new();
        variance.insert(Component::family(&[A, B]), 0.4);
        variance.insert(Component::family(&[A, C]), 0.6);
        variance.insert(Component::family(&[A, B, C]), 0.5);
        variance.insert(Component::family(&[B]), 0.3);
        variance.insert(Component::family(&[C]), 0.2);
        variance.insert(Component::family(&[B, C]), 0.3);
        variance.insert(Component::Error, 1.0);
        let config = SimConfig::new(model, design, vec![0.0; 4], variance, 0.05, 20_000, 5150).unwrap();
        let emp = empirical_power_approx(&config).unwrap();
        // The quasi-F is approximate; its size sits near but not at alpha.
        assert!(emp.rate > 0.03 && emp.rate < 0.07, "quasi-F size {}", emp.rate);
        let (d1, d2) = emp.quasi_dfs.unwrap();
        assert!(d1 > 1.0 && d2 > 1.0, "mean dfs ({d1}, {d2})");
    }

    #[test]
    fn surface_routes_through_equivalences() {
        // (A > B~) x C~ with sag = 0 equals the exact A > B~ > C~ surface.
        let approx = ModelSpec::parse("(A > B~) x C~").unwrap();
        let mut variance = ComponentMap::new();
        variance.insert(Component::family(&[A, B]), 10.0);
        variance.insert(Component::family(&[C]), 5.0);
        variance.insert(Component::family(&[A, C]), 0.0);
        variance.insert(Component::family(&[A, B, C]), 5.0);
        variance.insert(Component::Error, 5.0);
        let req = SurfaceRequest {
            model: approx,
            fixed_levels: vec![(A, 6)],
            n: 2,
            alpha: 0.05,
            delta: 5.0,
            variance: variance.clone(),
            b_range: (2, 4),
            c_range: (2, 4),
            replications: 100,
            seed: 1,
        };
        let surface = power_surface(&req).unwrap();
        assert_eq!(surface.len(), 9);

        let exact = ModelSpec::parse("A > B~ > C~").unwrap();
        let mut exact_var = ComponentMap::new();
        exact_var.insert(Component::family(&[A, B]), 10.0);
        exact_var.insert(Component::family(&[A, B, C]), 5.0);
        exact_var.insert(Component::Error, 5.0);
        let req_exact = SurfaceRequest { model: exact, variance: exact_var, ..req };
        let direct = power_surface(&req_exact).unwrap();
        for (p, q) in surface.iter().zip(&direct) {
            assert!((p.power - q.power).abs() < 1e-12, "({}, {}): {} vs {}", p.b, p.c, p.power, q.power);
            assert_eq!(p.size_product, p.b * p.c);
        }

        // Degenerate single-point grid.
        let one = power_surface(&SurfaceRequest { b_range: (3, 3), c_range: (4, 4), ..req_exact }).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!((one[0].b, one[0].c, one[0].size_product), (3, 4, 12));
    }

    #[test]
    fn dataset_dump_shape() {
        let config = nested_chain_config(1, 3);
        let sim = Simulator::new(config).unwrap();
        let data = sim.generate(0);
        let text = format_dataset(sim.layout(), &data).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# a b c rep y");
        assert_eq!(lines.len(), 1 + 6 * 2 * 2 * 6);
        let first: Vec<&str> = lines[1].split_whitespace().collect();
        assert_eq!(first.len(), 5);
        assert_eq!(first[..4], ["1", "1", "1", "1"]);
    }
}
