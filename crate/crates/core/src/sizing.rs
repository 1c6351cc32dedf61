//! Minimal sample-size determination.
//!
//! For every exact-test classification one design parameter — the pivot —
//! dominates: increasing it raises guaranteed power at least as much as the
//! same relative increase of any other parameter. The real-valued minimal
//! size therefore sits where all other searched parameters are at their
//! minima and the pivot solves `power = requirement`. The integer optimum is
//! then found by enumerating the designs whose searched-parameter product
//! lies between the real optimum and the rounded-up pivot solution.
//!
//! Searched parameters are the level counts of the random factors plus the
//! replicate count n; the level counts of A and of fixed factors are user
//! commitments and never vary.

use crate::bounds::{guaranteed_power, WorstCaseInput};
use crate::catalog::{lookup, DesignPoint, Mode, Param, TestPlan};
use crate::error::{Error, Result};
use crate::model::{FactorName, ModelSpec};
use crate::root::{self, Tolerance};

/// A minimal-size request.
#[derive(Debug, Clone)]
pub struct SizeRequest {
    pub model: ModelSpec,
    pub alpha: f64,
    pub required_power: f64,
    pub worst_case: WorstCaseInput,
    /// Level counts of A and of every fixed factor.
    pub fixed_levels: Vec<(FactorName, u64)>,
    /// Per-parameter lower bounds for the searched parameters; anything not
    /// listed defaults to 2.
    pub minima: Vec<(Param, u64)>,
    pub mode: Mode,
}

/// One evaluated candidate during a search.
#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub design: DesignPoint,
    pub power: f64,
}

/// Result of a minimal-size search.
#[derive(Debug, Clone)]
pub struct SizeResult {
    pub design: DesignPoint,
    /// Product of every level count and n.
    pub size: f64,
    pub df1: f64,
    pub df2: f64,
    pub lambda: f64,
    pub power: f64,
    pub pivot: Param,
    /// Integer mode: inclusive bracket for the searched-parameter product
    /// implied by the real relaxation.
    pub bracket: Option<(u64, u64)>,
    pub trace: Vec<TraceEntry>,
}

/// The most power-effective parameter of an exact-test model.
///
/// Equivalently: the level count of the random factor nearest to A (counting
/// replicates as an innermost virtual random factor and skipping the factors
/// A is nested in).
pub fn pivot_parameter(plan: &TestPlan) -> Result<Param> {
    Ok(plan.exact()?.pivot)
}

/// Parameters the search may vary: random-factor level counts plus n, in
/// layout order with n last.
pub fn searched_params(model: &ModelSpec) -> Vec<Param> {
    let mut out: Vec<Param> = model
        .factors()
        .iter()
        .filter(|f| f.random)
        .map(|f| Param::Level(f.name))
        .collect();
    out.push(Param::Reps);
    out
}

struct Search {
    plan: TestPlan,
    searched: Vec<Param>,
    minima: Vec<u64>,
    pivot: Param,
}

impl Search {
    fn new(req: &SizeRequest) -> Result<Search> {
        if !(req.alpha > 0.0 && req.alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha must be in (0, 1), got {}", req.alpha)));
        }
        if !(req.required_power > req.alpha && req.required_power < 1.0) {
            return Err(Error::InvalidInput(format!(
                "required power must lie in (alpha, 1), got {}",
                req.required_power
            )));
        }
        let plan = lookup(&req.model);
        let pivot = pivot_parameter(&plan)?;
        let searched = searched_params(&req.model);

        for &(f, _) in &req.fixed_levels {
            if searched.contains(&Param::Level(f)) {
                return Err(Error::InvalidInput(format!(
                    "level count {} belongs to a random factor and is searched, not fixed",
                    f.level_symbol()
                )));
            }
        }
        let mut minima = Vec::with_capacity(searched.len());
        for &p in &searched {
            let m = req.minima.iter().find(|(q, _)| *q == p).map_or(2, |&(_, m)| m);
            if m < 2 {
                return Err(Error::InvalidInput(format!("minimum for {p} must be >= 2, got {m}")));
            }
            minima.push(m);
        }
        for &(p, _) in &req.minima {
            if !searched.contains(&p) {
                return Err(Error::InvalidInput(format!("minimum given for {p}, which is not a searched parameter")));
            }
        }
        Ok(Search { plan, searched, minima, pivot })
    }

    /// All searched parameters at their minima, fixed levels as given.
    fn base_design(&self, req: &SizeRequest, mode: Mode) -> Result<DesignPoint> {
        let mut levels: Vec<(FactorName, u64)> = req.fixed_levels.clone();
        let mut n = 2;
        for (p, m) in self.searched.iter().zip(&self.minima) {
            match p {
                Param::Level(f) => levels.push((*f, *m)),
                Param::Reps => n = *m,
            }
        }
        match mode {
            Mode::Integer => DesignPoint::integer(&levels, n),
            Mode::Real => {
                let real: Vec<(FactorName, f64)> = levels.iter().map(|&(f, v)| (f, v as f64)).collect();
                DesignPoint::real(&real, n as f64)
            }
        }
    }

    fn power_at(&self, req: &SizeRequest, design: &DesignPoint, trace: &mut Vec<TraceEntry>) -> Result<f64> {
        let res = guaranteed_power(&self.plan, design, &req.worst_case, req.alpha)?;
        trace.push(TraceEntry { design: design.clone(), power: res.power });
        Ok(res.power)
    }

    fn result(&self, req: &SizeRequest, design: DesignPoint, bracket: Option<(u64, u64)>, trace: Vec<TraceEntry>) -> Result<SizeResult> {
        let res = guaranteed_power(&self.plan, &design, &req.worst_case, req.alpha)?;
        Ok(SizeResult {
            size: design.size(),
            design,
            df1: res.df1,
            df2: res.df2,
            lambda: res.lambda,
            power: res.power,
            pivot: self.pivot,
            bracket,
            trace,
        })
    }
}

/// Real-parameter relaxation: non-pivot searched parameters at their minima,
/// the pivot solved so that guaranteed power meets the requirement.
pub fn min_size_real(req: &SizeRequest) -> Result<SizeResult> {
    if req.mode != Mode::Real {
        return Err(Error::InvalidInput("min_size_real requires mode = real".into()));
    }
    let search = Search::new(req)?;
    let mut trace = Vec::new();
    let base = search.base_design(req, Mode::Real)?;

    let pivot_min = base.value(search.pivot)?;
    if search.power_at(req, &base, &mut trace)? >= req.required_power {
        return search.result(req, base, None, trace);
    }

    // Guaranteed power is increasing and unbounded toward 1 along the pivot,
    // so a bracket always exists for requirements below 1.
    let mut eval = |p: f64| {
        let d = base.with_value(search.pivot, p);
        search.power_at(req, &d, &mut trace).unwrap_or(f64::NAN)
    };
    let (lo, hi) = root::bracket_upward(&mut eval, req.required_power, pivot_min, 1e12).ok_or_else(|| {
        Error::Infeasible(format!(
            "guaranteed power stays below {} along pivot {}",
            req.required_power, search.pivot
        ))
    })?;
    let pivot_value = root::solve_monotone(&mut eval, req.required_power, lo, hi, Tolerance { residual: 1e-9, x_rel: 1e-10 });
    let design = base.with_value(search.pivot, pivot_value);
    search.result(req, design, None, trace)
}

/// Integer minimal size via the real relaxation and product-bracket
/// enumeration.
///
/// Feasible integer designs cannot have a searched-parameter product below
/// the real optimum, and rounding the real pivot solution up gives a feasible
/// design; the optimum therefore lies in the inclusive product bracket
/// between those two, which is enumerated exhaustively. Ties on size prefer
/// higher power, then lexicographically smaller parameters.
pub fn min_size_integer(req: &SizeRequest) -> Result<SizeResult> {
    if req.mode != Mode::Integer {
        return Err(Error::InvalidInput("min_size_integer requires mode = integer".into()));
    }
    let search = Search::new(req)?;
    let relaxed = min_size_real(&SizeRequest { mode: Mode::Real, ..req.clone() })?;

    // Searched-parameter product at the real optimum and at the rounded-up
    // pivot solution.
    let mut real_product = 1.0;
    for &p in &search.searched {
        real_product *= relaxed.design.value(p)?;
    }
    let pivot_real = relaxed.design.value(search.pivot)?;
    let minima_product: u64 = search
        .searched
        .iter()
        .zip(&search.minima)
        .filter(|(p, _)| **p != search.pivot)
        .map(|(_, m)| *m)
        .product();
    // The bracket's upper end must come from a certainly feasible design.
    // When the root lands within numerical tolerance of an integer, verify
    // that integer's power directly instead of trusting the rounding.
    let mut pivot_ceil = (pivot_real - 1e-9).ceil().max(2.0);
    {
        let base = search.base_design(req, Mode::Integer)?;
        let candidate = base.with_value(search.pivot, pivot_ceil);
        let mut scratch = Vec::new();
        if search.power_at(req, &candidate, &mut scratch)? + 1e-12 < req.required_power {
            pivot_ceil += 1.0;
        }
    }
    let lo = (real_product - 1e-9).ceil() as u64;
    let hi = pivot_ceil as u64 * minima_product;
    debug_assert!(lo <= hi, "bracket inverted: {lo} > {hi}");

    let mut trace = Vec::new();
    let mut best: Option<(u64, f64, Vec<u64>, DesignPoint)> = None;
    for product in lo..=hi {
        for values in factorizations(product, &search.minima) {
            let design = design_from_values(req, &search, &values)?;
            let power = search.power_at(req, &design, &mut trace)?;
            if power + 1e-12 < req.required_power {
                continue;
            }
            // Rank: smaller product, then higher power, then smaller
            // parameter tuple with the pivot compared last.
            let key_values = rank_values(&search, &values);
            let better = match &best {
                None => true,
                Some((bp, bpow, bvals, _)) => {
                    (product, -power, &key_values) < (*bp, -*bpow, bvals)
                }
            };
            if better {
                best = Some((product, power, key_values, design));
            }
        }
    }
    let (_, _, _, design) = best.ok_or_else(|| {
        Error::Infeasible("no feasible integer design in the relaxation bracket; this should be unreachable".into())
    })?;
    search.result(req, design, Some((lo, hi)), trace)
}

/// Non-pivot searched values first (layout order), pivot last, for the
/// lexicographic tie-break.
fn rank_values(search: &Search, values: &[u64]) -> Vec<u64> {
    let mut key = Vec::with_capacity(values.len());
    for (p, v) in search.searched.iter().zip(values) {
        if *p != search.pivot {
            key.push(*v);
        }
    }
    for (p, v) in search.searched.iter().zip(values) {
        if *p == search.pivot {
            key.push(*v);
        }
    }
    key
}

fn design_from_values(req: &SizeRequest, search: &Search, values: &[u64]) -> Result<DesignPoint> {
    let mut levels: Vec<(FactorName, u64)> = req.fixed_levels.clone();
    let mut n = 2;
    for (p, v) in search.searched.iter().zip(values) {
        match p {
            Param::Level(f) => levels.push((*f, *v)),
            Param::Reps => n = *v,
        }
    }
    DesignPoint::integer(&levels, n)
}

/// Ordered factorizations of `product` into one value per searched slot,
/// respecting the per-slot minima.
fn factorizations(product: u64, minima: &[u64]) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(minima.len());
    fn recurse(rest: u64, minima: &[u64], current: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if minima.len() == 1 {
            if rest >= minima[0] {
                current.push(rest);
                out.push(current.clone());
                current.pop();
            }
            return;
        }
        let min = minima[0];
        let tail_min: u64 = minima[1..].iter().product();
        let mut v = min;
        while v * tail_min <= rest {
            if rest.is_multiple_of(v) {
                current.push(v);
                recurse(rest / v, &minima[1..], current, out);
                current.pop();
            }
            v += 1;
        }
    }
    recurse(product, minima, &mut current, &mut out);
    out
}

/// One row of a fixed-size power table.
#[derive(Debug, Clone)]
pub struct PowerTableRow {
    pub design: DesignPoint,
    pub df1: f64,
    pub df2: f64,
    pub lambda: f64,
    pub power: f64,
}

/// Evaluates guaranteed power for every integer assignment of the searched
/// parameters with the given product, sorted by increasing power.
///
/// `required_power` and `mode` on the request are ignored here; the table is
/// a fixed-size survey.
pub fn power_table(req: &SizeRequest, product: u64) -> Result<Vec<PowerTableRow>> {
    let search = Search::new(&SizeRequest { mode: Mode::Integer, ..req.clone() })?;
    let mut rows = Vec::new();
    for values in factorizations(product, &search.minima) {
        let design = design_from_values(req, &search, &values)?;
        let res = guaranteed_power(&search.plan, &design, &req.worst_case, req.alpha)?;
        rows.push(PowerTableRow { design, df1: res.df1, df2: res.df2, lambda: res.lambda, power: res.power });
    }
    rows.sort_by(|a, b| {
        a.power
            .partial_cmp(&b.power)
            .unwrap()
            .then_with(|| format!("{}", a.design).cmp(&format!("{}", b.design)))
    });
    Ok(rows)
}
