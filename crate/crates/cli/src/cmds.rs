//! Command implementations.

use serde_json::{json, Map, Value};

use anova_power::bounds::{exact_power, guaranteed_power, Provenance, WorstCaseInput};
use anova_power::catalog::{
    all_entries, equivalent_exact_model, lookup, ComponentMap, DesignPoint, EffectSumKind, Mode, TestPlan,
    VarianceSpec,
};
use anova_power::error::Error;
use anova_power::model::ModelSpec;
use anova_power::simulate::{
    empirical_power, format_dataset, power_surface, SimConfig, Simulator, SurfaceRequest,
};
use anova_power::sizing::{min_size_integer, min_size_real, SizeRequest, SizeResult};

use crate::args::{ModelsArgs, PowerArgs, SimulateArgs, SizeArgs, SurfaceArgs};
use crate::fmt::{table, CommandOutput, RunRecord};
use crate::parse;

type Result<T> = std::result::Result<T, Error>;

fn sum_display(kind: EffectSumKind) -> &'static str {
    match kind {
        EffectSumKind::Single => "sum a_i^2",
        EffectSumKind::Double => "sum a_i(j)^2",
        EffectSumKind::Triple => "sum a_i(jk)^2",
    }
}

fn provenance_display(p: Provenance) -> &'static str {
    match p {
        Provenance::ExactAnalytic => "exact",
        Provenance::WorstCaseBound => "worst-case",
        Provenance::MonteCarlo { .. } => "monte-carlo",
    }
}

fn design_json(design: &DesignPoint) -> Value {
    let num = |v: f64| if design.mode() == Mode::Integer { json!(v as u64) } else { json!(v) };
    let mut map = Map::new();
    for (f, v) in design.levels() {
        map.insert(f.level_symbol().to_string(), num(v));
    }
    map.insert("n".into(), num(design.n()));
    Value::Object(map)
}

fn components_json(model: &ModelSpec, comps: &ComponentMap) -> Value {
    let mut map = Map::new();
    for (c, v) in comps {
        map.insert(c.key(model), json!(v));
    }
    Value::Object(map)
}

/// `--sigma-y` takes the total standard deviation; `--components` names the
/// individual variances. Exactly one of them must be given.
fn variance_from(model: &ModelSpec, sigma_y: Option<f64>, components: Option<&str>) -> Result<VarianceSpec> {
    match (sigma_y, components) {
        (Some(_), Some(_)) => Err(Error::InvalidInput("give either --sigma-y or --components, not both".into())),
        (Some(sd), None) => VarianceSpec::total(sd * sd),
        (None, Some(s)) => {
            let model_comps = parse::parse_components(model, s)?;
            VarianceSpec::components(&model_comps)
        }
        (None, None) => Err(Error::InvalidInput("variance needed: --sigma-y <sd> or --components k=v,...".into())),
    }
}

// -------------------------------------------------------------------------
// models
// -------------------------------------------------------------------------

pub fn models(args: &ModelsArgs) -> Result<CommandOutput> {
    let entries: Vec<TestPlan> = match &args.model {
        Some(f) => vec![lookup(&ModelSpec::parse(f)?)],
        None => all_entries(),
    };
    let entries: Vec<TestPlan> = entries
        .into_iter()
        .filter(|p| !args.random_only || p.model.has_random_factor())
        .collect();

    let mut rows = Vec::new();
    let mut json_entries = Vec::new();
    for plan in &entries {
        let formula = plan.model.formula();
        let s = sum_display(plan.effect_sum).to_string();
        let (kind, pivot, df1, df2, r, t) = match plan.exact() {
            Ok(e) => (
                "exact".to_string(),
                e.pivot.to_string(),
                plan.df1.to_string(),
                e.df2.to_string(),
                e.r.to_string(),
                e.t_display(&plan.model),
            ),
            Err(_) => ("approximate".to_string(), "-".into(), "-".into(), "-".into(), "-".into(), "-".into()),
        };
        json_entries.push(match plan.exact() {
            Ok(e) => json!({
                "formula": formula,
                "exact": true,
                "pivot": e.pivot.to_string(),
                "df1": plan.df1.to_string(),
                "df2": e.df2.to_string(),
                "r": e.r.to_string(),
                "s": s,
                "t": e.t_display(&plan.model),
                "denominator": e.denominator.key(&plan.model),
                "components": anova_power::catalog::model_components(&plan.model)
                    .iter().map(|c| c.key(&plan.model)).collect::<Vec<_>>(),
            }),
            Err(_) => json!({
                "formula": formula,
                "exact": false,
                "s": s,
                "components": anova_power::catalog::model_components(&plan.model)
                    .iter().map(|c| c.key(&plan.model)).collect::<Vec<_>>(),
            }),
        });
        rows.push(vec![formula, kind, pivot, df1, df2, r, s, t]);
    }

    let header = ["model", "test", "pivot", "df1", "df2", "R", "S", "T"];
    let mut text = table(&header, &rows);
    text.push_str(&format!("{} models\n", rows.len()));
    let mut csv = String::from("formula,test,pivot,df1,df2,r,s,t\n");
    for r in &rows {
        csv.push_str(&format!("\"{}\",{},{},{},{},{},\"{}\",\"{}\"\n", r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7]));
    }
    let request = json!({ "model": args.model, "random_only": args.random_only });
    Ok(CommandOutput { record: RunRecord::new("models", request, json!(json_entries)), text, csv })
}

// -------------------------------------------------------------------------
// power
// -------------------------------------------------------------------------

pub fn power(args: &PowerArgs) -> Result<CommandOutput> {
    let model = ModelSpec::parse(&args.model)?;
    let plan = lookup(&model);
    let levels = parse::parse_levels(&args.levels)?;
    let design = DesignPoint::integer(&levels, args.n)?;

    let mut request = Map::new();
    request.insert("model".into(), json!(model.formula()));
    request.insert("design".into(), design_json(&design));
    request.insert("alpha".into(), json!(args.alpha));

    let result = if let Some(effects_str) = &args.effects {
        let comps_str = args
            .components
            .as_deref()
            .ok_or_else(|| Error::InvalidInput("explicit --effects need --components".into()))?;
        let comps = parse::parse_components(&model, comps_str)?;
        let variance = VarianceSpec::components(&comps)?;
        let effects = parse::parse_effects(effects_str)?;
        request.insert("effects".into(), json!(effects));
        request.insert("components".into(), components_json(&model, &parse::components_to_map(&comps)));
        exact_power(&plan, &design, &effects, &variance, args.alpha)?
    } else {
        let delta = args
            .delta
            .ok_or_else(|| Error::InvalidInput("worst-case power needs --delta (or give --effects)".into()))?;
        let variance = variance_from(&model, args.sigma_y, args.components.as_deref())?;
        request.insert("delta".into(), json!(delta));
        match &variance {
            VarianceSpec::TotalOnly { sigma_y_sq } => {
                request.insert("sigma_y".into(), json!(sigma_y_sq.sqrt()));
            }
            VarianceSpec::Components(map) => {
                request.insert("components".into(), components_json(&model, map));
            }
        }
        guaranteed_power(&plan, &design, &WorstCaseInput::new(delta, variance)?, args.alpha)?
    };

    let mut result_json = serde_json::to_value(result).expect("serializable");
    result_json["design"] = design_json(&design);
    result_json["model"] = json!(model.formula());

    let text = format!(
        "model:  {}\ndesign: {}   (N = {})\nalpha:  {}\ndf1 {}  df2 {}  lambda {:.6}\npower:  {:.6}  [{}]\n",
        model.formula(),
        design,
        design.size(),
        args.alpha,
        result.df1,
        result.df2,
        result.lambda,
        result.power,
        provenance_display(result.provenance),
    );
    let csv = format!(
        "formula,design,alpha,df1,df2,lambda,power,provenance\n\"{}\",{},{},{},{},{},{},{}\n",
        model.formula(),
        design,
        args.alpha,
        result.df1,
        result.df2,
        result.lambda,
        result.power,
        provenance_display(result.provenance),
    );
    Ok(CommandOutput { record: RunRecord::new("power", Value::Object(request), result_json), text, csv })
}

// -------------------------------------------------------------------------
// size
// -------------------------------------------------------------------------

fn size_result_json(res: &SizeResult, verbose: bool) -> Value {
    let mut v = json!({
        "design": design_json(&res.design),
        "size": res.size,
        "df1": res.df1,
        "df2": res.df2,
        "lambda": res.lambda,
        "power": res.power,
        "pivot": res.pivot.to_string(),
        "bracket": res.bracket.map(|(lo, hi)| json!([lo, hi])).unwrap_or(Value::Null),
    });
    if verbose {
        v["trace"] = json!(res
            .trace
            .iter()
            .map(|t| json!({ "design": design_json(&t.design), "power": t.power }))
            .collect::<Vec<_>>());
    }
    v
}

pub fn size(args: &SizeArgs) -> Result<CommandOutput> {
    let model = ModelSpec::parse(&args.model)?;
    let levels = parse::parse_levels(&args.levels)?;
    let delta = args.delta.ok_or_else(|| Error::InvalidInput("sizing needs --delta".into()))?;
    let variance = variance_from(&model, args.sigma_y, args.components.as_deref())?;
    let minima = match &args.minima {
        Some(s) => parse::parse_minima(s)?,
        None => vec![],
    };
    let mode = if args.mode == crate::args::ModeArg::Real { Mode::Real } else { Mode::Integer };

    let mut request = Map::new();
    request.insert("model".into(), json!(model.formula()));
    request.insert("levels".into(), json!(levels.iter().map(|(f, v)| (f.level_symbol().to_string(), *v)).collect::<std::collections::BTreeMap<_, _>>()));
    request.insert("alpha".into(), json!(args.alpha));
    request.insert("power_requirement".into(), json!(args.power_requirement));
    request.insert("delta".into(), json!(delta));
    match &variance {
        VarianceSpec::TotalOnly { sigma_y_sq } => {
            request.insert("sigma_y".into(), json!(sigma_y_sq.sqrt()));
        }
        VarianceSpec::Components(map) => {
            request.insert("components".into(), components_json(&model, map));
        }
    }
    request.insert("mode".into(), json!(if mode == Mode::Real { "real" } else { "integer" }));
    if !minima.is_empty() {
        request.insert(
            "minima".into(),
            json!(minima.iter().map(|(p, v)| (p.to_string(), *v)).collect::<std::collections::BTreeMap<_, _>>()),
        );
    }

    let req = SizeRequest {
        model: model.clone(),
        alpha: args.alpha,
        required_power: args.power_requirement,
        worst_case: WorstCaseInput::new(delta, variance)?,
        fixed_levels: levels,
        minima,
        mode,
    };
    let res = match mode {
        Mode::Real => min_size_real(&req)?,
        Mode::Integer => min_size_integer(&req)?,
    };

    let mut text = format!(
        "model:   {}\npivot:   {}\nminimal design: {}   (size {})\ndf1 {}  df2 {:.6}  lambda {:.6}\npower:   {:.6}  (required {})\n",
        model.formula(),
        res.pivot,
        res.design,
        res.size,
        res.df1,
        res.df2,
        res.lambda,
        res.power,
        args.power_requirement,
    );
    if let Some((lo, hi)) = res.bracket {
        text.push_str(&format!("searched-product bracket: [{lo}, {hi}]\n"));
    }
    if args.verbose {
        text.push_str("trace:\n");
        for t in &res.trace {
            text.push_str(&format!("  {}  power {:.6}\n", t.design, t.power));
        }
    }
    let (blo, bhi) = res.bracket.map(|(l, h)| (l.to_string(), h.to_string())).unwrap_or_default();
    let csv = format!(
        "formula,mode,requirement,alpha,design,size,df1,df2,lambda,power,bracket_lo,bracket_hi\n\"{}\",{},{},{},{},{},{},{},{},{},{},{}\n",
        model.formula(),
        if mode == Mode::Real { "real" } else { "integer" },
        args.power_requirement,
        args.alpha,
        res.design,
        res.size,
        res.df1,
        res.df2,
        res.lambda,
        res.power,
        blo,
        bhi,
    );
    Ok(CommandOutput { record: RunRecord::new("size", Value::Object(request), size_result_json(&res, args.verbose)), text, csv })
}

// -------------------------------------------------------------------------
// simulate
// -------------------------------------------------------------------------

pub fn simulate(args: &SimulateArgs) -> Result<CommandOutput> {
    let model = ModelSpec::parse(&args.model)?;
    let plan = lookup(&model);
    let levels = parse::parse_levels(&args.levels)?;
    let design = DesignPoint::integer(&levels, args.n)?;
    let comps = parse::parse_components(&model, &args.components)?;
    let comp_map = parse::components_to_map(&comps);

    let effects = match (&args.effects, args.extremal) {
        (Some(_), true) => return Err(Error::InvalidInput("give --effects or --extremal, not both".into())),
        (Some(s), false) => parse::parse_effects(s)?,
        (None, true) => {
            let delta = args.delta.ok_or_else(|| Error::InvalidInput("--extremal needs --delta".into()))?;
            let dims = plan.effect_dims(&design)?;
            anova_power::catalog::extremal_effects(delta, &dims)
        }
        (None, false) => {
            return Err(Error::InvalidInput("simulation needs --effects v1,v2,... or --extremal with --delta".into()))
        }
    };

    let config = SimConfig::new(
        model.clone(),
        design.clone(),
        effects.clone(),
        comp_map.clone(),
        args.alpha,
        args.replications,
        args.seed,
    )?;

    let mut request = Map::new();
    request.insert("model".into(), json!(model.formula()));
    request.insert("design".into(), design_json(&design));
    request.insert("alpha".into(), json!(args.alpha));
    request.insert("components".into(), components_json(&model, &comp_map));
    request.insert("effects".into(), json!(effects));
    request.insert("replications".into(), json!(args.replications));
    request.insert("seed".into(), json!(args.seed));

    if let Some(stream) = args.dump_dataset {
        let sim = Simulator::new(config)?;
        let data = sim.generate(stream);
        let dump = format_dataset(sim.layout(), &data)?;
        request.insert("dump_dataset".into(), json!(stream));
        let result = json!({ "stream": stream, "observations": data.len(), "dataset": dump });
        let mut record = RunRecord::new("simulate", Value::Object(request), result);
        record.seed = Some(args.seed);
        return Ok(CommandOutput { record, text: dump.clone(), csv: dump });
    }

    let emp = empirical_power(&config)?;
    let mut result = json!({
        "rate": emp.rate,
        "ci_halfwidth": emp.ci_halfwidth,
        "rejections": emp.rejections,
        "replications": emp.replications,
        "test": if plan.is_exact() { "exact-f" } else { "satterthwaite-quasi-f" },
    });
    let mut text = format!(
        "model:  {}  [{}]\ndesign: {}   alpha {}   replications {}   seed {}\nrejection rate: {:.6}   95% CI +/- {:.6}\n",
        model.formula(),
        if plan.is_exact() { "exact F-test" } else { "Satterthwaite quasi-F" },
        design,
        args.alpha,
        args.replications,
        args.seed,
        emp.rate,
        emp.ci_halfwidth,
    );
    if let Some((d1, d2)) = emp.quasi_dfs {
        result["quasi_df1_mean"] = json!(d1);
        result["quasi_df2_mean"] = json!(d2);
        text.push_str(&format!("mean quasi-F dfs: {d1:.3}, {d2:.3}\n"));
    }

    if args.check_equivalence {
        let (eq_model, eq_comps) = equivalent_exact_model(&model, &comp_map).ok_or_else(|| {
            Error::InvalidInput(
                "--check-equivalence needs an approximate model with the blocking interaction component at zero"
                    .into(),
            )
        })?;
        let eq_plan = lookup(&eq_model);
        let analytic = exact_power(&eq_plan, &design, &effects, &VarianceSpec::Components(eq_comps), args.alpha)?;
        let diff = (emp.rate - analytic.power).abs();
        let ci99 = 2.576 * (emp.rate * (1.0 - emp.rate) / emp.replications as f64).sqrt();
        result["equivalent_model"] = json!(eq_model.formula());
        result["analytic_power"] = json!(analytic.power);
        result["abs_diff"] = json!(diff);
        result["within_99_ci"] = json!(diff <= ci99);
        text.push_str(&format!(
            "equivalent exact model: {}   analytic power {:.6}   |diff| {:.6}   within 99% CI: {}\n",
            eq_model.formula(),
            analytic.power,
            diff,
            if diff <= ci99 { "yes" } else { "no" },
        ));
    }

    let csv = format!(
        "formula,design,alpha,replications,seed,rejections,rate,ci_halfwidth\n\"{}\",{},{},{},{},{},{},{}\n",
        model.formula(),
        design,
        args.alpha,
        args.replications,
        args.seed,
        emp.rejections,
        emp.rate,
        emp.ci_halfwidth,
    );
    let mut record = RunRecord::new("simulate", Value::Object(request), result);
    record.seed = Some(args.seed);
    Ok(CommandOutput { record, text, csv })
}

// -------------------------------------------------------------------------
// surface
// -------------------------------------------------------------------------

pub fn surface(args: &SurfaceArgs) -> Result<CommandOutput> {
    let model = ModelSpec::parse(&args.model)?;
    let levels = parse::parse_levels(&args.levels)?;
    let comps = parse::parse_components(&model, &args.components)?;
    let (b_range, c_range) = parse::parse_grid(&args.grid)?;

    let req = SurfaceRequest {
        model: model.clone(),
        fixed_levels: levels.clone(),
        n: args.n,
        alpha: args.alpha,
        delta: args.delta,
        variance: parse::components_to_map(&comps),
        b_range,
        c_range,
        replications: args.replications,
        seed: args.seed,
    };
    let points = power_surface(&req)?;

    let mut request = Map::new();
    request.insert("model".into(), json!(model.formula()));
    request.insert("levels".into(), json!(levels.iter().map(|(f, v)| (f.level_symbol().to_string(), *v)).collect::<std::collections::BTreeMap<_, _>>()));
    request.insert("n".into(), json!(args.n));
    request.insert("alpha".into(), json!(args.alpha));
    request.insert("delta".into(), json!(args.delta));
    request.insert("components".into(), components_json(&model, &req.variance));
    request.insert("grid".into(), json!({ "b": [b_range.0, b_range.1], "c": [c_range.0, c_range.1] }));
    request.insert("replications".into(), json!(args.replications));
    request.insert("seed".into(), json!(args.seed));

    let mut csv = String::from("b,c,power,size_product\n");
    for p in &points {
        csv.push_str(&format!("{},{},{},{}\n", p.b, p.c, p.power, p.size_product));
    }
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                p.b.to_string(),
                p.c.to_string(),
                format!("{:.6}", p.power),
                p.size_product.to_string(),
                provenance_display(p.provenance).to_string(),
            ]
        })
        .collect();
    let text = table(&["b", "c", "power", "b*c", "method"], &rows);
    let result = json!(points
        .iter()
        .map(|p| json!({
            "b": p.b,
            "c": p.c,
            "power": p.power,
            "size_product": p.size_product,
            "method": provenance_display(p.provenance),
        }))
        .collect::<Vec<_>>());
    let mut record = RunRecord::new("surface", Value::Object(request), result);
    record.seed = Some(args.seed);
    Ok(CommandOutput { record, text, csv })
}

// -------------------------------------------------------------------------

/// Exit code contract: 2 for input and domain errors, 3 for infeasible
/// requests.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible(_) => 3,
        _ => 2,
    }
}
