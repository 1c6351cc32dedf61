//! Property tests: distribution monotonicity, noncentrality structure,
//! bound ordering and sharpness, and integer-search agreement with
//! exhaustive enumeration.

mod common;

use proptest::prelude::*;
use rand::Rng;

use anova_power::bounds::{guaranteed_power, lambda_lower_bounds, lambda_min, min_effect_sum, WorstCaseInput};
use anova_power::catalog::{
    extremal_effects, plan_for, Component, DesignPoint, EffectSumKind, Mode, Param, VarianceSpec,
};
use anova_power::dist::{central_f_cdf, central_f_quantile, noncentral_f_cdf, power_from_lambda, FParams};
use anova_power::model::FactorName::{A, B, C, V};
use anova_power::model::ModelSpec;
use anova_power::sizing::{min_size_integer, searched_params, SizeRequest, TraceEntry};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_increases_in_lambda_and_df2_decreases_in_df1(
        df1 in 1.0..60.0f64,
        df2 in 2.0..300.0f64,
        lambda in 0.0..100.0f64,
    ) {
        let p = power_from_lambda(0.05, FParams::new(df1, df2, lambda).unwrap()).unwrap();
        let p_lambda = power_from_lambda(0.05, FParams::new(df1, df2, lambda + 1.0).unwrap()).unwrap();
        prop_assert!(p_lambda > p - 1e-12, "lambda step: {p} -> {p_lambda}");
        let p_df2 = power_from_lambda(0.05, FParams::new(df1, df2 + 10.0, lambda).unwrap()).unwrap();
        prop_assert!(p_df2 > p - 1e-12, "df2 step: {p} -> {p_df2}");
        let p_df1 = power_from_lambda(0.05, FParams::new(df1 + 1.0, df2, lambda).unwrap()).unwrap();
        prop_assert!(p_df1 <= p + 1e-12, "df1 step: {p} -> {p_df1}");
    }

    #[test]
    fn noncentral_cdf_monotone_in_x(
        df1 in 1.0..40.0f64,
        df2 in 2.0..200.0f64,
        lambda in 0.0..80.0f64,
        x0 in 0.01..20.0f64,
        step in 0.001..5.0f64,
    ) {
        let params = FParams::new(df1, df2, lambda).unwrap();
        let a = noncentral_f_cdf(x0, params).unwrap();
        let b = noncentral_f_cdf(x0 + step, params).unwrap();
        // The CDF maps [0, inf) into [0, 1); in floats the far tail rounds
        // up to exactly 1.
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b >= a - 1e-13, "CDF({}) = {a} > CDF({}) = {b}", x0, x0 + step);
    }

    #[test]
    fn quantile_round_trips(
        gamma in 0.001..0.999f64,
        df1 in 1.0..40.0f64,
        df2 in 2.0..200.0f64,
    ) {
        let x = central_f_quantile(gamma, df1, df2).unwrap();
        let back = central_f_cdf(x, df1, df2).unwrap();
        prop_assert!((back - gamma).abs() < 1e-9, "gamma {gamma}: back {back}");
    }

    #[test]
    fn lambda_scales_linearly_and_is_symmetric(
        scale in 0.1..10.0f64,
        seed in 0u64..1000,
    ) {
        // Single-index model: lambda is linear in the squared-effect sum and
        // invariant under permuting the effect values.
        let plan = plan_for("A x B~").unwrap();
        let design = DesignPoint::integer(&[(A, 5), (B, 3)], 2).unwrap();
        let variance = VarianceSpec::components(&[
            (Component::family(&[A, B]), 0.4),
            (Component::Error, 1.3),
        ]).unwrap();
        let mut rng = common::rng(seed);
        let mut effects: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = effects.iter().sum::<f64>() / 5.0;
        for e in &mut effects {
            *e -= mean;
        }
        let lam = plan.lambda_exact(&design, &effects, &variance).unwrap();
        let scaled: Vec<f64> = effects.iter().map(|e| e * scale).collect();
        let lam_scaled = plan.lambda_exact(&design, &scaled, &variance).unwrap();
        prop_assert!((lam_scaled - lam * scale * scale).abs() <= 1e-9 * lam_scaled.max(1.0));

        let mut permuted = effects.clone();
        permuted.rotate_left((seed % 5) as usize);
        permuted.swap(0, 3);
        let lam_perm = plan.lambda_exact(&design, &permuted, &variance).unwrap();
        prop_assert!((lam_perm - lam).abs() <= 1e-12 * lam.max(1.0));
    }

    #[test]
    fn double_index_lambda_is_slice_permutation_invariant(seed in 0u64..1000) {
        // Relabeling levels of V or A (permuting slices along an axis)
        // preserves margins and the squared sum.
        let plan = plan_for("V~ > A").unwrap();
        let design = DesignPoint::integer(&[(V, 3), (A, 4)], 2).unwrap();
        let variance = VarianceSpec::components(&[(Component::Error, 0.7)]).unwrap();
        let (v, a) = (3usize, 4usize);
        let mut rng = common::rng(seed);
        let mut effects: Vec<f64> = (0..v * a).map(|_| rng.random_range(-1.0..1.0)).collect();
        common::project_margins(&[v, a], &mut effects);
        let lam = plan.lambda_exact(&design, &effects, &variance).unwrap();

        // Swap two rows (levels of V) and two columns (levels of A).
        let mut shuffled = effects.clone();
        for i in 0..a {
            shuffled.swap(i, a + i);
        }
        for row in 0..v {
            shuffled.swap(row * a, row * a + 2);
        }
        let lam_shuffled = plan.lambda_exact(&design, &shuffled, &variance).unwrap();
        prop_assert!((lam_shuffled - lam).abs() <= 1e-12 * lam.max(1.0));
    }
}

#[test]
fn nested_raising_factors_exceed_one_and_decrease() {
    let mut prev = f64::INFINITY;
    for m in 2..40 {
        let v = min_effect_sum(EffectSumKind::Double, 1.0, &[m as f64, f64::min(40.0, m as f64)]).unwrap();
        assert!(v > 0.5, "m = {m}");
        let factor = v / 0.5;
        assert!(factor > 1.0 && factor <= prev + 1e-12);
        prev = factor;
    }
    // Triple factors likewise exceed the double ones for matching dims.
    let d = min_effect_sum(EffectSumKind::Double, 1.0, &[3.0, 5.0]).unwrap();
    let t = min_effect_sum(EffectSumKind::Triple, 1.0, &[2.0, 3.0, 5.0]).unwrap();
    assert!(t > d && d > 0.5);
}

#[test]
fn brute_force_confirms_double_index_bound() {
    // Projected-gradient minimization over zero-margin arrays, 50 restarts.
    for (v, a) in [(2usize, 2usize), (2, 3), (2, 4), (3, 2), (3, 3), (3, 4), (6, 6)] {
        let formula = min_effect_sum(EffectSumKind::Double, 1.0, &[v as f64, a as f64]).unwrap();
        let brute = common::min_effect_sum_brute_force(&[v, a], 1.0, 50, 0xBEEF + (v * 10 + a) as u64);
        assert!(
            (brute - formula).abs() < 1e-6,
            "(v, a) = ({v}, {a}): brute {brute} vs formula {formula}"
        );
    }
}

#[test]
fn bound_ordering_exhaustive_for_all_active_chain() {
    // All splittings of sigma_y^2 = 1 over the three active components at
    // resolution 0.05: flat bound <= active bound <= componentwise lambda.
    let plan = plan_for("A > B~ > C~").unwrap();
    let design = DesignPoint::integer(&[(A, 6), (B, 3), (C, 2)], 4).unwrap();
    let delta = 1.0;
    let steps = 20;
    for i in 0..=steps {
        for j in 0..=(steps - i) {
            let k = steps - i - j;
            let (x, y, z) = (i as f64 / steps as f64, j as f64 / steps as f64, k as f64 / steps as f64);
            let variance = VarianceSpec::components(&[
                (Component::family(&[A, B]), x),
                (Component::family(&[A, B, C]), y),
                (Component::Error, z),
            ])
            .unwrap();
            let (flat, refined) = lambda_lower_bounds(&plan, &design, delta, &variance).unwrap();
            let lam = lambda_min(&plan, &design, &WorstCaseInput::new(delta, variance).unwrap()).unwrap();
            assert!(flat <= refined + 1e-12 && refined <= lam + 1e-9, "({x}, {y}, {z}): {flat}, {refined}, {lam}");
        }
    }
}

#[test]
fn bound_ordering_randomized_with_inactive_components() {
    let plan = plan_for("A x B~ x C").unwrap();
    let design = DesignPoint::integer(&[(A, 4), (B, 3), (C, 2)], 3).unwrap();
    let mut rng = common::rng(97);
    for _ in 0..200 {
        let mut weights: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let variance = VarianceSpec::components(&[
            (Component::family(&[A, B]), weights[0]),
            (Component::Error, weights[1]),
            (Component::family(&[B]), weights[2]),
            (Component::family(&[B, C]), weights[3]),
            (Component::family(&[A, B, C]), weights[4]),
        ])
        .unwrap();
        if weights[0] + weights[1] < 1e-9 {
            continue;
        }
        let (flat, refined) = lambda_lower_bounds(&plan, &design, 1.0, &variance).unwrap();
        let lam = lambda_min(&plan, &design, &WorstCaseInput::new(1.0, variance).unwrap()).unwrap();
        assert!(flat <= refined + 1e-12 && refined <= lam + 1e-9, "{flat}, {refined}, {lam}");
    }
}

#[test]
fn extremal_configuration_attains_single_index_bound() {
    // The two-point vector satisfies the constraints and hits the bound.
    for a in 2..8usize {
        let eff = extremal_effects(1.0, &[a]);
        assert_eq!(eff.len(), a);
        assert!((eff.iter().sum::<f64>()).abs() < 1e-15);
        let s: f64 = eff.iter().map(|e| e * e).sum();
        let bound = min_effect_sum(EffectSumKind::Single, 1.0, &[a as f64]).unwrap();
        assert!((s - bound).abs() < 1e-15);
    }
}

// ---------------------------------------------------------------------------
// Integer search vs exhaustive enumeration
// ---------------------------------------------------------------------------

fn exhaustive_minimum(req: &SizeRequest, product_cap: u64) -> Option<(DesignPoint, f64, u64)> {
    let plan = plan_for(&req.model.formula()).unwrap();
    let searched = searched_params(&req.model);
    let minima: Vec<u64> = searched
        .iter()
        .map(|p| req.minima.iter().find(|(q, _)| q == p).map_or(2, |&(_, m)| m))
        .collect();
    let base: u64 = minima.iter().product();

    let mut best: Option<(u64, f64, Vec<u64>, DesignPoint)> = None;
    for product in base..=product_cap {
        // Every ordered factorization of `product` over the searched slots.
        let mut stack = vec![(Vec::<u64>::new(), product)];
        while let Some((prefix, rest)) = stack.pop() {
            let i = prefix.len();
            if i == searched.len() - 1 {
                if rest >= minima[i] {
                    let mut values = prefix.clone();
                    values.push(rest);
                    let mut levels = req.fixed_levels.clone();
                    let mut n = 2;
                    for (p, v) in searched.iter().zip(&values) {
                        match p {
                            Param::Level(f) => levels.push((*f, *v)),
                            Param::Reps => n = *v,
                        }
                    }
                    let design = DesignPoint::integer(&levels, n).unwrap();
                    let power = guaranteed_power(&plan, &design, &req.worst_case, req.alpha).unwrap().power;
                    if power + 1e-12 >= req.required_power {
                        let mut key: Vec<u64> = searched
                            .iter()
                            .zip(&values)
                            .filter(|(p, _)| **p != plan.exact().unwrap().pivot)
                            .map(|(_, v)| *v)
                            .collect();
                        key.extend(searched.iter().zip(&values).filter(|(p, _)| **p == plan.exact().unwrap().pivot).map(|(_, v)| *v));
                        let better = match &best {
                            None => true,
                            Some((bp, bpow, bkey, _)) => (product, -power, &key) < (*bp, -*bpow, bkey),
                        };
                        if better {
                            best = Some((product, power, key, design));
                        }
                    }
                }
            } else {
                for v in minima[i]..=rest {
                    if rest % v == 0 {
                        let mut p = prefix.clone();
                        p.push(v);
                        stack.push((p, rest / v));
                    }
                }
            }
        }
    }
    best.map(|(prod, power, _, design)| (design, power, prod))
}

#[test]
fn integer_search_agrees_with_exhaustive_enumeration() {
    #[allow(clippy::type_complexity)]
    let cases: Vec<(&str, Vec<(anova_power::model::FactorName, u64)>, VarianceSpec, f64, f64)> = vec![
        (
            "A x B~",
            vec![(A, 5)],
            VarianceSpec::components(&[(Component::family(&[A, B]), 0.2), (Component::Error, 1.0)]).unwrap(),
            1.2,
            0.8,
        ),
        (
            "A > B~ > C~",
            vec![(A, 4)],
            VarianceSpec::components(&[
                (Component::family(&[A, B]), 0.1),
                (Component::family(&[A, B, C]), 0.2),
                (Component::Error, 0.5),
            ])
            .unwrap(),
            1.0,
            0.75,
        ),
        ("V~ > A", vec![(A, 4)], VarianceSpec::components(&[(Component::Error, 0.3)]).unwrap(), 1.0, 0.85),
        ("A", vec![(A, 3)], VarianceSpec::total(1.0).unwrap(), 1.6, 0.9),
        ("(A > B) x C~", vec![(A, 4), (B, 2)], VarianceSpec::total(1.0).unwrap(), 1.5, 0.8),
    ];
    for (formula, fixed, variance, delta, p0) in cases {
        let req = SizeRequest {
            model: ModelSpec::parse(formula).unwrap(),
            alpha: 0.05,
            required_power: p0,
            worst_case: WorstCaseInput::new(delta, variance).unwrap(),
            fixed_levels: fixed,
            minima: vec![],
            mode: Mode::Integer,
        };
        let res = min_size_integer(&req).unwrap();
        let searched_product: f64 = searched_params(&req.model)
            .iter()
            .map(|&p| res.design.value(p).unwrap())
            .product();
        let cap = (2.0 * searched_product) as u64;
        let (design, power, product) = exhaustive_minimum(&req, cap.max(64)).expect("feasible design exists");
        assert_eq!(res.design, design, "{formula}: search {} vs exhaustive {}", res.design, design);
        assert!((res.power - power).abs() < 1e-12);
        // Bracket validity: the optimum's searched product lies inside.
        let (lo, hi) = res.bracket.unwrap();
        assert!(lo <= product && product <= hi, "{formula}: product {product} outside [{lo}, {hi}]");
    }
}

#[test]
fn bracket_products_appear_in_trace() {
    let req = SizeRequest {
        model: ModelSpec::parse("A x B~").unwrap(),
        alpha: 0.1,
        required_power: 0.9,
        worst_case: WorstCaseInput::new(
            7.0,
            VarianceSpec::components(&[(Component::family(&[A, B]), 0.01), (Component::Error, 8.0)]).unwrap(),
        )
        .unwrap(),
        fixed_levels: vec![(A, 15)],
        minima: vec![],
        mode: Mode::Integer,
    };
    let res = min_size_integer(&req).unwrap();
    let (lo, hi) = res.bracket.unwrap();
    let products: std::collections::BTreeSet<u64> = res
        .trace
        .iter()
        .map(|t: &TraceEntry| {
            searched_params(&req.model)
                .iter()
                .map(|&p| t.design.value(p).unwrap() as u64)
                .product()
        })
        .collect();
    for p in &products {
        assert!((lo..=hi).contains(p));
    }
    assert!(products.contains(&lo) && products.contains(&hi));
}

// ---------------------------------------------------------------------------
// Catalog rows re-derived from the strata engine
// ---------------------------------------------------------------------------

/// For every exact classification, the transcribed test geometry must agree
/// with what the balanced-design strata and their expected mean squares
/// imply: the denominator stratum's expectation equals the numerator's minus
/// the fixed-effect term, df2 is that stratum's degrees of freedom, and
/// df1 * (E(MS_A)/E(MS_den) - 1) reproduces lambda = R * S / T identically.
#[test]
fn catalog_rows_agree_with_expected_mean_squares() {
    use anova_power::catalog::{all_entries, model_components};
    use anova_power::simulate::{expected_mean_squares, Layout};

    let mut rng = common::rng(0xE5E5);
    for plan in all_entries().iter().filter(|p| p.is_exact()) {
        for _ in 0..5 {
            let levels: Vec<(anova_power::model::FactorName, u64)> = plan
                .model
                .factors()
                .iter()
                .map(|f| (f.name, rng.random_range(2..=5)))
                .collect();
            let design = DesignPoint::integer(&levels, rng.random_range(2..=4)).unwrap();
            let comps: std::collections::BTreeMap<Component, f64> = model_components(&plan.model)
                .into_iter()
                .map(|c| (c, rng.random_range(0.05..2.0)))
                .collect();
            let delta: f64 = rng.random_range(0.3..2.0);
            let effects = extremal_effects(delta, &plan.effect_dims(&design).unwrap());
            let s: f64 = effects.iter().map(|e| e * e).sum();

            let layout = Layout::new(&plan.model, &design).unwrap();
            let ems = expected_mean_squares(&plan.model, &design, &effects, &comps).unwrap();
            let ems_of = |set: anova_power::model::FactorSet| ems.iter().find(|(s, _)| *s == set).unwrap().1;

            let a_set = layout.a_stratum_set();
            let (df1, df2) = plan.degrees_of_freedom(&design).unwrap();
            let e_num = ems_of(a_set);
            let quad = layout.n_obs() as f64 / layout.cells_of(a_set) as f64 * s / df1;

            let denominator = plan.exact().unwrap().denominator;
            let (e_den, den_df) = match denominator {
                Component::Error => {
                    let full = layout
                        .factors()
                        .iter()
                        .fold(anova_power::model::FactorSet::EMPTY, |acc, &(f, _)| acc.with(f));
                    (comps[&Component::Error], layout.cells_of(full) as f64 * (design.n() - 1.0))
                }
                Component::Family(set) => (ems_of(set), layout.stratum(set).unwrap().df),
            };

            // Exactness: matching expectations under the null.
            assert!(
                (e_num - quad - e_den).abs() < 1e-10 * e_den,
                "{}: E(MS_A) - quad = {} vs E(MS_den) = {}",
                plan.model,
                e_num - quad,
                e_den
            );
            assert_eq!(den_df, df2, "{}", plan.model);

            // Moment identity reproduces the catalog noncentrality.
            let lambda_catalog = plan
                .lambda_exact(&design, &effects, &VarianceSpec::Components(comps.clone()))
                .unwrap();
            let lambda_ems = df1 * (e_num / e_den - 1.0);
            assert!(
                (lambda_catalog - lambda_ems).abs() < 1e-9 * lambda_catalog.max(1.0),
                "{}: catalog {} vs EMS {}",
                plan.model,
                lambda_catalog,
                lambda_ems
            );
        }
    }
}

/// The two catalogued approximate classifications really have no stratum
/// whose expectation matches the numerator's under the null at generic
/// component values, which is why they need the quasi-F test.
#[test]
fn approximate_models_have_no_matching_denominator() {
    use anova_power::catalog::model_components;
    use anova_power::simulate::{expected_mean_squares, Layout};
    use anova_power::model::FactorName::{A, B, C};

    let mut rng = common::rng(0xAB5E);
    for formula in ["A x B~ x C~", "(A > B~) x C~"] {
        let model = ModelSpec::parse(formula).unwrap();
        let design = DesignPoint::integer(&[(A, 3), (B, 3), (C, 3)], 2).unwrap();
        for _ in 0..3 {
            let comps: std::collections::BTreeMap<Component, f64> = model_components(&model)
                .into_iter()
                .map(|c| (c, rng.random_range(0.05..2.0)))
                .collect();
            let layout = Layout::new(&model, &design).unwrap();
            let ems = expected_mean_squares(&model, &design, &[0.0; 3], &comps).unwrap();
            let a_set = layout.a_stratum_set();
            let e_num = ems.iter().find(|(s, _)| *s == a_set).unwrap().1;
            for (set, e) in &ems {
                if *set != a_set {
                    assert!(
                        (e_num - e).abs() > 1e-6,
                        "{formula}: stratum {set} unexpectedly matches E(MS_A) = {e_num}"
                    );
                }
            }
            assert!((e_num - comps[&Component::Error]).abs() > 1e-6, "{formula}: error stratum matches");
        }
    }
}
