use peclab::bias::{figure2_grid, lambda_closed_form, p_rd_identity};
use peclab::datagen::{generate_discrete_world, DiscreteWorld, ThreePointLaw};
use peclab::exchprob::empirical_table;
use peclab::model::{
    parse_scenario, validate_scenario, write_scenario, Distribution, ErrorModel, Link,
    OutcomeModel, Scenario, StructuralSpec,
};
use peclab::regress::{ols, Design};
use proptest::prelude::*;

fn coef() -> impl Strategy<Value = f64> {
    -10.0..10.0f64
}

fn noise() -> impl Strategy<Value = Distribution> {
    prop_oneof![
        (0.0..5.0f64).prop_map(|sd| Distribution::Normal { mean: 0.0, sd }),
        Just(Distribution::zero()),
        (1i32..4).prop_map(|k| Distribution::RoundedUniform {
            lo: -f64::from(k),
            hi: f64::from(k),
        }),
    ]
}

fn any_distribution() -> impl Strategy<Value = Distribution> {
    prop_oneof![
        (coef(), 0.0..5.0f64).prop_map(|(mean, sd)| Distribution::Normal { mean, sd }),
        (0.5..5.0f64, 0.1..3.0f64).prop_map(|(shape, scale)| Distribution::Gamma { shape, scale }),
        coef().prop_map(Distribution::PointMass),
    ]
}

fn error_model() -> impl Strategy<Value = ErrorModel> {
    prop_oneof![
        Just(ErrorModel::none()),
        (coef(), 0.1..3.0f64, noise()).prop_map(|(g0, g1, u)| ErrorModel::linear(g0, g1, u)),
        (coef(), 0.1..3.0f64, coef(), noise())
            .prop_map(|(g0, g1, gv, u)| ErrorModel::shared_v(g0, g1, gv, u)),
        noise().prop_map(ErrorModel::berkson),
    ]
}

/// V cannot load on its own measurement.
fn without_v_loading(e: ErrorModel) -> ErrorModel {
    if e.gamma_v != 0.0 {
        ErrorModel::linear(e.gamma0, e.gamma1, e.noise)
    } else {
        e
    }
}

fn scenario() -> impl Strategy<Value = Scenario> {
    let outcome = (
        prop_oneof![Just(Link::Identity), Just(Link::Logit), Just(Link::Log)],
        prop::array::uniform5(coef()),
        noise(),
    )
        .prop_map(|(link, b, noise)| OutcomeModel {
            link,
            beta0: b[0],
            beta_x: b[1],
            beta_x2: b[2],
            beta_c: b[3],
            beta_v: b[4],
            noise,
        });
    let structural = (coef(), coef(), coef(), any_distribution()).prop_map(
        |(intercept, coef_c, coef_v, noise)| StructuralSpec {
            intercept,
            coef_c,
            coef_v,
            noise,
        },
    );
    (
        "[a-z][a-z0-9_-]{0,12}",
        outcome,
        (
            error_model(),
            error_model(),
            error_model().prop_map(without_v_loading),
        ),
        structural,
        (coef(), coef(), any_distribution(), any_distribution()),
        (1usize..100_000, 1usize..2000, any::<u64>()),
    )
        .prop_map(
            |(name, outcome, errors, x_model, (ci, cv, cn, vn), (n, replications, seed))| {
                Scenario {
                    name,
                    outcome,
                    exposure_error: errors.0,
                    confounder_error: errors.1,
                    v_error: errors.2,
                    x_model,
                    c_model: StructuralSpec {
                        intercept: ci,
                        coef_c: 0.0,
                        coef_v: cv,
                        noise: cn,
                    },
                    v_model: StructuralSpec {
                        intercept: 0.0,
                        ..StructuralSpec::from_noise(vn)
                    },
                    n,
                    replications,
                    seed,
                }
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scenario_files_round_trip(s in scenario()) {
        let text = write_scenario(&s);
        let parsed = parse_scenario(&text).unwrap();
        prop_assert_eq!(&parsed, &s, "{}", text);
    }

    #[test]
    fn generated_scenarios_are_valid(s in scenario()) {
        let violations = validate_scenario(&s);
        prop_assert!(violations.is_empty(), "{:?}", violations);
    }

    #[test]
    fn r_squared_lies_in_unit_interval(
        rows in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64, -100.0..100.0f64), 5..60)
    ) {
        let a: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let b: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
        if let Ok(fit) = ols(&Design::from_columns(&[("a", &a), ("b", &b)]).unwrap(), &y) {
            prop_assert!((0.0..=1.0).contains(&fit.r_squared), "{}", fit.r_squared);
        }
    }

    #[test]
    fn ols_is_scale_equivariant(
        rows in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64), 6..60),
        k in prop_oneof![0.01..0.5f64, 2.0..50.0f64],
    ) {
        let a: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let b: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let scaled: Vec<f64> = a.iter().map(|v| v * k).collect();
        let base = ols(&Design::from_columns(&[("a", &a), ("b", &b)]).unwrap(), &y);
        let rescaled = ols(&Design::from_columns(&[("a", &scaled), ("b", &b)]).unwrap(), &y);
        if let (Ok(base), Ok(rescaled)) = (base, rescaled) {
            let expected = base.coefficients[1] / k;
            let scale = expected.abs().max(base.coefficients.iter().fold(0.0f64, |m, c| m.max(c.abs())) / k);
            prop_assert!((rescaled.coefficients[1] - expected).abs() <= 1e-10 * scale.max(1e-300),
                "{} vs {}", rescaled.coefficients[1], expected);
        }
    }

    #[test]
    fn p_rd_decreases_in_error_variance(
        g in prop_oneof![-3.0..-0.1f64, 0.1..3.0f64],
        vx in 0.1..5.0f64,
        vu in 0.0..5.0f64,
        extra in 0.01..5.0f64,
    ) {
        let low = p_rd_identity(g, vx, vu).unwrap();
        let high = p_rd_identity(g, vx, vu + extra).unwrap();
        prop_assert!(high < low);
        prop_assert!((0.0..=1.0).contains(&low));
    }

    #[test]
    fn p_rd_is_lambda_times_gamma1(
        g in prop_oneof![-3.0..-0.1f64, 0.1..3.0f64],
        vx in 0.0..5.0f64,
        vu in 0.01..5.0f64,
    ) {
        let p = p_rd_identity(g, vx, vu).unwrap();
        let lg = lambda_closed_form(g, vx, vu).unwrap() * g;
        prop_assert!((p - lg).abs() <= 1e-10 * p.abs().max(f64::MIN_POSITIVE));
    }

    #[test]
    fn figure2_points_are_on_their_lines(g in 0.1..5.0f64, steps in 1usize..200) {
        for (gamma, p, lambda) in figure2_grid(&[g], steps) {
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!((lambda - p / gamma).abs() <= 1e-10 * lambda.abs().max(1.0));
        }
    }

    #[test]
    fn empirical_rows_sum_to_one(
        x_terms in 1u32..3,
        u_terms in 0u32..3,
        berkson in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let world = DiscreteWorld {
            x_terms,
            u_terms,
            berkson,
            law: ThreePointLaw::Rounded,
            ..DiscreteWorld::table2()
        };
        let d = generate_discrete_world(&world, 2000, seed).unwrap();
        let t = empirical_table(&d).unwrap();
        for &xep in &t.xep_support {
            prop_assert!((t.row_sum(xep) - 1.0).abs() < 1e-9);
        }
        for (_, _, _, p) in t.cells() {
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
