//! The simulation worlds behind Tables 3–5.
//!
//! Common pieces: V ~ Gamma(2, 1), C ~ Gamma(1, 1) (plus `a V` in Table 5),
//! Vep = 1.3 + 1.12 V + N(0, 0.12²), outcome noise N(0, 1), 10 000 rows and
//! 250 replications. Seeds are left at 0; callers derive their own.

use crate::model::{Distribution, ErrorModel, Link, OutcomeModel, Scenario, StructuralSpec};

/// `(a, b)` for scenarios #1–#3 of Tables 3 and 4: `a` is the V → X effect,
/// `b` the direct V → Y effect.
pub const TABLE34_PARAMS: [(f64, f64); 3] = [(0.1, 0.0), (0.0, -0.73), (0.1, -0.73)];

/// `(a, b)` rows of Table 5: `a` is the V → C effect, `b` the direct V → Y
/// effect.
pub const TABLE5_ROWS: [(f64, f64); 7] = [
    (0.0, 0.0),
    (0.5, 0.0),
    (-0.5, 0.0),
    (0.0, 0.5),
    (0.0, -0.5),
    (0.5, -0.5),
    (-0.5, 0.5),
];

fn normal(sd: f64) -> Distribution {
    Distribution::Normal { mean: 0.0, sd }
}

fn base(name: String, outcome: OutcomeModel) -> Scenario {
    Scenario {
        name,
        outcome,
        exposure_error: ErrorModel::none(),
        confounder_error: ErrorModel::linear(0.7, 0.89, normal(0.15)),
        v_error: ErrorModel::linear(1.3, 1.12, normal(0.12)),
        x_model: StructuralSpec::default(),
        c_model: StructuralSpec::from_noise(Distribution::Gamma {
            shape: 1.0,
            scale: 1.0,
        }),
        v_model: StructuralSpec::from_noise(Distribution::Gamma {
            shape: 2.0,
            scale: 1.0,
        }),
        n: 10_000,
        replications: 250,
        seed: 0,
    }
}

/// X ~ N(0.3 C + a V + 5, 0.5²) and Xep = X + 0.23 V + N(0, 0.3²).
fn with_table34_exposure(mut s: Scenario, a: f64) -> Scenario {
    s.x_model = StructuralSpec {
        intercept: 5.0,
        coef_c: 0.3,
        coef_v: a,
        noise: normal(0.5),
    };
    s.exposure_error = ErrorModel::shared_v(0.0, 1.0, 0.23, normal(0.3));
    s
}

fn scenario_params(k: usize) -> (f64, f64) {
    assert!((1..=3).contains(&k), "scenarios are numbered 1 to 3");
    TABLE34_PARAMS[k - 1]
}

/// Continuous outcome: Y = 5 + X − 1.23 C + b V + N(0, 1).
pub fn table3(k: usize) -> Scenario {
    let (a, b) = scenario_params(k);
    let outcome = OutcomeModel {
        link: Link::Identity,
        beta0: 5.0,
        beta_x: 1.0,
        beta_c: -1.23,
        beta_v: b,
        noise: normal(1.0),
        ..OutcomeModel::default()
    };
    with_table34_exposure(base(format!("table3-s{k}"), outcome), a)
}

fn binary_outcome(b: f64) -> OutcomeModel {
    OutcomeModel {
        link: Link::Logit,
        beta0: -6.0,
        beta_x: 0.3,
        beta_c: -1.23,
        beta_v: b,
        noise: normal(1.0),
        ..OutcomeModel::default()
    }
}

/// Binary outcome: Y ~ Bernoulli(expit(−6 + 0.3 X − 1.23 C + b V + N(0, 1))).
pub fn table4(k: usize) -> Scenario {
    let (a, b) = scenario_params(k);
    with_table34_exposure(base(format!("table4-s{k}"), binary_outcome(b)), a)
}

/// Table 4's outcome with C = Gamma(1, 1) + a V, X ~ N(0.3 C + 5, 0.5²),
/// Xep = X − 0.05 V + U and Cep = 0.7 + 0.89 C + 0.56 V + U^C.
pub fn table5(a: f64, b: f64) -> Scenario {
    let mut s = base(format!("table5-a{a}-b{b}"), binary_outcome(b));
    s.c_model.coef_v = a;
    s.x_model = StructuralSpec {
        intercept: 5.0,
        coef_c: 0.3,
        coef_v: 0.0,
        noise: normal(0.5),
    };
    s.exposure_error = ErrorModel::shared_v(0.0, 1.0, -0.05, normal(0.3));
    s.confounder_error = ErrorModel::shared_v(0.7, 0.89, 0.56, normal(0.15));
    s
}
