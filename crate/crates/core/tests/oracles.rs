//! Simulation checks against independently derived values.

use peclab::bias::{
    ec_decomposition, epc_decomposition, p_rd_polynomial_from_data, predict_naive_slope_rr,
    RatioLink,
};
use peclab::datagen::{generate_scenario, presets};
use peclab::dataset::{col, Dataset};
use peclab::model::{Distribution, ErrorModel, Link, OutcomeModel, Scenario, StructuralSpec};
use peclab::regress::{logistic_irls, ols, Design};
use peclab::rng::{sample, StreamKey};
use peclab::sim::{run_study, Method, StudyConfig};

fn normal(sd: f64) -> Distribution {
    Distribution::Normal { mean: 0.0, sd }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (
        m,
        v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0),
    )
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let cov = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (a.len() as f64 - 1.0);
    cov / (va * vb).sqrt()
}

/// X ~ N(0, 1), classical error Xep = X + N(0, 1), C and V independent noise.
fn classical_world(name: &str, outcome: OutcomeModel, n: usize, seed: u64) -> Scenario {
    Scenario {
        name: name.into(),
        outcome,
        exposure_error: ErrorModel::linear(0.0, 1.0, normal(1.0)),
        confounder_error: ErrorModel::none(),
        v_error: ErrorModel::none(),
        x_model: StructuralSpec::from_noise(normal(1.0)),
        c_model: StructuralSpec::from_noise(normal(1.0)),
        v_model: StructuralSpec::from_noise(normal(1.0)),
        n,
        replications: 1,
        seed,
    }
}

#[test]
fn sample_moments_match_each_family() {
    let n = 1_000_000;
    let families = [
        Distribution::Normal { mean: 1.5, sd: 2.0 },
        Distribution::Gamma {
            shape: 1.0,
            scale: 1.0,
        },
        Distribution::Gamma {
            shape: 2.0,
            scale: 1.0,
        },
        Distribution::Gamma {
            shape: 2.0,
            scale: 0.5,
        },
        Distribution::RoundedUniform { lo: -1.0, hi: 1.0 },
    ];
    for (tag, dist) in families.iter().enumerate() {
        let draws = sample(dist, StreamKey::new(11, 0, tag as u32), n).unwrap();
        let (m, v) = mean_var(&draws);
        let m4 = draws.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n as f64;
        let se_mean = (dist.variance() / n as f64).sqrt();
        let se_var = ((m4 - v * v) / n as f64).sqrt();
        assert!(
            (m - dist.mean()).abs() < 4.0 * se_mean,
            "{dist:?}: mean {m}"
        );
        assert!(
            (v - dist.variance()).abs() < 4.0 * se_var,
            "{dist:?}: variance {v}"
        );
    }
}

#[test]
fn rounded_uniform_has_quarter_half_quarter_masses() {
    let n = 1_000_000;
    let draws = sample(
        &Distribution::RoundedUniform { lo: -1.0, hi: 1.0 },
        StreamKey::new(12, 3, 4),
        n,
    )
    .unwrap();
    for (value, mass) in [(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)] {
        let freq = draws.iter().filter(|d| **d == value).count() as f64 / n as f64;
        assert!((freq - mass).abs() < 0.002, "{value}: {freq}");
    }
}

#[test]
fn distinct_tags_give_uncorrelated_streams() {
    let n = 100_000;
    let a = sample(&normal(1.0), StreamKey::new(13, 0, 1), n).unwrap();
    let b = sample(&normal(1.0), StreamKey::new(13, 0, 2), n).unwrap();
    let c = sample(&normal(1.0), StreamKey::new(13, 1, 1), n).unwrap();
    assert!(correlation(&a, &b).abs() < 0.01);
    assert!(correlation(&a, &c).abs() < 0.01);
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn replications_share_marginal_distributions() {
    let mut s = presets::table3(1);
    s.seed = 14;
    let r0 = generate_scenario(&s, 0).unwrap();
    let r1 = generate_scenario(&s, 1).unwrap();
    let n = s.n as f64;
    let critical = 1.628 * (2.0 / n).sqrt();
    for c in [col::X, col::Y] {
        let a = r0.column(c).unwrap();
        let b = r1.column(c).unwrap();
        assert_ne!(a, b);
        assert!(ks(a, b) < critical, "{c}: {}", ks(a, b));
    }
}

fn slope_and_residual_correlation(x: &[f64], y: &[f64]) -> (f64, f64) {
    let design = Design::from_columns(&[("x", x)]).unwrap();
    let fit = ols(&design, y).unwrap();
    let fitted = design.predict(&fit.coefficients);
    let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    (fit.coefficients[1], correlation(x, &resid))
}

#[test]
fn error_wiring_matches_the_error_kind() {
    let mut s = classical_world("berkson", OutcomeModel::default(), 100_000, 15);
    s.exposure_error = ErrorModel::berkson(normal(0.8));
    let d = generate_scenario(&s, 0).unwrap();
    let (slope, rho) =
        slope_and_residual_correlation(d.column(col::XEP).unwrap(), d.column(col::X).unwrap());
    assert!((slope - 1.0).abs() < 0.01, "{slope}");
    assert!(rho.abs() < 0.02);

    s.exposure_error = ErrorModel::linear(0.5, 2.0, normal(0.8));
    let d = generate_scenario(&s, 0).unwrap();
    let (slope, rho) =
        slope_and_residual_correlation(d.column(col::X).unwrap(), d.column(col::XEP).unwrap());
    assert!((slope - 2.0).abs() < 0.01, "{slope}");
    assert!(rho.abs() < 0.02);
}

#[test]
fn lambda_matches_calibration_slope() {
    // γ₁ = 2, Var(X) = Var(U) = 1: λ = 2/5.
    let mut s = classical_world("lambda", OutcomeModel::default(), 100_000, 16);
    s.exposure_error = ErrorModel::linear(0.0, 2.0, normal(1.0));
    let d = generate_scenario(&s, 0).unwrap();
    let fit = ols(
        &Design::from_dataset(&d, &[col::XEP]).unwrap(),
        d.column(col::X).unwrap(),
    )
    .unwrap();
    assert!(
        (fit.coefficients[1] - 0.4).abs() < 0.01,
        "{}",
        fit.coefficients[1]
    );
}

/// Poisson regression by Newton's method: consistent for the slope of a
/// log-linear mean, which is what a log-link Bernoulli outcome has.
fn log_linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    let (mut a, mut b) = (ybar.ln(), 0.0);
    for _ in 0..50 {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (xi, yi) in x.iter().zip(y) {
            let mu = (a + b * xi).exp();
            g0 += yi - mu;
            g1 += (yi - mu) * xi;
            h00 += mu;
            h01 += mu * xi;
            h11 += mu * xi * xi;
        }
        let det = h00 * h11 - h01 * h01;
        let da = (h11 * g0 - h01 * g1) / det;
        let db = (h00 * g1 - h01 * g0) / det;
        a += da;
        b += db;
        if da.abs().max(db.abs()) < 1e-12 {
            break;
        }
    }
    b
}

#[test]
fn log_link_naive_slope_follows_p_rr() {
    // Gaussian X and U with equal variances: P_RR = λ = 0.5.
    let outcome = OutcomeModel {
        link: Link::Log,
        beta0: -3.0,
        beta_x: 0.3,
        ..OutcomeModel::default()
    };
    let d = generate_scenario(&classical_world("log", outcome, 200_000, 17), 0).unwrap();
    let predicted = predict_naive_slope_rr(0.3, 1.0, 0.5, RatioLink::Log).unwrap();
    assert!(!predicted.approximate);
    let fitted = log_linear_slope(d.column(col::XEP).unwrap(), d.column(col::Y).unwrap());
    assert!(
        (fitted - predicted.coefficient).abs() < 0.02,
        "{fitted} vs {}",
        predicted.coefficient
    );
}

#[test]
fn logit_rare_outcome_naive_slope_is_close_to_prediction() {
    let outcome = OutcomeModel {
        link: Link::Logit,
        beta0: -6.0,
        beta_x: 0.3,
        ..OutcomeModel::default()
    };
    let d = generate_scenario(&classical_world("logit", outcome, 1_000_000, 18), 0).unwrap();
    let predicted = predict_naive_slope_rr(0.3, 1.0, 0.5, RatioLink::Logit).unwrap();
    assert!(predicted.approximate);
    let fit = logistic_irls(
        &Design::from_dataset(&d, &[col::XEP]).unwrap(),
        d.column(col::Y).unwrap(),
    )
    .unwrap();
    let fitted = fit.coefficients[1];
    assert!(
        (fitted - predicted.coefficient).abs() < 0.1 * fitted.abs(),
        "{fitted} vs {}",
        predicted.coefficient
    );
}

#[test]
fn quadratic_polynomial_factor_matches_fitted_r_squared() {
    let n = 100_000;
    let x = sample(&normal(1.0), StreamKey::new(19, 0, 0), n).unwrap();
    let u = sample(&normal(1.0), StreamKey::new(19, 0, 1), n).unwrap();
    let xep: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + b).collect();
    let f = p_rd_polynomial_from_data(2, &x, &xep).unwrap();
    assert!((f.closed_form - f.r_squared).abs() < 0.01, "{f:?}");
}

#[test]
fn naive_quadratic_coefficient_is_attenuated_by_the_squared_factor() {
    // Y = X + 0.5 X² + N(0, 1); with Var(X) = Var(U) = 1, P_RD₂ / γ₁² = 1/4.
    let outcome = OutcomeModel {
        beta_x: 1.0,
        beta_x2: 0.5,
        noise: normal(1.0),
        ..OutcomeModel::default()
    };
    let d = generate_scenario(&classical_world("quadratic", outcome, 200_000, 20), 0).unwrap();
    let xep = d.column(col::XEP).unwrap();
    let sq: Vec<f64> = xep.iter().map(|v| v * v).collect();
    let fit = ols(
        &Design::from_columns(&[("Xep", xep), ("Xep2", &sq)]).unwrap(),
        d.column(col::Y).unwrap(),
    )
    .unwrap();
    let x = d.column(col::X).unwrap();
    let factor = p_rd_polynomial_from_data(2, x, xep).unwrap().closed_form;
    let predicted = factor * 0.5;
    assert!(
        (fit.coefficients[2] - predicted).abs() < 0.1 * predicted,
        "{} vs {predicted}",
        fit.coefficients[2]
    );
}

fn linear_world_with_v(seed: u64) -> Dataset {
    let outcome = OutcomeModel {
        beta0: 1.0,
        beta_x: 1.0,
        beta_c: -0.5,
        noise: normal(1.0),
        ..OutcomeModel::default()
    };
    let mut s = classical_world("no-v-loading", outcome, 100_000, seed);
    s.v_model = StructuralSpec::from_noise(Distribution::Gamma {
        shape: 2.0,
        scale: 1.0,
    });
    s.confounder_error = ErrorModel::linear(0.7, 0.89, normal(0.5));
    generate_scenario(&s, 0).unwrap()
}

#[test]
fn epc_without_v_loading_reduces_to_attenuation() {
    let d = linear_world_with_v(21);
    let e = epc_decomposition(&d, &[]).unwrap();
    // λ = Var(X) / (Var(X) + Var(U)) = 0.5 and β₁ = 1.
    assert!((e.predicted - 0.5).abs() < 0.01, "{e:?}");
    assert!(e.gamma2_star.abs() < 0.01);
    assert!(e.remainder.abs() < 0.01);
}

#[test]
fn ec_term_vanishes_when_exposure_is_independent_of_the_confounder() {
    let d = linear_world_with_v(22);
    let e = ec_decomposition(&d, &[col::CEP]).unwrap();
    assert!(e.ec_term.abs() < 0.01, "{e:?}");
    assert!((e.predicted - e.direct).abs() < 0.01);
}

#[test]
fn ec_term_is_larger_without_the_aligned_v_path() {
    // The latent linear outcome of the Table 5 worlds.
    let term = |a: f64| {
        let mut s = presets::table5(a, 0.0);
        s.outcome.link = Link::Identity;
        s.n = 100_000;
        s.seed = 23;
        let d = generate_scenario(&s, 0).unwrap();
        ec_decomposition(&d, &[col::CEP]).unwrap()
    };
    let baseline = term(0.0);
    let aligned = term(0.5);
    assert!(baseline.ec_term.abs() > 0.01, "{baseline:?}");
    assert!(
        aligned.ec_term.abs() < baseline.ec_term.abs(),
        "{aligned:?} vs {baseline:?}"
    );
}

#[test]
fn regression_calibration_recovers_the_exposure_effect() {
    let mut s = presets::table3(1);
    s.n = 100_000;
    s.replications = 1;
    s.seed = 24;
    let config = StudyConfig::default();
    let results = run_study(&s, &[Method::Naive1, Method::Rc], &config).unwrap();
    let naive = results[0].mean;
    let rc = results[1].mean;
    assert!((rc - 1.0).abs() < 0.03, "{rc}");
    assert!((naive - 0.55).abs() < 0.03, "{naive}");
}

#[test]
fn logistic_fit_recovers_the_generating_exposure_coefficient() {
    // About 28 events per 10⁴ rows, so a single fit has a standard deviation
    // near 0.4; judge the average over replications instead.
    let mut s = presets::table4(2);
    s.seed = 25;
    let coefs: Vec<f64> = (0..200)
        .map(|r| {
            let d = generate_scenario(&s, r).unwrap();
            let design = Design::from_dataset(&d, &[col::X, col::C, col::V]).unwrap();
            logistic_irls(&design, d.column(col::Y).unwrap())
                .unwrap()
                .coefficients[1]
        })
        .collect();
    let (m, var) = mean_var(&coefs);
    let se = (var / coefs.len() as f64).sqrt();
    assert!((m - 0.3).abs() < 4.0 * se, "{m} ± {se}");
}

fn lag1_autocorrelation(v: &[f64]) -> f64 {
    let (m, var) = mean_var(v);
    let cov = v.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / (v.len() as f64 - 1.0);
    cov / var
}

#[test]
fn replication_estimates_are_serially_uncorrelated() {
    let mut s = presets::table3(1);
    s.n = 500;
    s.replications = 4000;
    s.seed = 26;
    let r = run_study(&s, &[Method::Naive1], &StudyConfig::default()).unwrap();
    let rho = lag1_autocorrelation(&r[0].estimates);
    assert!(rho.abs() < 0.05, "{rho}");
}

#[test]
fn independent_seeds_agree_within_monte_carlo_error() {
    let run = |seed| {
        let mut s = presets::table3(2);
        s.n = 2000;
        s.seed = seed;
        run_study(&s, &[Method::Naive1, Method::Rc], &StudyConfig::default()).unwrap()
    };
    let a = run(27);
    let b = run(28);
    for (x, y) in a.iter().zip(&b) {
        let se = (x.mc_sd.powi(2) + y.mc_sd.powi(2)).sqrt() / (x.replications as f64).sqrt();
        assert!(
            (x.mean - y.mean).abs() < 4.0 * se,
            "{:?}: {} vs {}",
            x.method,
            x.mean,
            y.mean
        );
    }
}
