//! Dataset generation: scenario worlds with continuous covariates and the
//! small discrete worlds used for exchangeability-probability tables.

pub mod presets;

use thiserror::Error;

use crate::dataset::{col, DataError, Dataset, Provenance};
use crate::model::{
    validate_scenario, Distribution, ErrorKind, ErrorModel, Link, Scenario, Violation,
};
use crate::regress::expit;
use crate::rng::{sample, Stream, StreamKey};

/// Stream tags, one per independently drawn quantity.
mod tag {
    pub const V: u32 = 1;
    pub const C: u32 = 2;
    pub const X: u32 = 3;
    pub const OUTCOME_NOISE: u32 = 4;
    pub const OUTCOME_DRAW: u32 = 5;
    pub const EXPOSURE_ERROR: u32 = 6;
    pub const CONFOUNDER_ERROR: u32 = 7;
    pub const V_ERROR: u32 = 8;
    pub const DISCRETE_X: u32 = 16;
    pub const DISCRETE_U: u32 = 17;
    pub const DISCRETE_W: u32 = 18;
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("invalid scenario: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("scenario `{0}` does not have a logit outcome")]
    NotBinary(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

fn draws(dist: &Distribution, key: StreamKey, n: usize) -> Vec<f64> {
    sample(dist, key, n).expect("distribution validated with the scenario")
}

/// Turns the structural draw of a variable into `(truth, measured)`. Under
/// Berkson error the structural model produces the measured value.
fn apply_error(
    err: &ErrorModel,
    draw: Vec<f64>,
    v: &[f64],
    noise: Vec<f64>,
) -> (Vec<f64>, Vec<f64>) {
    match err.kind {
        ErrorKind::None => (draw.clone(), draw),
        ErrorKind::PureBerkson => {
            let truth = draw
                .iter()
                .zip(v)
                .zip(&noise)
                .map(|((m, vi), u)| m + err.gamma_v * vi + u)
                .collect();
            (truth, draw)
        }
        ErrorKind::NonBerksonLinear | ErrorKind::SharedV => {
            let measured = draw
                .iter()
                .zip(v)
                .zip(&noise)
                .map(|((t, vi), u)| err.gamma0 + err.gamma1 * t + err.gamma_v * vi + u)
                .collect();
            (draw, measured)
        }
    }
}

/// Generates replication `replication` of a scenario. Variables are drawn in
/// dependency order V, C, X, Y, then the error-prone versions; each quantity
/// has its own stream so the draws are stable under reordering.
pub fn generate_scenario(s: &Scenario, replication: usize) -> Result<Dataset, GenerateError> {
    let violations = validate_scenario(s);
    if !violations.is_empty() {
        return Err(GenerateError::Invalid(violations));
    }
    let n = s.n;
    let key = |t| StreamKey::new(s.seed, replication as u64, t);

    let v_draw: Vec<f64> = draws(&s.v_model.noise, key(tag::V), n)
        .into_iter()
        .map(|e| s.v_model.intercept + e)
        .collect();
    let v_noise = draws(&s.v_error.noise, key(tag::V_ERROR), n);
    let zeros = vec![0.0; n];
    let (v, vep) = apply_error(&s.v_error, v_draw, &zeros, v_noise);

    let c_draw: Vec<f64> = draws(&s.c_model.noise, key(tag::C), n)
        .into_iter()
        .zip(&v)
        .map(|(e, vi)| s.c_model.intercept + s.c_model.coef_v * vi + e)
        .collect();
    let c_noise = draws(&s.confounder_error.noise, key(tag::CONFOUNDER_ERROR), n);
    let (c, cep) = apply_error(&s.confounder_error, c_draw, &v, c_noise);

    let x_draw: Vec<f64> = draws(&s.x_model.noise, key(tag::X), n)
        .into_iter()
        .zip(c.iter().zip(&v))
        .map(|(e, (ci, vi))| {
            s.x_model.intercept + s.x_model.coef_c * ci + s.x_model.coef_v * vi + e
        })
        .collect();
    let x_noise = draws(&s.exposure_error.noise, key(tag::EXPOSURE_ERROR), n);
    let (x, xep) = apply_error(&s.exposure_error, x_draw, &v, x_noise);

    let o = &s.outcome;
    let noise = draws(&o.noise, key(tag::OUTCOME_NOISE), n);
    let eta = (0..n).map(|i| o.linear_predictor(x[i], c[i], v[i]) + noise[i]);
    let y: Vec<f64> = match o.link {
        Link::Identity => eta.collect(),
        Link::Logit | Link::Log => {
            let mut stream = Stream::new(key(tag::OUTCOME_DRAW));
            eta.map(|e| {
                let p = if o.link == Link::Logit {
                    expit(e)
                } else {
                    e.exp().min(1.0)
                };
                f64::from(u8::from(stream.bernoulli(p)))
            })
            .collect()
        }
    };

    let mut d = Dataset::new()
        .with(col::X, x)?
        .with(col::XEP, xep)?
        .with(col::C, c)?
        .with(col::CEP, cep)?
        .with(col::V, v)?
        .with(col::VEP, vep)?
        .with(col::Y, y)?;
    d.provenance = Some(Provenance {
        scenario: s.name.clone(),
        replication: replication as u64,
        seed: s.seed,
    });
    Ok(d)
}

/// As [`generate_scenario`], restricted to Bernoulli outcomes with the noise
/// inside the logistic linear predictor.
pub fn generate_binary_scenario(
    s: &Scenario,
    replication: usize,
) -> Result<Dataset, GenerateError> {
    if s.outcome.link != Link::Logit {
        return Err(GenerateError::NotBinary(s.name.clone()));
    }
    generate_scenario(s, replication)
}

/// How each three-point component is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreePointLaw {
    /// `round(Uniform(-1, 1))`: masses (1/4, 1/2, 1/4).
    Rounded,
    /// Equal masses on {-1, 0, 1}. Does not reproduce the published Table 2.
    DiscreteUniform,
}

impl ThreePointLaw {
    pub fn variance(self) -> f64 {
        match self {
            ThreePointLaw::Rounded => 0.5,
            ThreePointLaw::DiscreteUniform => 2.0 / 3.0,
        }
    }

    fn draw(self, stream: &mut Stream) -> f64 {
        match self {
            ThreePointLaw::Rounded => {
                stream.draw(&Distribution::RoundedUniform { lo: -1.0, hi: 1.0 })
            }
            ThreePointLaw::DiscreteUniform => stream.below(3) as f64 - 1.0,
        }
    }
}

/// A world on integer supports built from sums of independent three-point
/// components:
///
/// * exposure: `center + Σ x_terms components`
/// * error `U`: `Σ u_terms components`
/// * outcome noise `W`: `Σ w_terms components`
/// * `Y = beta0 + beta1 X + w_scale W`
///
/// With classical error `Xep = X + U`; with Berkson error the exposure sum is
/// the measured value and `X = Xep + U`. Because all components are
/// exchangeable, `E[X | Xep]` is exactly linear under classical error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteWorld {
    pub center: f64,
    pub x_terms: u32,
    pub u_terms: u32,
    pub w_terms: u32,
    pub beta0: f64,
    pub beta1: f64,
    pub w_scale: f64,
    pub berkson: bool,
    pub law: ThreePointLaw,
}

impl DiscreteWorld {
    /// X ∈ {8, 9, 10}, U, W ∈ {-1, 0, 1}, Y = 0.1 X + 0.1 W, Xep = X + U.
    pub fn table2() -> Self {
        DiscreteWorld {
            center: 9.0,
            x_terms: 1,
            u_terms: 1,
            w_terms: 1,
            beta0: 0.0,
            beta1: 0.1,
            w_scale: 0.1,
            berkson: false,
            law: ThreePointLaw::Rounded,
        }
    }

    /// Variance of the structurally generated exposure (X, or Xep if Berkson).
    pub fn var_exposure(&self) -> f64 {
        f64::from(self.x_terms) * self.law.variance()
    }

    pub fn var_error(&self) -> f64 {
        f64::from(self.u_terms) * self.law.variance()
    }
}

pub fn generate_discrete_world(
    w: &DiscreteWorld,
    n: usize,
    seed: u64,
) -> Result<Dataset, GenerateError> {
    let key = |t| StreamKey::new(seed, 0, t);
    let sum_of =
        |stream: &mut Stream, terms: u32| (0..terms).map(|_| w.law.draw(stream)).sum::<f64>();
    let mut xs = Stream::new(key(tag::DISCRETE_X));
    let mut us = Stream::new(key(tag::DISCRETE_U));
    let mut ws = Stream::new(key(tag::DISCRETE_W));

    let mut x = Vec::with_capacity(n);
    let mut xep = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let base = w.center + sum_of(&mut xs, w.x_terms);
        let u = sum_of(&mut us, w.u_terms);
        let noise = sum_of(&mut ws, w.w_terms);
        let (xi, xepi) = if w.berkson {
            (base + u, base)
        } else {
            (base, base + u)
        };
        x.push(xi);
        xep.push(xepi);
        y.push(w.beta0 + w.beta1 * xi + w.w_scale * noise);
    }
    let mut d = Dataset::new()
        .with(col::X, x)?
        .with(col::XEP, xep)?
        .with(col::Y, y)?;
    d.provenance = Some(Provenance {
        scenario: "discrete-world".into(),
        replication: 0,
        seed,
    });
    Ok(d)
}

/// The Table 2 world: X = round(U(8,10)), W, U = round(U(-1,1)),
/// Y = 0.1 X + 0.1 W, Xep = X + U. Only X, Xep and Y are present.
pub fn generate_table2_world(n: usize, seed: u64) -> Result<Dataset, GenerateError> {
    generate_table2_world_with(n, seed, ThreePointLaw::Rounded)
}

pub fn generate_table2_world_with(
    n: usize,
    seed: u64,
    law: ThreePointLaw,
) -> Result<Dataset, GenerateError> {
    let world = DiscreteWorld {
        law,
        ..DiscreteWorld::table2()
    };
    let mut d = generate_discrete_world(&world, n, seed)?;
    if let Some(p) = d.provenance.as_mut() {
        p.scenario = "table2-world".into();
    }
    Ok(d)
}
