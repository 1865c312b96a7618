//! Domain types shared by every other module: distributions, outcome and
//! measurement-error models, scenarios and effect estimates.

mod format;

use std::fmt;

pub use format::{parse_scenario, write_scenario, ScenarioParseError};

/// A univariate distribution family with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Normal {
        mean: f64,
        sd: f64,
    },
    Gamma {
        shape: f64,
        scale: f64,
    },
    /// `round(Uniform(lo, hi))`. With integer endpoints two apart this is the
    /// three-point law (1/4, 1/2, 1/4).
    RoundedUniform {
        lo: f64,
        hi: f64,
    },
    PointMass(f64),
}

impl Distribution {
    pub const fn standard_normal() -> Self {
        Distribution::Normal { mean: 0.0, sd: 1.0 }
    }

    pub const fn zero() -> Self {
        Distribution::PointMass(0.0)
    }

    /// Checks the parameter domain. Returns a description of the first problem.
    pub fn check(&self) -> Result<(), String> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("{what} must be finite"))
            }
        };
        match *self {
            Distribution::Normal { mean, sd } => {
                finite(mean, "mean")?;
                finite(sd, "sd")?;
                if sd < 0.0 {
                    return Err("sd must be ≥ 0".into());
                }
            }
            Distribution::Gamma { shape, scale } => {
                finite(shape, "shape")?;
                finite(scale, "scale")?;
                if shape <= 0.0 {
                    return Err("shape must be > 0".into());
                }
                if scale <= 0.0 {
                    return Err("scale must be > 0".into());
                }
            }
            Distribution::RoundedUniform { lo, hi } => {
                finite(lo, "lo")?;
                finite(hi, "hi")?;
                if lo >= hi {
                    return Err("lo must be < hi".into());
                }
            }
            Distribution::PointMass(c) => finite(c, "point mass")?,
        }
        Ok(())
    }

    pub fn is_discrete(&self) -> bool {
        matches!(
            self,
            Distribution::RoundedUniform { .. } | Distribution::PointMass(_)
        )
    }

    /// Atoms and their probabilities for the discrete families, `None` otherwise.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match *self {
            Distribution::PointMass(c) => Some(vec![(c, 1.0)]),
            Distribution::RoundedUniform { lo, hi } => {
                let width = hi - lo;
                let first = lo.round() as i64;
                let last = hi.round() as i64;
                let atoms = (first..=last)
                    .filter_map(|k| {
                        let k = k as f64;
                        let a = (k - 0.5).max(lo);
                        let b = (k + 0.5).min(hi);
                        (b > a).then(|| (k, (b - a) / width))
                    })
                    .collect();
                Some(atoms)
            }
            _ => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Normal { mean, .. } => mean,
            Distribution::Gamma { shape, scale } => shape * scale,
            Distribution::PointMass(c) => c,
            Distribution::RoundedUniform { .. } => self.atom_moments().0,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Distribution::Normal { sd, .. } => sd * sd,
            Distribution::Gamma { shape, scale } => shape * scale * scale,
            Distribution::PointMass(_) => 0.0,
            Distribution::RoundedUniform { .. } => self.atom_moments().1,
        }
    }

    fn atom_moments(&self) -> (f64, f64) {
        let atoms = self.atoms().unwrap_or_default();
        let mean: f64 = atoms.iter().map(|(v, p)| v * p).sum();
        let var = atoms.iter().map(|(v, p)| p * (v - mean).powi(2)).sum();
        (mean, var)
    }

    /// Density for the continuous families; `None` for discrete ones.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        match *self {
            Distribution::Normal { mean, sd } => Some(normal_pdf(x, mean, sd)),
            Distribution::Gamma { shape, scale } => Some(if x <= 0.0 {
                0.0
            } else {
                let ln = (shape - 1.0) * x.ln()
                    - x / scale
                    - statrs::function::gamma::ln_gamma(shape)
                    - shape * scale.ln();
                ln.exp()
            }),
            _ => None,
        }
    }
}

pub(crate) fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Normal { mean, sd } => write!(f, "normal({mean}, {sd})"),
            Distribution::Gamma { shape, scale } => write!(f, "gamma({shape}, {scale})"),
            Distribution::RoundedUniform { lo, hi } => write!(f, "rounded_uniform({lo}, {hi})"),
            Distribution::PointMass(c) => write!(f, "point_mass({c})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    Identity,
    Logit,
    Log,
}

/// `Y = beta0 + beta_x X + beta_x2 X² + beta_c C + beta_v V + noise` on the
/// scale of the link. For `Logit` and `Log` the noise enters the linear
/// predictor and Y is a Bernoulli draw at the resulting mean (capped at 1 for
/// `Log`).
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModel {
    pub link: Link,
    pub beta0: f64,
    pub beta_x: f64,
    pub beta_x2: f64,
    pub beta_c: f64,
    pub beta_v: f64,
    pub noise: Distribution,
}

impl OutcomeModel {
    pub fn linear_predictor(&self, x: f64, c: f64, v: f64) -> f64 {
        self.beta0 + self.beta_x * x + self.beta_x2 * x * x + self.beta_c * c + self.beta_v * v
    }
}

impl Default for OutcomeModel {
    fn default() -> Self {
        OutcomeModel {
            link: Link::Identity,
            beta0: 0.0,
            beta_x: 0.0,
            beta_x2: 0.0,
            beta_c: 0.0,
            beta_v: 0.0,
            noise: Distribution::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    /// Measured value equals the truth.
    None,
    /// `measured = gamma0 + gamma1 * truth + noise`.
    NonBerksonLinear,
    /// `truth = measured + gamma_v * V + noise`; the structural model generates
    /// the measured value.
    PureBerkson,
    /// `measured = gamma0 + gamma1 * truth + gamma_v * V + noise`.
    SharedV,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorModel {
    pub kind: ErrorKind,
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma_v: f64,
    pub noise: Distribution,
}

impl ErrorModel {
    pub fn none() -> Self {
        ErrorModel {
            kind: ErrorKind::None,
            gamma0: 0.0,
            gamma1: 1.0,
            gamma_v: 0.0,
            noise: Distribution::zero(),
        }
    }

    pub fn linear(gamma0: f64, gamma1: f64, noise: Distribution) -> Self {
        ErrorModel {
            kind: ErrorKind::NonBerksonLinear,
            gamma0,
            gamma1,
            gamma_v: 0.0,
            noise,
        }
    }

    pub fn shared_v(gamma0: f64, gamma1: f64, gamma_v: f64, noise: Distribution) -> Self {
        ErrorModel {
            kind: ErrorKind::SharedV,
            gamma0,
            gamma1,
            gamma_v,
            noise,
        }
    }

    pub fn berkson(noise: Distribution) -> Self {
        ErrorModel {
            kind: ErrorKind::PureBerkson,
            gamma0: 0.0,
            gamma1: 1.0,
            gamma_v: 0.0,
            noise,
        }
    }

    fn violations(&self, field: &str, calibration: bool, out: &mut Vec<Violation>) {
        if let Err(e) = self.noise.check() {
            out.push(Violation::new(format!("{field}.noise"), e));
        } else if self.noise.mean().abs() > 1e-12 {
            out.push(Violation::new(
                format!("{field}.noise"),
                "noise must have mean 0",
            ));
        }
        for (name, v) in [
            ("gamma0", self.gamma0),
            ("gamma1", self.gamma1),
            ("gamma_v", self.gamma_v),
        ] {
            if !v.is_finite() {
                out.push(Violation::new(format!("{field}.{name}"), "must be finite"));
            }
        }
        match self.kind {
            ErrorKind::None => {
                if *self != ErrorModel::none() {
                    out.push(Violation::new(field, "kind none takes no error parameters"));
                }
            }
            ErrorKind::NonBerksonLinear | ErrorKind::SharedV => {
                if self.kind == ErrorKind::NonBerksonLinear && self.gamma_v != 0.0 {
                    out.push(Violation::new(
                        format!("{field}.gamma_v"),
                        "non_berkson_linear has no V loading; use shared_v",
                    ));
                }
                if calibration && self.gamma1 == 0.0 {
                    out.push(Violation::new(
                        format!("{field}.gamma1"),
                        "gamma1 must be nonzero",
                    ));
                }
            }
            ErrorKind::PureBerkson => {
                if self.gamma0 != 0.0 || self.gamma1 != 1.0 {
                    out.push(Violation::new(
                        field,
                        "pure_berkson requires gamma0 = 0 and gamma1 = 1",
                    ));
                }
            }
        }
    }
}

impl Default for ErrorModel {
    fn default() -> Self {
        ErrorModel::none()
    }
}

/// `value = intercept + coef_c * C + coef_v * V + noise`. For C the `coef_c`
/// term must be zero and for V both coefficients must be zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralSpec {
    pub intercept: f64,
    pub coef_c: f64,
    pub coef_v: f64,
    pub noise: Distribution,
}

impl StructuralSpec {
    pub fn from_noise(noise: Distribution) -> Self {
        StructuralSpec {
            intercept: 0.0,
            coef_c: 0.0,
            coef_v: 0.0,
            noise,
        }
    }
}

impl Default for StructuralSpec {
    fn default() -> Self {
        StructuralSpec::from_noise(Distribution::zero())
    }
}

/// A complete data-generating process.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub outcome: OutcomeModel,
    pub exposure_error: ErrorModel,
    pub confounder_error: ErrorModel,
    pub v_error: ErrorModel,
    pub x_model: StructuralSpec,
    pub c_model: StructuralSpec,
    pub v_model: StructuralSpec,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
}

/// One invariant violation found by [`validate_scenario`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Returns every invariant violation; empty iff the scenario can be generated.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    validate_scenario_with(s, false)
}

/// As [`validate_scenario`]; with `calibration` set, non-Berkson errors must
/// also be invertible.
pub fn validate_scenario_with(s: &Scenario, calibration: bool) -> Vec<Violation> {
    let mut out = Vec::new();
    if s.n < 1 {
        out.push(Violation::new("scenario.n", "n must be ≥ 1"));
    }
    if s.replications < 1 {
        out.push(Violation::new(
            "scenario.replications",
            "replications must be ≥ 1",
        ));
    }

    let o = &s.outcome;
    for (name, v) in [
        ("beta0", o.beta0),
        ("beta_x", o.beta_x),
        ("beta_x2", o.beta_x2),
        ("beta_c", o.beta_c),
        ("beta_v", o.beta_v),
    ] {
        if !v.is_finite() {
            out.push(Violation::new(format!("outcome.{name}"), "must be finite"));
        }
    }
    if let Err(e) = o.noise.check() {
        out.push(Violation::new("outcome.noise", e));
    } else if o.noise.mean().abs() > 1e-12 {
        out.push(Violation::new("outcome.noise", "noise must have mean 0"));
    }

    s.exposure_error
        .violations("exposure_error", calibration, &mut out);
    s.confounder_error
        .violations("confounder_error", calibration, &mut out);
    s.v_error.violations("v_error", calibration, &mut out);
    if s.v_error.gamma_v != 0.0 {
        out.push(Violation::new("v_error.gamma_v", "V cannot load on itself"));
    }

    for (field, spec) in [
        ("x_model", &s.x_model),
        ("c_model", &s.c_model),
        ("v_model", &s.v_model),
    ] {
        if let Err(e) = spec.noise.check() {
            out.push(Violation::new(format!("{field}.noise"), e));
        }
        for (name, v) in [
            ("intercept", spec.intercept),
            ("coef_c", spec.coef_c),
            ("coef_v", spec.coef_v),
        ] {
            if !v.is_finite() {
                out.push(Violation::new(format!("{field}.{name}"), "must be finite"));
            }
        }
    }
    if s.c_model.coef_c != 0.0 {
        out.push(Violation::new(
            "c_model.coef_c",
            "C cannot depend on itself",
        ));
    }
    if s.v_model.coef_c != 0.0 || s.v_model.coef_v != 0.0 {
        out.push(Violation::new(
            "v_model",
            "V is exogenous; coef_c and coef_v must be 0",
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimand {
    RiskDifference,
    RiskRatio,
}

impl Estimand {
    pub fn label(self) -> &'static str {
        match self {
            Estimand::RiskDifference => "RD",
            Estimand::RiskRatio => "RR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Naive,
    Calibrated,
    GComputation,
    IpwGps,
    Oracle,
}

/// A point estimate of an exposure contrast of size `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectEstimate {
    pub estimand: Estimand,
    pub delta: f64,
    pub method: EstimatorKind,
    pub value: f64,
    /// Dispersion across Monte Carlo replications, when aggregated.
    pub mc_sd: Option<f64>,
    /// Sampling standard error of a single-sample estimate, when available.
    pub std_error: Option<f64>,
}

impl EffectEstimate {
    pub fn new(estimand: Estimand, delta: f64, method: EstimatorKind, value: f64) -> Self {
        EffectEstimate {
            estimand,
            delta,
            method,
            value,
            mc_sd: None,
            std_error: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::presets;

    #[test]
    fn table3_scenario_one_is_valid() {
        let s = presets::table3(1);
        assert!(validate_scenario_with(&s, true).is_empty());
    }

    #[test]
    fn zero_rows_is_reported() {
        let mut s = presets::table3(1);
        s.n = 0;
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].message, "n must be ≥ 1");
    }

    #[test]
    fn zero_slope_only_matters_for_calibration() {
        let mut s = presets::table3(1);
        s.exposure_error =
            ErrorModel::linear(0.0, 0.0, Distribution::Normal { mean: 0.0, sd: 0.3 });
        assert!(validate_scenario(&s).is_empty());
        let v = validate_scenario_with(&s, true);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].message, "gamma1 must be nonzero");
    }

    #[test]
    fn non_zero_mean_noise_is_rejected() {
        let mut s = presets::table3(1);
        s.outcome.noise = Distribution::Gamma {
            shape: 1.0,
            scale: 1.0,
        };
        let v = validate_scenario(&s);
        assert!(v.iter().any(|v| v.field == "outcome.noise"));
    }

    #[test]
    fn rounded_uniform_three_point_law() {
        let d = Distribution::RoundedUniform { lo: -1.0, hi: 1.0 };
        assert_eq!(
            d.atoms().unwrap(),
            vec![(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)]
        );
        assert_eq!(d.mean(), 0.0);
        assert_eq!(d.variance(), 0.5);
        let x = Distribution::RoundedUniform { lo: 8.0, hi: 10.0 };
        assert_eq!(x.mean(), 9.0);
        assert_eq!(x.variance(), 0.5);
    }

    #[test]
    fn gamma_density_integrates_to_one() {
        let d = Distribution::Gamma {
            shape: 2.0,
            scale: 1.0,
        };
        let h = 1e-3;
        let total: f64 = (1..40_000).map(|i| d.pdf(i as f64 * h).unwrap() * h).sum();
        assert!((total - 1.0).abs() < 1e-6);
    }
}
