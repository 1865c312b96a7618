//! Monte Carlo studies: generate, calibrate and estimate per replication, then
//! aggregate in replication order.

mod published;
mod reproduce;

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::bias::BiasError;
use crate::calibrate::{
    apply_calibration, fit_calibration, Calibration, CalibrationError, Condition,
};
use crate::datagen::{generate_scenario, GenerateError};
use crate::dataset::{col, DataError, Dataset};
use crate::estimate::{
    g_computation_contrast, ipw_gps_aee, naive_regression_aee, EstimateError, IpwOptions,
};
use crate::exchprob::ExchProbError;
use crate::model::{validate_scenario_with, Estimand, Link, Scenario, Violation};

pub use published::{
    Published, TABLE2, TABLE3, TABLE4, TABLE5, WORKED_AEE_10_9, WORKED_AEE_11_9, WORKED_GAMMA0,
    WORKED_GAMMA1, WORKED_P_RD, WORKED_RC_AEE,
};
pub use reproduce::{reproduce, Report, ReportRow, ReproduceOptions, Table, DEFAULT_SEED};

/// An estimator applied to one replication's data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Linear regression of Y on (Xep, Cep).
    Naive1,
    /// Linear regression of Y on (Xep, Cep, Vep).
    Naive2,
    /// Linear regression of Y on the calibrated (X_RC, C_RC, V_RC).
    Rc,
    /// IPW with the GPS of X given (C, V).
    IpwX,
    /// IPW with the GPS of X_RC given (C_RC, V_RC).
    IpwRc,
    /// G-computation on the truth, adjusting for C and V.
    GcompXCV,
    /// G-computation on the truth, adjusting for C only.
    GcompXC,
    /// G-computation on Xep adjusting for Cep.
    GcompNaive1,
    /// G-computation on Xep adjusting for Cep and Vep.
    GcompNaive2,
    /// G-computation on X_RC adjusting for C_RC and V_RC.
    GcompRc,
}

const NAIVE1: &[&str] = &[col::CEP];
const NAIVE2: &[&str] = &[col::CEP, col::VEP];
const CALIBRATED: &[&str] = &[col::C_RC, col::V_RC];
const TRUE_CV: &[&str] = &[col::C, col::V];
const TRUE_C: &[&str] = &[col::C];

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Naive1,
        Method::Naive2,
        Method::Rc,
        Method::IpwX,
        Method::IpwRc,
        Method::GcompXCV,
        Method::GcompXC,
        Method::GcompNaive1,
        Method::GcompNaive2,
        Method::GcompRc,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::Naive1 => "naive1",
            Method::Naive2 => "naive2",
            Method::Rc => "rc",
            Method::IpwX => "ipw_x",
            Method::IpwRc => "ipw_rc",
            Method::GcompXCV => "gcomp_x_cv",
            Method::GcompXC => "gcomp_x_c",
            Method::GcompNaive1 => "gcomp_naive1",
            Method::GcompNaive2 => "gcomp_naive2",
            Method::GcompRc => "gcomp_rc",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.id() == s)
    }

    fn columns(self) -> (&'static str, &'static [&'static str]) {
        match self {
            Method::Naive1 | Method::GcompNaive1 => (col::XEP, NAIVE1),
            Method::Naive2 | Method::GcompNaive2 => (col::XEP, NAIVE2),
            Method::Rc | Method::IpwRc | Method::GcompRc => (col::X_RC, CALIBRATED),
            Method::IpwX | Method::GcompXCV => (col::X, TRUE_CV),
            Method::GcompXC => (col::X, TRUE_C),
        }
    }

    pub fn needs_calibration(self) -> bool {
        matches!(self, Method::Rc | Method::IpwRc | Method::GcompRc)
    }

    /// Estimands the method reports, in output order.
    pub fn estimands(self) -> &'static [Estimand] {
        match self {
            Method::GcompXCV
            | Method::GcompXC
            | Method::GcompNaive1
            | Method::GcompNaive2
            | Method::GcompRc => &[Estimand::RiskDifference, Estimand::RiskRatio],
            _ => &[Estimand::RiskDifference],
        }
    }
}

/// The methods of Table 3 for identity links and of Table 4 for logit links.
pub fn default_methods(link: Link) -> Vec<Method> {
    match link {
        Link::Identity => vec![
            Method::Naive1,
            Method::Naive2,
            Method::Rc,
            Method::IpwX,
            Method::IpwRc,
        ],
        Link::Logit | Link::Log => {
            vec![
                Method::GcompXCV,
                Method::GcompNaive1,
                Method::GcompNaive2,
                Method::GcompRc,
            ]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyConfig {
    /// Exposure contrast.
    pub delta: f64,
    pub ipw: IpwOptions,
    /// Refit the calibration models in every replication; otherwise fit once
    /// on replication 0 and reuse.
    pub refit_calibration: bool,
    /// Worker threads; `None` uses the available parallelism.
    pub jobs: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            delta: 1.0,
            ipw: IpwOptions::default(),
            refit_calibration: true,
            jobs: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    ExchProb(#[from] ExchProbError),
    #[error(transparent)]
    Bias(#[from] BiasError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("no methods requested")]
    NoMethods,
    #[error("replication {index} failed: {cause}")]
    Replication { index: usize, cause: StepError },
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub scenario: String,
    pub method: Method,
    pub estimand: Estimand,
    pub mean: f64,
    pub mc_sd: f64,
    pub replications: usize,
    pub runtime_ms: u128,
    /// One estimate per replication, in replication order.
    pub estimates: Vec<f64>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every method on one dataset, flattening estimands in method order.
pub fn estimate_all(
    d: &Dataset,
    link: Link,
    methods: &[Method],
    calibration: Option<&Calibration>,
    config: &StudyConfig,
) -> Result<Vec<f64>, StepError> {
    let calibrated;
    let data = match calibration {
        Some(cal) => {
            calibrated = apply_calibration(cal, d)?;
            &calibrated
        }
        None => d,
    };
    let mut out = Vec::new();
    for &m in methods {
        let (exposure, adjust) = m.columns();
        match m {
            Method::Naive1 | Method::Naive2 | Method::Rc => {
                out.push(naive_regression_aee(data, exposure, adjust, link, config.delta)?.value);
            }
            Method::IpwX | Method::IpwRc => {
                out.push(ipw_gps_aee(data, exposure, adjust, config.delta, config.ipw)?.value);
            }
            _ => {
                let c = g_computation_contrast(data, exposure, adjust, config.delta, link)?;
                out.push(c.risk_difference());
                out.push(c.risk_ratio());
            }
        }
    }
    Ok(out)
}

fn replication(
    s: &Scenario,
    index: usize,
    methods: &[Method],
    fixed: Option<&Calibration>,
    needs_calibration: bool,
    config: &StudyConfig,
) -> Result<Vec<f64>, StepError> {
    let d = generate_scenario(s, index)?;
    let refit;
    let cal = match (needs_calibration, fixed) {
        (false, _) => None,
        (true, Some(c)) => Some(c),
        (true, None) => {
            refit = fit_calibration(&d, Condition::Two, &[])?;
            Some(&refit)
        }
    };
    estimate_all(&d, s.outcome.link, methods, cal, config)
}

/// Runs `s.replications` replications of every method. Results come back in
/// replication order whatever the thread count, so output is deterministic.
pub fn run_study(
    s: &Scenario,
    methods: &[Method],
    config: &StudyConfig,
) -> Result<Vec<StudyResult>, SimError> {
    if methods.is_empty() {
        return Err(SimError::NoMethods);
    }
    let needs_calibration = methods.iter().any(|m| m.needs_calibration());
    let violations = validate_scenario_with(s, needs_calibration);
    if !violations.is_empty() {
        return Err(SimError::Invalid(violations));
    }
    let start = Instant::now();

    let fixed = if needs_calibration && !config.refit_calibration {
        let d = generate_scenario(s, 0).map_err(|e| SimError::Replication {
            index: 0,
            cause: e.into(),
        })?;
        Some(
            fit_calibration(&d, Condition::Two, &[]).map_err(|e| SimError::Replication {
                index: 0,
                cause: e.into(),
            })?,
        )
    } else {
        None
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = config.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| SimError::Pool(e.to_string()))?;
    let per_rep: Vec<Result<Vec<f64>, StepError>> = pool.install(|| {
        (0..s.replications)
            .into_par_iter()
            .map(|i| replication(s, i, methods, fixed.as_ref(), needs_calibration, config))
            .collect()
    });
    let mut rows = Vec::with_capacity(per_rep.len());
    for (index, r) in per_rep.into_iter().enumerate() {
        rows.push(r.map_err(|cause| SimError::Replication { index, cause })?);
    }
    let runtime_ms = start.elapsed().as_millis();

    let mut results = Vec::new();
    let mut k = 0;
    for &method in methods {
        for &estimand in method.estimands() {
            let estimates: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let (mean, mc_sd) = mean_sd(&estimates);
            results.push(StudyResult {
                scenario: s.name.clone(),
                method,
                estimand,
                mean,
                mc_sd,
                replications: s.replications,
                runtime_ms,
                estimates,
            });
            k += 1;
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::presets;

    fn small(mut s: Scenario, reps: usize, n: usize) -> Scenario {
        s.replications = reps;
        s.n = n;
        s.seed = 5;
        s
    }

    #[test]
    fn method_ids_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.id()), Some(m));
        }
        assert_eq!(Method::parse("nope"), None);
    }

    #[test]
    fn single_replication_has_zero_sd() {
        let s = small(presets::table3(1), 1, 2000);
        let r = run_study(&s, &[Method::Naive1], &StudyConfig::default()).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].mc_sd, 0.0);
        assert_eq!(r[0].mean, r[0].estimates[0]);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let s = small(presets::table3(2), 6, 1500);
        let methods = default_methods(Link::Identity);
        let one = StudyConfig {
            jobs: Some(1),
            ..StudyConfig::default()
        };
        let four = StudyConfig {
            jobs: Some(4),
            ..StudyConfig::default()
        };
        let a = run_study(&s, &methods, &one).unwrap();
        let b = run_study(&s, &methods, &four).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.estimates, y.estimates);
        }
    }

    #[test]
    fn gcomp_reports_both_estimands() {
        let s = small(presets::table4(1), 2, 3000);
        let r = run_study(&s, &[Method::GcompXCV], &StudyConfig::default()).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].estimand, Estimand::RiskDifference);
        assert_eq!(r[1].estimand, Estimand::RiskRatio);
    }

    #[test]
    fn failures_name_the_replication() {
        // Linear naive regression is not defined for a logit outcome.
        let s = small(presets::table4(1), 2, 100);
        let err = run_study(&s, &[Method::Naive1], &StudyConfig::default()).unwrap_err();
        assert!(
            matches!(err, SimError::Replication { index: 0, .. }),
            "{err}"
        );
        assert!(matches!(
            run_study(&s, &[], &StudyConfig::default()),
            Err(SimError::NoMethods)
        ));
    }

    #[test]
    fn fixed_calibration_is_supported() {
        let s = small(presets::table3(3), 3, 2000);
        let cfg = StudyConfig {
            refit_calibration: false,
            ..StudyConfig::default()
        };
        let r = run_study(&s, &[Method::Rc], &cfg).unwrap();
        assert!((r[0].mean - 1.0).abs() < 0.1);
    }
}
