//! Effect estimators: naive outcome regression, δ-shift g-computation and
//! inverse probability weighting with a normal generalized propensity score.

use thiserror::Error;

use crate::dataset::{col, DataError, Dataset};
use crate::model::{normal_pdf, EffectEstimate, Estimand, EstimatorKind, Link};
use crate::regress::{expit, logistic_irls, ols, wls, Design, RegressionError, RegressionFit};

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("delta must be > 0, got {0}")]
    BadDelta(f64),
    #[error("{0} link is not supported here")]
    UnsupportedLink(&'static str),
    #[error("treatment `{0}` has zero residual variance given the covariates")]
    DegenerateTreatment(String),
    #[error("risk ratio undefined: baseline mean risk is {0}")]
    ZeroBaseline(f64),
    #[error("truncation quantile {0} is outside (0, 1]")]
    BadQuantile(f64),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error(transparent)]
    Data(#[from] DataError),
}

fn link_name(link: Link) -> &'static str {
    match link {
        Link::Identity => "identity",
        Link::Logit => "logit",
        Link::Log => "log",
    }
}

fn check_delta(delta: f64) -> Result<(), EstimateError> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(EstimateError::BadDelta(delta))
    }
}

fn columns<'a>(exposure: &'a str, adjust: &[&'a str]) -> Vec<&'a str> {
    let mut cols = Vec::with_capacity(adjust.len() + 1);
    cols.push(exposure);
    cols.extend_from_slice(adjust);
    cols
}

/// Exposure coefficient of a linear regression of Y on the exposure and
/// adjustment columns, times δ.
pub fn naive_regression_aee(
    d: &Dataset,
    exposure: &str,
    adjust: &[&str],
    link: Link,
    delta: f64,
) -> Result<EffectEstimate, EstimateError> {
    check_delta(delta)?;
    if link != Link::Identity {
        return Err(EstimateError::UnsupportedLink(link_name(link)));
    }
    let design = Design::from_dataset(d, &columns(exposure, adjust))?;
    let fit = ols(&design, d.column(col::Y)?)?;
    Ok(EffectEstimate::new(
        Estimand::RiskDifference,
        delta,
        EstimatorKind::Naive,
        fit.coefficients[1] * delta,
    ))
}

/// Mean predicted outcome with the exposure shifted by δ (`shifted`) and as
/// observed (`observed`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GContrast {
    pub shifted: f64,
    pub observed: f64,
    pub delta: f64,
}

impl GContrast {
    pub fn risk_difference(&self) -> f64 {
        self.shifted - self.observed
    }

    pub fn risk_ratio(&self) -> f64 {
        self.shifted / self.observed
    }

    pub fn estimate(&self, estimand: Estimand) -> Result<EffectEstimate, EstimateError> {
        let value = match estimand {
            Estimand::RiskDifference => self.risk_difference(),
            Estimand::RiskRatio => {
                if self.observed <= 0.0 {
                    return Err(EstimateError::ZeroBaseline(self.observed));
                }
                self.risk_ratio()
            }
        };
        Ok(EffectEstimate::new(
            estimand,
            self.delta,
            EstimatorKind::GComputation,
            value,
        ))
    }
}

/// Fits the outcome model (logistic for `Logit`, linear for `Identity`) and
/// averages predictions over the sample with the exposure at `observed + δ`
/// and at `observed`.
pub fn g_computation_contrast(
    d: &Dataset,
    exposure: &str,
    adjust: &[&str],
    delta: f64,
    link: Link,
) -> Result<GContrast, EstimateError> {
    check_delta(delta)?;
    let mut design = Design::from_dataset(d, &columns(exposure, adjust))?;
    let y = d.column(col::Y)?;
    let (fit, inverse): (RegressionFit, fn(f64) -> f64) = match link {
        Link::Identity => (ols(&design, y)?, |eta| eta),
        Link::Logit => (logistic_irls(&design, y)?, expit),
        Link::Log => return Err(EstimateError::UnsupportedLink("log")),
    };
    let mean_response = |design: &Design| {
        let eta = design.predict(&fit.coefficients);
        eta.iter().map(|&e| inverse(e)).sum::<f64>() / eta.len() as f64
    };
    let observed = mean_response(&design);
    for v in design.column_mut(1) {
        *v += delta;
    }
    let shifted = mean_response(&design);
    Ok(GContrast {
        shifted,
        observed,
        delta,
    })
}

pub fn g_computation(
    d: &Dataset,
    exposure: &str,
    adjust: &[&str],
    delta: f64,
    estimand: Estimand,
    link: Link,
) -> Result<EffectEstimate, EstimateError> {
    g_computation_contrast(d, exposure, adjust, delta, link)?.estimate(estimand)
}

/// Normal, homoscedastic model for a continuous treatment given covariates.
#[derive(Debug, Clone)]
pub struct GpsModel {
    pub mean_fit: RegressionFit,
    pub sigma: f64,
    pub marginal_mean: f64,
    pub marginal_sd: f64,
    design: Design,
}

impl GpsModel {
    /// Conditional density of the observed treatment at each row.
    pub fn conditional_density(&self, treatment: &[f64]) -> Vec<f64> {
        let mu = self.design.predict(&self.mean_fit.coefficients);
        treatment
            .iter()
            .zip(&mu)
            .map(|(&t, &m)| normal_pdf(t, m, self.sigma))
            .collect()
    }

    pub fn marginal_density(&self, treatment: &[f64]) -> Vec<f64> {
        treatment
            .iter()
            .map(|&t| normal_pdf(t, self.marginal_mean, self.marginal_sd))
            .collect()
    }
}

pub fn fit_gps(
    d: &Dataset,
    treatment: &str,
    covariates: &[&str],
) -> Result<GpsModel, EstimateError> {
    let t = d.column(treatment)?;
    let design = Design::from_dataset(d, covariates)?;
    let mean_fit = ols(&design, t)?;
    let sigma = mean_fit.residual_variance.sqrt();
    let n = t.len() as f64;
    let marginal_mean = t.iter().sum::<f64>() / n;
    let marginal_sd =
        (t.iter().map(|v| (v - marginal_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    // Relative to the treatment's own spread; an exact fit leaves only rounding.
    let spread_ok = marginal_sd > 0.0 && sigma > 1e-12 * marginal_sd;
    if !spread_ok {
        return Err(EstimateError::DegenerateTreatment(treatment.into()));
    }
    Ok(GpsModel {
        mean_fit,
        sigma,
        marginal_mean,
        marginal_sd,
        design,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpwOptions {
    /// Multiply by the marginal treatment density.
    pub stabilize: bool,
    /// Cap weights at this upper quantile; `None` leaves them untouched.
    pub truncate_quantile: Option<f64>,
}

impl Default for IpwOptions {
    fn default() -> Self {
        IpwOptions {
            stabilize: true,
            truncate_quantile: None,
        }
    }
}

/// Inverse-density weights for the observed treatment values.
pub fn gps_weights(
    model: &GpsModel,
    treatment: &[f64],
    options: IpwOptions,
) -> Result<Vec<f64>, EstimateError> {
    let cond = model.conditional_density(treatment);
    let mut w: Vec<f64> = if options.stabilize {
        model
            .marginal_density(treatment)
            .iter()
            .zip(&cond)
            .map(|(m, c)| m / c)
            .collect()
    } else {
        cond.iter().map(|c| 1.0 / c).collect()
    };
    if let Some(q) = options.truncate_quantile {
        if !(q > 0.0 && q <= 1.0) {
            return Err(EstimateError::BadQuantile(q));
        }
        let mut sorted = w.clone();
        sorted.sort_by(f64::total_cmp);
        let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        let cap = sorted[k - 1];
        for v in &mut w {
            *v = v.min(cap);
        }
    }
    if let Some(i) = w.iter().position(|v| !v.is_finite() || *v <= 0.0) {
        return Err(RegressionError::BadWeight {
            index: i,
            value: w[i],
        }
        .into());
    }
    Ok(w)
}

/// Weighted slope of Y on the treatment under GPS weights, times δ.
pub fn ipw_gps_aee(
    d: &Dataset,
    treatment: &str,
    covariates: &[&str],
    delta: f64,
    options: IpwOptions,
) -> Result<EffectEstimate, EstimateError> {
    check_delta(delta)?;
    let model = fit_gps(d, treatment, covariates)?;
    let t = d.column(treatment)?;
    let w = gps_weights(&model, t, options)?;
    let fit = wls(
        &Design::from_columns(&[(treatment, t)])?,
        d.column(col::Y)?,
        &w,
    )?;
    Ok(EffectEstimate::new(
        Estimand::RiskDifference,
        delta,
        EstimatorKind::IpwGps,
        fit.coefficients[1] * delta,
    ))
}
