//! Bias factors relating the naive effect of a mismeasured exposure to the
//! true effect, and plug-in decompositions of the naive coefficient.

use std::fmt;

use thiserror::Error;

use crate::dataset::{col, DataError, Dataset};
use crate::fmt::sig;
use crate::regress::{ols, Design, RegressionError, RegressionFit};

#[derive(Debug, Error)]
pub enum BiasError {
    #[error("degenerate error model: {0}")]
    Degenerate(String),
    #[error("gamma1 must be nonzero")]
    ZeroSlope,
    #[error("{name} = {value} is outside {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error(transparent)]
    Data(#[from] DataError),
}

fn check_variances(var_x: f64, var_u: f64) -> Result<(), BiasError> {
    if !(var_x >= 0.0 && var_x.is_finite()) {
        return Err(BiasError::Domain {
            name: "var_x",
            value: var_x,
            domain: "[0, ∞)",
        });
    }
    if !(var_u >= 0.0 && var_u.is_finite()) {
        return Err(BiasError::Domain {
            name: "var_u",
            value: var_u,
            domain: "[0, ∞)",
        });
    }
    Ok(())
}

fn measured_variance(gamma1: f64, var_x: f64, var_u: f64) -> Result<f64, BiasError> {
    check_variances(var_x, var_u)?;
    let denom = gamma1 * gamma1 * var_x + var_u;
    if denom <= 0.0 {
        return Err(BiasError::Degenerate("γ₁²·Var(X) + Var(U) is zero".into()));
    }
    Ok(denom)
}

/// Attenuation factor `γ₁ Var(X) / (γ₁² Var(X) + Var(U))` for
/// `Xep = γ₀ + γ₁ X + U`: the slope of X on Xep.
pub fn lambda_closed_form(gamma1: f64, var_x: f64, var_u: f64) -> Result<f64, BiasError> {
    Ok(gamma1 * var_x / measured_variance(gamma1, var_x, var_u)?)
}

/// `γ₁² Var(X) / (γ₁² Var(X) + Var(U))`, which equals `λ γ₁` and the R² of Xep
/// on X.
pub fn p_rd_identity(gamma1: f64, var_x: f64, var_u: f64) -> Result<f64, BiasError> {
    Ok(gamma1 * gamma1 * var_x / measured_variance(gamma1, var_x, var_u)?)
}

/// Range of the ratio AEE(Xep)/AEE(X) on the risk-difference scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateBounds {
    /// `p_rd / γ₁`.
    pub ratio: f64,
    pub lower: f64,
    pub upper: f64,
}

/// The ratio `p_rd / γ₁` and its range as `p_rd` sweeps `[0, 1]`: `[0, 1/γ₁]`
/// for increasing errors, `[1/γ₁, 0]` for decreasing ones.
pub fn surrogate_bounds(p_rd: f64, gamma1: f64) -> Result<SurrogateBounds, BiasError> {
    if gamma1 == 0.0 || !gamma1.is_finite() {
        return Err(BiasError::ZeroSlope);
    }
    if !(0.0..=1.0).contains(&p_rd) {
        return Err(BiasError::Domain {
            name: "p_rd",
            value: p_rd,
            domain: "[0, 1]",
        });
    }
    let edge = 1.0 / gamma1;
    Ok(SurrogateBounds {
        ratio: p_rd / gamma1,
        lower: edge.min(0.0),
        upper: edge.max(0.0),
    })
}

/// Links on which a naive log-scale coefficient is predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioLink {
    Log,
    /// Holds only approximately, for rare outcomes and small effects.
    Logit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioPrediction {
    pub coefficient: f64,
    pub approximate: bool,
}

/// Predicted naive log-scale coefficient `(p_rr / γ₁) β₁`.
pub fn predict_naive_slope_rr(
    beta1: f64,
    gamma1: f64,
    p_rr: f64,
    link: RatioLink,
) -> Result<RatioPrediction, BiasError> {
    if gamma1 == 0.0 {
        return Err(BiasError::ZeroSlope);
    }
    Ok(RatioPrediction {
        coefficient: p_rr / gamma1 * beta1,
        approximate: link == RatioLink::Logit,
    })
}

/// `γ₁^(2q) Var(X^q) / Var(Xep^q)`, where both variances are of the q-th
/// powers net of all lower powers (only the highest power carries the
/// identity once q ≥ 2).
pub fn p_rd_polynomial(q: u32, gamma1: f64, var_xq: f64, var_xep_q: f64) -> Result<f64, BiasError> {
    if q == 0 {
        return Err(BiasError::Domain {
            name: "q",
            value: 0.0,
            domain: "{1, 2, ...}",
        });
    }
    check_variances(var_xq, var_xep_q)?;
    if var_xep_q == 0.0 {
        return Err(BiasError::Degenerate("Var(Xep^q) is zero".into()));
    }
    Ok(gamma1.powi(2 * q as i32) * var_xq / var_xep_q)
}

/// Data-driven polynomial factor: the closed form from sample moments next to
/// the R² it should equal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolynomialFactor {
    pub gamma1: f64,
    pub closed_form: f64,
    pub r_squared: f64,
}

/// Residual of `v^q` after regressing on `1, v, ..., v^(q-1)`.
fn highest_power_residual(v: &[f64], q: u32) -> Result<Vec<f64>, BiasError> {
    let target: Vec<f64> = v.iter().map(|a| a.powi(q as i32)).collect();
    let mut design = Design::intercept(v.len());
    for k in 1..q {
        let p: Vec<f64> = v.iter().map(|a| a.powi(k as i32)).collect();
        design.push(&format!("pow{k}"), &p)?;
    }
    let fit = ols(&design, &target)?;
    let fitted = design.predict(&fit.coefficients);
    Ok(target.iter().zip(&fitted).map(|(a, b)| a - b).collect())
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0)
}

pub fn p_rd_polynomial_from_data(
    q: u32,
    x: &[f64],
    xep: &[f64],
) -> Result<PolynomialFactor, BiasError> {
    let gamma1 = ols(&Design::from_columns(&[("X", x)])?, xep)?.coefficients[1];
    let rx = highest_power_residual(x, q)?;
    let rxep = highest_power_residual(xep, q)?;
    let closed_form = p_rd_polynomial(q, gamma1, variance(&rx), variance(&rxep))?;
    let r_squared = ols(&Design::from_columns(&[("X^q", &rx)])?, &rxep)?.r_squared;
    Ok(PolynomialFactor {
        gamma1,
        closed_form,
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasFactorReport {
    pub lambda: f64,
    pub gamma1: f64,
    pub p_rd: f64,
    /// Fitted R² of Xep on X (given the adjustment set), when computed from data.
    pub r_squared_check: Option<f64>,
    pub surrogate_lower: f64,
    pub surrogate_upper: f64,
}

pub fn report_closed_form(
    gamma1: f64,
    var_x: f64,
    var_u: f64,
) -> Result<BiasFactorReport, BiasError> {
    let lambda = lambda_closed_form(gamma1, var_x, var_u)?;
    let p_rd = p_rd_identity(gamma1, var_x, var_u)?;
    let bounds = surrogate_bounds(p_rd, gamma1)?;
    Ok(BiasFactorReport {
        lambda,
        gamma1,
        p_rd,
        r_squared_check: None,
        surrogate_lower: bounds.lower,
        surrogate_upper: bounds.upper,
    })
}

/// Estimates γ₁, Var(X | z) and Var(U) by regression and reports the closed
/// forms alongside the partial R² of X in the regression of Xep on (X, z).
pub fn report_from_data(d: &Dataset, adjust: &[&str]) -> Result<BiasFactorReport, BiasError> {
    let xep = d.column(col::XEP)?;
    let x = d.column(col::X)?;
    let z = Design::from_dataset(d, adjust)?;
    let mut full_cols = vec![col::X];
    full_cols.extend_from_slice(adjust);
    let full = ols(&Design::from_dataset(d, &full_cols)?, xep)?;
    let x_given_z = ols(&z, x)?;
    let xep_given_z = ols(&z, xep)?;

    let gamma1 = full.coef(col::X).expect("X is in the design");
    let var_u = full.residual_variance;
    let var_x = x_given_z.residual_variance;
    let mut report = report_closed_form(gamma1, var_x, var_u)?;
    let dof = |f: &RegressionFit, p: usize| f.residual_variance * (d.n() - p) as f64;
    let rss_full = dof(&full, full_cols.len() + 1);
    let rss_z = dof(&xep_given_z, adjust.len() + 1);
    report.r_squared_check = Some(1.0 - rss_full / rss_z);
    Ok(report)
}

impl fmt::Display for BiasFactorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = |f: &mut fmt::Formatter<'_>, k: &str, v: f64| writeln!(f, "{k:<18}{}", sig(v));
        row(f, "gamma1", self.gamma1)?;
        row(f, "lambda", self.lambda)?;
        row(f, "p_rd", self.p_rd)?;
        if let Some(r2) = self.r_squared_check {
            row(f, "r_squared_check", r2)?;
        }
        row(f, "surrogate_lower", self.surrogate_lower)?;
        row(f, "surrogate_upper", self.surrogate_upper)
    }
}

/// `(γ₁, p_rd, λ)` triples on `λ = p_rd / γ₁` for each γ₁, with p_rd on a
/// uniform grid of `steps + 1` points over [0, 1].
pub fn figure2_grid(gammas: &[f64], steps: usize) -> Vec<(f64, f64, f64)> {
    gammas
        .iter()
        .flat_map(|&g| {
            (0..=steps).map(move |i| {
                let p = i as f64 / steps as f64;
                (g, p, p / g)
            })
        })
        .collect()
}

pub const FIGURE2_GAMMAS: [f64; 5] = [0.5, 0.75, 1.0, 1.5, 2.0];

/// Coefficient on Xep when regressing `target` on Xep and `adjust`.
fn xep_coefficient(d: &Dataset, target: &[f64], adjust: &[&str]) -> Result<f64, BiasError> {
    let mut cols = vec![col::XEP];
    cols.extend_from_slice(adjust);
    let fit = ols(&Design::from_dataset(d, &cols)?, target)?;
    Ok(fit.coefficients[1])
}

fn residuals(design: &Design, y: &[f64], fit: &RegressionFit) -> Vec<f64> {
    let fitted = design.predict(&fit.coefficients);
    y.iter().zip(&fitted).map(|(a, b)| a - b).collect()
}

/// Linear outcome model fitted on the true exposure and whichever of C and V
/// the dataset carries.
fn true_outcome_fit(d: &Dataset) -> Result<(Vec<&'static str>, RegressionFit), BiasError> {
    let cols: Vec<&'static str> = [col::X, col::C, col::V]
        .into_iter()
        .filter(|c| d.has(c))
        .collect();
    let fit = ols(&Design::from_dataset(d, &cols)?, d.column(col::Y)?)?;
    Ok((cols, fit))
}

/// The naive exposure coefficient of Y on (Xep, z′), fitted directly.
pub fn naive_coefficient(d: &Dataset, adjust: &[&str]) -> Result<f64, BiasError> {
    xep_coefficient(d, d.column(col::Y)?, adjust)
}

/// Exposure-side decomposition of the naive coefficient.
///
/// With `X = γ₀* + γ₁* Xep + γ₂* V + γ_z* z′ + U*` and `ϱ(T)` the Xep
/// coefficient of T regressed on (Xep, z′), the naive coefficient is
/// `β₁ (γ₁* + γ₂* ϱ(V) + ϱ(U*)) + β_C ϱ(C) + β_V ϱ(V)` up to the sampling
/// remainder `ϱ(outcome residual)`. All terms are on the linear outcome scale.
#[derive(Debug, Clone, PartialEq)]
pub struct EpcDecomposition {
    pub beta1: f64,
    pub gamma1_star: f64,
    pub gamma2_star: f64,
    pub rho_v: f64,
    pub rho_u: f64,
    /// `β₁ (γ₁* + γ₂* ϱ(V) + ϱ(U*))`.
    pub exposure_term: f64,
    /// `β_C ϱ(C)`, zero when C is absent.
    pub confounder_term: f64,
    /// `β_V ϱ(V)`: the direct V effect leaking into the naive coefficient.
    pub v_term: f64,
    pub predicted: f64,
    pub direct: f64,
    pub remainder: f64,
}

pub fn epc_decomposition(d: &Dataset, adjust: &[&str]) -> Result<EpcDecomposition, BiasError> {
    let x = d.column(col::X)?;
    let v = d.column(col::V)?;
    let y = d.column(col::Y)?;

    let mut cal_cols = vec![col::XEP, col::V];
    cal_cols.extend(adjust.iter().copied().filter(|c| *c != col::V));
    let cal_design = Design::from_dataset(d, &cal_cols)?;
    let cal = ols(&cal_design, x)?;
    let u_star = residuals(&cal_design, x, &cal);

    let rho_v = xep_coefficient(d, v, adjust)?;
    let rho_u = xep_coefficient(d, &u_star, adjust)?;
    let gamma1_star = cal.coefficients[1];
    let gamma2_star = cal.coefficients[2];

    let (cols, outcome) = true_outcome_fit(d)?;
    let beta = |c: &str| outcome.coef(c).unwrap_or(0.0);
    let beta1 = beta(col::X);
    let exposure_term = beta1 * (gamma1_star + gamma2_star * rho_v + rho_u);
    let confounder_term = if cols.contains(&col::C) {
        beta(col::C) * xep_coefficient(d, d.column(col::C)?, adjust)?
    } else {
        0.0
    };
    let v_term = beta(col::V) * rho_v;
    let predicted = exposure_term + confounder_term + v_term;
    let direct = xep_coefficient(d, y, adjust)?;
    Ok(EpcDecomposition {
        beta1,
        gamma1_star,
        gamma2_star,
        rho_v,
        rho_u,
        exposure_term,
        confounder_term,
        v_term,
        predicted,
        direct,
        remainder: direct - predicted,
    })
}

/// Confounder-side decomposition of the naive coefficient.
///
/// X is calibrated on (Xep, z) and C on (Cep, z without Cep); the naive
/// coefficient is `β₁ (γ₁* + ϱ(U*)) + β_C ϱ(U^C*) + β_V ϱ(V)`, where the middle
/// term is the residual confounding left by the error in Cep. `adjust` must
/// contain Cep.
#[derive(Debug, Clone, PartialEq)]
pub struct EcDecomposition {
    pub beta1: f64,
    pub beta_c: f64,
    pub gamma1_star: f64,
    pub rho_u: f64,
    pub rho_uc: f64,
    pub exposure_term: f64,
    /// `β_C ϱ(U^C*)`.
    pub ec_term: f64,
    pub v_term: f64,
    pub predicted: f64,
    pub direct: f64,
    pub remainder: f64,
}

pub fn ec_decomposition(d: &Dataset, adjust: &[&str]) -> Result<EcDecomposition, BiasError> {
    if !adjust.contains(&col::CEP) {
        return Err(DataError::Schema("the adjustment set must include Cep".into()).into());
    }
    let x = d.column(col::X)?;
    let c = d.column(col::C)?;
    let y = d.column(col::Y)?;

    let mut x_cols = vec![col::XEP];
    x_cols.extend_from_slice(adjust);
    let x_design = Design::from_dataset(d, &x_cols)?;
    let x_cal = ols(&x_design, x)?;
    let u_star = residuals(&x_design, x, &x_cal);

    let mut c_cols = vec![col::CEP];
    c_cols.extend(adjust.iter().copied().filter(|a| *a != col::CEP));
    let c_design = Design::from_dataset(d, &c_cols)?;
    let c_cal = ols(&c_design, c)?;
    let uc_star = residuals(&c_design, c, &c_cal);

    let rho_u = xep_coefficient(d, &u_star, adjust)?;
    let rho_uc = xep_coefficient(d, &uc_star, adjust)?;
    let (cols, outcome) = true_outcome_fit(d)?;
    let beta = |c: &str| outcome.coef(c).unwrap_or(0.0);
    let beta1 = beta(col::X);
    let beta_c = beta(col::C);
    let gamma1_star = x_cal.coefficients[1];
    let exposure_term = beta1 * (gamma1_star + rho_u);
    let ec_term = beta_c * rho_uc;
    let v_term = if cols.contains(&col::V) {
        beta(col::V) * xep_coefficient(d, d.column(col::V)?, adjust)?
    } else {
        0.0
    };
    let predicted = exposure_term + ec_term + v_term;
    let direct = xep_coefficient(d, y, adjust)?;
    Ok(EcDecomposition {
        beta1,
        beta_c,
        gamma1_star,
        rho_u,
        rho_uc,
        exposure_term,
        ec_term,
        v_term,
        predicted,
        direct,
        remainder: direct - predicted,
    })
}
