//! Multiple regression calibration.
//!
//! Each true variable is regressed on every error-prone variable plus the
//! error-free covariates; the fitted values replace the error-prone columns so
//! that the remaining error is of Berkson form.

use std::fmt;
use std::io::Write;

use thiserror::Error;

use crate::dataset::{col, DataError, Dataset};
use crate::fmt::sig;
use crate::regress::{ols, Design, RegressionError, RegressionFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    X,
    C,
    V,
}

impl Target {
    pub fn truth(self) -> &'static str {
        match self {
            Target::X => col::X,
            Target::C => col::C,
            Target::V => col::V,
        }
    }

    pub fn measured(self) -> &'static str {
        match self {
            Target::X => col::XEP,
            Target::C => col::CEP,
            Target::V => col::VEP,
        }
    }

    pub fn calibrated(self) -> &'static str {
        match self {
            Target::X => col::X_RC,
            Target::C => col::C_RC,
            Target::V => col::V_RC,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.truth())
    }
}

/// Which variables are calibrated: `One` covers X and C (two models), `Two`
/// adds V (three models).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Condition {
    One,
    Two,
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("validation data lacks true column `{0}`")]
    MissingTruth(String),
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationFit {
    pub target: Target,
    pub coefficients: RegressionFit,
    pub residual_sd: f64,
}

/// A fitted set of calibration models sharing one regressor list.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub condition: Condition,
    pub regressors: Vec<String>,
    pub fits: Vec<CalibrationFit>,
}

impl Calibration {
    pub fn fit(&self, target: Target) -> Option<&CalibrationFit> {
        self.fits.iter().find(|f| f.target == target)
    }

    /// Sidecar CSV with columns `target,term,coefficient,residual_sd`.
    pub fn write_coefficients<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["target", "term", "coefficient", "residual_sd"])?;
        for fit in &self.fits {
            for (name, b) in fit
                .coefficients
                .names
                .iter()
                .zip(&fit.coefficients.coefficients)
            {
                w.write_record([
                    fit.target.truth(),
                    name.as_str(),
                    &sig(*b),
                    &sig(fit.residual_sd),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Targets a condition calibrates, given which variables the data carries.
/// C is skipped under condition one when absent (exposure-only worlds).
fn targets(d: &Dataset, condition: Condition) -> Result<Vec<Target>, CalibrationError> {
    let required: &[Target] = match condition {
        Condition::One => &[Target::X],
        Condition::Two => &[Target::X, Target::C, Target::V],
    };
    for t in required {
        if !d.has(t.truth()) {
            return Err(CalibrationError::MissingTruth(t.truth().into()));
        }
    }
    let mut out = required.to_vec();
    if condition == Condition::One && d.has(col::CEP) {
        if !d.has(col::C) {
            return Err(CalibrationError::MissingTruth(col::C.into()));
        }
        out.push(Target::C);
    }
    Ok(out)
}

/// Fits one OLS calibration model per target on `validation`. Every model uses
/// the same regressors: Xep, Cep (when present), Vep (condition two only),
/// then `covariates`.
pub fn fit_calibration(
    validation: &Dataset,
    condition: Condition,
    covariates: &[&str],
) -> Result<Calibration, CalibrationError> {
    let targets = targets(validation, condition)?;
    let mut regressors = vec![col::XEP];
    if validation.has(col::CEP) {
        regressors.push(col::CEP);
    }
    if condition == Condition::Two {
        regressors.push(col::VEP);
    }
    regressors.extend_from_slice(covariates);
    let design = Design::from_dataset(validation, &regressors)?;

    let mut fits = Vec::with_capacity(targets.len());
    for target in targets {
        let fit = ols(&design, validation.column(target.truth())?)?;
        let residual_sd = fit.residual_variance.max(0.0).sqrt();
        fits.push(CalibrationFit {
            target,
            coefficients: fit,
            residual_sd,
        });
    }
    Ok(Calibration {
        condition,
        regressors: regressors.into_iter().map(String::from).collect(),
        fits,
    })
}

/// Returns `d` with a calibrated column added (or replaced) per fit.
pub fn apply_calibration(cal: &Calibration, d: &Dataset) -> Result<Dataset, CalibrationError> {
    let names: Vec<&str> = cal.regressors.iter().map(String::as_str).collect();
    let design = Design::from_dataset(d, &names)?;
    let mut out = d.clone();
    for fit in &cal.fits {
        let values = design.predict(&fit.coefficients.coefficients);
        if out.has(fit.target.calibrated()) {
            out.set(fit.target.calibrated(), values)?;
        } else {
            out.insert(fit.target.calibrated(), values)?;
        }
    }
    Ok(out)
}

/// Fits on the first `ceil(fraction · n)` rows and applies to all of `d`.
pub fn calibrate_with_validation(
    d: &Dataset,
    condition: Condition,
    covariates: &[&str],
    fraction: f64,
) -> Result<(Calibration, Dataset), CalibrationError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(
            DataError::Schema(format!("validation fraction {fraction} is outside (0, 1]")).into(),
        );
    }
    let k = ((d.n() as f64) * fraction).ceil() as usize;
    let cal = if k == d.n() {
        fit_calibration(d, condition, covariates)?
    } else {
        fit_calibration(&d.head(k), condition, covariates)?
    };
    let out = apply_calibration(&cal, d)?;
    Ok((cal, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_scenario, generate_table2_world, presets};

    #[test]
    fn table2_calibration_line() {
        let d = generate_table2_world(200_000, 3).unwrap();
        let cal = fit_calibration(&d, Condition::One, &[]).unwrap();
        assert_eq!(cal.fits.len(), 1);
        let b = &cal.fits[0].coefficients.coefficients;
        assert!(
            (b[0] - 4.5).abs() < 0.01 && (b[1] - 0.5).abs() < 0.01,
            "{b:?}"
        );
        let out = apply_calibration(&cal, &d).unwrap();
        let xep = out.column(col::XEP).unwrap();
        let rc = out.column(col::X_RC).unwrap();
        for (e, r) in xep.iter().zip(rc) {
            if *e == 9.0 {
                assert!((r - 9.0).abs() < 0.02);
            }
            if *e == 11.0 {
                assert!((r - 10.0).abs() < 0.02);
            }
        }
    }

    #[test]
    fn no_error_world_is_identity() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let c: Vec<f64> = (0..50).map(|i| (i as f64 * 1.3).cos()).collect();
        let d = Dataset::new()
            .with(col::X, x.clone())
            .unwrap()
            .with(col::XEP, x.clone())
            .unwrap()
            .with(col::C, c.clone())
            .unwrap()
            .with(col::CEP, c)
            .unwrap();
        let cal = fit_calibration(&d, Condition::One, &[]).unwrap();
        let fx = cal.fit(Target::X).unwrap();
        assert!(fx.coefficients.coefficients[0].abs() < 1e-10);
        assert!((fx.coefficients.coefficients[1] - 1.0).abs() < 1e-10);
        assert!(fx.residual_sd < 1e-10);
        let out = apply_calibration(&cal, &d).unwrap();
        for (a, b) in out.column(col::X_RC).unwrap().iter().zip(&x) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn condition_two_needs_v() {
        let d = generate_table2_world(100, 1).unwrap();
        assert!(matches!(
            fit_calibration(&d, Condition::Two, &[]),
            Err(CalibrationError::MissingTruth(c)) if c == "C"
        ));
    }

    #[test]
    fn residuals_are_orthogonal_to_regressors() {
        let d = generate_scenario(&presets::table3(2), 0).unwrap();
        let cal = fit_calibration(&d, Condition::Two, &[]).unwrap();
        assert_eq!(cal.fits.len(), 3);
        let out = apply_calibration(&cal, &d).unwrap();
        let n = d.n() as f64;
        for t in [Target::X, Target::C, Target::V] {
            let truth = out.column(t.truth()).unwrap();
            let rc = out.column(t.calibrated()).unwrap();
            let resid: Vec<f64> = truth.iter().zip(rc).map(|(a, b)| a - b).collect();
            for r in &cal.regressors {
                let reg = out.column(r).unwrap();
                let corr = correlation(&resid, reg);
                assert!(corr.abs() < 4.0 / n.sqrt(), "{t} vs {r}: {corr}");
            }
        }
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma) * (x - ma);
            sbb += (y - mb) * (y - mb);
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn validation_split_and_sidecar() {
        let d = generate_scenario(&presets::table3(1), 0).unwrap();
        let (cal, out) = calibrate_with_validation(&d, Condition::One, &[], 0.5).unwrap();
        assert_eq!(out.n(), d.n());
        assert!(out.has(col::C_RC) && !out.has(col::V_RC));
        let mut buf = Vec::new();
        cal.write_coefficients(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("target,term,coefficient,residual_sd\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 3);
        assert!(calibrate_with_validation(&d, Condition::One, &[], 0.0).is_err());
    }
}
