//! Small dense regression: OLS and WLS through Householder QR, and logistic
//! regression through iteratively reweighted least squares.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::dataset::{DataError, Dataset};

pub const INTERCEPT: &str = "(intercept)";

/// Relative singular-value threshold below which a design is rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Convergence threshold on the largest absolute score component.
pub const SCORE_TOLERANCE: f64 = 1e-6;
pub const MAX_IRLS_ITERATIONS: usize = 100;
const SEPARATION_NORM: f64 = 1e3;

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("design is rank deficient; check columns {}", .columns.join(", "))]
    SingularDesign { columns: Vec<String> },
    #[error("need more rows than columns (n = {n}, p = {p})")]
    TooFewRows { n: usize, p: usize },
    #[error("response has {found} rows but the design has {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("weight {index} is {value}; weights must be positive and finite")]
    BadWeight { index: usize, value: f64 },
    #[error("response must be 0/1 for logistic regression (row {index} is {value})")]
    NonBinaryResponse { index: usize, value: f64 },
    #[error("response is constant; logistic regression is undefined")]
    ConstantResponse,
    #[error("perfect separation: coefficients diverge (norm {norm:.3e})")]
    Separation { norm: f64 },
    #[error("IRLS did not converge in {} iterations (last max |score| = {:.3e})", .trace.len(), .trace.last().map_or(f64::NAN, |t| t.max_score))]
    NotConverged { trace: Vec<IrlsStep> },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// One IRLS iteration, kept for non-convergence diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsStep {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub max_score: f64,
    pub step_scale: f64,
}

/// Column-major design matrix with named columns.
#[derive(Debug, Clone)]
pub struct Design {
    n: usize,
    data: Vec<f64>,
    names: Vec<String>,
}

impl Design {
    /// A design holding only the intercept column.
    pub fn intercept(n: usize) -> Self {
        Design {
            n,
            data: vec![1.0; n],
            names: vec![INTERCEPT.to_string()],
        }
    }

    /// Intercept followed by the given columns.
    pub fn from_columns(columns: &[(&str, &[f64])]) -> Result<Self, RegressionError> {
        let n = columns.first().map_or(0, |(_, c)| c.len());
        let mut d = Design::intercept(n);
        for (name, c) in columns {
            d.push(name, c)?;
        }
        Ok(d)
    }

    /// Intercept followed by the named dataset columns.
    pub fn from_dataset(d: &Dataset, columns: &[&str]) -> Result<Self, RegressionError> {
        let mut design = Design::intercept(d.n());
        for name in columns {
            design.push(name, d.column(name)?)?;
        }
        Ok(design)
    }

    pub fn push(&mut self, name: &str, values: &[f64]) -> Result<(), RegressionError> {
        if values.len() != self.n {
            return Err(RegressionError::LengthMismatch {
                expected: self.n,
                found: values.len(),
            });
        }
        self.data.extend_from_slice(values);
        self.names.push(name.to_string());
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|c| c == name)
    }

    /// `X β`.
    pub fn predict(&self, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (j, b) in beta.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(self.column(j)) {
                *o += b * x;
            }
        }
        out
    }

    /// `Xᵀ v`.
    pub fn cross(&self, v: &[f64]) -> Vec<f64> {
        (0..self.cols()).map(|j| dot(self.column(j), v)).collect()
    }

    fn scaled_rows(&self, scale: &[f64]) -> Design {
        let mut out = self.clone();
        for j in 0..out.cols() {
            for (x, s) in out.column_mut(j).iter_mut().zip(scale) {
                *x *= s;
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of a linear or logistic fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    /// Intercept first, then one per design column in order.
    pub coefficients: Vec<f64>,
    pub names: Vec<String>,
    /// RSS / (n − p) for linear fits (weighted for WLS); NaN for logistic fits.
    pub residual_variance: f64,
    /// 1 − RSS/TSS for linear fits; NaN for logistic fits.
    pub r_squared: f64,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: Option<f64>,
}

impl RegressionFit {
    pub fn coef(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|c| c == name)
            .map(|j| self.coefficients[j])
    }

    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }
}

/// Householder QR in the compact LINPACK layout: the reflectors live on and
/// below the diagonal of `qr`, the diagonal of R in `rdiag`.
struct Qr {
    n: usize,
    p: usize,
    qr: Vec<f64>,
    rdiag: Vec<f64>,
}

impl Qr {
    fn new(design: &Design) -> Self {
        let n = design.rows();
        let p = design.cols();
        let mut qr = design.data.clone();
        let mut rdiag = vec![0.0; p];
        for k in 0..p {
            let (head, tail) = qr.split_at_mut((k + 1) * n);
            let ck = &mut head[k * n..];
            let mut nrm = ck[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if nrm != 0.0 {
                if ck[k] < 0.0 {
                    nrm = -nrm;
                }
                for v in &mut ck[k..] {
                    *v /= nrm;
                }
                ck[k] += 1.0;
                for cj in tail.chunks_exact_mut(n) {
                    let s = -dot(&ck[k..], &cj[k..]) / ck[k];
                    for (x, v) in cj[k..].iter_mut().zip(&ck[k..]) {
                        *x += s * v;
                    }
                }
            }
            rdiag[k] = -nrm;
        }
        Qr { n, p, qr, rdiag }
    }

    fn r(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.p, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Less => self.qr[j * self.n + i],
            std::cmp::Ordering::Equal => self.rdiag[i],
            std::cmp::Ordering::Greater => 0.0,
        })
    }

    /// Errors when the smallest singular value of the design (equal to that
    /// of R) falls below the relative tolerance.
    fn check_rank(&self, names: &[String]) -> Result<(), RegressionError> {
        let sv = self.r().singular_values();
        let max = sv.max();
        let min = sv.min();
        if min > RANK_TOLERANCE * max && min.is_finite() {
            return Ok(());
        }
        let rmax = self.rdiag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut columns: Vec<String> = self
            .rdiag
            .iter()
            .zip(names)
            .filter(|(d, _)| d.abs() <= 1e-8 * rmax)
            .map(|(_, c)| c.clone())
            .collect();
        if columns.is_empty() {
            let worst = self
                .rdiag
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map_or(0, |(j, _)| j);
            columns.push(names[worst].clone());
        }
        Err(RegressionError::SingularDesign { columns })
    }

    fn solve(&self, y: &[f64]) -> Vec<f64> {
        let (n, p) = (self.n, self.p);
        let mut b = y.to_vec();
        for k in 0..p {
            let ck = &self.qr[k * n..(k + 1) * n];
            let s = -dot(&ck[k..], &b[k..]) / ck[k];
            for (x, v) in b[k..].iter_mut().zip(&ck[k..]) {
                *x += s * v;
            }
        }
        let mut beta = b[..p].to_vec();
        for k in (0..p).rev() {
            beta[k] /= self.rdiag[k];
            for i in 0..k {
                beta[i] -= beta[k] * self.qr[k * n + i];
            }
        }
        beta
    }
}

fn check_shape(design: &Design, y: &[f64]) -> Result<(), RegressionError> {
    if y.len() != design.rows() {
        return Err(RegressionError::LengthMismatch {
            expected: design.rows(),
            found: y.len(),
        });
    }
    if design.rows() <= design.cols() {
        return Err(RegressionError::TooFewRows {
            n: design.rows(),
            p: design.cols(),
        });
    }
    Ok(())
}

fn least_squares(design: &Design, y: &[f64]) -> Result<Vec<f64>, RegressionError> {
    let qr = Qr::new(design);
    qr.check_rank(design.names())?;
    Ok(qr.solve(y))
}

/// Ordinary least squares. The design must carry its own intercept column.
pub fn ols(design: &Design, y: &[f64]) -> Result<RegressionFit, RegressionError> {
    check_shape(design, y)?;
    let beta = least_squares(design, y)?;
    let fitted = design.predict(&beta);
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let rss: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
    let tss: f64 = y.iter().map(|a| (a - mean).powi(2)).sum();
    Ok(linear_fit(design, beta, rss, tss))
}

fn linear_fit(design: &Design, beta: Vec<f64>, rss: f64, tss: f64) -> RegressionFit {
    let dof = (design.rows() - design.cols()) as f64;
    let r_squared = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        1.0
    };
    RegressionFit {
        coefficients: beta,
        names: design.names().to_vec(),
        residual_variance: rss / dof,
        r_squared,
        converged: true,
        iterations: 1,
        log_likelihood: None,
    }
}

/// Weighted least squares minimizing `Σ wᵢ (yᵢ − xᵢᵀβ)²`.
pub fn wls(design: &Design, y: &[f64], weights: &[f64]) -> Result<RegressionFit, RegressionError> {
    check_shape(design, y)?;
    if weights.len() != y.len() {
        return Err(RegressionError::LengthMismatch {
            expected: y.len(),
            found: weights.len(),
        });
    }
    if let Some((index, &value)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !(w.is_finite() && **w > 0.0))
    {
        return Err(RegressionError::BadWeight { index, value });
    }
    let root: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let scaled = design.scaled_rows(&root);
    let ys: Vec<f64> = y.iter().zip(&root).map(|(a, r)| a * r).collect();
    let beta = least_squares(&scaled, &ys)?;

    let fitted = design.predict(&beta);
    let wsum: f64 = weights.iter().sum();
    let mean = weights.iter().zip(y).map(|(w, a)| w * a).sum::<f64>() / wsum;
    let rss: f64 = weights
        .iter()
        .zip(y.iter().zip(&fitted))
        .map(|(w, (a, b))| w * (a - b).powi(2))
        .sum();
    let tss: f64 = weights
        .iter()
        .zip(y)
        .map(|(w, a)| w * (a - mean).powi(2))
        .sum();
    Ok(linear_fit(design, beta, rss, tss))
}

pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|b| b * b).sum::<f64>().sqrt()
}

fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

fn logistic_log_likelihood(eta: &[f64], y: &[f64]) -> f64 {
    eta.iter().zip(y).map(|(e, yi)| yi * e - softplus(*e)).sum()
}

/// Logistic regression by IRLS with step halving. The first design column
/// must be the intercept.
pub fn logistic_irls(design: &Design, y: &[f64]) -> Result<RegressionFit, RegressionError> {
    check_shape(design, y)?;
    if let Some((index, &value)) = y.iter().enumerate().find(|(_, v)| **v != 0.0 && **v != 1.0) {
        return Err(RegressionError::NonBinaryResponse { index, value });
    }
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    if ybar == 0.0 || ybar == 1.0 {
        return Err(RegressionError::ConstantResponse);
    }
    // Rank is a property of the unweighted design; check once.
    Qr::new(design).check_rank(design.names())?;

    let p = design.cols();
    let mut beta = vec![0.0; p];
    beta[0] = (ybar / (1.0 - ybar)).ln();
    let mut eta = design.predict(&beta);
    let mut ll = logistic_log_likelihood(&eta, y);
    let mut trace = Vec::new();

    for iteration in 0..=MAX_IRLS_ITERATIONS {
        let mu: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let resid: Vec<f64> = y.iter().zip(&mu).map(|(a, m)| a - m).collect();
        let score = design.cross(&resid);
        let max_score = score.iter().fold(0.0f64, |m, s| m.max(s.abs()));

        // Newton step: weighted least squares of (y − μ)/w on X with weights w.
        let w: Vec<f64> = mu.iter().map(|m| (m * (1.0 - m)).max(1e-300)).collect();
        let root: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
        let z: Vec<f64> = resid.iter().zip(&root).map(|(r, s)| r / s).collect();
        let step = Qr::new(&design.scaled_rows(&root)).solve(&z);

        if max_score < SCORE_TOLERANCE {
            // A vanishing score with a non-vanishing Newton step means the
            // likelihood is still climbing towards infinity: separation.
            let step_norm = norm(&step);
            if step_norm.is_finite() && step_norm <= 1e-3 * (1.0 + norm(&beta)) {
                return Ok(RegressionFit {
                    coefficients: beta,
                    names: design.names().to_vec(),
                    residual_variance: f64::NAN,
                    r_squared: f64::NAN,
                    converged: true,
                    iterations: iteration,
                    log_likelihood: Some(ll),
                });
            }
            return Err(RegressionError::Separation { norm: norm(&beta) });
        }
        if iteration == MAX_IRLS_ITERATIONS {
            break;
        }

        let mut scale = 1.0;
        loop {
            let candidate: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let cand_eta = design.predict(&candidate);
            let cand_ll = logistic_log_likelihood(&cand_eta, y);
            if cand_ll >= ll - 1e-12 * ll.abs() || scale < 1e-10 {
                beta = candidate;
                eta = cand_eta;
                ll = cand_ll;
                break;
            }
            scale *= 0.5;
        }
        trace.push(IrlsStep {
            iteration: iteration + 1,
            log_likelihood: ll,
            max_score,
            step_scale: scale,
        });

        if norm(&beta) > SEPARATION_NORM {
            return Err(RegressionError::Separation { norm: norm(&beta) });
        }
    }
    Err(RegressionError::NotConverged { trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(cols: &[&[f64]]) -> Design {
        let named: Vec<(String, &[f64])> = cols
            .iter()
            .enumerate()
            .map(|(i, c)| (format!("x{i}"), *c))
            .collect();
        let refs: Vec<(&str, &[f64])> = named.iter().map(|(n, c)| (n.as_str(), *c)).collect();
        Design::from_columns(&refs).unwrap()
    }

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let fit = ols(&design(&[&x]), &y).unwrap();
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(fit.coefficients[0].abs() < 1e-12);
        assert_eq!(fit.r_squared, 1.0);
        assert!(fit.residual_variance < 1e-24);
    }

    #[test]
    fn collinear_columns_are_named() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 7.0];
        let b: Vec<f64> = a.iter().map(|v| 3.0 * v).collect();
        let y = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let d = Design::from_columns(&[("a", &a), ("b", &b)]).unwrap();
        match ols(&d, &y) {
            Err(RegressionError::SingularDesign { columns }) => {
                assert_eq!(columns, vec!["b".to_string()])
            }
            other => panic!("{other:?}"),
        }
        let c = [2.0; 6];
        let d = Design::from_columns(&[("a", &a), ("const", &c)]).unwrap();
        assert!(matches!(
            ols(&d, &y),
            Err(RegressionError::SingularDesign { .. })
        ));
    }

    #[test]
    fn too_few_rows() {
        let d = design(&[&[1.0, 2.0]]);
        assert!(matches!(
            ols(&d, &[1.0, 2.0]),
            Err(RegressionError::TooFewRows { .. })
        ));
    }

    #[test]
    fn equal_weights_match_ols() {
        let x = [0.5, 1.5, 2.0, 3.5, 4.0, 6.0];
        let y = [1.0, 2.2, 2.9, 4.1, 4.8, 7.5];
        let d = design(&[&x]);
        let a = ols(&d, &y).unwrap();
        let b = wls(&d, &y, &[3.0; 6]).unwrap();
        for (p, q) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn integer_weights_match_row_duplication() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0.3, 1.9, 2.2, 3.7];
        let weighted = wls(&design(&[&x]), &y, &[2.0, 2.0, 1.0, 1.0]).unwrap();
        let xd = [0.0, 0.0, 1.0, 1.0, 2.0, 3.0];
        let yd = [0.3, 0.3, 1.9, 1.9, 2.2, 3.7];
        let dup = ols(&design(&[&xd]), &yd).unwrap();
        for (p, q) in weighted.coefficients.iter().zip(&dup.coefficients) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_slope_closed_form() {
        let x = [0.1, 0.7, 1.3, 2.2, 2.9, 4.0, 5.5];
        let y = [1.1, 0.4, 2.6, 2.0, 3.9, 3.1, 6.2];
        let w = [0.5, 2.0, 1.0, 3.0, 0.25, 1.5, 1.0];
        let sw: f64 = w.iter().sum();
        let xm = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / sw;
        let ym = w.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / sw;
        let num: f64 = (0..7).map(|i| w[i] * (x[i] - xm) * (y[i] - ym)).sum();
        let den: f64 = (0..7).map(|i| w[i] * (x[i] - xm).powi(2)).sum();
        let fit = wls(&design(&[&x]), &y, &w).unwrap();
        assert!((fit.coefficients[1] - num / den).abs() < 1e-12);
    }

    #[test]
    fn non_positive_weight_is_rejected() {
        let x = [0.0, 1.0, 2.0];
        let e = wls(&design(&[&x]), &[1.0, 2.0, 3.0], &[1.0, 0.0, 1.0]).unwrap_err();
        assert!(matches!(e, RegressionError::BadWeight { index: 1, .. }));
    }

    #[test]
    fn logistic_null_model() {
        let x: Vec<f64> = (0..40).map(|i| (i % 4) as f64).collect();
        let y: Vec<f64> = (0..40).map(|i| ((i / 4) % 2) as f64).collect();
        let fit = logistic_irls(&design(&[&x]), &y).unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients[1].abs() < 1e-8);
        assert!(fit.coefficients[0].abs() < 1e-8);
    }

    #[test]
    fn logistic_separation_is_detected() {
        let x = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let e = logistic_irls(&design(&[&x]), &y).unwrap_err();
        assert!(matches!(e, RegressionError::Separation { .. }), "{e:?}");
    }

    #[test]
    fn logistic_rejects_bad_responses() {
        let x = [0.0, 1.0, 2.0, 3.0];
        assert!(matches!(
            logistic_irls(&design(&[&x]), &[0.0, 1.0, 2.0, 0.0]),
            Err(RegressionError::NonBinaryResponse { index: 2, .. })
        ));
        assert!(matches!(
            logistic_irls(&design(&[&x]), &[1.0; 4]),
            Err(RegressionError::ConstantResponse)
        ));
    }
}
