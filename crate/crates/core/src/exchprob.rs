//! Exchangeability-probability tables over discrete `(xep, x, y)` supports.
//!
//! Two constructions are kept strictly apart:
//!
//! * [`empirical_table`] estimates the conditional joint `P(X = x, Y = y | Xep = xep)`
//!   from data. This is what the published Table 2 reports and what AEE
//!   contrasts are computed from.
//! * [`analytic_product_table`] evaluates the product
//!   `P(Y(x) = y) · P(Y(xep) = y)`, where `Y(xep)` integrates the outcome over
//!   the conditional law of X given Xep.

use std::collections::BTreeSet;
use std::io::Write;

use thiserror::Error;

use crate::dataset::{col, DataError, Dataset};
use crate::fmt::sig;
use crate::model::{
    Distribution, EffectEstimate, ErrorKind, ErrorModel, Estimand, EstimatorKind, Link,
    OutcomeModel,
};
use crate::regress::expit;

/// More distinct values than this and a column is treated as continuous.
pub const MAX_SUPPORT: usize = 100;
/// Nodes per continuous dimension in the trapezoid rule.
pub const QUADRATURE_NODES: usize = 4001;
/// Half-width of the integration window in standard deviations.
pub const QUADRATURE_WIDTH: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableMode {
    EmpiricalConditionalJoint,
    AnalyticProduct,
}

impl TableMode {
    pub fn label(self) -> &'static str {
        match self {
            TableMode::EmpiricalConditionalJoint => "empirical",
            TableMode::AnalyticProduct => "analytic",
        }
    }
}

#[derive(Debug, Error)]
pub enum ExchProbError {
    #[error(
        "column `{column}` has more than {MAX_SUPPORT} distinct values; supports must be discrete"
    )]
    NotDiscrete { column: String },
    #[error("no rows (or zero probability) in the stratum Xep = {0}")]
    EmptyStratum(f64),
    #[error("Xep = {0} is not in the table's support")]
    OutOfSupport(f64),
    #[error("operation needs a {needed} table, got {got}")]
    WrongMode {
        needed: &'static str,
        got: &'static str,
    },
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Support values are compared on a 1e-9 grid so that, e.g., `0.1 * 8 - 0.1`
/// and `0.7` land in the same cell.
fn key(v: f64) -> i64 {
    (v * 1e9).round() as i64
}

fn canonical(v: f64) -> f64 {
    key(v) as f64 / 1e9
}

fn position(support: &[f64], v: f64) -> Option<usize> {
    let k = key(v);
    support.iter().position(|s| key(*s) == k)
}

fn support_of(values: &[f64], column: &str) -> Result<Vec<f64>, ExchProbError> {
    let mut keys = BTreeSet::new();
    for v in values {
        keys.insert(key(*v));
        if keys.len() > MAX_SUPPORT {
            return Err(ExchProbError::NotDiscrete {
                column: column.into(),
            });
        }
    }
    Ok(keys.into_iter().map(|k| k as f64 / 1e9).collect())
}

/// Probabilities over `xep_support × x_support × y_support`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchProbTable {
    pub xep_support: Vec<f64>,
    pub x_support: Vec<f64>,
    pub y_support: Vec<f64>,
    pub mode: TableMode,
    cells: Vec<f64>,
    /// Rows per Xep stratum (empirical tables only).
    stratum_sizes: Option<Vec<usize>>,
}

impl ExchProbTable {
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.x_support.len() + j) * self.y_support.len() + k
    }

    /// The cell probability; zero for values outside the supports.
    pub fn cell(&self, xep: f64, x: f64, y: f64) -> f64 {
        match (
            position(&self.xep_support, xep),
            position(&self.x_support, x),
            position(&self.y_support, y),
        ) {
            (Some(i), Some(j), Some(k)) => self.cells[self.idx(i, j, k)],
            _ => 0.0,
        }
    }

    /// All cells as `(xep, x, y, p)` in support order.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        self.xep_support
            .iter()
            .enumerate()
            .flat_map(move |(i, &e)| {
                self.x_support.iter().enumerate().flat_map(move |(j, &x)| {
                    self.y_support
                        .iter()
                        .enumerate()
                        .map(move |(k, &y)| (e, x, y, self.cells[self.idx(i, j, k)]))
                })
            })
    }

    pub fn row_sum(&self, xep: f64) -> f64 {
        self.cells()
            .filter(|c| key(c.0) == key(xep))
            .map(|c| c.3)
            .sum()
    }

    pub fn stratum_size(&self, xep: f64) -> Option<usize> {
        let i = position(&self.xep_support, xep)?;
        self.stratum_sizes.as_ref().map(|s| s[i])
    }

    /// Distribution of Y within the Xep = `xep` stratum.
    fn outcome_margin(&self, xep: f64) -> Result<Vec<f64>, ExchProbError> {
        let i = position(&self.xep_support, xep).ok_or(ExchProbError::OutOfSupport(xep))?;
        Ok((0..self.y_support.len())
            .map(|k| {
                (0..self.x_support.len())
                    .map(|j| self.cells[self.idx(i, j, k)])
                    .sum()
            })
            .collect())
    }

    /// Distribution of X within the Xep = `xep` stratum.
    pub fn exposure_margin(&self, xep: f64) -> Result<Vec<f64>, ExchProbError> {
        let i = position(&self.xep_support, xep).ok_or(ExchProbError::OutOfSupport(xep))?;
        Ok((0..self.x_support.len())
            .map(|j| {
                (0..self.y_support.len())
                    .map(|k| self.cells[self.idx(i, j, k)])
                    .sum()
            })
            .collect())
    }

    /// `xep,x,y,p,mode` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["xep", "x", "y", "p", "mode"])?;
        for (e, x, y, p) in self.cells() {
            w.write_record([
                sig(e),
                sig(x),
                sig(y),
                sig(p),
                self.mode.label().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// The Xep × (x, y) grid with a row-sum column, skipping (x, y) pairs that
    /// are zero in every row.
    pub fn render_grid(&self) -> String {
        let columns: Vec<(usize, usize)> = (0..self.x_support.len())
            .flat_map(|j| (0..self.y_support.len()).map(move |k| (j, k)))
            .filter(|&(j, k)| {
                (0..self.xep_support.len()).any(|i| self.cells[self.idx(i, j, k)] != 0.0)
            })
            .collect();
        let width = 9;
        let mut out = format!("{:>6}", "Xep");
        for &(j, k) in &columns {
            out.push_str(&format!(
                "{:>width$}",
                format!("{}|{}", sig(self.x_support[j]), sig(self.y_support[k]))
            ));
        }
        out.push_str(&format!("{:>width$}\n", "sum"));
        for (i, &e) in self.xep_support.iter().enumerate() {
            out.push_str(&format!("{:>6}", sig(e)));
            for &(j, k) in &columns {
                out.push_str(&format!("{:>width$.5}", self.cells[self.idx(i, j, k)]));
            }
            out.push_str(&format!("{:>width$.5}\n", self.row_sum(e)));
        }
        out
    }
}

/// Estimates `P(X = x, Y = y | Xep = xep)` by stratum frequencies.
pub fn empirical_table(d: &Dataset) -> Result<ExchProbTable, ExchProbError> {
    let xep = d.column(col::XEP)?;
    empirical_table_on(d, &support_of(xep, col::XEP)?)
}

/// As [`empirical_table`] with a caller-chosen Xep support; rows whose Xep is
/// outside it are ignored and every listed stratum must be non-empty.
pub fn empirical_table_on(
    d: &Dataset,
    xep_support: &[f64],
) -> Result<ExchProbTable, ExchProbError> {
    let x = d.column(col::X)?;
    let xep = d.column(col::XEP)?;
    let y = d.column(col::Y)?;
    let mut xep_support: Vec<f64> = xep_support.iter().map(|v| canonical(*v)).collect();
    xep_support.sort_by(f64::total_cmp);
    xep_support.dedup();
    let mut t = ExchProbTable {
        x_support: support_of(x, col::X)?,
        y_support: support_of(y, col::Y)?,
        xep_support,
        mode: TableMode::EmpiricalConditionalJoint,
        cells: Vec::new(),
        stratum_sizes: None,
    };
    let mut counts = vec![0usize; t.xep_support.len() * t.x_support.len() * t.y_support.len()];
    let mut sizes = vec![0usize; t.xep_support.len()];
    for r in 0..d.n() {
        let Some(i) = position(&t.xep_support, xep[r]) else {
            continue;
        };
        let j = position(&t.x_support, x[r]).expect("support built from column");
        let k = position(&t.y_support, y[r]).expect("support built from column");
        counts[t.idx(i, j, k)] += 1;
        sizes[i] += 1;
    }
    if let Some(i) = sizes.iter().position(|&s| s == 0) {
        return Err(ExchProbError::EmptyStratum(t.xep_support[i]));
    }
    let per_stratum = t.x_support.len() * t.y_support.len();
    t.cells = counts
        .iter()
        .enumerate()
        .map(|(c, &k)| k as f64 / sizes[c / per_stratum] as f64)
        .collect();
    t.stratum_sizes = Some(sizes);
    Ok(t)
}

/// Nodes and weights integrating against `dist`: exact atoms for discrete
/// families, composite trapezoid on mean ± 8 sd (clipped at 0 for gamma)
/// otherwise.
pub fn integration_nodes(dist: &Distribution) -> Vec<(f64, f64)> {
    if let Some(atoms) = dist.atoms() {
        return atoms;
    }
    let sd = dist.variance().sqrt();
    if sd == 0.0 {
        return vec![(dist.mean(), 1.0)];
    }
    let mut lo = dist.mean() - QUADRATURE_WIDTH * sd;
    if matches!(dist, Distribution::Gamma { .. }) {
        lo = lo.max(0.0);
    }
    let hi = dist.mean() + QUADRATURE_WIDTH * sd;
    let m = QUADRATURE_NODES;
    let h = (hi - lo) / (m - 1) as f64;
    (0..m)
        .map(|i| {
            let x = lo + h * i as f64;
            let end = i == 0 || i == m - 1;
            let w = dist.pdf(x).expect("continuous family") * h * if end { 0.5 } else { 1.0 };
            (x, w)
        })
        .collect()
}

/// Probability mass (discrete) or density (continuous) of `dist` at `u`.
fn mass_or_density(dist: &Distribution, u: f64) -> f64 {
    match dist.atoms() {
        Some(atoms) => atoms
            .iter()
            .filter(|(a, _)| key(*a) == key(u))
            .map(|(_, p)| p)
            .sum(),
        None => dist.pdf(u).expect("continuous family"),
    }
}

/// The requested supports of an analytic table.
#[derive(Debug, Clone, PartialEq)]
pub struct Supports {
    pub xep: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// `P(Y(x) = y)` for every y in `y_support`, with covariate terms folded into
/// the intercept.
fn outcome_law(
    outcome: &OutcomeModel,
    noise_nodes: &[(f64, f64)],
    x: f64,
    y_support: &[f64],
) -> Vec<f64> {
    let h = outcome.beta0 + outcome.beta_x * x + outcome.beta_x2 * x * x;
    match outcome.link {
        Link::Identity => y_support
            .iter()
            .map(|&y| {
                noise_nodes
                    .iter()
                    .filter(|(w, _)| key(h + w) == key(y))
                    .map(|(_, p)| p)
                    .sum()
            })
            .collect(),
        _ => {
            let p1: f64 = noise_nodes.iter().map(|(w, p)| expit(h + w) * p).sum();
            y_support
                .iter()
                .map(|&y| if y == 1.0 { p1 } else { 1.0 - p1 })
                .collect()
        }
    }
}

/// Evaluates `P(Y(x) = y) · P(Y(xep) = y)` on the requested supports, where
/// the law of X given Xep comes from `x_marginal` and the error model
/// (non-Berkson linear) or directly from the error noise (pure Berkson).
pub fn analytic_product_table(
    outcome: &OutcomeModel,
    error: &ErrorModel,
    x_marginal: &Distribution,
    supports: &Supports,
) -> Result<ExchProbTable, ExchProbError> {
    match outcome.link {
        Link::Identity if !outcome.noise.is_discrete() => {
            return Err(ExchProbError::Unsupported(
                "identity link needs discrete outcome noise".into(),
            ))
        }
        Link::Identity if !x_marginal.is_discrete() || !error.noise.is_discrete() => {
            return Err(ExchProbError::Unsupported(
                "identity link needs discrete exposure and error laws".into(),
            ))
        }
        Link::Logit if supports.y.iter().any(|&y| y != 0.0 && y != 1.0) => {
            return Err(ExchProbError::Unsupported(
                "logit outcomes take values 0 and 1".into(),
            ))
        }
        Link::Log => return Err(ExchProbError::Unsupported("log link".into())),
        _ => {}
    }
    if !matches!(
        error.kind,
        ErrorKind::NonBerksonLinear | ErrorKind::PureBerkson
    ) {
        return Err(ExchProbError::Unsupported(
            "error kind must be non_berkson_linear or pure_berkson".into(),
        ));
    }
    if error.kind == ErrorKind::NonBerksonLinear && error.gamma1 == 0.0 {
        return Err(ExchProbError::Unsupported("gamma1 must be nonzero".into()));
    }

    let noise_nodes = integration_nodes(&outcome.noise);
    let canon = |v: &[f64]| {
        let mut s: Vec<f64> = v.iter().map(|x| canonical(*x)).collect();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    };
    let mut t = ExchProbTable {
        xep_support: canon(&supports.xep),
        x_support: canon(&supports.x),
        y_support: canon(&supports.y),
        mode: TableMode::AnalyticProduct,
        cells: Vec::new(),
        stratum_sizes: None,
    };
    let at_support: Vec<Vec<f64>> = t
        .x_support
        .iter()
        .map(|&x| outcome_law(outcome, &noise_nodes, x, &t.y_support))
        .collect();

    // Under non-Berkson error the X nodes are shared by every stratum, so the
    // outcome law at each node is computed once.
    let x_nodes = integration_nodes(x_marginal);
    let prior_laws: Vec<Vec<f64>> = if error.kind == ErrorKind::NonBerksonLinear {
        x_nodes
            .iter()
            .map(|(x, _)| outcome_law(outcome, &noise_nodes, *x, &t.y_support))
            .collect()
    } else {
        Vec::new()
    };
    let u_nodes = integration_nodes(&error.noise);

    for &e in &t.xep_support {
        let (weights, laws): (Vec<f64>, Vec<Vec<f64>>) =
            if error.kind == ErrorKind::NonBerksonLinear {
                let w = x_nodes
                    .iter()
                    .map(|(x, p)| {
                        p * mass_or_density(&error.noise, e - error.gamma0 - error.gamma1 * x)
                    })
                    .collect();
                (w, prior_laws.clone())
            } else {
                u_nodes
                    .iter()
                    .map(|(u, p)| (*p, outcome_law(outcome, &noise_nodes, e + u, &t.y_support)))
                    .unzip()
            };
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(ExchProbError::EmptyStratum(e));
        }
        let mut at_xep = vec![0.0; t.y_support.len()];
        for (w, law) in weights.iter().zip(&laws) {
            for (a, l) in at_xep.iter_mut().zip(law) {
                *a += w / total * l;
            }
        }
        for law in &at_support {
            for (l, a) in law.iter().zip(&at_xep) {
                t.cells.push(l * a);
            }
        }
    }
    Ok(t)
}

/// The product table of the Table 2 world (Y = 0.1 X + 0.1 W with
/// three-point X, W and U). Computed on the integer scale X + W and rescaled.
pub fn table2_analytic() -> Result<ExchProbTable, ExchProbError> {
    let three_point = Distribution::RoundedUniform { lo: -1.0, hi: 1.0 };
    let outcome = OutcomeModel {
        beta_x: 1.0,
        noise: three_point,
        ..OutcomeModel::default()
    };
    let mut t = analytic_product_table(
        &outcome,
        &ErrorModel::linear(0.0, 1.0, three_point),
        &Distribution::RoundedUniform { lo: 8.0, hi: 10.0 },
        &Supports {
            xep: (7..=11).map(f64::from).collect(),
            x: vec![8.0, 9.0, 10.0],
            y: (7..=11).map(f64::from).collect(),
        },
    )?;
    t.y_support = t.y_support.iter().map(|y| canonical(y * 0.1)).collect();
    Ok(t)
}

/// `Σ y P(Xep = index) − Σ y P(Xep = reference)` on an empirical table. The
/// standard error is attached when stratum sizes are known.
pub fn aee_from_table(
    t: &ExchProbTable,
    index: f64,
    reference: f64,
) -> Result<EffectEstimate, ExchProbError> {
    if t.mode != TableMode::EmpiricalConditionalJoint {
        return Err(ExchProbError::WrongMode {
            needed: TableMode::EmpiricalConditionalJoint.label(),
            got: t.mode.label(),
        });
    }
    let moments = |e: f64| -> Result<(f64, f64), ExchProbError> {
        let m = t.outcome_margin(e)?;
        let mean: f64 = m.iter().zip(&t.y_support).map(|(p, y)| p * y).sum();
        let var: f64 = m
            .iter()
            .zip(&t.y_support)
            .map(|(p, y)| p * (y - mean).powi(2))
            .sum();
        Ok((mean, var))
    };
    let (m1, v1) = moments(index)?;
    let (m0, v0) = moments(reference)?;
    let mut est = EffectEstimate::new(
        Estimand::RiskDifference,
        (index - reference).abs(),
        EstimatorKind::Naive,
        m1 - m0,
    );
    if let (Some(n1), Some(n0)) = (t.stratum_size(index), t.stratum_size(reference)) {
        est.std_error = Some((v1 / n1 as f64 + v0 / n0 as f64).sqrt());
    }
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Symmetry {
    pub symmetric: bool,
    pub max_asymmetry: f64,
}

/// Whether the X distribution in the Xep = `center` stratum is symmetric
/// about `center`.
pub fn symmetry_check(
    t: &ExchProbTable,
    center: f64,
    tolerance: f64,
) -> Result<Symmetry, ExchProbError> {
    let m = t.exposure_margin(center)?;
    let mass = |x: f64| position(&t.x_support, x).map_or(0.0, |j| m[j]);
    let max_asymmetry = t
        .x_support
        .iter()
        .map(|&x| (mass(x) - mass(2.0 * center - x)).abs())
        .fold(0.0, f64::max);
    Ok(Symmetry {
        symmetric: max_asymmetry < tolerance,
        max_asymmetry,
    })
}
