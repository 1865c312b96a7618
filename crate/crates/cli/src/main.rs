use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use peclab::bias::{figure2_grid, report_closed_form, report_from_data, FIGURE2_GAMMAS};
use peclab::calibrate::{calibrate_with_validation, Condition};
use peclab::datagen::{generate_scenario, generate_table2_world};
use peclab::dataset::Dataset;
use peclab::estimate::{g_computation, ipw_gps_aee, naive_regression_aee, IpwOptions};
use peclab::exchprob::{aee_from_table, empirical_table, table2_analytic};
use peclab::fmt::sig;
use peclab::model::{parse_scenario, Estimand, Link};
use peclab::sim::{
    default_methods, reproduce, run_study, Method, ReproduceOptions, StudyConfig, Table,
    DEFAULT_SEED,
};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_REPRODUCTION: u8 = 3;

/// Measurement-error simulation, calibration and effect estimation.
#[derive(Debug, Parser)]
#[command(name = "peclab", version)]
struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true, env = "PECLAB_SEED")]
    seed: Option<u64>,

    /// Worker threads for replication-parallel work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte Carlo study of a scenario file.
    Simulate(SimulateArgs),
    /// Reproduce one of the published tables and compare cell by cell.
    Reproduce(ReproduceArgs),
    /// Exchangeability-probability table P(X, Y | Xep).
    Exchprob(ExchprobArgs),
    /// Bias factors from error-model parameters or data.
    Bias(BiasArgs),
    /// Add regression-calibrated columns to a dataset.
    Calibrate(CalibrateArgs),
    /// Estimate an exposure effect from a dataset.
    Estimate(EstimateArgs),
}

#[derive(Debug, Args)]
struct IpwArgs {
    /// Cap IPW weights at this upper quantile, e.g. 0.995.
    #[arg(long, value_name = "Q")]
    ipw_truncate: Option<f64>,

    /// Use 1/density weights without the marginal-density numerator.
    #[arg(long)]
    ipw_unstabilized: bool,
}

impl IpwArgs {
    fn options(&self) -> IpwOptions {
        IpwOptions {
            stabilize: !self.ipw_unstabilized,
            truncate_quantile: self.ipw_truncate,
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario file.
    #[arg(long)]
    scenario: PathBuf,

    /// Replications (overrides the file).
    #[arg(long)]
    runs: Option<usize>,

    /// Rows per replication (overrides the file).
    #[arg(long)]
    n: Option<usize>,

    /// Comma-separated methods; default depends on the outcome link.
    /// Known: naive1, naive2, rc, ipw_x, ipw_rc, gcomp_x_cv, gcomp_x_c,
    /// gcomp_naive1, gcomp_naive2, gcomp_rc.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,

    /// Fit calibration once on replication 0 instead of in every replication.
    #[arg(long)]
    fixed_calibration: bool,

    #[command(flatten)]
    ipw: IpwArgs,

    /// Also write replication 0's dataset to this CSV.
    #[arg(long, value_name = "PATH")]
    emit_csv: Option<PathBuf>,

    /// Results CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TableArg {
    Table2,
    Table3,
    Table4,
    Table5,
}

impl From<TableArg> for Table {
    fn from(t: TableArg) -> Table {
        match t {
            TableArg::Table2 => Table::Table2,
            TableArg::Table3 => Table::Table3,
            TableArg::Table4 => Table::Table4,
            TableArg::Table5 => Table::Table5,
        }
    }
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    /// Which published table to reproduce.
    #[arg(long, value_enum)]
    table: TableArg,

    /// Replications per scenario (default 250).
    #[arg(long)]
    runs: Option<usize>,

    /// Rows per replication (default 10000).
    #[arg(long)]
    n: Option<usize>,

    /// Fit calibration once on replication 0 instead of in every replication.
    #[arg(long)]
    fixed_calibration: bool,

    #[command(flatten)]
    ipw: IpwArgs,

    /// Report CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Empirical,
    Analytic,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["input", "table2_world"]))]
struct ExchprobArgs {
    /// Dataset CSV with Xep, X and Y columns.
    #[arg(long)]
    input: Option<PathBuf>,

    /// Use the three-point world of the worked example instead of a file.
    #[arg(long)]
    table2_world: bool,

    /// Rows drawn for --table2-world in empirical mode.
    #[arg(long, default_value_t = 1_000_000)]
    n: usize,

    /// `empirical` counts strata in data; `analytic` integrates the known
    /// model (worked-example world only).
    #[arg(long, value_enum, default_value = "empirical")]
    mode: ModeArg,

    /// Also print AEE(index vs reference), e.g. `--aee 10,9`.
    #[arg(long, value_name = "INDEX,REFERENCE", value_parser = parse_pair)]
    aee: Option<(f64, f64)>,

    /// Long-format table CSV; the grid goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BiasArgs {
    /// Slope of Xep on X in the error model.
    #[arg(long, allow_hyphen_values = true, requires_all = ["var_x", "var_u"], conflicts_with_all = ["from_csv", "figure2"])]
    gamma1: Option<f64>,

    /// Variance of X given the adjustment set.
    #[arg(long)]
    var_x: Option<f64>,

    /// Variance of the additive error U.
    #[arg(long)]
    var_u: Option<f64>,

    /// Estimate the factors from a dataset with X and Xep.
    #[arg(long, conflicts_with = "figure2")]
    from_csv: Option<PathBuf>,

    /// Adjustment columns for --from-csv.
    #[arg(long, value_delimiter = ',')]
    adjust: Vec<String>,

    /// Emit the (gamma1, p_rd, lambda) curve grid as CSV.
    #[arg(long)]
    figure2: bool,

    /// CSV output (default: aligned text on stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ConditionArg {
    One,
    Two,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Dataset CSV with true and error-prone columns.
    #[arg(long)]
    input: PathBuf,

    /// Dataset CSV with X_RC, C_RC (and V_RC) added.
    #[arg(long)]
    output: PathBuf,

    /// `one` calibrates X and C; `two` also calibrates V.
    #[arg(long, value_enum, default_value = "two")]
    condition: ConditionArg,

    /// Error-free covariates included in every calibration model.
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,

    /// Fit on the leading fraction of rows, apply to all.
    #[arg(long, default_value_t = 1.0)]
    validation_fraction: f64,

    /// Coefficient sidecar CSV (default: OUTPUT with `.coef.csv`).
    #[arg(long)]
    coefficients: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Naive,
    Gcomp,
    Ipw,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimandArg {
    Rd,
    Rr,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LinkArg {
    Identity,
    Logit,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Dataset CSV containing Y, the exposure and the adjustment columns.
    #[arg(long)]
    input: PathBuf,

    /// Linear regression, g-computation or GPS-weighted regression.
    #[arg(long, value_enum)]
    method: MethodArg,

    /// Exposure (treatment) column.
    #[arg(long, default_value = "Xep")]
    exposure: String,

    /// Adjustment (or GPS covariate) columns.
    #[arg(long, value_delimiter = ',')]
    adjust: Vec<String>,

    /// Exposure contrast; g-computation shifts every row by this amount.
    #[arg(long, default_value_t = 1.0)]
    delta: f64,

    /// Risk difference or risk ratio (ratio only for g-computation).
    #[arg(long, value_enum, default_value = "rd")]
    estimand: EstimandArg,

    /// Outcome link for g-computation.
    #[arg(long, value_enum, default_value = "logit")]
    link: LinkArg,

    #[command(flatten)]
    ipw: IpwArgs,

    /// Result CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or("expected two comma-separated numbers")?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok((num(a)?, num(b)?))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_DATA)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate(a) => simulate(a, cli.seed, cli.jobs),
        Command::Reproduce(a) => reproduce_table(a, cli.seed, cli.jobs),
        Command::Exchprob(a) => exchprob(a, cli.seed),
        Command::Bias(a) => bias(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Estimate(a) => estimate(a),
    }
}

/// `--out` file or stdout.
fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Dataset::read_csv(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn simulate(a: SimulateArgs, seed: Option<u64>, jobs: Option<usize>) -> Result<u8> {
    let text = std::fs::read_to_string(&a.scenario)
        .with_context(|| format!("reading {}", a.scenario.display()))?;
    let mut s =
        parse_scenario(&text).with_context(|| format!("parsing {}", a.scenario.display()))?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(r) = a.runs {
        s.replications = r;
    }
    if let Some(n) = a.n {
        s.n = n;
    }
    let methods = if a.methods.is_empty() {
        default_methods(s.outcome.link)
    } else {
        a.methods
            .iter()
            .map(|m| Method::parse(m).with_context(|| format!("unknown method `{m}`")))
            .collect::<Result<_>>()?
    };
    if let Some(path) = &a.emit_csv {
        let d = generate_scenario(&s, 0)?;
        d.write_csv(File::create(path).with_context(|| format!("creating {}", path.display()))?)?;
    }
    let config = StudyConfig {
        delta: 1.0,
        ipw: a.ipw.options(),
        refit_calibration: !a.fixed_calibration,
        jobs,
    };
    let results = run_study(&s, &methods, &config)?;
    let mut out = sink(a.out.as_deref())?;
    writeln!(
        out,
        "scenario,method,estimand,mean,mc_sd,runs,paper_value,abs_diff,pass"
    )?;
    for r in &results {
        writeln!(
            out,
            "{},{},{},{},{},{},,,",
            r.scenario,
            r.method.id(),
            r.estimand.label(),
            sig(r.mean),
            sig(r.mc_sd),
            r.replications
        )?;
    }
    out.flush()?;
    let runtime = results.first().map_or(0, |r| r.runtime_ms);
    eprintln!(
        "{}: {} replications in {runtime} ms",
        s.name, s.replications
    );
    Ok(0)
}

fn reproduce_table(a: ReproduceArgs, seed: Option<u64>, jobs: Option<usize>) -> Result<u8> {
    let options = ReproduceOptions {
        seed: seed.unwrap_or(DEFAULT_SEED),
        runs: a.runs,
        n: a.n,
        jobs,
        ipw: a.ipw.options(),
        refit_calibration: !a.fixed_calibration,
        ..ReproduceOptions::default()
    };
    let report = reproduce(a.table.into(), &options)?;
    let mut out = sink(a.out.as_deref())?;
    report.write_csv(&mut out)?;
    out.flush()?;
    eprint!("{}", report.summary());
    Ok(if report.all_pass() {
        0
    } else {
        EXIT_REPRODUCTION
    })
}

fn exchprob(a: ExchprobArgs, seed: Option<u64>) -> Result<u8> {
    let table = match (a.mode, &a.input) {
        (ModeArg::Analytic, Some(_)) => {
            bail!("analytic mode needs a known model; use --table2-world")
        }
        (ModeArg::Analytic, None) => table2_analytic()?,
        (ModeArg::Empirical, Some(path)) => empirical_table(&read_dataset(path)?)?,
        (ModeArg::Empirical, None) => {
            empirical_table(&generate_table2_world(a.n, seed.unwrap_or(DEFAULT_SEED))?)?
        }
    };
    print!("{}", table.render_grid());
    if let Some((index, reference)) = a.aee {
        let e = aee_from_table(&table, index, reference)?;
        match e.std_error {
            Some(se) => println!(
                "AEE({index} vs {reference}) = {} (se {})",
                sig(e.value),
                sig(se)
            ),
            None => println!("AEE({index} vs {reference}) = {}", sig(e.value)),
        }
    }
    if let Some(path) = &a.out {
        table.write_csv(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )?;
    }
    Ok(0)
}

fn bias(a: BiasArgs) -> Result<u8> {
    let mut out = sink(a.out.as_deref())?;
    if a.figure2 {
        writeln!(out, "gamma1,p_rd,lambda")?;
        for (g, p, l) in figure2_grid(&FIGURE2_GAMMAS, 100) {
            writeln!(out, "{},{},{}", sig(g), sig(p), sig(l))?;
        }
        out.flush()?;
        return Ok(0);
    }
    let report = match (a.gamma1, &a.from_csv) {
        (Some(g), _) => {
            report_closed_form(g, a.var_x.unwrap_or_default(), a.var_u.unwrap_or_default())?
        }
        (None, Some(path)) => report_from_data(&read_dataset(path)?, &strs(&a.adjust))?,
        (None, None) => bail!("give --gamma1/--var-x/--var-u, --from-csv or --figure2"),
    };
    if a.out.is_some() {
        writeln!(
            out,
            "gamma1,lambda,p_rd,r_squared_check,surrogate_lower,surrogate_upper"
        )?;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            sig(report.gamma1),
            sig(report.lambda),
            sig(report.p_rd),
            report.r_squared_check.map(sig).unwrap_or_default(),
            sig(report.surrogate_lower),
            sig(report.surrogate_upper)
        )?;
    } else {
        write!(out, "{report}")?;
    }
    out.flush()?;
    Ok(0)
}

fn calibrate(a: CalibrateArgs) -> Result<u8> {
    let d = read_dataset(&a.input)?;
    let condition = match a.condition {
        ConditionArg::One => Condition::One,
        ConditionArg::Two => Condition::Two,
    };
    let (cal, out) =
        calibrate_with_validation(&d, condition, &strs(&a.covariates), a.validation_fraction)?;
    out.write_csv(
        File::create(&a.output).with_context(|| format!("creating {}", a.output.display()))?,
    )?;
    let sidecar = a
        .coefficients
        .unwrap_or_else(|| a.output.with_extension("coef.csv"));
    cal.write_coefficients(
        File::create(&sidecar).with_context(|| format!("creating {}", sidecar.display()))?,
    )?;
    eprintln!("wrote {} and {}", a.output.display(), sidecar.display());
    Ok(0)
}

fn estimate(a: EstimateArgs) -> Result<u8> {
    let d = read_dataset(&a.input)?;
    let adjust = strs(&a.adjust);
    let estimand = match a.estimand {
        EstimandArg::Rd => Estimand::RiskDifference,
        EstimandArg::Rr => Estimand::RiskRatio,
    };
    let link = match a.link {
        LinkArg::Identity => Link::Identity,
        LinkArg::Logit => Link::Logit,
    };
    let e = match a.method {
        MethodArg::Naive => {
            if estimand != Estimand::RiskDifference {
                bail!("naive regression reports a risk difference only");
            }
            naive_regression_aee(&d, &a.exposure, &adjust, Link::Identity, a.delta)?
        }
        MethodArg::Gcomp => g_computation(&d, &a.exposure, &adjust, a.delta, estimand, link)?,
        MethodArg::Ipw => {
            if estimand != Estimand::RiskDifference {
                bail!("IPW reports a risk difference only");
            }
            ipw_gps_aee(&d, &a.exposure, &adjust, a.delta, a.ipw.options())?
        }
    };
    let mut out = sink(a.out.as_deref())?;
    writeln!(out, "method,exposure,estimand,delta,value")?;
    writeln!(
        out,
        "{},{},{},{},{}",
        format!("{:?}", a.method).to_lowercase(),
        a.exposure,
        e.estimand.label(),
        sig(e.delta),
        sig(e.value)
    )?;
    out.flush()?;
    Ok(0)
}
