//! Line-oriented `section.key = value` scenario files.
//!
//! The grammar is documented in `docs/scenario-format.md`. Omitted keys take
//! the defaults of [`Scenario`]'s component types; `scenario.name` and
//! `scenario.n` are required.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use super::{Distribution, ErrorKind, ErrorModel, Link, OutcomeModel, Scenario, StructuralSpec};

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct ScenarioParseError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ScenarioParseError {
    ScenarioParseError {
        line,
        message: message.into(),
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioParseError> {
    let mut s = Scenario {
        name: String::new(),
        outcome: OutcomeModel::default(),
        exposure_error: ErrorModel::none(),
        confounder_error: ErrorModel::none(),
        v_error: ErrorModel::none(),
        x_model: StructuralSpec::default(),
        c_model: StructuralSpec::default(),
        v_model: StructuralSpec::default(),
        n: 0,
        replications: 250,
        seed: 0,
    };
    let mut seen = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(line, "expected `section.key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(err(line, format!("duplicate key `{key}`")));
        }
        let (section, field) = key
            .split_once('.')
            .ok_or_else(|| err(line, format!("key `{key}` has no section")))?;

        let num = || parse_f64(value).map_err(|m| err(line, m));
        let dist = || parse_distribution(value).map_err(|m| err(line, m));
        let unknown = || err(line, format!("unknown key `{key}`"));

        match section {
            "scenario" => match field {
                "name" => s.name = value.to_string(),
                "n" => {
                    s.n = value
                        .parse()
                        .map_err(|_| err(line, format!("invalid count `{value}`")))?
                }
                "replications" => {
                    s.replications = value
                        .parse()
                        .map_err(|_| err(line, format!("invalid count `{value}`")))?
                }
                "seed" => {
                    s.seed = value
                        .parse()
                        .map_err(|_| err(line, format!("invalid seed `{value}`")))?
                }
                _ => return Err(unknown()),
            },
            "outcome" => {
                let o = &mut s.outcome;
                match field {
                    "link" => {
                        o.link = match value {
                            "identity" => Link::Identity,
                            "logit" => Link::Logit,
                            "log" => Link::Log,
                            _ => return Err(err(line, format!("unknown link `{value}`"))),
                        }
                    }
                    "beta0" => o.beta0 = num()?,
                    "beta_x" => o.beta_x = num()?,
                    "beta_x2" => o.beta_x2 = num()?,
                    "beta_c" => o.beta_c = num()?,
                    "beta_v" => o.beta_v = num()?,
                    "noise" => o.noise = dist()?,
                    _ => return Err(unknown()),
                }
            }
            "exposure_error" | "confounder_error" | "v_error" => {
                let e = match section {
                    "exposure_error" => &mut s.exposure_error,
                    "confounder_error" => &mut s.confounder_error,
                    _ => &mut s.v_error,
                };
                match field {
                    "kind" => {
                        e.kind = match value {
                            "none" => ErrorKind::None,
                            "non_berkson_linear" => ErrorKind::NonBerksonLinear,
                            "pure_berkson" => ErrorKind::PureBerkson,
                            "shared_v" => ErrorKind::SharedV,
                            _ => return Err(err(line, format!("unknown error kind `{value}`"))),
                        }
                    }
                    "gamma0" => e.gamma0 = num()?,
                    "gamma1" => e.gamma1 = num()?,
                    "gamma_v" => e.gamma_v = num()?,
                    "noise" => e.noise = dist()?,
                    _ => return Err(unknown()),
                }
            }
            "x_model" | "c_model" | "v_model" => {
                let m = match section {
                    "x_model" => &mut s.x_model,
                    "c_model" => &mut s.c_model,
                    _ => &mut s.v_model,
                };
                match field {
                    "intercept" => m.intercept = num()?,
                    "coef_c" => m.coef_c = num()?,
                    "coef_v" => m.coef_v = num()?,
                    "noise" => m.noise = dist()?,
                    _ => return Err(unknown()),
                }
            }
            _ => return Err(unknown()),
        }
    }

    if !seen.contains("scenario.name") {
        return Err(err(0, "missing required key `scenario.name`"));
    }
    if !seen.contains("scenario.n") {
        return Err(err(0, "missing required key `scenario.n`"));
    }
    Ok(s)
}

fn parse_f64(value: &str) -> Result<f64, String> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("invalid number `{value}`"))
}

fn parse_distribution(value: &str) -> Result<Distribution, String> {
    let bad = || format!("invalid distribution `{value}`");
    let open = value.find('(').ok_or_else(bad)?;
    if !value.ends_with(')') {
        return Err(bad());
    }
    let family = value[..open].trim();
    let args: Vec<f64> = value[open + 1..value.len() - 1]
        .split(',')
        .map(|a| parse_f64(a.trim()))
        .collect::<Result<_, _>>()?;
    let want = |k: usize| {
        if args.len() == k {
            Ok(())
        } else {
            Err(format!(
                "`{family}` takes {k} parameter(s), got {}",
                args.len()
            ))
        }
    };
    let d = match family {
        "normal" => {
            want(2)?;
            Distribution::Normal {
                mean: args[0],
                sd: args[1],
            }
        }
        "gamma" => {
            want(2)?;
            Distribution::Gamma {
                shape: args[0],
                scale: args[1],
            }
        }
        "rounded_uniform" => {
            want(2)?;
            Distribution::RoundedUniform {
                lo: args[0],
                hi: args[1],
            }
        }
        "point_mass" => {
            want(1)?;
            Distribution::PointMass(args[0])
        }
        _ => return Err(format!("unknown distribution family `{family}`")),
    };
    d.check()?;
    Ok(d)
}

/// Serializes every field, so `parse_scenario(&write_scenario(s)) == s`.
pub fn write_scenario(s: &Scenario) -> String {
    let mut out = String::new();
    let mut kv = |key: &str, value: &dyn std::fmt::Display| {
        let _ = writeln!(out, "{key} = {value}");
    };
    kv("scenario.name", &s.name);
    kv("scenario.n", &s.n);
    kv("scenario.replications", &s.replications);
    kv("scenario.seed", &s.seed);

    let o = &s.outcome;
    let link = match o.link {
        Link::Identity => "identity",
        Link::Logit => "logit",
        Link::Log => "log",
    };
    kv("outcome.link", &link);
    kv("outcome.beta0", &o.beta0);
    kv("outcome.beta_x", &o.beta_x);
    kv("outcome.beta_x2", &o.beta_x2);
    kv("outcome.beta_c", &o.beta_c);
    kv("outcome.beta_v", &o.beta_v);
    kv("outcome.noise", &o.noise);

    for (section, e) in [
        ("exposure_error", &s.exposure_error),
        ("confounder_error", &s.confounder_error),
        ("v_error", &s.v_error),
    ] {
        let kind = match e.kind {
            ErrorKind::None => "none",
            ErrorKind::NonBerksonLinear => "non_berkson_linear",
            ErrorKind::PureBerkson => "pure_berkson",
            ErrorKind::SharedV => "shared_v",
        };
        kv(&format!("{section}.kind"), &kind);
        kv(&format!("{section}.gamma0"), &e.gamma0);
        kv(&format!("{section}.gamma1"), &e.gamma1);
        kv(&format!("{section}.gamma_v"), &e.gamma_v);
        kv(&format!("{section}.noise"), &e.noise);
    }

    for (section, m) in [
        ("x_model", &s.x_model),
        ("c_model", &s.c_model),
        ("v_model", &s.v_model),
    ] {
        kv(&format!("{section}.intercept"), &m.intercept);
        kv(&format!("{section}.coef_c"), &m.coef_c);
        kv(&format!("{section}.coef_v"), &m.coef_v);
        kv(&format!("{section}.noise"), &m.noise);
    }
    out
}
