//! Run configuration: flags merged over an optional JSON file, checked
//! against the keys each command understands, with defaults filled in.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    OperMonodromy,
    OperEichler,
    OperWk,
    HnVerify,
    RepAnalyze,
    HarmonicSolve,
    GaugeFlow,
    FormsBuild,
    Dims,
    Suite,
}

impl Command {
    #[cfg(test)]
    pub const ALL: [Command; 10] = [
        Command::OperMonodromy,
        Command::OperEichler,
        Command::OperWk,
        Command::HnVerify,
        Command::RepAnalyze,
        Command::HarmonicSolve,
        Command::GaugeFlow,
        Command::FormsBuild,
        Command::Dims,
        Command::Suite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::OperMonodromy => "oper-monodromy",
            Command::OperEichler => "oper-eichler",
            Command::OperWk => "oper-wk",
            Command::HnVerify => "hn-verify",
            Command::RepAnalyze => "rep-analyze",
            Command::HarmonicSolve => "harmonic-solve",
            Command::GaugeFlow => "gauge-flow",
            Command::FormsBuild => "forms-build",
            Command::Dims => "dims",
            Command::Suite => "suite",
        }
    }

    /// Keys the command reads, with their defaults.
    fn defaults(self) -> Params {
        let p = Params::default();
        match self {
            Command::OperMonodromy => Params {
                n: Some(2),
                q: Some("zero".into()),
                radius: Some(3),
                z0: Some([0.0, 1.0]),
                tol: Some(1e-10),
                ..p
            },
            Command::OperEichler => Params { n: Some(5), radius: Some(5), z0: Some([0.0, 1.0]), tol: Some(1e-10), ..p },
            Command::OperWk => Params { n: Some(4), ..p },
            Command::HnVerify | Command::Dims => Params { n: Some(2), g: Some(2), ..p },
            Command::RepAnalyze => Params { n: Some(2), radius: Some(3), tol: Some(1e-10), ..p },
            Command::HarmonicSolve => Params {
                rep: Some("fuchsian".into()),
                n: Some(2),
                refinement: Some(2),
                tol: Some(1e-8),
                max_iters: Some(5000),
                slope: Some(0.01),
                window: Some(200),
                ..p
            },
            Command::GaugeFlow => Params {
                n: Some(2),
                refinement: Some(1),
                steps: Some(500),
                seed: Some(7),
                dt: Some(0.05),
                mu: Some(0.0),
                ..p
            },
            Command::FormsBuild => Params { k: Some(2), radius: Some(6), ..p },
            Command::Suite => Params { level: Some("smoke".into()), perturb: Some("none".into()), seed: Some(7), ..p },
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Every configurable key. Unset keys are omitted when serialized.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refinement: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(rename = "Q", skip_serializing_if = "Option::is_none")]
    pub q: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z0: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rep: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturb: Option<String>,
}

macro_rules! overlay {
    ($top:expr, $base:expr, $($f:ident),*) => {
        Params { $($f: $top.$f.or($base.$f),)* }
    };
}

impl Params {
    /// `self` wherever set, otherwise `base`.
    pub fn over(self, base: Params) -> Params {
        overlay!(
            self, base, command, n, g, k, refinement, radius, tol, seed, steps, max_iters, dt, mu, slope, window, q,
            z0, rep, level, perturb
        )
    }

    fn keys(&self) -> Vec<String> {
        match serde_json::to_value(self) {
            Ok(Value::Object(m)) => m.keys().cloned().collect(),
            _ => Vec::new(),
        }
    }

    pub fn to_json(&self) -> Map<String, Value> {
        match serde_json::to_value(self) {
            Ok(Value::Object(m)) => m,
            _ => Map::new(),
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn load(path: &Path) -> Result<Params, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}

/// Merges flags over the file, rejects keys the command does not read and
/// fills in defaults. The result names the command.
pub fn resolve(cmd: Command, flags: Params, file: Option<Params>) -> Result<Params, ConfigError> {
    let file = file.unwrap_or_default();
    if let Some(c) = &file.command {
        if c != cmd.name() {
            return Err(ConfigError(format!("config is for command {c:?}, not {:?}", cmd.name())));
        }
    }
    let merged = flags.over(file);
    let defaults = cmd.defaults();
    let allowed = defaults.keys();
    for key in merged.keys() {
        if key != "command" && !allowed.contains(&key) {
            return Err(ConfigError(format!("key {key:?} does not apply to {cmd}")));
        }
    }
    Ok(Params { command: Some(cmd.name().into()), ..merged.over(defaults) })
}
