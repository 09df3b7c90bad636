//! Line-oriented `key = value` run configurations.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}` for command `{command}`")]
    UnknownKey { line: usize, key: String, command: String },
    #[error("line {line}: key `{key}` expects {expected}, got `{value}`")]
    Type { line: usize, key: String, expected: String, value: String },
    #[error("missing required key `{key}` for command `{command}`")]
    Missing { key: String, command: String },
    #[error("line {line}: unknown command `{value}`")]
    UnknownCommand { line: usize, value: String },
    #[error("no command given (use a `command` key or the command argument)")]
    NoCommand,
    #[error("line {line}: file is for command `{file}` but `{requested}` was requested")]
    CommandMismatch { line: usize, file: String, requested: String },
    #[error("{source_name}: `{key}` expects {expected}, got `{value}`")]
    Override { source_name: String, key: String, expected: String, value: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Sample,
    Evolve,
    SmoothingScan,
    EnergyDerivativeCheck,
    CountingVerify,
    CancellationVerify,
    PicardDivergence,
    MomentScan,
    BoundEval,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Sample,
        Command::Evolve,
        Command::SmoothingScan,
        Command::EnergyDerivativeCheck,
        Command::CountingVerify,
        Command::CancellationVerify,
        Command::PicardDivergence,
        Command::MomentScan,
        Command::BoundEval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Evolve => "evolve",
            Command::SmoothingScan => "smoothing-scan",
            Command::EnergyDerivativeCheck => "energy-derivative-check",
            Command::CountingVerify => "counting-verify",
            Command::CancellationVerify => "cancellation-verify",
            Command::PicardDivergence => "picard-divergence",
            Command::MomentScan => "moment-scan",
            Command::BoundEval => "bound-eval",
        }
    }

    /// Keys accepted by the command, besides the shared `seed`, `workers` and `out`.
    pub fn keys(self) -> &'static [KeySpec] {
        use Kind::*;
        const fn k(name: &'static str, kind: Kind, default: Option<&'static str>) -> KeySpec {
            KeySpec { name, kind, default }
        }
        const SCHEMES: &[&str] = &["rk4", "strang"];
        match self {
            Command::Sample => {
                const KEYS: &[KeySpec] = &[
                    k("s", Float, None),
                    k("cutoff", Int, None),
                    k("samples", Int, Some("1")),
                    k("degree", Int, Some("2")),
                    k("max_samples", Int, Some("1000000")),
                ];
                KEYS
            }
            Command::Evolve => {
                const KEYS: &[KeySpec] = &[
                    k("s", Float, Some("2.5")),
                    k("cutoff", Int, None),
                    k("degree", Int, Some("2")),
                    k("sample_index", Int, Some("0")),
                    k("scheme", Choice(SCHEMES), Some("rk4")),
                    k("dt", Float, None),
                    k("t_final", Float, None),
                    k("every", Int, Some("1")),
                    k("drift_tolerance", Float, Some("1e-6")),
                ];
                KEYS
            }
            Command::SmoothingScan => {
                const KEYS: &[KeySpec] = &[
                    k("s", Float, Some("2.5")),
                    k("cutoff", Int, None),
                    k("samples", Int, Some("10")),
                    k("s1", Float, Some("1.9")),
                    k("dt", Float, Some("0.01")),
                    k("t_final", Float, Some("1")),
                    k("every", Int, Some("10")),
                    k("max_samples", Int, Some("1000")),
                ];
                KEYS
            }
            Command::EnergyDerivativeCheck => {
                const KEYS: &[KeySpec] = &[
                    k("s", Float, Some("2.5")),
                    k("cutoff", Int, Some("3")),
                    k("degree", Int, Some("2")),
                    k("sample_index", Int, Some("0")),
                    k("t0", Float, Some("0.2")),
                    k("dt", Float, Some("1e-4")),
                    k("h_values", FloatList, Some("1e-2, 5e-3, 2.5e-3")),
                    k("ratio_tolerance", Float, Some("0.2")),
                    k("floor_tolerance", Float, Some("1e-7")),
                    k("literal_cutoff", Int, Some("2")),
                    k("literal_fields", Int, Some("20")),
                    k("literal_tolerance", Float, Some("1e-10")),
                    k("tuple_budget", Float, Some("2e8")),
                ];
                KEYS
            }
            Command::CountingVerify => {
                const KEYS: &[KeySpec] = &[
                    k("max_size", Int, Some("16")),
                    k("epsilon", Float, Some("0.1")),
                    k("constant_limit", Float, Some("100")),
                    k("psi_max_norm", Int, Some("8")),
                    k("psi_s", Float, Some("2.5")),
                    k("psi_length", Int, Some("4")),
                ];
                KEYS
            }
            Command::CancellationVerify => {
                const KEYS: &[KeySpec] = &[
                    k("s", Float, Some("2.5")),
                    k("cutoff", Int, Some("3")),
                    k("degree", Int, Some("2")),
                    k("fields", Int, Some("100")),
                    k("field_s", Float, Some("2.5")),
                    k("tolerance", Float, Some("1e-12")),
                    k("set", Choice(&["literal", "completed"]), Some("literal")),
                ];
                KEYS
            }
            Command::PicardDivergence => {
                const KEYS: &[KeySpec] = &[
                    k("sigma", Float, Some("0.5")),
                    k("sigma1", Float, Some("1.0")),
                    k("t", Float, Some("1.0")),
                    k("n_values", IntList, Some("8, 16, 32, 64")),
                    k("slope_tolerance", Float, Some("0.1")),
                    k("collapse_n", Int, Some("16")),
                    k("collapse_factor", Float, Some("10")),
                ];
                KEYS
            }
            Command::MomentScan => {
                const KEYS: &[KeySpec] = &[
                    k("functional", Choice(&["qn", "weighted-density"]), None),
                    k("s", Float, Some("2.5")),
                    k("cutoff", Int, None),
                    k("degree", Int, Some("2")),
                    k("lambda", Float, Some("10")),
                    k("energy_cutoff", Choice(&["per-volume", "integral"]), Some("per-volume")),
                    k("samples", Int, None),
                    k("p_values", FloatList, None),
                    k("doubling", Bool, Some("false")),
                    k("beta_limit", Float, Some("1.0")),
                    k("max_samples", Int, Some("1000000")),
                ];
                KEYS
            }
            Command::BoundEval => {
                const KEYS: &[KeySpec] = &[
                    k("c0", Float, Some("1")),
                    k("alpha", Float, Some("0.5")),
                    k("m_p", Float, Some("1")),
                    k("t", Float, Some("1")),
                    k("q", Float, Some("2")),
                    k("b0", Float, Some("1")),
                    k("eps0", Float, Some("0.5")),
                    k("rho_values", FloatList, Some("0, 0.25, 1")),
                ];
                KEYS
            }
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kind {
    Int,
    Float,
    Bool,
    Choice(&'static [&'static str]),
    FloatList,
    IntList,
    Path,
}

impl Kind {
    fn describe(self) -> String {
        match self {
            Kind::Int => "a non-negative integer".into(),
            Kind::Float => "a finite number".into(),
            Kind::Bool => "true or false".into(),
            Kind::Choice(c) => format!("one of {}", c.join(", ")),
            Kind::FloatList => "a comma-separated list of numbers".into(),
            Kind::IntList => "a comma-separated list of integers".into(),
            Kind::Path => "a path".into(),
        }
    }

    fn parse(self, raw: &str) -> Option<Value> {
        let float = |t: &str| t.trim().parse::<f64>().ok().filter(|x| x.is_finite());
        let int = |t: &str| t.trim().parse::<u64>().ok();
        match self {
            Kind::Int => int(raw).map(Value::Int),
            Kind::Float => float(raw).map(Value::Float),
            Kind::Bool => match raw {
                "true" => Some(Value::Bool(true)),
                "false" => Some(Value::Bool(false)),
                _ => None,
            },
            Kind::Choice(c) => c.contains(&raw).then(|| Value::Text(raw.to_string())),
            Kind::FloatList => raw.split(',').map(float).collect::<Option<Vec<_>>>().map(Value::FloatList),
            Kind::IntList => raw.split(',').map(int).collect::<Option<Vec<_>>>().map(Value::IntList),
            Kind::Path => (!raw.is_empty()).then(|| Value::Text(raw.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeySpec {
    pub name: &'static str,
    pub kind: Kind,
    /// `None` marks a required key.
    pub default: Option<&'static str>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Int(u64),
    Float(f64),
    Bool(bool),
    Text(String),
    FloatList(Vec<f64>),
    IntList(Vec<u64>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: Vec<String>| v.join(", ");
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v:?}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Text(v) => f.write_str(v),
            Value::FloatList(v) => f.write_str(&join(v.iter().map(|x| format!("{x:?}")).collect())),
            Value::IntList(v) => f.write_str(&join(v.iter().map(|x| x.to_string()).collect())),
        }
    }
}

const SHARED: [KeySpec; 3] = [
    KeySpec { name: "seed", kind: Kind::Int, default: Some("0") },
    KeySpec { name: "workers", kind: Kind::Int, default: Some("0") },
    KeySpec { name: "out", kind: Kind::Path, default: Some("nlsq-out") },
];

/// A validated configuration. Every key of the command is present, with
/// defaults filled in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub params: BTreeMap<String, Value>,
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
    pub output_dir: PathBuf,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

fn spec_for(command: Command, key: &str) -> Option<KeySpec> {
    command.keys().iter().chain(SHARED.iter()).find(|k| k.name == key).copied()
}

/// Parses a configuration whose command is given by a `command` key.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_for(text, None)
}

/// Parses a configuration for `requested`, or for the file's `command` key
/// when `requested` is `None`. If both are present they must agree.
pub fn parse_config_for(text: &str, requested: Option<Command>) -> Result<RunConfig, ConfigError> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    let mut file_command: Option<(usize, String)> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(ConfigError::Syntax { line, text: raw.trim().to_string() });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax { line, text: raw.trim().to_string() });
        }
        if key == "command" {
            file_command = Some((line, value.to_string()));
        } else {
            entries.push((line, key.to_string(), value.to_string()));
        }
    }
    let command = match (&file_command, requested) {
        (Some((line, name)), req) => {
            let c = name
                .parse::<Command>()
                .map_err(|_| ConfigError::UnknownCommand { line: *line, value: name.clone() })?;
            if let Some(r) = req.filter(|&r| r != c) {
                return Err(ConfigError::CommandMismatch { line: *line, file: c.to_string(), requested: r.to_string() });
            }
            c
        }
        (None, Some(r)) => r,
        (None, None) => return Err(ConfigError::NoCommand),
    };

    let mut seen: BTreeMap<String, (usize, Value)> = BTreeMap::new();
    let mut warnings = Vec::new();
    for (line, key, raw) in entries {
        let spec = spec_for(command, &key)
            .ok_or_else(|| ConfigError::UnknownKey { line, key: key.clone(), command: command.to_string() })?;
        let value = spec.kind.parse(&raw).ok_or_else(|| ConfigError::Type {
            line,
            key: key.clone(),
            expected: spec.kind.describe(),
            value: raw.clone(),
        })?;
        if let Some((prev, _)) = seen.get(&key) {
            warnings.push(format!("line {line}: duplicate key `{key}` overrides line {prev}"));
        }
        seen.insert(key, (line, value));
    }

    let mut params = BTreeMap::new();
    for spec in command.keys() {
        let value = match (seen.remove(spec.name), spec.default) {
            (Some((_, v)), _) => v,
            (None, Some(d)) => spec.kind.parse(d).expect("defaults parse"),
            (None, None) => return Err(ConfigError::Missing { key: spec.name.into(), command: command.to_string() }),
        };
        params.insert(spec.name.to_string(), value);
    }
    let mut shared = |name: &str| {
        seen.remove(name)
            .map(|(_, v)| v)
            .unwrap_or_else(|| spec_for(command, name).and_then(|s| s.kind.parse(s.default.unwrap())).unwrap())
    };
    let (Value::Int(seed), Value::Int(workers), Value::Text(out)) = (shared("seed"), shared("workers"), shared("out"))
    else {
        unreachable!("shared keys have fixed kinds")
    };
    Ok(RunConfig { command, params, seed, workers: workers as usize, output_dir: PathBuf::from(out), warnings })
}

impl RunConfig {
    /// Canonical text form; parsing it gives back an equal configuration.
    pub fn to_text(&self) -> String {
        let mut out = format!("command = {}\n", self.command);
        for (k, v) in &self.params {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out.push_str(&format!("seed = {}\nworkers = {}\nout = {}\n", self.seed, self.workers, self.output_dir.display()));
        out
    }

    /// Applies an override for `seed`, `workers` or `out` from a named source.
    pub fn set_shared(&mut self, key: &str, raw: &str, source_name: &str) -> Result<(), ConfigError> {
        let spec = SHARED.iter().find(|s| s.name == key).expect("shared key");
        let err = || ConfigError::Override {
            source_name: source_name.into(),
            key: key.into(),
            expected: spec.kind.describe(),
            value: raw.into(),
        };
        match spec.kind.parse(raw.trim()).ok_or_else(err)? {
            Value::Int(v) if key == "seed" => self.seed = v,
            Value::Int(v) => self.workers = v as usize,
            Value::Text(v) => self.output_dir = PathBuf::from(v),
            _ => unreachable!(),
        }
        Ok(())
    }

    pub fn float(&self, key: &str) -> f64 {
        match &self.params[key] {
            Value::Float(v) => *v,
            Value::Int(v) => *v as f64,
            other => panic!("`{key}` is not a number: {other:?}"),
        }
    }

    pub fn int(&self, key: &str) -> u64 {
        match &self.params[key] {
            Value::Int(v) => *v,
            other => panic!("`{key}` is not an integer: {other:?}"),
        }
    }

    pub fn text(&self, key: &str) -> &str {
        match &self.params[key] {
            Value::Text(v) => v,
            other => panic!("`{key}` is not text: {other:?}"),
        }
    }

    pub fn flag(&self, key: &str) -> bool {
        matches!(self.params[key], Value::Bool(true))
    }

    pub fn floats(&self, key: &str) -> &[f64] {
        match &self.params[key] {
            Value::FloatList(v) => v,
            other => panic!("`{key}` is not a list: {other:?}"),
        }
    }

    pub fn ints(&self, key: &str) -> &[u64] {
        match &self.params[key] {
            Value::IntList(v) => v,
            other => panic!("`{key}` is not a list: {other:?}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = parse_config("# header\n\ncommand = sample  # trailing\ns = 2.5\ncutoff = 4\n").unwrap();
        assert_eq!(cfg.command, Command::Sample);
        assert_eq!(cfg.int("cutoff"), 4);
        assert_eq!(cfg.int("samples"), 1);
    }

    #[test]
    fn shared_keys_are_not_params() {
        let cfg = parse_config("command = sample\ns = 2\ncutoff = 1\nseed = 9\nworkers = 3\nout = x/y\n").unwrap();
        assert_eq!((cfg.seed, cfg.workers), (9, 3));
        assert_eq!(cfg.output_dir, PathBuf::from("x/y"));
        assert!(!cfg.params.contains_key("seed"));
    }

    #[test]
    fn command_argument_must_agree_with_file() {
        let err = parse_config_for("command = sample\ns = 2\ncutoff = 1\n", Some(Command::Evolve)).unwrap_err();
        assert!(matches!(err, ConfigError::CommandMismatch { line: 1, .. }));
        assert!(parse_config_for("s = 2\ncutoff = 1\n", Some(Command::Sample)).is_ok());
        assert_eq!(parse_config("s = 2\n").unwrap_err(), ConfigError::NoCommand);
    }
}
