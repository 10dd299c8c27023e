//! Experiment specifications.
//!
//! A config file is TOML: either a single experiment at the top level, or
//! several under `[[experiment]]`. Every experiment looks like
//!
//! ```toml
//! name = "fig5-d10"
//! mode = "sweep"
//! policies = ["optimal", "heuristic", "static:auto"]
//! frames = 100000
//! seed = 42
//!
//! [params]
//! N = 50
//! D = 10
//! lambda = 0.5
//! sigma = 0.9
//!
//! [sweep]
//! axis = "lambda"
//! values = [0.1, 0.2, 0.3]
//! ```
//!
//! Unknown keys are rejected; range errors name the key, its line and the
//! legal range.

use std::fmt;
use std::ops::Range;
use std::path::PathBuf;
use std::str::FromStr;

use deadline_core::policies::PolicySpec;
use deadline_core::sim::{BeliefMode, SweepAxis};
use deadline_core::{ModelParams, Observation};
use serde::{Deserialize, Serialize};
use toml::Spanned;

pub const DEFAULT_FRAMES: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_DELTA_P: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Solve,
    Eval,
    Simulate,
    Sweep,
    BeliefTrace,
    Pomdp,
    Realizations,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::Solve,
        Mode::Eval,
        Mode::Simulate,
        Mode::Sweep,
        Mode::BeliefTrace,
        Mode::Pomdp,
        Mode::Realizations,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Eval => "eval",
            Mode::Simulate => "simulate",
            Mode::Sweep => "sweep",
            Mode::BeliefTrace => "belief_trace",
            Mode::Pomdp => "pomdp",
            Mode::Realizations => "realizations",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// A fully validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub mode: Mode,
    pub params: ModelParams,
    pub policies: Vec<PolicySpec>,
    pub sweep: Option<SweepSpec>,
    pub frames: u64,
    pub seed: u64,
    pub belief: BeliefMode,
    pub sample_sigma: bool,
    pub threads: Option<usize>,
    pub delta_p: f64,
    /// Channel history for `belief_trace`.
    pub observations: Vec<Observation>,
    /// Forced number of other active nodes in slot 1 for `realizations`.
    pub n1: Option<usize>,
    pub tree_dump: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    /// A spec with every optional field at its default.
    pub fn new(name: impl Into<String>, mode: Mode, params: ModelParams) -> Self {
        Self {
            name: name.into(),
            mode,
            params,
            policies: Vec::new(),
            sweep: None,
            frames: DEFAULT_FRAMES,
            seed: DEFAULT_SEED,
            belief: BeliefMode::Approx,
            sample_sigma: false,
            threads: None,
            delta_p: DEFAULT_DELTA_P,
            observations: Vec::new(),
            n1: None,
            tree_dump: None,
            out: None,
        }
    }
}

/// A rejected config value. `line` is `None` for values given as flags.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
    pub range: Option<String>,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            line: None,
            message: message.into(),
            range: None,
        }
    }

    pub fn with_range(mut self, range: impl Into<String>) -> Self {
        self.range = Some(range.into());
        self
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: `{}`", self.key)?;
        if let Some(line) = self.line {
            write!(f, " (line {line})")?;
        }
        write!(f, ": {}", self.message)?;
        if let Some(range) = &self.range {
            write!(f, "; legal range: {range}")?;
        }
        Ok(())
    }
}

// File layout. `Spanned` keeps byte offsets for error messages; values
// coming from flags or presets carry an empty span and report no line.

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<Spanned<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Spanned<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policies: Option<Spanned<Vec<String>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<Spanned<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<Spanned<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub belief: Option<Spanned<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_sigma: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<Spanned<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_p: Option<Spanned<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observations: Option<Spanned<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n1: Option<Spanned<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree_dump: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<RawParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<RawSweep>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawParams {
    #[serde(rename = "N")]
    pub nodes: Spanned<i64>,
    #[serde(rename = "D")]
    pub deadline: Spanned<i64>,
    pub lambda: Spanned<f64>,
    pub sigma: Spanned<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawSweep {
    pub axis: Spanned<String>,
    pub values: Spanned<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    experiment: Vec<RawSpec>,
}

#[derive(Serialize)]
struct EmitFile {
    experiment: Vec<RawSpec>,
}

pub(crate) fn flag<T>(value: T) -> Spanned<T> {
    Spanned::new(0..0, value)
}

/// Resolves byte spans to 1-based line numbers.
struct Source<'a>(Option<&'a str>);

impl Source<'_> {
    fn line(&self, span: Range<usize>) -> Option<usize> {
        let text = self.0?;
        if span.is_empty() && span.start == 0 {
            return None;
        }
        Some(text[..span.start.min(text.len())].matches('\n').count() + 1)
    }

    fn error<T>(&self, key: &str, value: &Spanned<T>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.line(value.span()),
            ..ConfigError::new(key, message)
        }
    }
}

fn toml_error(err: toml::de::Error, src: &str) -> ConfigError {
    let line = err
        .span()
        .map(|span| src[..span.start.min(src.len())].matches('\n').count() + 1);
    let message = err.message().to_string();
    let key = message
        .split('`')
        .nth(1)
        .filter(|_| message.starts_with("unknown field"))
        .unwrap_or("<file>")
        .to_string();
    ConfigError {
        line,
        ..ConfigError::new(key, message)
    }
}

/// Parses a config file into its raw experiments.
pub(crate) fn parse_raw(src: &str) -> Result<Vec<RawSpec>, ConfigError> {
    let table: toml::Table = toml::from_str(src).map_err(|e| toml_error(e, src))?;
    if table.contains_key("experiment") {
        let file: RawFile = toml::from_str(src).map_err(|e| toml_error(e, src))?;
        if file.experiment.is_empty() {
            return Err(ConfigError::new("experiment", "no experiments listed"));
        }
        Ok(file.experiment)
    } else {
        Ok(vec![toml::from_str(src).map_err(|e| toml_error(e, src))?])
    }
}

/// Parses and validates a config file.
pub fn parse_spec(src: &str) -> Result<Vec<ExperimentSpec>, ConfigError> {
    parse_raw(src)?
        .into_iter()
        .map(|raw| validate(&raw, Some(src), None))
        .collect()
}

/// TOML for one experiment; `parse_spec(&emit(s)) == [s]`.
pub fn emit(spec: &ExperimentSpec) -> String {
    toml::to_string(&to_raw(spec)).expect("spec serializes")
}

/// TOML for several experiments as an `[[experiment]]` array.
pub fn emit_all(specs: &[ExperimentSpec]) -> String {
    let file = EmitFile {
        experiment: specs.iter().map(to_raw).collect(),
    };
    toml::to_string(&file).expect("spec serializes")
}

pub(crate) fn to_raw(spec: &ExperimentSpec) -> RawSpec {
    RawSpec {
        name: Some(flag(spec.name.clone())),
        mode: Some(flag(spec.mode.as_str().to_string())),
        policies: (!spec.policies.is_empty())
            .then(|| flag(spec.policies.iter().map(|p| p.to_string()).collect())),
        frames: Some(flag(spec.frames as i64)),
        seed: Some(flag(spec.seed as i64)),
        belief: Some(flag(belief_name(spec.belief).to_string())),
        sample_sigma: Some(spec.sample_sigma),
        threads: spec.threads.map(|t| flag(t as i64)),
        delta_p: Some(flag(spec.delta_p)),
        observations: (!spec.observations.is_empty()).then(|| {
            flag(spec.observations.iter().map(|o| char::from(b'0' + o.bit())).collect())
        }),
        n1: spec.n1.map(|n| flag(n as i64)),
        tree_dump: spec.tree_dump.as_ref().map(|p| p.display().to_string()),
        out: spec.out.as_ref().map(|p| p.display().to_string()),
        params: Some(RawParams {
            nodes: flag(spec.params.nodes as i64),
            deadline: flag(spec.params.deadline as i64),
            lambda: flag(spec.params.lambda),
            sigma: flag(spec.params.sigma),
        }),
        sweep: spec.sweep.as_ref().map(|s| RawSweep {
            axis: flag(s.axis.as_str().to_string()),
            values: flag(s.values.clone()),
        }),
    }
}

pub fn belief_name(mode: BeliefMode) -> &'static str {
    match mode {
        BeliefMode::Exact => "exact",
        BeliefMode::Approx => "approx",
    }
}

fn positive_int(src: &Source, key: &str, v: &Spanned<i64>, min: i64) -> Result<i64, ConfigError> {
    let x = *v.get_ref();
    if x < min {
        return Err(src
            .error(key, v, format!("value {x} out of range"))
            .with_range(format!("{key} >= {min}")));
    }
    Ok(x)
}

fn unit_interval(src: &Source, key: &str, v: &Spanned<f64>, range: &str) -> Result<f64, ConfigError> {
    let x = *v.get_ref();
    if !(x > 0.0 && x <= 1.0) {
        return Err(src.error(key, v, format!("value {x} out of range")).with_range(range));
    }
    Ok(x)
}

fn parse_observations(text: &str) -> Option<Vec<Observation>> {
    text.chars()
        .filter(|c| !c.is_whitespace() && *c != ',')
        .map(|c| match c {
            '0' => Some(Observation::Idle),
            '1' => Some(Observation::Busy),
            _ => None,
        })
        .collect()
}

/// Validates a raw experiment. `mode_hint` supplies the mode when the raw
/// spec has none (the subcommand's mode).
pub(crate) fn validate(
    raw: &RawSpec,
    src: Option<&str>,
    mode_hint: Option<Mode>,
) -> Result<ExperimentSpec, ConfigError> {
    let src = Source(src);
    let mode = match &raw.mode {
        Some(m) => m.get_ref().parse::<Mode>().map_err(|()| {
            src.error("mode", m, format!("unknown mode `{}`", m.get_ref())).with_range(
                Mode::ALL.map(Mode::as_str).join(" | "),
            )
        })?,
        None => mode_hint.ok_or_else(|| {
            ConfigError::new("mode", "missing").with_range(Mode::ALL.map(Mode::as_str).join(" | "))
        })?,
    };

    let rp = raw
        .params
        .as_ref()
        .ok_or_else(|| ConfigError::new("params", "missing [params] section (N, D, lambda, sigma)"))?;
    let nodes = positive_int(&src, "params.N", &rp.nodes, 2)? as usize;
    let deadline = positive_int(&src, "params.D", &rp.deadline, 1)? as usize;
    let lambda = unit_interval(&src, "params.lambda", &rp.lambda, "lambda ∈ (0,1]")?;
    let sigma = unit_interval(&src, "params.sigma", &rp.sigma, "sigma ∈ (0,1]")?;
    let params = ModelParams::new(nodes, deadline, lambda, sigma)
        .map_err(|e| ConfigError::new("params", e.to_string()))?;

    let mut spec = ExperimentSpec::new(
        raw.name
            .as_ref()
            .map(|n| n.get_ref().clone())
            .unwrap_or_else(|| mode.as_str().to_string()),
        mode,
        params,
    );

    if let Some(ps) = &raw.policies {
        spec.policies = ps
            .get_ref()
            .iter()
            .map(|p| {
                p.parse::<PolicySpec>().map_err(|e| {
                    src.error("policies", ps, format!("bad policy `{p}`: {e}"))
                        .with_range("optimal | even | approx | heuristic | myopic | static:<p> | static:auto")
                })
            })
            .collect::<Result<_, _>>()?;
    }
    if let Some(v) = &raw.frames {
        spec.frames = positive_int(&src, "frames", v, 1)? as u64;
    }
    if let Some(v) = &raw.seed {
        spec.seed = positive_int(&src, "seed", v, 0)? as u64;
    }
    if let Some(v) = &raw.belief {
        spec.belief = match v.get_ref().as_str() {
            "exact" => BeliefMode::Exact,
            "approx" => BeliefMode::Approx,
            other => {
                return Err(src
                    .error("belief", v, format!("unknown belief tracker `{other}`"))
                    .with_range("exact | approx"))
            }
        };
    }
    spec.sample_sigma = raw.sample_sigma.unwrap_or(false);
    if let Some(v) = &raw.threads {
        spec.threads = Some(positive_int(&src, "threads", v, 1)? as usize);
    }
    if let Some(v) = &raw.delta_p {
        let dp = *v.get_ref();
        let steps = (1.0 / dp).round();
        if !(dp > 0.0 && dp <= 1.0) || (1.0 / dp - steps).abs() > 1e-9 {
            return Err(src
                .error("delta_p", v, format!("value {dp} out of range"))
                .with_range("0 < delta_p <= 1 with 1/delta_p an integer"));
        }
        spec.delta_p = dp;
    }
    if let Some(v) = &raw.observations {
        spec.observations = parse_observations(v.get_ref()).ok_or_else(|| {
            src.error("observations", v, "observations are a string of 0 (idle) and 1 (busy)")
                .with_range("characters 0 | 1")
        })?;
        if spec.observations.len() > deadline {
            return Err(src
                .error("observations", v, format!("{} observations exceed D = {deadline}", spec.observations.len()))
                .with_range(format!("at most D = {deadline} observations")));
        }
    }
    if let Some(v) = &raw.n1 {
        let n1 = positive_int(&src, "n1", v, 0)? as usize;
        if n1 >= nodes {
            return Err(src
                .error("n1", v, format!("value {n1} out of range"))
                .with_range(format!("0 <= n1 <= N-1 = {}", nodes - 1)));
        }
        spec.n1 = Some(n1);
    }
    spec.tree_dump = raw.tree_dump.as_ref().map(PathBuf::from);
    spec.out = raw.out.as_ref().map(PathBuf::from);
    if let Some(s) = &raw.sweep {
        let axis = s.axis.get_ref().parse::<SweepAxis>().map_err(|_| {
            src.error("sweep.axis", &s.axis, format!("unknown axis `{}`", s.axis.get_ref()))
                .with_range("lambda | D | sigma")
        })?;
        let values = s.values.get_ref().clone();
        if values.is_empty() {
            return Err(src.error("sweep.values", &s.values, "empty sweep").with_range("at least one value"));
        }
        for &v in &values {
            axis.apply(params, v).map_err(|e| {
                let range = match axis {
                    SweepAxis::Lambda => "lambda ∈ (0,1]",
                    SweepAxis::Sigma => "sigma ∈ (0,1]",
                    SweepAxis::Deadline => "integer D >= 1",
                };
                src.error("sweep.values", &s.values, e.to_string()).with_range(range)
            })?;
        }
        spec.sweep = Some(SweepSpec { axis, values });
    }

    check_mode(&spec, raw, &src)?;
    Ok(spec)
}

fn policy_error(raw: &RawSpec, src: &Source, message: String, range: &str) -> ConfigError {
    match &raw.policies {
        Some(ps) => src.error("policies", ps, message),
        None => ConfigError::new("policies", message),
    }
    .with_range(range)
}

fn check_mode(spec: &ExperimentSpec, raw: &RawSpec, src: &Source) -> Result<(), ConfigError> {
    let single = |allowed: &dyn Fn(&PolicySpec) -> bool, range: &str| {
        match spec.policies.as_slice() {
            [p] if allowed(p) => Ok(()),
            [p] => Err(policy_error(raw, src, format!("policy `{p}` not usable in mode {}", spec.mode), range)),
            ps => Err(policy_error(
                raw,
                src,
                format!("mode {} takes exactly one policy, got {}", spec.mode, ps.len()),
                range,
            )),
        }
    };
    let idealized = |p: &PolicySpec| {
        matches!(
            p,
            PolicySpec::Optimal | PolicySpec::Even | PolicySpec::Approx | PolicySpec::Static(_) | PolicySpec::StaticAuto
        )
    };
    let idealized_range = "optimal | even | approx | static:<p> | static:auto";
    match spec.mode {
        Mode::Solve | Mode::Pomdp => Ok(()),
        Mode::Eval | Mode::Realizations => single(&idealized, idealized_range),
        Mode::BeliefTrace => {
            if spec.observations.is_empty() {
                return Err(ConfigError::new("observations", "belief_trace needs an observation string")
                    .with_range("characters 0 | 1, at most D"));
            }
            single(
                &|p| matches!(p, PolicySpec::Heuristic | PolicySpec::Myopic | PolicySpec::Static(_) | PolicySpec::StaticAuto),
                "heuristic | myopic | static:<p> | static:auto",
            )
        }
        Mode::Simulate | Mode::Sweep => {
            if spec.policies.is_empty() {
                return Err(policy_error(raw, src, format!("mode {} needs at least one policy", spec.mode), "optimal | even | approx | heuristic | myopic | static:<p> | static:auto"));
            }
            if spec.mode == Mode::Sweep && spec.sweep.is_none() {
                return Err(ConfigError::new("sweep", "missing [sweep] section (axis, values)")
                    .with_range("axis = lambda | D | sigma"));
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
mode = "simulate"
policies = ["heuristic"]
frames = 100000
seed = 42

[params]
N = 50
D = 10
lambda = 0.5
sigma = 0.9
"#;

    #[test]
    fn minimal_simulate_spec() {
        let specs = parse_spec(MINIMAL).unwrap();
        assert_eq!(specs.len(), 1);
        let s = &specs[0];
        assert_eq!(s.mode, Mode::Simulate);
        assert_eq!(s.params, ModelParams::new(50, 10, 0.5, 0.9).unwrap());
        assert_eq!(s.policies, vec![PolicySpec::Heuristic]);
        assert_eq!((s.frames, s.seed), (100_000, 42));
        assert_eq!(s.name, "simulate");
    }

    #[test]
    fn lambda_out_of_range_names_key_line_and_range() {
        let src = MINIMAL.replace("lambda = 0.5", "lambda = 1.5");
        let err = parse_spec(&src).unwrap_err();
        assert_eq!(err.key, "params.lambda");
        assert_eq!(err.line, Some(10));
        let text = err.to_string();
        assert!(text.contains("lambda ∈ (0,1]"), "{text}");
        assert!(text.contains("line 10"), "{text}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_spec(&format!("colour = 3\n{MINIMAL}")).unwrap_err();
        assert_eq!(err.key, "colour");
        assert_eq!(err.line, Some(1));
        let err = parse_spec(&MINIMAL.replace("sigma = 0.9", "sigma = 0.9\nmu = 1")).unwrap_err();
        assert_eq!(err.key, "mu");
    }

    #[test]
    fn integers_are_accepted_for_probabilities() {
        let spec = &parse_spec(&MINIMAL.replace("sigma = 0.9", "sigma = 1")).unwrap()[0];
        assert_eq!(spec.params.sigma, 1.0);
    }

    #[test]
    fn emit_round_trips() {
        let mut spec = parse_spec(MINIMAL).unwrap().remove(0);
        spec.sweep = Some(SweepSpec {
            axis: SweepAxis::Deadline,
            values: vec![5.0, 10.0],
        });
        spec.mode = Mode::Sweep;
        spec.threads = Some(3);
        spec.observations = vec![Observation::Idle, Observation::Busy];
        spec.n1 = Some(4);
        spec.out = Some("x.csv".into());
        spec.policies.push(PolicySpec::Static(0.125));
        assert_eq!(parse_spec(&emit(&spec)).unwrap(), vec![spec.clone()]);
        let two = vec![spec.clone(), ExperimentSpec::new("s", Mode::Solve, spec.params)];
        assert_eq!(parse_spec(&emit_all(&two)).unwrap(), two);
    }

    #[test]
    fn mode_requirements() {
        let err = parse_spec(&MINIMAL.replace("\"simulate\"", "\"sweep\"")).unwrap_err();
        assert_eq!(err.key, "sweep");
        let err = parse_spec(&MINIMAL.replace("\"simulate\"", "\"eval\"")).unwrap_err();
        assert_eq!(err.key, "policies");
        assert_eq!(err.line, Some(3));
        let err = parse_spec(&MINIMAL.replace("\"simulate\"", "\"warp\"")).unwrap_err();
        assert_eq!(err.key, "mode");
    }

    #[test]
    fn bad_policy_and_missing_params() {
        let err = parse_spec(&MINIMAL.replace("heuristic", "greedy")).unwrap_err();
        assert_eq!(err.key, "policies");
        let err = parse_spec("mode = \"solve\"\n").unwrap_err();
        assert_eq!(err.key, "params");
    }
}
