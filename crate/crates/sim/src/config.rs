//! Experiment configuration: flat `key = value` TOML with sections.
//!
//! ```toml
//! kind = "rl"          # rl | bandit | audit
//! seed = 7
//! replications = 4     # default 1
//! out_dir = "out"      # default "out"
//! plot = true          # default false
//!
//! [environment]        # optional
//! type = "random"      # random | tabular | file
//! states = 4
//! actions = 2
//!
//! [agent]
//! d = 2
//! H = 2
//! K = 256
//! rho = 1.0
//! ```
//!
//! Unknown keys are errors. Every referenced file must exist when the
//! configuration is parsed.

use std::path::{Path, PathBuf};

use dprl_core::bandit::{BanditConfig, TargetPrivacy};
use dprl_core::rl::{AgentConfig, BetaMode, ShiftMode};
use toml::{Table, Value};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error on line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing required key `{0}`")]
    MissingRequired(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("referenced file {0} does not exist")]
    MissingFile(PathBuf),
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Rl,
    Bandit,
    Audit,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RlEnvironment {
    /// `random_instance` with `d` taken from the agent.
    Random { states: usize, actions: usize, instance_seed: u64 },
    /// A random tabular MDP embedded with one-hot features; `d = S·A`.
    Tabular { states: usize, actions: usize, instance_seed: u64 },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecisionSource {
    /// The same random arms every round.
    Fixed,
    /// The fixed arms under a fresh random rotation each round.
    Rotated,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditEnvironment {
    pub arms: usize,
    pub decision_sets: DecisionSource,
    /// Defaults to a random vector of norm `S`.
    pub theta: Option<Vec<f64>>,
    /// Standard deviation of the Gaussian reward noise.
    pub noise: f64,
    pub instance_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Sensitivity,
    Noise,
    Optimism,
    Switching,
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sensitivity" => Ok(Suite::Sensitivity),
            "noise" => Ok(Suite::Noise),
            "optimism" => Ok(Suite::Optimism),
            "switching" => Ok(Suite::Switching),
            other => Err(format!("unknown suite `{other}`")),
        }
    }
}

/// Knobs of the audit suites; `None` picks the suite's default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditParams {
    pub suite: Option<Suite>,
    pub trials: Option<usize>,
    pub seeds: Option<usize>,
    pub episodes: Option<usize>,
    pub history: Option<usize>,
    pub dims: Option<Vec<usize>>,
    pub horizons: Option<Vec<usize>>,
    pub states: Option<usize>,
    pub actions: Option<usize>,
    pub rho: Option<f64>,
    /// Manual bonus scale for the optimism suite.
    pub beta: Option<f64>,
    pub sigma: Option<f64>,
    pub log_terms: Option<usize>,
    pub failure_prob: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Rl { agent: AgentConfig, environment: RlEnvironment },
    Bandit { agent: BanditConfig, environment: BanditEnvironment },
    Audit(AuditParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub replications: usize,
    pub out_dir: PathBuf,
    pub plot: bool,
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn kind(&self) -> Kind {
        match self.experiment {
            Experiment::Rl { .. } => Kind::Rl,
            Experiment::Bandit { .. } => Kind::Bandit,
            Experiment::Audit(_) => Kind::Audit,
        }
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    parse_config_with(path, &[])
}

/// Parses `path` after replacing dotted keys (`agent.rho`) with the given
/// literal values.
pub fn parse_config_with(path: &Path, overrides: &[(String, String)]) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base, overrides)
}

/// Relative file paths are resolved against `base`.
pub fn parse_config_str(
    text: &str,
    base: &Path,
    overrides: &[(String, String)],
) -> Result<ExperimentConfig, ConfigError> {
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::ParseError {
        line: e.span().map_or(1, |s| text[..s.start.min(text.len())].lines().count().max(1)),
        message: e.message().to_string(),
    })?;
    for (key, value) in overrides {
        set_dotted(&mut table, key, parse_literal(value))?;
    }
    let mut top = Fields::new(table, "");
    let kind = match top.required_str("kind")?.as_str() {
        "rl" => Kind::Rl,
        "bandit" => Kind::Bandit,
        "audit" => Kind::Audit,
        other => return Err(invalid("kind", format!("expected rl, bandit or audit, got `{other}`"))),
    };
    let seed = top.required_u64("seed")?;
    let replications = top.usize("replications")?.unwrap_or(1);
    if replications == 0 {
        return Err(invalid("replications", "must be at least 1"));
    }
    let out_dir = top.string("out_dir")?.map_or_else(|| PathBuf::from("out"), PathBuf::from);
    let plot = top.bool("plot")?.unwrap_or(false);

    let experiment = match kind {
        Kind::Rl => {
            let agent = rl_agent(top.section("agent")?.ok_or_else(|| missing("agent"))?, seed)?;
            let environment = rl_environment(top.section("environment")?, &agent, seed, base)?;
            Experiment::Rl { agent, environment }
        }
        Kind::Bandit => {
            let agent = bandit_agent(top.section("agent")?.ok_or_else(|| missing("agent"))?, seed)?;
            let environment = bandit_environment(top.section("environment")?, &agent, seed, base)?;
            Experiment::Bandit { agent, environment }
        }
        Kind::Audit => Experiment::Audit(audit_params(top.section("audit")?)?),
    };
    top.finish()?;
    Ok(ExperimentConfig {
        seed,
        replications,
        out_dir,
        plot,
        experiment,
    })
}

fn missing(key: &str) -> ConfigError {
    ConfigError::MissingRequired(key.to_string())
}

/// A `--values` item as a TOML literal, or a bare string when it is not one.
fn parse_literal(s: &str) -> Value {
    format!("v = {s}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(s.to_string()))
}

fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|p| !p.is_empty()).ok_or_else(|| invalid(key, "empty key"))?;
    let mut current = table;
    for part in parts {
        current = current
            .entry(part)
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .ok_or_else(|| invalid(key, format!("`{part}` is not a section")))?;
    }
    current.insert(last.to_string(), value);
    Ok(())
}

/// Pops typed keys out of one table and rejects whatever is left over.
struct Fields {
    table: Table,
    prefix: String,
}

impl Fields {
    fn new(table: Table, prefix: &str) -> Self {
        Self {
            table,
            prefix: prefix.to_string(),
        }
    }

    fn path(&self, key: &str) -> String {
        if self.prefix.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.prefix)
        }
    }

    fn take(&mut self, key: &str) -> Option<Value> {
        self.table.remove(key)
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Float(v)) => Ok(Some(v)),
            Some(Value::Integer(v)) => Ok(Some(v as f64)),
            Some(_) => Err(invalid(&self.path(key), "expected a number")),
        }
    }

    fn u64(&mut self, key: &str) -> Result<Option<u64>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Integer(v)) if v >= 0 => Ok(Some(v as u64)),
            Some(_) => Err(invalid(&self.path(key), "expected a nonnegative integer")),
        }
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(b)),
            Some(_) => Err(invalid(&self.path(key), "expected true or false")),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<String>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(invalid(&self.path(key), "expected a string")),
        }
    }

    /// A number, or the string `"auto"` as `None`.
    fn auto_f64(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) if s == "auto" => Ok(None),
            Some(Value::Float(v)) => Ok(Some(v)),
            Some(Value::Integer(v)) => Ok(Some(v as f64)),
            Some(_) => Err(invalid(&self.path(key), "expected a number or \"auto\"")),
        }
    }

    fn f64_list(&mut self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let path = self.path(key);
        match self.take(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .into_iter()
                .map(|v| match v {
                    Value::Float(f) => Ok(f),
                    Value::Integer(i) => Ok(i as f64),
                    _ => Err(invalid(&path, "expected an array of numbers")),
                })
                .collect::<Result<_, _>>()
                .map(Some),
            Some(_) => Err(invalid(&path, "expected an array of numbers")),
        }
    }

    fn usize_list(&mut self, key: &str) -> Result<Option<Vec<usize>>, ConfigError> {
        let path = self.path(key);
        match self.take(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .into_iter()
                .map(|v| match v {
                    Value::Integer(i) if i > 0 => Ok(i as usize),
                    _ => Err(invalid(&path, "expected an array of positive integers")),
                })
                .collect::<Result<_, _>>()
                .map(Some),
            Some(Value::Integer(i)) if i > 0 => Ok(Some(vec![i as usize])),
            Some(_) => Err(invalid(&path, "expected an array of positive integers")),
        }
    }

    fn section(&mut self, key: &str) -> Result<Option<Fields>, ConfigError> {
        let path = self.path(key);
        match self.take(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(Fields::new(t, &path))),
            Some(_) => Err(invalid(&path, "expected a section")),
        }
    }

    fn required_f64(&mut self, key: &str) -> Result<f64, ConfigError> {
        self.f64(key)?.ok_or_else(|| missing(&self.path(key)))
    }

    fn required_u64(&mut self, key: &str) -> Result<u64, ConfigError> {
        self.u64(key)?.ok_or_else(|| missing(&self.path(key)))
    }

    fn required_usize(&mut self, key: &str) -> Result<usize, ConfigError> {
        self.usize(key)?.ok_or_else(|| missing(&self.path(key)))
    }

    fn required_str(&mut self, key: &str) -> Result<String, ConfigError> {
        self.string(key)?.ok_or_else(|| missing(&self.path(key)))
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.table.keys().next() {
            Some(key) => Err(ConfigError::UnknownKey(self.path(key))),
            None => Ok(()),
        }
    }
}

fn existing(base: &Path, file: &str) -> Result<PathBuf, ConfigError> {
    let path = base.join(file);
    if path.is_file() {
        Ok(path)
    } else {
        Err(ConfigError::MissingFile(path))
    }
}

fn rl_agent(mut f: Fields, seed: u64) -> Result<AgentConfig, ConfigError> {
    let d = f.required_usize("d")?;
    let h = f.required_usize("H")?;
    let k = f.required_usize("K")?;
    let rho = f.required_f64("rho")?;
    let mut config = AgentConfig::new(d, h, k, rho, seed);
    if let Some(c) = f.f64("update_factor")? {
        config.update_factor = c;
    }
    if let Some(p) = f.f64("failure_prob")? {
        config.failure_prob = p;
    }
    config.beta = f.auto_f64("beta")?.map_or(BetaMode::Auto, BetaMode::Manual);
    config.lambda_shift = f.auto_f64("lambda_shift")?.map_or(ShiftMode::Auto, ShiftMode::Manual);
    f.finish()?;
    config.validate().map_err(|e| invalid("agent", e.to_string()))?;
    Ok(config)
}

fn rl_environment(
    f: Option<Fields>,
    agent: &AgentConfig,
    seed: u64,
    base: &Path,
) -> Result<RlEnvironment, ConfigError> {
    let Some(mut f) = f else {
        return Ok(RlEnvironment::Random {
            states: 4,
            actions: 2,
            instance_seed: seed,
        });
    };
    let kind = f.string("type")?.unwrap_or_else(|| "random".to_string());
    let instance_seed = f.u64("instance_seed")?.unwrap_or(seed);
    let env = match kind.as_str() {
        "random" => RlEnvironment::Random {
            states: f.usize("states")?.unwrap_or(4),
            actions: f.usize("actions")?.unwrap_or(2),
            instance_seed,
        },
        "tabular" => {
            let states = f.required_usize("states")?;
            let actions = f.required_usize("actions")?;
            if states * actions != agent.dim {
                return Err(invalid(
                    "environment",
                    format!("a tabular instance needs d = S·A = {}, got d = {}", states * actions, agent.dim),
                ));
            }
            RlEnvironment::Tabular {
                states,
                actions,
                instance_seed,
            }
        }
        "file" => RlEnvironment::File(existing(base, &f.required_str("file")?)?),
        other => return Err(invalid("environment.type", format!("unknown environment `{other}`"))),
    };
    if let RlEnvironment::Random { states, actions, .. } | RlEnvironment::Tabular { states, actions, .. } = env {
        if states == 0 || actions == 0 {
            return Err(invalid("environment", "states and actions must be positive"));
        }
    }
    f.finish()?;
    Ok(env)
}

fn bandit_agent(mut f: Fields, seed: u64) -> Result<BanditConfig, ConfigError> {
    let d = f.required_usize("d")?;
    let t = f.required_usize("T")?;
    let rho = f.required_f64("rho")?;
    let mut config = BanditConfig::new(d, t, rho, seed);
    if let Some(v) = f.f64("update_factor")? {
        config.update_factor = v;
    }
    if let Some(v) = f.f64("lambda")? {
        config.lambda = v;
    }
    config.lambda_shift = f.auto_f64("lambda_shift")?;
    if let Some(v) = f.f64("S")? {
        config.param_bound = v;
    }
    if let Some(v) = f.f64("L")? {
        config.action_bound = v;
    }
    if let Some(v) = f.f64("B")? {
        config.reward_bound = v;
    }
    if let Some(v) = f.f64("R")? {
        config.noise_scale = v;
    }
    if let Some(v) = f.f64("delta")? {
        config.delta = v;
    }
    if let Some(mode) = f.string("target_privacy")? {
        config.target_privacy = match mode.as_str() {
            "gaussian" => TargetPrivacy::PerUpdateGaussian,
            "tree" => TargetPrivacy::Tree,
            other => return Err(invalid("agent.target_privacy", format!("expected gaussian or tree, got `{other}`"))),
        };
    }
    f.finish()?;
    config.validate().map_err(|e| invalid("agent", e.to_string()))?;
    Ok(config)
}

fn bandit_environment(
    f: Option<Fields>,
    agent: &BanditConfig,
    seed: u64,
    base: &Path,
) -> Result<BanditEnvironment, ConfigError> {
    let mut env = BanditEnvironment {
        arms: 10,
        decision_sets: DecisionSource::Fixed,
        theta: None,
        noise: agent.noise_scale,
        instance_seed: seed,
    };
    let Some(mut f) = f else { return Ok(env) };
    if let Some(arms) = f.usize("arms")? {
        env.arms = arms;
    }
    if env.arms == 0 {
        return Err(invalid("environment.arms", "must be positive"));
    }
    if let Some(kind) = f.string("decision_sets")? {
        env.decision_sets = match kind.as_str() {
            "fixed" => DecisionSource::Fixed,
            "rotated" => DecisionSource::Rotated,
            "file" => DecisionSource::File(existing(base, &f.required_str("file")?)?),
            other => return Err(invalid("environment.decision_sets", format!("unknown source `{other}`"))),
        };
    }
    if let Some(theta) = f.f64_list("theta")? {
        if theta.len() != agent.dim {
            return Err(invalid("environment.theta", format!("expected {} entries", agent.dim)));
        }
        let norm = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > agent.param_bound {
            return Err(invalid("environment.theta", format!("norm {norm} exceeds S = {}", agent.param_bound)));
        }
        env.theta = Some(theta);
    }
    if let Some(noise) = f.f64("noise")? {
        if !(noise.is_finite() && noise >= 0.0) {
            return Err(invalid("environment.noise", "must be nonnegative"));
        }
        env.noise = noise;
    }
    if let Some(s) = f.u64("instance_seed")? {
        env.instance_seed = s;
    }
    f.finish()?;
    Ok(env)
}

fn audit_params(f: Option<Fields>) -> Result<AuditParams, ConfigError> {
    let Some(mut f) = f else {
        return Ok(AuditParams::default());
    };
    let suite = match f.string("suite")? {
        Some(s) => Some(s.parse().map_err(|e: String| invalid("audit.suite", e))?),
        None => None,
    };
    let params = AuditParams {
        suite,
        trials: f.usize("trials")?,
        seeds: f.usize("seeds")?,
        episodes: f.usize("episodes")?,
        history: f.usize("history")?,
        dims: f.usize_list("dims")?,
        horizons: f.usize_list("horizons")?,
        states: f.usize("states")?,
        actions: f.usize("actions")?,
        rho: f.f64("rho")?,
        beta: f.f64("beta")?,
        sigma: f.f64("sigma")?,
        log_terms: f.usize("log_terms")?,
        failure_prob: f.f64("failure_prob")?,
    };
    f.finish()?;
    Ok(params)
}
