//! Scenario files: parsing, overrides, validation and resolution into
//! ready-to-run instances.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use matchsim_core::market::{
    derived_constants, GenerationConfig, InstanceData, MarketInstance, NoiseFamily, NoiseModel, OrderedTypeConfig,
};
use matchsim_core::mechanisms::{MechanismError, MechanismKind, MechanismSpec};
use matchsim_core::payments::PaymentRule;
use matchsim_core::rng::derive_seed;
use matchsim_core::strategies::{StrategyKind, DEFAULT_ENUMERATION_CAP};

pub const SEED_ENV: &str = "MATCHSIM_SEED";

/// A configuration problem, anchored to the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub file: String,
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}: {}", self.file, l, self.key, self.message),
            None => write!(f, "{}: {}: {}", self.file, self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum InstanceSource {
    Inline(InstanceData),
    /// Two-population markets; the generator seed derives from the master seed.
    Generated(GenerationConfig),
    /// Ordered-type markets; the generator seed derives from the master seed.
    Ordered(OrderedTypeConfig),
    /// Text or JSON instance file, relative to the scenario file.
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismConfig {
    pub kind: MechanismKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_phase_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beliefs: Option<Vec<f64>>,
    #[serde(default)]
    pub tie_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaymentFamily {
    Quadratic,
    Linear,
    StochasticQuadratic,
}

/// `alpha` defaults to the instance's `α*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaymentConfig {
    pub family: PaymentFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl PaymentConfig {
    pub fn resolve(&self, instance: &MarketInstance) -> Result<PaymentRule, String> {
        let alpha = || self.alpha.unwrap_or_else(|| derived_constants(instance).alpha_star);
        match self.family {
            PaymentFamily::Quadratic | PaymentFamily::StochasticQuadratic if self.beta.is_some() => {
                Err("beta applies to the linear family only".into())
            }
            PaymentFamily::Linear if self.alpha.is_some() => Err("alpha does not apply to the linear family".into()),
            PaymentFamily::Quadratic => Ok(PaymentRule::quadratic(alpha())),
            PaymentFamily::StochasticQuadratic => Ok(PaymentRule::stochastic_quadratic(alpha())),
            PaymentFamily::Linear => self
                .beta
                .map(PaymentRule::linear)
                .ok_or_else(|| "the linear family needs beta".to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkerStrategy {
    pub worker: usize,
    pub kind: String,
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub params: toml::Table,
}

impl WorkerStrategy {
    fn to_kind(&self) -> Result<StrategyKind, String> {
        let mut table = self.params.clone();
        table.insert("kind".into(), toml::Value::String(self.kind.clone()));
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| e.message().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    #[serde(default = "default_strategy")]
    pub default: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub workers: Vec<WorkerStrategy>,
}

fn default_strategy() -> String {
    "mtbb".into()
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            default: default_strategy(),
            workers: Vec::new(),
        }
    }
}

/// Uniform noise variance over all pairs; its presence selects the
/// stochastic mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub variance: f64,
    #[serde(default)]
    pub family: NoiseFamily,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Equilibrium,
    Stability,
    Efficiency,
    Prop3,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Check::Equilibrium => "equilibrium",
            Check::Stability => "stability",
            Check::Efficiency => "efficiency",
            Check::Prop3 => "prop3",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisTask {
    pub check: Check,
    /// Strategy-enumeration cap for the equilibrium check.
    #[serde(default = "default_cap")]
    pub cap: u64,
    /// Points of the `α` grid for the payment-optimality check.
    #[serde(default = "default_grid")]
    pub alpha_grid_points: usize,
    #[serde(default)]
    pub waive_assumptions: bool,
}

fn default_cap() -> u64 {
    DEFAULT_ENUMERATION_CAP
}

fn default_grid() -> usize {
    50
}

impl AnalysisTask {
    pub fn defaults(check: Check) -> Self {
        AnalysisTask {
            check,
            cap: default_cap(),
            alpha_grid_points: default_grid(),
            waive_assumptions: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub family: PaymentFamily,
    pub from: f64,
    pub to: f64,
    #[serde(default = "default_grid")]
    pub points: usize,
}

impl SweepConfig {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.from];
        }
        (0..self.points)
            .map(|k| self.from + (self.to - self.from) * k as f64 / (self.points - 1) as f64)
            .collect()
    }
}

fn one() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("matchsim-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    pub horizon: usize,
    /// Replications per instance; only stochastic runs differ between them.
    #[serde(default = "one")]
    pub runs: usize,
    /// Instances drawn from a generated source.
    #[serde(default = "one")]
    pub instances: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub instance: InstanceSource,
    pub mechanism: MechanismConfig,
    pub payment: PaymentConfig,
    #[serde(default)]
    pub strategies: StrategyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub analysis: Vec<AnalysisTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

impl ScenarioConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form,
    /// ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = default_output();
        hash_of(&c)
    }

    pub fn task(&self, check: Check) -> AnalysisTask {
        self.analysis
            .iter()
            .copied()
            .find(|t| t.check == check)
            .unwrap_or_else(|| AnalysisTask::defaults(check))
    }
}

pub fn hash_of<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("serializable");
    Sha256::digest(&json)
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// A scenario file with its overrides applied.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ScenarioConfig,
    pub path: PathBuf,
    source: String,
}

impl Loaded {
    pub fn error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            file: self.path.display().to_string(),
            line: locate(&self.source, key),
            key: key.to_string(),
            message: message.into(),
        }
    }
}

/// Line of `key` (dotted) in a TOML document: the assignment inside the
/// matching table if present, else the nearest table header.
pub fn locate(source: &str, key: &str) -> Option<usize> {
    let (table, leaf) = key.rsplit_once('.').unwrap_or(("", key));
    let mut current = String::new();
    let (mut own_header, mut table_header) = (None, None);
    for (k, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == key && own_header.is_none() {
                own_header = Some(k + 1);
            }
            if current == table && table_header.is_none() {
                table_header = Some(k + 1);
            }
        } else if current == table {
            if let Some((name, _)) = line.split_once('=') {
                if name.trim() == leaf {
                    return Some(k + 1);
                }
            }
        }
    }
    own_header.or(table_header)
}

/// Sets `path` (dotted) in `doc` to `value`, parsed as a TOML value when
/// possible and as a string otherwise.
fn apply_override(doc: &mut toml::Table, path: &str, value: &str) -> Result<(), String> {
    let parsed = value
        .parse::<toml::Value>()
        .or_else(|_| {
            format!("v = {value}")
                .parse::<toml::Table>()
                .map(|mut t| t.remove("v").expect("key"))
        })
        .unwrap_or_else(|_| toml::Value::String(value.to_string()));
    let parts: Vec<&str> = path.split('.').collect();
    let mut node = doc;
    for p in &parts[..parts.len() - 1] {
        node = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| format!("{p} is not a table"))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

/// Reads a scenario, then applies `MATCHSIM_SEED` and `key=value`
/// overrides in that order.
pub fn load(path: &Path, overrides: &[String], seed_env: Option<&str>) -> Result<Loaded, ConfigError> {
    let file = path.display().to_string();
    let plain = |key: &str, message: String| ConfigError {
        file: file.clone(),
        line: None,
        key: key.to_string(),
        message,
    };
    let source = std::fs::read_to_string(path).map_err(|e| plain("<file>", e.to_string()))?;
    let mut doc: toml::Table = source.parse().map_err(|e: toml::de::Error| ConfigError {
        file: file.clone(),
        line: e.span().map(|s| source[..s.start].lines().count().max(1)),
        key: "<syntax>".into(),
        message: e.message().to_string(),
    })?;
    if let Some(seed) = seed_env {
        let v: u64 = seed
            .trim()
            .parse()
            .map_err(|_| plain(SEED_ENV, format!("not an unsigned integer: {seed:?}")))?;
        doc.insert("seed".into(), toml::Value::Integer(v as i64));
    }
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| plain(o, "overrides take the form key=value".into()))?;
        apply_override(&mut doc, k.trim(), v.trim()).map_err(|m| plain(k.trim(), m))?;
    }
    let config: ScenarioConfig = toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| {
        let message = e.message().to_string();
        let key = unknown_field(&message).unwrap_or_else(|| "<scenario>".into());
        ConfigError {
            file: file.clone(),
            line: locate(&source, &key),
            key,
            message,
        }
    })?;
    Ok(Loaded {
        config,
        path: path.to_path_buf(),
        source,
    })
}

fn unknown_field(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let end = start + message[start..].find('`')?;
    Some(message[start..end].to_string())
}

/// Everything needed to run one instance.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub instance: MarketInstance,
    pub spec: MechanismSpec,
    pub strategies: Vec<StrategyKind>,
    pub noise: Option<NoiseModel>,
}

impl Prepared {
    /// The noise model of run `run`, derived from the master seed.
    pub fn noise_for(&self, seed: u64, index: usize, run: usize) -> Option<NoiseModel> {
        self.noise.clone().map(|mut m| {
            m.seed = derive_seed(&[seed, 0x6e6f, index as u64, run as u64]);
            m
        })
    }
}

fn mechanism_key(e: &MechanismError) -> &'static str {
    match e {
        MechanismError::Horizon { .. } => "horizon",
        MechanismError::SubPhase { .. } => "mechanism.sub_phase_length",
        MechanismError::Beliefs(_) => "mechanism.beliefs",
        MechanismError::Payment(_) => "payment.alpha",
        MechanismError::Strategy(_) | MechanismError::StrategyCount { .. } => "strategies",
        MechanismError::Market(_) => "noise",
        _ => "mechanism",
    }
}

/// Builds and validates every instance before anything runs.
pub fn prepare(loaded: &Loaded) -> Result<Vec<Prepared>, ConfigError> {
    let cfg = &loaded.config;
    if cfg.runs == 0 {
        return Err(loaded.error("runs", "must be at least 1"));
    }
    let instances = build_instances(loaded)?;
    let mut out = Vec::with_capacity(instances.len());
    for (k, instance) in instances.into_iter().enumerate() {
        let n = instance.n();
        let payment = cfg
            .payment
            .resolve(&instance)
            .map_err(|m| loaded.error("payment.family", m))?;
        let mut spec = MechanismSpec::new(cfg.mechanism.kind, payment, cfg.horizon);
        spec.sub_phase_length = cfg.mechanism.sub_phase_length.unwrap_or(1);
        spec.beliefs = cfg.mechanism.beliefs.clone();
        spec.tie_seed = cfg.mechanism.tie_seed;
        if cfg.mechanism.sub_phase_length.is_some() && cfg.mechanism.kind != MechanismKind::Iili {
            return Err(loaded.error("mechanism.sub_phase_length", "only the iili mechanism has sub-phases"));
        }

        let default = WorkerStrategy {
            worker: 0,
            kind: cfg.strategies.default.clone(),
            params: toml::Table::new(),
        }
        .to_kind()
        .map_err(|m| loaded.error("strategies.default", m))?;
        let mut strategies = vec![default; n];
        let mut seen = vec![false; n];
        for w in &cfg.strategies.workers {
            if w.worker >= n {
                return Err(loaded.error(
                    "strategies.workers.worker",
                    format!("worker {} out of range for {n} workers", w.worker),
                ));
            }
            if std::mem::replace(&mut seen[w.worker], true) {
                return Err(loaded.error("strategies.workers.worker", format!("worker {} listed twice", w.worker)));
            }
            strategies[w.worker] = w.to_kind().map_err(|m| loaded.error("strategies.workers.kind", m))?;
        }
        for (i, s) in strategies.iter().enumerate() {
            s.validate(&instance, i)
                .map_err(|e| loaded.error("strategies", e.to_string()))?;
        }

        let stochastic = matches!(payment, PaymentRule::StochasticQuadratic { .. });
        let noise = match (&cfg.noise, stochastic) {
            (Some(nc), true) => {
                let m = NoiseModel::uniform_variance(n, nc.variance, nc.family, 0);
                m.validate(&instance)
                    .map_err(|e| loaded.error("noise.variance", e.to_string()))?;
                Some(m)
            }
            (None, true) => return Err(loaded.error("noise", "the stochastic-quadratic payment needs a [noise] table")),
            (Some(_), false) => {
                return Err(loaded.error("payment.family", "stochastic runs need the stochastic-quadratic family"))
            }
            (None, false) => None,
        };
        spec.validate(&instance)
            .map_err(|e| loaded.error(mechanism_key(&e), e.to_string()))?;
        if k == 0 {
            if let Some(s) = &cfg.sweep {
                if s.points == 0 || !(s.from > 0.0 && s.to >= s.from) {
                    return Err(loaded.error("sweep.points", "need points >= 1 and 0 < from <= to"));
                }
            }
        }
        out.push(Prepared {
            instance,
            spec,
            strategies,
            noise,
        });
    }
    Ok(out)
}

pub fn build_instances(loaded: &Loaded) -> Result<Vec<MarketInstance>, ConfigError> {
    let cfg = &loaded.config;
    if cfg.instances == 0 {
        return Err(loaded.error("instances", "must be at least 1"));
    }
    let single = |m: MarketInstance| -> Result<Vec<MarketInstance>, ConfigError> {
        if cfg.instances != 1 {
            return Err(loaded.error("instances", "fixed instance sources describe exactly one instance"));
        }
        Ok(vec![m])
    };
    let seed_of = |k: usize| derive_seed(&[cfg.seed, 0x696e, k as u64]);
    match &cfg.instance {
        InstanceSource::Inline(data) => {
            single(MarketInstance::try_from(data.clone()).map_err(|e| loaded.error("instance", e.to_string()))?)
        }
        InstanceSource::File { path } => {
            let full = loaded.path.parent().unwrap_or(Path::new(".")).join(path);
            let text = std::fs::read_to_string(&full)
                .map_err(|e| loaded.error("instance.path", format!("{}: {e}", full.display())))?;
            let parsed = if full.extension().is_some_and(|e| e == "json") {
                serde_json::from_str::<serde_json::Value>(&text)
                    .and_then(|mut v| {
                        // documents written by generate-instance
                        if let Some(o) = v.as_object_mut() {
                            o.remove("meta");
                            o.remove("index");
                        }
                        serde_json::from_value::<MarketInstance>(v)
                    })
                    .map_err(|e| e.to_string())
            } else {
                MarketInstance::from_text(&text).map_err(|e| e.to_string())
            };
            single(parsed.map_err(|m| loaded.error("instance.path", m))?)
        }
        InstanceSource::Generated(g) => (0..cfg.instances)
            .map(|k| {
                matchsim_core::market::generate_instance(&g.with_seed(seed_of(k)))
                    .map_err(|e| loaded.error("instance", e.to_string()))
            })
            .collect(),
        InstanceSource::Ordered(o) => (0..cfg.instances)
            .map(|k| {
                o.with_seed(seed_of(k))
                    .generate()
                    .map_err(|e| loaded.error("instance", e.to_string()))
            })
            .collect(),
    }
}
