//! Run configuration: TOML files with dotted `key=value` overrides.
//!
//! ```toml
//! env = "cartpole_vary"
//! max_generations = 300
//! master_seed = 7
//!
//! [schedule]
//! kind = "beta"
//! alpha = 0.1
//! beta = 0.1
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::EnvOptions;
use crate::error::{Error, Result};
use crate::neuro::DEFAULT_HIDDEN;
use crate::schedules::ScheduleSpec;
use crate::xnes::XnesConfig;

fn default_hidden() -> usize {
    DEFAULT_HIDDEN
}

fn default_generations() -> usize {
    300
}

fn one() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Environment name; see `list-envs`.
    #[serde(default)]
    pub env: String,
    #[serde(default)]
    pub env_options: EnvOptions,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub xnes: XnesConfig,
    /// Computational hidden units (a bias unit is added on top).
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_generations")]
    pub max_generations: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub run_index: u64,
    /// Validate the generation's best sample every this many generations.
    /// The last generation is always validated.
    #[serde(default = "one")]
    pub validation_cadence: usize,
    /// Keep a bandit posterior snapshot every this many generations (0 = none).
    #[serde(default = "one")]
    pub posterior_every: usize,
    /// Record per-generation optimiser telemetry.
    #[serde(default = "default_true")]
    pub telemetry: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: String::new(),
            env_options: EnvOptions::default(),
            schedule: ScheduleSpec::default(),
            xnes: XnesConfig::default(),
            hidden: default_hidden(),
            max_generations: default_generations(),
            master_seed: 0,
            run_index: 0,
            validation_cadence: 1,
            posterior_every: 1,
            telemetry: true,
            output_dir: None,
        }
    }
}

/// Every config key with its default and a short description.
pub const KEY_DOCS: &[(&str, &str, &str)] = &[
    ("env", "(required)", "environment name: cartpole_vary, reacher_vary, acrobot_vary, external"),
    ("env_options.episode_steps", "1000", "episode length override for built-in environments"),
    ("env_options.external.command", "(required for external)", "simulator executable"),
    ("env_options.external.args", "[]", "simulator arguments"),
    ("env_options.external.preset", "(none)", "morphology preset name of the simulator"),
    ("env_options.external.space", "(none)", "explicit morphology space table (alternative to preset)"),
    ("env_options.external.timeout_secs", "30", "per-episode timeout"),
    ("env_options.external.pool_size", "1", "simulator processes kept for parallel episodes"),
    ("env_options.external.reports_reward", "false", "negate simulator values into costs"),
    ("env_options.external.episode_steps", "1000", "steps requested per episode"),
    ("env_options.external.dt", "0.02", "simulator step length (informational)"),
    ("schedule.kind", "discrete_random", "training schedule; see list-schedules"),
    ("schedule.sigma_frac", "0.3333333333333333", "gaussian: std dev as a fraction of the axis half-range"),
    ("schedule.scale_frac", "0.16666666666666666", "cauchy: scale as a fraction of the axis half-range"),
    ("schedule.alpha", "0.1", "beta: first shape parameter"),
    ("schedule.beta", "0.1", "beta: second shape parameter"),
    ("schedule.alpha0", "1", "bandit: prior alpha"),
    ("schedule.beta0", "1", "bandit: prior beta"),
    ("schedule.gamma", "0.1", "bandit: posterior decay toward the prior"),
    ("schedule.window", "10", "bandit: moving-average window of validation costs"),
    ("schedule.x", "box centre", "fixed: x coordinate"),
    ("schedule.y", "box centre", "fixed: y coordinate"),
    ("xnes.population", "4 + floor(3 ln d)", "samples per generation"),
    ("xnes.sigma0", "1", "initial step size"),
    ("xnes.eta_mu", "1", "mean learning rate"),
    ("xnes.eta_sigma", "(9 + 3 ln d) / (5 d sqrt d)", "step-size learning rate"),
    ("xnes.eta_b", "(9 + 3 ln d) / (5 d sqrt d)", "shape learning rate"),
    ("hidden", "19", "computational hidden units (plus one bias unit)"),
    ("max_generations", "300", "generations per run"),
    ("master_seed", "0", "root of every random stream"),
    ("run_index", "0", "run number within a batch"),
    ("validation_cadence", "1", "validate every n generations"),
    ("posterior_every", "1", "bandit posterior snapshot thinning (0 = off)"),
    ("telemetry", "true", "record optimiser telemetry"),
    ("output_dir", "(derived)", "where train/batch write their results"),
];

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.env.trim().is_empty() {
            return Err(Error::config("env", "missing environment name"));
        }
        if self.max_generations == 0 {
            return Err(Error::config("max_generations", "must be at least 1"));
        }
        if self.validation_cadence == 0 {
            return Err(Error::config("validation_cadence", "must be at least 1"));
        }
        if self.hidden == 0 {
            return Err(Error::config("hidden", "must be at least 1"));
        }
        self.schedule.validate()?;
        self.xnes.validate()?;
        Ok(())
    }

    /// Parses TOML text, applies overrides, and validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text)
            .map_err(|e| Error::config(key_hint(e.message()), e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(key_hint(e.message()), e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingArtifact {
                    path: path.to_path_buf(),
                    message: "config file not found".into(),
                }
            } else {
                Error::io(path, e)
            }
        })?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Best guess at the key a serde message refers to.
fn key_hint(message: &str) -> String {
    for marker in ["unknown field `", "missing field `", "unknown variant `"] {
        if let Some(rest) = message.split(marker).nth(1) {
            if let Some(k) = rest.split('`').next() {
                return k.to_string();
            }
        }
    }
    "config".into()
}

/// Applies one `dotted.key=value` override. The value is read as a TOML
/// literal when possible and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like key=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(|p| p.trim().is_empty()) {
        return Err(Error::config(spec, "empty key in override"));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').map(str::trim).collect();
    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
