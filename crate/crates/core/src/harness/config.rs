use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::background::{MeConfig, PpoConfig};
use crate::env::{make_task, TaskConfig};
use crate::error::{Error, Result};
use crate::model::EnsembleConfig;
use crate::planning::PlannerConfig;
use crate::training::TrainConfig;

/// Real-interaction budget and evaluation schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub total_real_steps: usize,
    #[serde(default = "default_eval_interval")]
    pub eval_interval: usize,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default)]
    pub seed: u64,
    /// Fill the `wall_clock_s` metrics column. Disable for byte-comparable output.
    #[serde(default = "default_true")]
    pub record_wall_clock: bool,
}

fn default_eval_interval() -> usize {
    1000
}
fn default_eval_episodes() -> usize {
    5
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Pets,
    MePpo,
    PpoReal,
    Random,
}

impl AgentKind {
    pub fn tag(self) -> &'static str {
        match self {
            AgentKind::Pets => "pets",
            AgentKind::MePpo => "me_ppo",
            AgentKind::PpoReal => "ppo_real",
            AgentKind::Random => "random",
        }
    }

    pub fn is_model_based(self) -> bool {
        matches!(self, AgentKind::Pets | AgentKind::MePpo)
    }
}

/// Data-collection schedule of the PETS agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PetsConfig {
    /// Uniform-random real steps gathered before planning starts.
    pub initial_random_steps: usize,
    /// Real steps between model refits.
    pub train_every: usize,
    pub buffer_capacity: usize,
}

impl Default for PetsConfig {
    fn default() -> Self {
        PetsConfig {
            initial_random_steps: 200,
            train_every: 200,
            buffer_capacity: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    #[serde(rename = "type")]
    pub kind: AgentKind,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub pets: PetsConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub me: MeConfig,
}

/// Environment-model architecture and training routine.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub training: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskConfig,
    pub protocol: ProtocolConfig,
    pub agent: AgentConfig,
    #[serde(default)]
    pub model: Option<ModelConfig>,
}

fn read_table(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Pulls `[section]` out of a parsed file, checking required keys first so
/// a missing one is reported by name.
fn section<T: DeserializeOwned>(table: &toml::Table, name: &str, required: &[&str], origin: &str) -> Result<T> {
    let value = table
        .get(name)
        .ok_or_else(|| Error::MissingKey(format!("{name} (section in {origin})")))?;
    let inner = value
        .as_table()
        .ok_or_else(|| Error::Config(format!("`{name}` in {origin} must be a table")))?;
    for key in required {
        if !inner.contains_key(*key) {
            return Err(Error::MissingKey(format!("{name}.{key}")));
        }
    }
    value
        .clone()
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("[{name}] in {origin}: {}", e.message())))
}

impl ExperimentConfig {
    /// Parses a single document holding every section.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table = text
            .parse::<toml::Table>()
            .map_err(|e| Error::Config(format!("{e}")))?;
        let model = match table.get("model") {
            Some(_) => Some(section(&table, "model", &[], "config")?),
            None => None,
        };
        let cfg = ExperimentConfig {
            task: section(&table, "task", &["name"], "config")?,
            protocol: section(&table, "protocol", &["total_real_steps"], "config")?,
            agent: section(&table, "agent", &["type"], "config")?,
            model,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.protocol;
        if p.eval_interval == 0 || p.eval_interval > p.total_real_steps {
            return Err(Error::Config(format!(
                "protocol needs total_real_steps ({}) ≥ eval_interval ({}) ≥ 1",
                p.total_real_steps, p.eval_interval
            )));
        }
        if p.eval_episodes == 0 {
            return Err(Error::Config("protocol.eval_episodes must be at least 1".into()));
        }
        let task = make_task(&self.task)?;
        let kind = self.agent.kind;
        match (&self.model, kind.is_model_based()) {
            (None, true) => {
                return Err(Error::Config(format!(
                    "agent `{}` is model-based and needs a model configuration",
                    kind.tag()
                )))
            }
            (Some(m), true) => m.training.validate()?,
            _ => {}
        }
        match kind {
            AgentKind::Pets => {
                self.agent.planner.validate(task.spec())?;
                if self.agent.pets.train_every == 0 || self.agent.pets.buffer_capacity == 0 {
                    return Err(Error::Config("pets.train_every and pets.buffer_capacity must be at least 1".into()));
                }
            }
            AgentKind::MePpo => {
                self.agent.ppo.validate()?;
                self.agent.me.validate()?;
            }
            AgentKind::PpoReal => self.agent.ppo.validate()?,
            AgentKind::Random => {}
        }
        Ok(())
    }

    /// Hash of the parsed task section.
    pub fn task_hash(&self) -> String {
        canonical_hash(&self.task)
    }

    /// Hash of the parsed protocol section. The seed is left out so replicate
    /// runs of one protocol remain comparable.
    pub fn protocol_hash(&self) -> String {
        let mut p = self.protocol.clone();
        p.seed = 0;
        canonical_hash(&p)
    }
}

fn canonical_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("config sections serialize to JSON");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Loads and validates the four configuration parts. Each file must contain
/// its own section (`[task]`, `[protocol]`, `[agent]`, `[model]`); the same
/// file may be passed for several parts.
pub fn load_config(task: &Path, protocol: &Path, agent: &Path, model: Option<&Path>) -> Result<ExperimentConfig> {
    let origin = |p: &Path| p.display().to_string();
    let task_cfg: TaskConfig = section(&read_table(task)?, "task", &["name"], &origin(task))?;
    let protocol_cfg: ProtocolConfig =
        section(&read_table(protocol)?, "protocol", &["total_real_steps"], &origin(protocol))?;
    let agent_cfg: AgentConfig = section(&read_table(agent)?, "agent", &["type"], &origin(agent))?;
    let model_cfg = match model {
        Some(path) if !agent_cfg.kind.is_model_based() => {
            log::warn!(
                "ignoring model configuration {} for model-free agent `{}`",
                path.display(),
                agent_cfg.kind.tag()
            );
            None
        }
        Some(path) => Some(section(&read_table(path)?, "model", &[], &origin(path))?),
        None => None,
    };
    let cfg = ExperimentConfig {
        task: task_cfg,
        protocol: protocol_cfg,
        agent: agent_cfg,
        model: model_cfg,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Reads just the `[task]` section of a file.
pub fn load_task_config(path: &Path) -> Result<TaskConfig> {
    section(&read_table(path)?, "task", &["name"], &path.display().to_string())
}
