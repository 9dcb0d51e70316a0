use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::agents::{build_agent, Agent};
use super::config::ExperimentConfig;
use super::metrics::{MetricRecord, MetricsWriter};
use crate::env::{make_task, Environment, RealEnv, Task, TaskConfig, Transition};
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::rng::{derive_seed, seeded, SimRng};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const RUN_FILE: &str = "run.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.mbnn";
pub const ERROR_FILE: &str = "error.txt";

// tags for the generators derived from the protocol seed
const AGENT_INIT: u64 = 1;
const ACTING: u64 = 2;
const REAL_NOISE: u64 = 3;
const REAL_RESET: u64 = 4;
const EVAL_NOISE: u64 = 5;
const EVAL_ACTING: u64 = 6;

/// Identity of a finished or running experiment, stored next to its metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub agent: String,
    pub seed: u64,
    pub task_hash: String,
    pub protocol_hash: String,
}

/// Runs `episodes` full episodes with the agent's deterministic actor and
/// returns the mean and population std of the undiscounted returns.
pub fn evaluate_agent(agent: &dyn Agent, env: &mut RealEnv, episodes: usize, rng: &mut SimRng) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(Error::Usage("evaluation needs at least one episode".into()));
    }
    let mut actor = agent.actor();
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        actor.begin_episode();
        let mut obs = env.reset(rng);
        let mut total = 0.0;
        loop {
            let action = actor.act(&obs, rng)?;
            let step = env.step(&action)?;
            total += step.reward;
            if step.terminal {
                break;
            }
            obs = step.observation;
        }
        returns.push(total);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let std = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok((mean, std))
}

/// Evaluation environment and generator for a protocol seed. Every
/// evaluation point uses the same ones, so records differ only through the
/// agent.
pub fn evaluation_setup(task: &Arc<dyn Task>, seed: u64) -> (RealEnv, SimRng) {
    (
        RealEnv::new(task.clone(), derive_seed(seed, &[EVAL_NOISE])),
        seeded(derive_seed(seed, &[EVAL_ACTING])),
    )
}

/// Stepwise experiment loop. Each [`Self::next_record`] call advances the
/// real interaction to the next evaluation point.
pub struct ExperimentRunner {
    config: ExperimentConfig,
    task: Arc<dyn Task>,
    agent: Box<dyn Agent>,
    env: RealEnv,
    act_rng: SimRng,
    reset_rng: SimRng,
    out_dir: PathBuf,
    metrics: MetricsWriter,
    started: Instant,
    obs: Option<Vec<f64>>,
    emitted_initial: bool,
    records: Vec<MetricRecord>,
}

impl ExperimentRunner {
    pub fn new(config: ExperimentConfig, out_dir: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        let out_dir = out_dir.into();
        std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
        let seed = config.protocol.seed;
        let task = make_task(&config.task)?;
        let agent = build_agent(&config, &task, &mut seeded(derive_seed(seed, &[AGENT_INIT])))?;
        write_file(&out_dir.join(CONFIG_FILE), config.to_toml_string()?.as_bytes())?;
        let info = RunInfo {
            agent: config.agent.kind.tag().to_string(),
            seed,
            task_hash: config.task_hash(),
            protocol_hash: config.protocol_hash(),
        };
        let json = serde_json::to_string_pretty(&info).map_err(|e| Error::Format(e.to_string()))?;
        write_file(&out_dir.join(RUN_FILE), json.as_bytes())?;
        let _ = std::fs::remove_file(out_dir.join(ERROR_FILE));
        let metrics = MetricsWriter::create(out_dir.join(METRICS_FILE))?;
        Ok(ExperimentRunner {
            env: RealEnv::new(task.clone(), derive_seed(seed, &[REAL_NOISE])),
            act_rng: seeded(derive_seed(seed, &[ACTING])),
            reset_rng: seeded(derive_seed(seed, &[REAL_RESET])),
            config,
            task,
            agent,
            out_dir,
            metrics,
            started: Instant::now(),
            obs: None,
            emitted_initial: false,
            records: Vec::new(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn agent(&self) -> &dyn Agent {
        self.agent.as_ref()
    }

    pub fn agent_mut(&mut self) -> &mut dyn Agent {
        self.agent.as_mut()
    }

    /// Real-environment steps taken so far (instrumented on the environment).
    pub fn real_steps(&self) -> u64 {
        self.env.total_steps()
    }

    pub fn records(&self) -> &[MetricRecord] {
        &self.records
    }

    pub fn metrics_path(&self) -> &Path {
        self.metrics.path()
    }

    /// Advances to the next evaluation point and records it; `None` once the
    /// real-step budget is spent. Failures are logged to `error.txt` before
    /// being returned.
    pub fn next_record(&mut self) -> Result<Option<MetricRecord>> {
        match self.advance() {
            Ok(r) => Ok(r),
            Err(e) => {
                let _ = std::fs::write(self.out_dir.join(ERROR_FILE), format!("{e}\n"));
                Err(e)
            }
        }
    }

    fn advance(&mut self) -> Result<Option<MetricRecord>> {
        let total = self.config.protocol.total_real_steps as u64;
        if !self.emitted_initial {
            self.emitted_initial = true;
            return self.record().map(Some);
        }
        let done = self.env.total_steps();
        if done >= total {
            return Ok(None);
        }
        let interval = self.config.protocol.eval_interval as u64;
        let target = ((done / interval + 1) * interval).min(total);
        while self.env.total_steps() < target {
            self.real_step()?;
        }
        if target == total {
            // evaluate exactly what the checkpoint will hold
            self.agent.round_to_checkpoint_precision();
        }
        self.record().map(Some)
    }

    fn real_step(&mut self) -> Result<()> {
        let obs = match self.obs.take() {
            Some(o) => o,
            None => {
                let o = self.env.reset(&mut self.reset_rng);
                self.agent.begin_episode(&o)?;
                o
            }
        };
        let action = self.agent.act(&obs, &mut self.act_rng)?;
        let step = self.env.step(&action)?;
        let transition = Transition {
            state: obs,
            action: self.env.last_effective_action().expect("a step was taken").to_vec(),
            reward: step.reward,
            next_state: step.observation.clone(),
            terminal: step.terminal && !step.truncated,
        };
        self.agent.observe(&transition, step.truncated, &mut self.act_rng)?;
        if !step.terminal {
            self.obs = Some(step.observation);
        }
        Ok(())
    }

    fn record(&mut self) -> Result<MetricRecord> {
        let (mut env, mut rng) = evaluation_setup(&self.task, self.config.protocol.seed);
        let (mean, std) = evaluate_agent(self.agent.as_ref(), &mut env, self.config.protocol.eval_episodes, &mut rng)?;
        let record = MetricRecord {
            real_step: self.env.total_steps(),
            eval_return_mean: mean,
            eval_return_std: std,
            wall_clock_s: self
                .config
                .protocol
                .record_wall_clock
                .then(|| self.started.elapsed().as_secs_f64()),
            model_holdout_nll: self.agent.model_holdout_nll(),
        };
        log::info!(
            "step {}: eval return {:.2} ± {:.2}",
            record.real_step,
            record.eval_return_mean,
            record.eval_return_std
        );
        self.metrics.append(&record)?;
        self.records.push(record.clone());
        Ok(record)
    }

    /// Saves the agent's parameters and returns the checkpoint path.
    pub fn save_checkpoint(&mut self) -> Result<PathBuf> {
        self.agent.round_to_checkpoint_precision();
        let mut ckpt = Checkpoint::new();
        self.agent.save(&mut ckpt)?;
        let path = self.out_dir.join(CHECKPOINT_FILE);
        ckpt.save(&path)?;
        Ok(path)
    }

    /// Runs any remaining steps, writes the final checkpoint and returns the
    /// metrics path.
    pub fn finish(mut self) -> Result<PathBuf> {
        while self.next_record()?.is_some() {}
        self.save_checkpoint()?;
        Ok(self.metrics.path().to_path_buf())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Runs a whole experiment into `out_dir` and returns the metrics file path.
pub fn run_experiment(config: &ExperimentConfig, out_dir: impl Into<PathBuf>) -> Result<PathBuf> {
    ExperimentRunner::new(config.clone(), out_dir)?.finish()
}

/// Reads the resolved configuration stored in a run directory.
pub fn load_run_config(run_dir: &Path) -> Result<ExperimentConfig> {
    let path = run_dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    ExperimentConfig::from_toml_str(&text)
}

pub fn load_run_info(run_dir: &Path) -> Result<RunInfo> {
    let path = run_dir.join(RUN_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Loads the agent saved at `checkpoint`, using the configuration stored
/// beside it, optionally on a different task configuration.
pub fn load_agent(checkpoint: &Path, task: Option<&TaskConfig>) -> Result<(ExperimentConfig, Box<dyn Agent>)> {
    let dir = checkpoint.parent().unwrap_or_else(|| Path::new("."));
    let mut config = load_run_config(dir)?;
    if let Some(t) = task {
        config.task = t.clone();
    }
    let task = make_task(&config.task)?;
    let mut agent = build_agent(&config, &task, &mut seeded(0))?;
    agent.load(&Checkpoint::load(checkpoint)?)?;
    Ok((config, agent))
}

/// Evaluates a saved agent on the evaluation setup of `seed` (the run's
/// protocol seed when absent).
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    task: Option<&TaskConfig>,
    episodes: usize,
    seed: Option<u64>,
) -> Result<(f64, f64)> {
    let (config, agent) = load_agent(checkpoint, task)?;
    let task = make_task(&config.task)?;
    let (mut env, mut rng) = evaluation_setup(&task, seed.unwrap_or(config.protocol.seed));
    evaluate_agent(agent.as_ref(), &mut env, episodes, &mut rng)
}
