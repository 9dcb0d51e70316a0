//! Experiment harness: four-part configuration, a single interaction loop for
//! every agent type, evaluation records, checkpoints and run comparison.

mod agents;
mod compare;
mod config;
mod experiment;
mod metrics;

pub use agents::{build_agent, Actor, Agent, MePpoRunner, PetsRunner, PpoRealAgent, RandomAgent};
pub use compare::{compare, Comparison, RunSummary};
pub use config::{
    load_config, load_task_config, AgentConfig, AgentKind, ExperimentConfig, ModelConfig, PetsConfig, ProtocolConfig,
};
pub use experiment::{
    evaluate_agent, evaluate_checkpoint, evaluation_setup, load_agent, load_run_config, load_run_info,
    run_experiment, ExperimentRunner, RunInfo, CHECKPOINT_FILE, CONFIG_FILE, ERROR_FILE, METRICS_FILE, RUN_FILE,
};
pub use metrics::{read_metrics, MetricRecord, MetricsWriter, METRICS_HEADER};
