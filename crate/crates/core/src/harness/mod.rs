//! End-to-end insider scenarios: generation, execution under Gargoyle and
//! the baseline models, aggregate reporting and the policy-scaling sweep.

mod bench;
mod generator;
mod report;
mod runner;
mod scenario;

use thiserror::Error;

use crate::engine::EngineError;

pub use bench::{bench_policy_scaling, synthetic_policies, BenchConfig, BenchWorld, LatencyRow};
pub use generator::{generate_scenarios, quotas, GeneratorConfig};
pub use report::{aggregate, classify, dominance_gaps, ModelSummary, Row, RunReport, TableCounts};
pub use runner::{run_baseline, run_model, run_scenario, HarnessContext, RequestRecord, ScenarioOutcome, ScenarioRun};
pub use scenario::{
    AttackGoal, Category, Expectation, Injection, ProviderSpec, ScenarioSpec, Step, UserSpec, MAP_COUNT,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("scenario {id} is invalid: {reason}")]
    InvalidScenario { id: u32, reason: String },
    #[error("scenario {id} aborted at t={time}: {source}")]
    Aborted {
        id: u32,
        time: crate::types::Millis,
        #[source]
        source: EngineError,
    },
}
