//! Tool-importance attribution for tool-using agents.
//!
//! An agent is treated as a black box that answers a prompt given some
//! subset of its tools. Each tool's importance is its Shapley value in the
//! game whose payoff for a subset is the similarity between the answer
//! obtained with that subset and the answer obtained with every tool.
//!
//! The pieces, bottom up:
//!
//! * [`model`]: catalog, coalitions, responses and reports.
//! * [`agent`]: the agent contract, a scripted offline agent, a live
//!   chat-completions loop and the response cache.
//! * [`similarity`]: the value function backends.
//! * [`shapley`]: coalition plans and the estimators.
//! * [`analysis`]: one prompt end to end.
//! * [`experiment`]: the evaluation protocols.
//! * [`report`]: report files and text rendering.

pub mod agent;
pub mod analysis;
pub mod bundled;
pub mod error;
pub mod experiment;
pub mod model;
pub mod report;
pub mod shapley;
pub mod similarity;
mod util;

pub use agent::{Agent, LiveAgent, LiveAgentConfig, ResponseCache, ScriptedAgent};
pub use analysis::{AnalysisOptions, Analyzer};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, ExperimentKind, ExperimentMetrics, ExperimentRunner};
pub use model::{
    AgentResponse, BackendKind, Coalition, EstimatorKind, PromptCase, ShapleyReport, Tool,
    ToolCatalog,
};
pub use shapley::{EstimatorChoice, SubsetAggregation};
pub use similarity::{SimilarityBackend, SimilarityConfig, TfCosine};
