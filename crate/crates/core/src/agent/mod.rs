//! The black-box agent contract. An estimator only ever sees
//! `respond(prompt, coalition)`; the agent behind it may be the offline
//! scripted stand-in or a live chat-completions loop.

pub(crate) mod cache;
mod live;
mod scripted;
pub mod tools;

pub use cache::{CacheKey, ResponseCache};
pub use live::{run_tool_loop, LiveAgent, LiveAgentConfig};
pub use scripted::{AgentScript, Matcher, ScriptRule, ScriptedAgent};
pub use tools::{execute_tool, execute_tool_lossy, ToolError};

use crate::error::Result;
use crate::model::{AgentResponse, Coalition, ToolCatalog};

pub trait Agent: Send + Sync {
    /// Stable identity used in cache keys and reports.
    fn id(&self) -> &str;

    /// Answers `prompt` with only the tools in `coalition` available.
    fn respond(
        &self,
        prompt: &str,
        coalition: &Coalition,
        catalog: &ToolCatalog,
    ) -> Result<AgentResponse>;

    /// Number of underlying agent invocations so far (cache hits excluded).
    fn request_count(&self) -> usize;
}
