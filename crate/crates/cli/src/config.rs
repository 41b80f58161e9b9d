//! TOML run configuration. Relative paths resolve against the directory of
//! the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use toolshap_core::agent::{AgentScript, LiveAgentConfig};
use toolshap_core::experiment::AgentMode;
use toolshap_core::model::{prompt_suite_from_json, PromptCase};
use toolshap_core::similarity::SimilarityConfig;
use toolshap_core::{bundled, EstimatorChoice, ToolCatalog};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Tool catalog JSON. Bundled catalog when absent.
    pub catalog: Option<PathBuf>,
    pub prompt: Option<String>,
    pub prompt_suite: Option<PathBuf>,
    #[serde(default = "default_mode")]
    pub agent_mode: AgentMode,
    /// Rules for the scripted agent. Bundled script when absent.
    pub script: Option<PathBuf>,
    pub live: Option<LiveAgentConfig>,
    #[serde(default = "SimilarityConfig::tf")]
    pub backend: SimilarityConfig,
    #[serde(default)]
    pub estimator: EstimatorChoice,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// JSON-lines response cache. In memory when absent.
    pub response_cache: Option<PathBuf>,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Defaults to 1..=runs.
    pub seeds: Option<Vec<u64>>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            runs: default_runs(),
            seeds: None,
        }
    }
}

fn default_mode() -> AgentMode {
    AgentMode::Scripted
}
fn default_rho() -> f64 {
    0.5
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_concurrency() -> usize {
    toolshap_core::analysis::DEFAULT_CONCURRENCY
}
fn default_runs() -> usize {
    3
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        cfg.check()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            self.catalog.as_mut(),
            self.prompt_suite.as_mut(),
            self.script.as_mut(),
            self.response_cache.as_mut(),
            Some(&mut self.output_dir),
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
        if let Some(p) = self.backend.embedding.as_mut().and_then(|e| e.cache_path.as_mut()) {
            join(p);
        }
    }

    /// Every input file must exist.
    fn check(&self) -> Result<(), CliError> {
        for (what, path) in [
            ("catalog", &self.catalog),
            ("prompt suite", &self.prompt_suite),
            ("script", &self.script),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(CliError::Config(format!("{what} not found: {}", p.display())));
                }
            }
        }
        if self.agent_mode == AgentMode::Live && self.live.is_none() {
            return Err(CliError::Config("agent_mode = \"live\" needs a [live] section".into()));
        }
        Ok(())
    }

    pub fn catalog(&self) -> Result<Option<ToolCatalog>, CliError> {
        match &self.catalog {
            Some(p) => Ok(Some(ToolCatalog::from_json(&fs::read_to_string(p)?)?)),
            None => Ok(None),
        }
    }

    pub fn prompt_suite(&self) -> Result<Option<Vec<PromptCase>>, CliError> {
        match &self.prompt_suite {
            Some(p) => Ok(Some(prompt_suite_from_json(&fs::read_to_string(p)?)?)),
            None => Ok(None),
        }
    }

    pub fn script(&self) -> Result<AgentScript, CliError> {
        match &self.script {
            Some(p) => Ok(AgentScript::from_json(&fs::read_to_string(p)?)?),
            None => Ok(bundled::script()),
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.experiment
            .seeds
            .clone()
            .unwrap_or_else(|| (1..=self.experiment.runs as u64).collect())
    }
}
