use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AgentMode, ExperimentKind};
use crate::error::{Error, Result};
use crate::model::EstimatorKind;
use crate::similarity::cosine;

/// Cosine between two attribution vectors. Each must have a nonzero entry.
pub fn shap_vector_cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    cosine(a, b)
}

/// Mean of `xs`, or `None` when empty.
pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// One (prompt, run) row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptResult {
    pub prompt_id: String,
    pub run: usize,
    pub seed: u64,
    pub domain: String,
    pub expected_tool: Option<String>,
    pub top_tool: Option<String>,
    pub top1_correct: Option<bool>,
    pub phi: BTreeMap<String, f64>,
    pub quality_drop_high: Option<f64>,
    pub quality_drop_low: Option<f64>,
    pub removed_high: Option<String>,
    pub removed_low: Option<String>,
    pub shap_gap: Option<f64>,
}

/// Aggregate results of one protocol. Fields a protocol does not measure
/// are null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMetrics {
    pub experiment: ExperimentKind,
    pub agent_mode: AgentMode,
    pub estimator: EstimatorKind,
    pub rho: f64,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub tools: Vec<String>,
    pub prompts: usize,
    pub top1_accuracy: f64,
    pub top1_correct: usize,
    pub top1_total: usize,
    pub stability_cosines: Vec<f64>,
    pub mean_stability: Option<f64>,
    pub quality_drop_high: Option<f64>,
    pub quality_drop_low: Option<f64>,
    pub shap_gap: Option<f64>,
    pub shap_ratio: Option<f64>,
    pub expected_mean_phi: Option<f64>,
    pub distractor_mean_phi: Option<f64>,
    pub distractors: Vec<String>,
    pub domain_tool_matrix: Option<BTreeMap<String, BTreeMap<String, f64>>>,
    pub results: Vec<PromptResult>,
}

/// (correct, total, accuracy) over rows that carry an expected tool.
pub(crate) fn top1(results: &[PromptResult]) -> Result<(usize, usize, f64)> {
    let judged: Vec<bool> = results.iter().filter_map(|r| r.top1_correct).collect();
    if judged.is_empty() {
        return Err(Error::ExperimentSetup(
            "top-1 accuracy",
            "at least one prompt with an expected tool".into(),
        ));
    }
    let correct = judged.iter().filter(|&&c| c).count();
    Ok((correct, judged.len(), correct as f64 / judged.len() as f64))
}
