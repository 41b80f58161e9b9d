//! Domain types shared by every stage of an analysis: the tool catalog,
//! coalitions over it, prompts, agent responses and the attribution report.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Upper bound on catalog size. Coalitions are `u32` masks and exact
/// enumeration visits all `2^n` subsets.
pub const MAX_TOOLS: usize = 30;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolParam {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub required: bool,
}

/// A named capability the agent may be offered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tool {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub parameters: Vec<ToolParam>,
    pub executor_id: String,
}

impl Tool {
    fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::EmptyToolName);
        }
        let mut seen = BTreeSet::new();
        for p in &self.parameters {
            if !seen.insert(p.name.as_str()) {
                return Err(Error::DuplicateParameter {
                    tool: self.name.clone(),
                    param: p.name.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Hash binding coalition masks to one catalog ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(pub u64);

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct CatalogFile {
    tools: Vec<Tool>,
}

/// Ordered tool set. The order is fixed at construction and defines the
/// bit assigned to each tool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolCatalog {
    tools: Vec<Tool>,
    index: HashMap<String, usize>,
    fingerprint: Fingerprint,
}

impl ToolCatalog {
    pub fn new(tools: Vec<Tool>) -> Result<Self> {
        if tools.is_empty() {
            return Err(Error::EmptyCatalog);
        }
        if tools.len() > MAX_TOOLS {
            return Err(Error::CatalogTooLarge(tools.len()));
        }
        let mut index = HashMap::with_capacity(tools.len());
        let mut hasher = Sha256::new();
        for (i, tool) in tools.iter().enumerate() {
            tool.validate()?;
            if index.insert(tool.name.clone(), i).is_some() {
                return Err(Error::DuplicateTool(tool.name.clone()));
            }
            hasher.update(tool.name.as_bytes());
            hasher.update([0]);
            hasher.update(tool.executor_id.as_bytes());
            hasher.update([0]);
            hasher.update(tool.description.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        Ok(ToolCatalog {
            tools,
            index,
            fingerprint: Fingerprint(u64::from_be_bytes(head)),
        })
    }

    /// Parses the catalog document `{"tools": [...]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: CatalogFile = serde_json::from_str(text)?;
        Self::new(file.tools)
    }

    pub fn to_json(&self) -> String {
        let file = CatalogFile {
            tools: self.tools.clone(),
        };
        serde_json::to_string_pretty(&file).expect("catalog serializes")
    }

    /// Keeps only the named tools, in the order given.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let tools = names
            .iter()
            .map(|n| {
                self.get(n)
                    .cloned()
                    .ok_or_else(|| Error::UnknownTool(n.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(tools)
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn tools(&self) -> &[Tool] {
        &self.tools
    }

    pub fn tool(&self, index: usize) -> &Tool {
        &self.tools[index]
    }

    pub fn get(&self, name: &str) -> Option<&Tool> {
        self.index.get(name).map(|&i| &self.tools[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> Vec<&str> {
        self.tools.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn full_mask(&self) -> u32 {
        full_mask(self.len())
    }
}

/// Mask with the low `n` bits set.
pub fn full_mask(n: usize) -> u32 {
    if n >= 32 {
        u32::MAX
    } else {
        (1u32 << n) - 1
    }
}

/// A subset of a specific catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition {
    mask: u32,
    fingerprint: Fingerprint,
}

impl Coalition {
    pub fn from_mask(mask: u32, catalog: &ToolCatalog) -> Result<Self> {
        if mask & !catalog.full_mask() != 0 {
            return Err(Error::MaskOutOfRange {
                mask,
                n: catalog.len(),
            });
        }
        Ok(Coalition {
            mask,
            fingerprint: catalog.fingerprint(),
        })
    }

    pub fn empty(catalog: &ToolCatalog) -> Self {
        Coalition {
            mask: 0,
            fingerprint: catalog.fingerprint(),
        }
    }

    pub fn full(catalog: &ToolCatalog) -> Self {
        Coalition {
            mask: catalog.full_mask(),
            fingerprint: catalog.fingerprint(),
        }
    }

    pub fn from_names<S: AsRef<str>>(names: &[S], catalog: &ToolCatalog) -> Result<Self> {
        let mut mask = 0u32;
        for name in names {
            let name = name.as_ref();
            let i = catalog
                .index_of(name)
                .ok_or_else(|| Error::UnknownTool(name.to_string()))?;
            if mask & (1 << i) != 0 {
                return Err(Error::DuplicateName(name.to_string()));
            }
            mask |= 1 << i;
        }
        Ok(Coalition {
            mask,
            fingerprint: catalog.fingerprint(),
        })
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn contains(&self, index: usize) -> bool {
        index < 32 && self.mask & (1 << index) != 0
    }

    pub fn without(&self, index: usize) -> Self {
        Coalition {
            mask: self.mask & !(1 << index),
            ..*self
        }
    }

    pub fn check(&self, catalog: &ToolCatalog) -> Result<()> {
        if self.fingerprint != catalog.fingerprint() {
            return Err(Error::FingerprintMismatch);
        }
        Ok(())
    }

    /// Indices of member tools, ascending.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..32).filter(move |&i| self.mask & (1 << i) != 0)
    }

    /// Member names in catalog order.
    pub fn member_names<'c>(&self, catalog: &'c ToolCatalog) -> Result<Vec<&'c str>> {
        self.check(catalog)?;
        Ok(self
            .indices()
            .map(|i| catalog.tool(i).name.as_str())
            .collect())
    }

    pub fn members<'c>(&self, catalog: &'c ToolCatalog) -> Result<Vec<&'c Tool>> {
        self.check(catalog)?;
        Ok(self.indices().map(|i| catalog.tool(i)).collect())
    }

    /// Canonical identity: sorted member names joined by `|`.
    pub fn key(&self, catalog: &ToolCatalog) -> Result<String> {
        let mut names = self.member_names(catalog)?;
        names.sort_unstable();
        Ok(names.join("|"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Math,
    Finance,
    Knowledge,
    Other,
}

impl Domain {
    pub fn as_str(&self) -> &'static str {
        match self {
            Domain::Math => "math",
            Domain::Finance => "finance",
            Domain::Knowledge => "knowledge",
            Domain::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptCase {
    pub id: String,
    pub prompt: String,
    #[serde(rename = "domain")]
    pub domain_label: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_tool: Option<String>,
}

impl PromptCase {
    pub fn check(&self, catalog: &ToolCatalog) -> Result<()> {
        match &self.expected_tool {
            Some(tool) if catalog.get(tool).is_none() => Err(Error::UnknownExpectedTool {
                prompt: self.id.clone(),
                tool: tool.clone(),
            }),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Deserialize)]
struct PromptSuiteFile {
    prompts: Vec<PromptCase>,
}

/// Parses a prompt suite document `{"prompts": [...]}`.
pub fn prompt_suite_from_json(text: &str) -> Result<Vec<PromptCase>> {
    let file: PromptSuiteFile = serde_json::from_str(text)?;
    Ok(file.prompts)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: String,
    pub arguments: String,
    pub result: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseSource {
    Scripted,
    Live,
    Cache,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub text: String,
    pub tool_calls_made: Vec<ToolCall>,
    pub turns: u32,
    pub source: ResponseSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Baseline,
    LeaveOneOut,
    Sampled,
}

/// One evaluated coalition: the response obtained with it and its value.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionEvaluation {
    pub coalition: Coalition,
    pub response: AgentResponse,
    pub value: f64,
    pub phase: Phase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Exact,
    PermutationMc,
    SubsetMc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    TfCosine,
    EmbeddingCosine,
}

/// Everything needed to re-run an analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub prompt: String,
    pub estimator: EstimatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset_aggregation: Option<String>,
    pub seed: u64,
    pub sampling_ratio: f64,
    pub backend: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_model: Option<String>,
    pub agent: String,
    pub catalog_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub coalition: Vec<String>,
    pub mask: u32,
    pub phase: Phase,
    pub value: f64,
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    pub turns: u32,
}

/// Per-report ground-truth check, filled in by experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetrics {
    pub expected_tool: Option<String>,
    pub top_tool: Option<String>,
    pub top1_correct: Option<bool>,
}

pub const REPORT_VERSION: u32 = 1;

/// Attribution scores for one prompt plus the provenance to reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyReport {
    pub version: u32,
    pub config: ReportConfig,
    pub tools: Vec<String>,
    pub baseline_text: String,
    pub phi: Vec<f64>,
    pub shares: Vec<f64>,
    /// Highest-scoring tool; ties go to the lower catalog index.
    pub top_tool: Option<String>,
    pub evaluation_count: usize,
    pub evaluations: Vec<EvaluationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<ReportMetrics>,
}

impl ShapleyReport {
    pub fn phi_of(&self, tool: &str) -> Option<f64> {
        self.tools.iter().position(|t| t == tool).map(|i| self.phi[i])
    }
}

/// Index of the largest entry; ties break toward the lower index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Index of the smallest entry; ties break toward the lower index.
pub fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] <= v => {}
            _ => best = Some(i),
        }
    }
    best
}
