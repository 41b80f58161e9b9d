//! The four evaluation protocols: run-to-run consistency, faithfulness
//! under tool removal, irrelevant-tool injection and cross-domain
//! attribution.

mod metrics;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use metrics::{mean, shap_vector_cosine, ExperimentMetrics, PromptResult};

use crate::agent::{Agent, ResponseCache};
use crate::analysis::{AnalysisOptions, Analyzer, DEFAULT_CONCURRENCY};
use crate::bundled;
use crate::error::{Error, Result};
use crate::model::{argmax, argmin, Coalition, PromptCase, ReportMetrics, ShapleyReport, ToolCatalog};
use crate::report::write_json;
use crate::shapley::{check_rho, EstimatorChoice};
use crate::similarity::SimilarityBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Consistency,
    Faithfulness,
    Injection,
    CrossDomain,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::Consistency,
        ExperimentKind::Faithfulness,
        ExperimentKind::Injection,
        ExperimentKind::CrossDomain,
    ];

    /// Name used on the command line and for the output directory.
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Consistency => "consistency",
            ExperimentKind::Faithfulness => "faithfulness",
            ExperimentKind::Injection => "injection",
            ExperimentKind::CrossDomain => "cross-domain",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "consistency" => Ok(ExperimentKind::Consistency),
            "faithfulness" => Ok(ExperimentKind::Faithfulness),
            "injection" => Ok(ExperimentKind::Injection),
            "cross-domain" | "cross_domain" => Ok(ExperimentKind::CrossDomain),
            other => Err(format!(
                "unknown experiment `{other}` (expected consistency, faithfulness, injection or cross-domain)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentMode {
    Scripted,
    Live,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub prompt_suite: Vec<PromptCase>,
    pub catalog: ToolCatalog,
    pub runs: usize,
    pub rho: f64,
    pub estimator: EstimatorChoice,
    /// One per run.
    pub seeds: Vec<u64>,
    pub agent_mode: AgentMode,
}

impl ExperimentConfig {
    /// Bundled suite and catalog for `kind`: three runs with seeds 1, 2, 3,
    /// rho 0.5, subset sampling, scripted agent.
    pub fn bundled(kind: ExperimentKind) -> Self {
        let (prompt_suite, catalog) = match kind {
            ExperimentKind::Consistency | ExperimentKind::Faithfulness => {
                (bundled::consistency_suite(), bundled::core_catalog())
            }
            ExperimentKind::Injection => (bundled::injection_suite(), bundled::injection_catalog()),
            ExperimentKind::CrossDomain => {
                (bundled::cross_domain_suite(), bundled::cross_domain_catalog())
            }
        };
        ExperimentConfig {
            experiment: kind,
            prompt_suite,
            catalog,
            runs: 3,
            rho: 0.5,
            estimator: EstimatorChoice::subset(),
            seeds: vec![1, 2, 3],
            agent_mode: AgentMode::Scripted,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_rho(self.rho)?;
        self.estimator.validate()?;
        if self.runs == 0 {
            return Err(Error::ExperimentSetup("runs", "at least one run".into()));
        }
        if self.seeds.len() != self.runs {
            return Err(Error::ExperimentSetup(
                "seeds",
                format!("one seed per run ({} runs, {} seeds)", self.runs, self.seeds.len()),
            ));
        }
        if self.prompt_suite.is_empty() {
            return Err(Error::ExperimentSetup("prompt suite", "at least one prompt".into()));
        }
        for case in &self.prompt_suite {
            case.check(&self.catalog)?;
        }
        if self.experiment == ExperimentKind::Consistency && self.runs < 2 {
            return Err(Error::ExperimentSetup("consistency", "at least two runs".into()));
        }
        Ok(())
    }

    /// Catalog tools that no prompt in the suite expects.
    pub fn distractors(&self) -> Vec<String> {
        self.catalog
            .names()
            .into_iter()
            .filter(|t| {
                !self
                    .prompt_suite
                    .iter()
                    .any(|c| c.expected_tool.as_deref() == Some(*t))
            })
            .map(String::from)
            .collect()
    }
}

/// One analysis inside an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub prompt_id: String,
    /// 1-based.
    pub run: usize,
    pub report: ShapleyReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub metrics: ExperimentMetrics,
    pub reports: Vec<RunReport>,
}

impl ExperimentOutcome {
    /// Writes `{experiment}/{prompt_id}/run{k}.json` and
    /// `{experiment}/metrics.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let root = dir.join(self.metrics.experiment.name());
        for r in &self.reports {
            write_json(
                &root.join(&r.prompt_id).join(format!("run{}.json", r.run)),
                &r.report,
            )?;
        }
        write_json(&root.join("metrics.json"), &self.metrics)
    }
}

pub struct ExperimentRunner<'a> {
    pub agent: &'a dyn Agent,
    pub backend: &'a dyn SimilarityBackend,
    pub cache: &'a ResponseCache,
    pub concurrency: usize,
}

struct Row<'c> {
    case: &'c PromptCase,
    run: usize,
    seed: u64,
    report: ShapleyReport,
}

impl<'a> ExperimentRunner<'a> {
    pub fn new(
        agent: &'a dyn Agent,
        backend: &'a dyn SimilarityBackend,
        cache: &'a ResponseCache,
    ) -> Self {
        ExperimentRunner {
            agent,
            backend,
            cache,
            concurrency: DEFAULT_CONCURRENCY,
        }
    }

    fn analyzer<'c>(&'c self, catalog: &'c ToolCatalog) -> Analyzer<'c> {
        Analyzer {
            agent: self.agent,
            catalog,
            backend: self.backend,
            cache: self.cache,
            concurrency: self.concurrency,
        }
    }

    pub fn run(&self, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
        cfg.validate()?;
        match cfg.experiment {
            ExperimentKind::Consistency => self.run_consistency(cfg),
            ExperimentKind::Faithfulness => self.run_faithfulness(cfg),
            ExperimentKind::Injection => self.run_injection(cfg),
            ExperimentKind::CrossDomain => self.run_cross_domain(cfg),
        }
    }

    /// Every prompt under every seed, in suite order.
    fn analyze_all<'c>(&self, cfg: &'c ExperimentConfig) -> Result<Vec<Row<'c>>> {
        let analyzer = self.analyzer(&cfg.catalog);
        let mut rows = Vec::with_capacity(cfg.prompt_suite.len() * cfg.runs);
        for case in &cfg.prompt_suite {
            for (k, &seed) in cfg.seeds.iter().enumerate() {
                let opts = AnalysisOptions {
                    estimator: cfg.estimator,
                    rho: cfg.rho,
                    seed,
                };
                let mut report = analyzer.analyze(&case.prompt, &opts)?;
                report.metrics = Some(ReportMetrics {
                    expected_tool: case.expected_tool.clone(),
                    top_tool: report.top_tool.clone(),
                    top1_correct: case
                        .expected_tool
                        .as_ref()
                        .map(|t| report.top_tool.as_ref() == Some(t)),
                });
                rows.push(Row {
                    case,
                    run: k + 1,
                    seed,
                    report,
                });
            }
        }
        Ok(rows)
    }

    fn base_metrics(&self, cfg: &ExperimentConfig, rows: &[Row]) -> Result<ExperimentMetrics> {
        let results: Vec<PromptResult> = rows
            .iter()
            .map(|r| PromptResult {
                prompt_id: r.case.id.clone(),
                run: r.run,
                seed: r.seed,
                domain: r.case.domain_label.as_str().to_string(),
                expected_tool: r.case.expected_tool.clone(),
                top_tool: r.report.top_tool.clone(),
                top1_correct: r.report.metrics.as_ref().and_then(|m| m.top1_correct),
                phi: r
                    .report
                    .tools
                    .iter()
                    .cloned()
                    .zip(r.report.phi.iter().copied())
                    .collect(),
                quality_drop_high: None,
                quality_drop_low: None,
                removed_high: None,
                removed_low: None,
                shap_gap: None,
            })
            .collect();
        let (top1_correct, top1_total, top1_accuracy) = metrics::top1(&results)?;
        Ok(ExperimentMetrics {
            experiment: cfg.experiment,
            agent_mode: cfg.agent_mode,
            estimator: cfg.estimator.kind,
            rho: cfg.rho,
            runs: cfg.runs,
            seeds: cfg.seeds.clone(),
            tools: cfg.catalog.names().into_iter().map(String::from).collect(),
            prompts: cfg.prompt_suite.len(),
            top1_accuracy,
            top1_correct,
            top1_total,
            stability_cosines: vec![],
            mean_stability: None,
            quality_drop_high: None,
            quality_drop_low: None,
            shap_gap: None,
            shap_ratio: None,
            expected_mean_phi: None,
            distractor_mean_phi: None,
            distractors: vec![],
            domain_tool_matrix: None,
            results,
        })
    }

    fn outcome(rows: Vec<Row>, metrics: ExperimentMetrics) -> ExperimentOutcome {
        ExperimentOutcome {
            metrics,
            reports: rows
                .into_iter()
                .map(|r| RunReport {
                    prompt_id: r.case.id.clone(),
                    run: r.run,
                    report: r.report,
                })
                .collect(),
        }
    }

    /// Pairwise cosines between the attribution vectors of different runs
    /// of the same prompt.
    pub fn run_consistency(&self, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
        let rows = self.analyze_all(cfg)?;
        let mut m = self.base_metrics(cfg, &rows)?;
        for chunk in rows.chunks(cfg.runs) {
            for i in 0..chunk.len() {
                for j in i + 1..chunk.len() {
                    m.stability_cosines
                        .push(shap_vector_cosine(&chunk[i].report.phi, &chunk[j].report.phi)?);
                }
            }
        }
        m.mean_stability = mean(&m.stability_cosines);
        Ok(Self::outcome(rows, m))
    }

    /// Removes the highest- and lowest-scoring tool in turn and measures
    /// `1 - sim(response, baseline)`.
    pub fn run_faithfulness(&self, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
        let rows = self.analyze_all(cfg)?;
        let mut m = self.base_metrics(cfg, &rows)?;
        let analyzer = self.analyzer(&cfg.catalog);
        let full = Coalition::full(&cfg.catalog);
        let (mut highs, mut lows) = (Vec::new(), Vec::new());
        for (row, result) in rows.iter().zip(m.results.iter_mut()) {
            let phi = &row.report.phi;
            let (hi, lo) = (argmax(phi).expect("n >= 1"), argmin(phi).expect("n >= 1"));
            let drop = |i: usize| -> Result<f64> {
                let response = analyzer.respond(&row.case.prompt, &full.without(i))?;
                Ok(1.0 - self.backend.similarity(&response.text, &row.report.baseline_text)?)
            };
            let (dh, dl) = (drop(hi)?, drop(lo)?);
            result.quality_drop_high = Some(dh);
            result.quality_drop_low = Some(dl);
            result.removed_high = Some(cfg.catalog.tool(hi).name.clone());
            result.removed_low = Some(cfg.catalog.tool(lo).name.clone());
            highs.push(dh);
            lows.push(dl);
        }
        m.quality_drop_high = mean(&highs);
        m.quality_drop_low = mean(&lows);
        Ok(Self::outcome(rows, m))
    }

    /// Expected-tool scores against the scores of tools no prompt needs.
    pub fn run_injection(&self, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
        let distractors = cfg.distractors();
        if distractors.is_empty() {
            return Err(Error::ExperimentSetup(
                "injection",
                "catalog tools that no prompt expects".into(),
            ));
        }
        let rows = self.analyze_all(cfg)?;
        let mut m = self.base_metrics(cfg, &rows)?;
        let (mut expected, mut injected) = (Vec::new(), Vec::new());
        for (row, result) in rows.iter().zip(m.results.iter_mut()) {
            let d: Vec<f64> = distractors
                .iter()
                .map(|t| row.report.phi_of(t).expect("distractor in catalog"))
                .collect();
            injected.extend_from_slice(&d);
            if let Some(e) = row.case.expected_tool.as_deref().and_then(|t| row.report.phi_of(t)) {
                expected.push(e);
                result.shap_gap = Some(e - mean(&d).expect("non-empty"));
            }
        }
        m.expected_mean_phi = mean(&expected);
        m.distractor_mean_phi = mean(&injected);
        if let (Some(e), Some(d)) = (m.expected_mean_phi, m.distractor_mean_phi) {
            m.shap_gap = Some(e - d);
            m.shap_ratio = (d > 0.0).then(|| e / d);
        }
        m.distractors = distractors;
        Ok(Self::outcome(rows, m))
    }

    /// Mean score of each tool per prompt domain.
    pub fn run_cross_domain(&self, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
        let rows = self.analyze_all(cfg)?;
        let mut m = self.base_metrics(cfg, &rows)?;
        let mut acc: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
        for row in &rows {
            let by_tool = acc
                .entry(row.case.domain_label.as_str().to_string())
                .or_default();
            for (tool, &phi) in row.report.tools.iter().zip(&row.report.phi) {
                by_tool.entry(tool.clone()).or_default().push(phi);
            }
        }
        m.domain_tool_matrix = Some(
            acc.into_iter()
                .map(|(d, tools)| {
                    let means = tools
                        .into_iter()
                        .map(|(t, v)| (t, mean(&v).expect("non-empty")))
                        .collect();
                    (d, means)
                })
                .collect(),
        );
        Ok(Self::outcome(rows, m))
    }
}
