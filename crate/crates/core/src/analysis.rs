//! End-to-end attribution for one prompt: baseline response, coalition
//! evaluations, estimator, report.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::OnceLock;
use std::thread;

use log::debug;

use crate::agent::{Agent, ResponseCache};
use crate::error::{Error, Result};
use crate::model::{
    argmax, AgentResponse, Coalition, CoalitionEvaluation, EstimatorKind, EvaluationRecord, Phase,
    ReportConfig, ShapleyReport, ToolCatalog, REPORT_VERSION,
};
use crate::shapley::{
    build_plan, check_rho, exact_shapley, normalize_shares, permutation_mc_shapley,
    subset_mc_shapley, CoalitionPlan, EstimatorChoice, ValueTable,
};
use crate::similarity::{coalition_value, SimilarityBackend};

pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub estimator: EstimatorChoice,
    pub rho: f64,
    pub seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            estimator: EstimatorChoice::default(),
            rho: 0.5,
            seed: 0,
        }
    }
}

/// Values and responses for every coalition of a plan, in plan order.
#[derive(Debug, Clone)]
pub struct PlanEvaluation {
    pub baseline: AgentResponse,
    pub table: ValueTable,
    pub evaluations: Vec<CoalitionEvaluation>,
}

/// Everything an analysis talks to.
#[derive(Clone, Copy)]
pub struct Analyzer<'a> {
    pub agent: &'a dyn Agent,
    pub catalog: &'a ToolCatalog,
    pub backend: &'a dyn SimilarityBackend,
    pub cache: &'a ResponseCache,
    pub concurrency: usize,
}

impl<'a> Analyzer<'a> {
    pub fn new(
        agent: &'a dyn Agent,
        catalog: &'a ToolCatalog,
        backend: &'a dyn SimilarityBackend,
        cache: &'a ResponseCache,
    ) -> Self {
        Analyzer {
            agent,
            catalog,
            backend,
            cache,
            concurrency: DEFAULT_CONCURRENCY,
        }
    }

    pub fn respond(&self, prompt: &str, coalition: &Coalition) -> Result<AgentResponse> {
        self.cache
            .cached_respond(self.agent, prompt, coalition, self.catalog)
            .map_err(|e| self.failed(coalition, e))
    }

    fn failed(&self, coalition: &Coalition, e: Error) -> Error {
        let names = coalition
            .member_names(self.catalog)
            .map(|v| v.join(", "))
            .unwrap_or_default();
        Error::EvaluationFailed {
            coalition: names,
            source: Box::new(e),
        }
    }

    pub fn baseline(&self, prompt: &str) -> Result<AgentResponse> {
        self.respond(prompt, &Coalition::full(self.catalog))
    }

    fn evaluate_one(
        &self,
        prompt: &str,
        mask: u32,
        baseline: &AgentResponse,
    ) -> Result<(AgentResponse, f64)> {
        let coalition = Coalition::from_mask(mask, self.catalog)?;
        let response = self.respond(prompt, &coalition)?;
        let value = coalition_value(&response, baseline, self.backend)
            .map_err(|e| self.failed(&coalition, e))?;
        Ok((response, value))
    }

    /// Evaluates every coalition in `plan`. The full coalition is valued at
    /// exactly 1. Work may run on up to `concurrency` threads; results are
    /// committed in plan order.
    pub fn evaluate_plan(&self, plan: &CoalitionPlan, prompt: &str) -> Result<PlanEvaluation> {
        let full = Coalition::full(self.catalog);
        if plan.n != self.catalog.len() {
            return Err(Error::MaskOutOfRange {
                mask: plan.baseline,
                n: self.catalog.len(),
            });
        }
        let baseline = self.baseline(prompt)?;
        let rest: Vec<(u32, Phase)> = plan.entries().filter(|(_, p)| *p != Phase::Baseline).collect();

        let slots: Vec<OnceLock<Result<(AgentResponse, f64)>>> =
            rest.iter().map(|_| OnceLock::new()).collect();
        let workers = self.concurrency.clamp(1, rest.len().max(1));
        if workers == 1 {
            for (slot, &(mask, _)) in slots.iter().zip(&rest) {
                let r = self.evaluate_one(prompt, mask, &baseline);
                let stop = r.is_err();
                let _ = slot.set(r);
                if stop {
                    break;
                }
            }
        } else {
            let next = AtomicUsize::new(0);
            let abort = AtomicBool::new(false);
            thread::scope(|s| {
                for _ in 0..workers {
                    s.spawn(|| loop {
                        if abort.load(Ordering::Relaxed) {
                            break;
                        }
                        let k = next.fetch_add(1, Ordering::Relaxed);
                        if k >= rest.len() {
                            break;
                        }
                        let r = self.evaluate_one(prompt, rest[k].0, &baseline);
                        if r.is_err() {
                            abort.store(true, Ordering::Relaxed);
                        }
                        let _ = slots[k].set(r);
                    });
                }
            });
        }

        let mut table = ValueTable::new(plan.n);
        table.insert(plan.baseline, 1.0);
        let mut evaluations = Vec::with_capacity(plan.len());
        evaluations.push(CoalitionEvaluation {
            coalition: full,
            response: baseline.clone(),
            value: 1.0,
            phase: Phase::Baseline,
        });
        for (slot, (mask, phase)) in slots.into_iter().zip(rest) {
            let Some(result) = slot.into_inner() else {
                // Skipped after an earlier failure; that failure is reported below.
                continue;
            };
            let (response, value) = result?;
            table.insert(mask, value);
            evaluations.push(CoalitionEvaluation {
                coalition: Coalition::from_mask(mask, self.catalog)?,
                response,
                value,
                phase,
            });
        }
        if evaluations.len() != plan.len() {
            return Err(Error::AgentUnavailable("evaluation aborted".into()));
        }
        Ok(PlanEvaluation {
            baseline,
            table,
            evaluations,
        })
    }

    /// Runs the chosen estimator for `prompt` and assembles the report.
    pub fn analyze(&self, prompt: &str, opts: &AnalysisOptions) -> Result<ShapleyReport> {
        check_rho(opts.rho)?;
        opts.estimator.validate()?;
        let n = self.catalog.len();
        let (phi, baseline, evaluations, rho) = match opts.estimator.kind {
            EstimatorKind::Exact => {
                let plan = build_plan(n, 1.0, opts.seed)?;
                let eval = self.evaluate_plan(&plan, prompt)?;
                let phi = exact_shapley(&eval.table)?;
                (phi, eval.baseline, eval.evaluations, 1.0)
            }
            EstimatorKind::SubsetMc => {
                let plan = build_plan(n, opts.rho, opts.seed)?;
                let eval = self.evaluate_plan(&plan, prompt)?;
                let phi = subset_mc_shapley(&eval.table, opts.estimator.aggregation);
                (phi, eval.baseline, eval.evaluations, opts.rho)
            }
            EstimatorKind::PermutationMc => {
                let baseline = self.baseline(prompt)?;
                let full = self.catalog.full_mask();
                let mut evaluations = vec![CoalitionEvaluation {
                    coalition: Coalition::full(self.catalog),
                    response: baseline.clone(),
                    value: 1.0,
                    phase: Phase::Baseline,
                }];
                let oracle = |mask: u32| -> Result<f64> {
                    if mask == full {
                        return Ok(1.0);
                    }
                    let (response, value) = self.evaluate_one(prompt, mask, &baseline)?;
                    let phase = if mask.count_ones() as usize + 1 == n {
                        Phase::LeaveOneOut
                    } else {
                        Phase::Sampled
                    };
                    evaluations.push(CoalitionEvaluation {
                        coalition: Coalition::from_mask(mask, self.catalog)?,
                        response,
                        value,
                        phase,
                    });
                    Ok(value)
                };
                let phi =
                    permutation_mc_shapley(oracle, n, opts.estimator.permutations, opts.seed)?;
                (phi, baseline, evaluations, opts.rho)
            }
        };
        debug!("analysis of {prompt:?}: phi = {phi:?}");
        Ok(self.report(prompt, opts, rho, phi, baseline, &evaluations))
    }

    fn report(
        &self,
        prompt: &str,
        opts: &AnalysisOptions,
        rho: f64,
        phi: Vec<f64>,
        baseline: AgentResponse,
        evaluations: &[CoalitionEvaluation],
    ) -> ShapleyReport {
        let tools: Vec<String> = self.catalog.names().into_iter().map(String::from).collect();
        let records: Vec<EvaluationRecord> = evaluations
            .iter()
            .map(|e| EvaluationRecord {
                coalition: e
                    .coalition
                    .member_names(self.catalog)
                    .expect("bound to this catalog")
                    .into_iter()
                    .map(String::from)
                    .collect(),
                mask: e.coalition.mask(),
                phase: e.phase,
                value: e.value,
                response_text: e.response.text.clone(),
                tool_calls: e.response.tool_calls_made.clone(),
                turns: e.response.turns,
            })
            .collect();
        let estimator = opts.estimator;
        ShapleyReport {
            version: REPORT_VERSION,
            config: ReportConfig {
                prompt: prompt.to_string(),
                estimator: estimator.kind,
                permutations: (estimator.kind == EstimatorKind::PermutationMc)
                    .then_some(estimator.permutations),
                subset_aggregation: (estimator.kind == EstimatorKind::SubsetMc)
                    .then(|| estimator.aggregation.as_str().to_string()),
                seed: opts.seed,
                sampling_ratio: rho,
                backend: self.backend.kind(),
                embedding_model: self.backend.model_tag().map(String::from),
                agent: self.agent.id().to_string(),
                catalog_fingerprint: self.catalog.fingerprint().to_string(),
            },
            top_tool: argmax(&phi).map(|i| tools[i].clone()),
            shares: normalize_shares(&phi),
            phi,
            tools,
            baseline_text: baseline.text,
            evaluation_count: records.len(),
            evaluations: records,
            metrics: None,
        }
    }
}
