mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use toolshap_core::agent::{Agent, LiveAgent, ResponseCache, ScriptedAgent};
use toolshap_core::experiment::{AgentMode, ExperimentConfig, ExperimentKind, ExperimentOutcome};
use toolshap_core::model::{BackendKind, EstimatorKind};
use toolshap_core::report::{read_report, render_summary, to_csv, write_atomic, write_json};
use toolshap_core::similarity::SimilarityBackend;
use toolshap_core::{bundled, AnalysisOptions, Analyzer, ExperimentRunner, ShapleyReport};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] toolshap_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_unavailable() => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "toolshap", version, about = "Shapley attribution of tool importance for tool-using agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attribute one prompt (or every prompt of a suite) to the catalog's tools.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the prompt from the config.
        #[arg(long)]
        prompt: Option<String>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        estimator: Option<EstimatorArg>,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an evaluation protocol: consistency, faithfulness, injection or cross-domain.
    Experiment {
        name: String,
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-render a saved report.
    Report { path: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Exact,
    Permutation,
    Subset,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Tf,
    Embedding,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze {
            config,
            prompt,
            rho,
            seed,
            estimator,
            backend,
            out,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(p) = prompt {
                cfg.prompt = Some(p);
            }
            if let Some(r) = rho {
                cfg.rho = r;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(e) = estimator {
                cfg.estimator.kind = match e {
                    EstimatorArg::Exact => EstimatorKind::Exact,
                    EstimatorArg::Permutation => EstimatorKind::PermutationMc,
                    EstimatorArg::Subset => EstimatorKind::SubsetMc,
                };
            }
            if let Some(b) = backend {
                cfg.backend.kind = match b {
                    BackendArg::Tf => BackendKind::TfCosine,
                    BackendArg::Embedding => BackendKind::EmbeddingCosine,
                };
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            cmd_analyze(&cfg)
        }
        Command::Experiment { name, config } => {
            let kind: ExperimentKind = name.parse().map_err(CliError::Config)?;
            cmd_experiment(kind, &RunConfig::load(&config)?)
        }
        Command::Report { path } => {
            print!("{}", render_summary(&read_report(&path)?));
            Ok(())
        }
    }
}

fn check_rho(rho: f64) -> Result<(), CliError> {
    toolshap_core::shapley::check_rho(rho)
        .map_err(|_| CliError::Config(format!("rho must be in (0, 1], got {rho}")))
}

fn build_agent(cfg: &RunConfig) -> Result<Box<dyn Agent>, CliError> {
    Ok(match cfg.agent_mode {
        AgentMode::Scripted => Box::new(ScriptedAgent::new(cfg.script()?)),
        AgentMode::Live => Box::new(LiveAgent::new(
            cfg.live.clone().expect("checked at load"),
        )),
    })
}

fn build_cache(cfg: &RunConfig) -> ResponseCache {
    match &cfg.response_cache {
        Some(p) => ResponseCache::open(p),
        None => ResponseCache::in_memory(),
    }
}

fn write_report(dir: &Path, report: &ShapleyReport) -> Result<(), CliError> {
    write_json(&dir.join("report.json"), report)?;
    write_atomic(&dir.join("report.csv"), to_csv(report)?.as_bytes())?;
    Ok(())
}

fn cmd_analyze(cfg: &RunConfig) -> Result<(), CliError> {
    check_rho(cfg.rho)?;
    cfg.estimator.validate()?;
    let catalog = cfg.catalog()?.unwrap_or_else(bundled::full_catalog);
    let prompts: Vec<(Option<String>, String)> = match (&cfg.prompt, cfg.prompt_suite()?) {
        (Some(p), _) => vec![(None, p.clone())],
        (None, Some(suite)) => suite.into_iter().map(|c| (Some(c.id), c.prompt)).collect(),
        (None, None) => {
            return Err(CliError::Config(
                "no prompt: set `prompt` or `prompt_suite` in the config, or pass --prompt".into(),
            ))
        }
    };
    let agent = build_agent(cfg)?;
    let backend: Box<dyn SimilarityBackend> = cfg.backend.build()?;
    let cache = build_cache(cfg);
    let mut analyzer = Analyzer::new(agent.as_ref(), &catalog, backend.as_ref(), &cache);
    analyzer.concurrency = cfg.concurrency.max(1);
    let opts = AnalysisOptions {
        estimator: cfg.estimator,
        rho: cfg.rho,
        seed: cfg.seed,
    };
    for (id, prompt) in prompts {
        let report = analyzer.analyze(&prompt, &opts)?;
        let dir = match &id {
            Some(id) => cfg.output_dir.join(id),
            None => cfg.output_dir.clone(),
        };
        write_report(&dir, &report)?;
        print!("{}", render_summary(&report));
        println!("report: {}\n", dir.join("report.json").display());
    }
    info!(
        "agent requests: {}, similarity requests: {}",
        agent.request_count(),
        backend.request_count()
    );
    for e in cache.errors() {
        log::warn!("response cache: {e}");
    }
    Ok(())
}

fn cmd_experiment(kind: ExperimentKind, cfg: &RunConfig) -> Result<(), CliError> {
    check_rho(cfg.rho)?;
    let mut exp = ExperimentConfig::bundled(kind);
    if let Some(c) = cfg.catalog()? {
        exp.catalog = c;
    }
    if let Some(s) = cfg.prompt_suite()? {
        exp.prompt_suite = s;
    }
    exp.rho = cfg.rho;
    exp.estimator = cfg.estimator;
    exp.runs = cfg.experiment.runs;
    exp.seeds = cfg.seeds();
    exp.agent_mode = cfg.agent_mode;
    exp.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let agent = build_agent(cfg)?;
    let backend = cfg.backend.build()?;
    let cache = build_cache(cfg);
    let mut runner = ExperimentRunner::new(agent.as_ref(), backend.as_ref(), &cache);
    runner.concurrency = cfg.concurrency.max(1);
    let outcome = runner.run(&exp)?;
    outcome.write(&cfg.output_dir)?;
    print_metrics(&outcome);
    println!(
        "metrics: {}",
        cfg.output_dir.join(kind.name()).join("metrics.json").display()
    );
    Ok(())
}

fn print_metrics(outcome: &ExperimentOutcome) {
    let m = &outcome.metrics;
    println!("experiment: {}  runs: {}  prompts: {}", m.experiment, m.runs, m.prompts);
    println!(
        "top-1 accuracy: {:.1}% ({}/{})",
        m.top1_accuracy * 100.0,
        m.top1_correct,
        m.top1_total
    );
    let opt = |name: &str, v: Option<f64>| {
        if let Some(v) = v {
            println!("{name}: {v:.4}");
        }
    };
    opt("mean stability", m.mean_stability);
    opt("quality drop (highest removed)", m.quality_drop_high);
    opt("quality drop (lowest removed)", m.quality_drop_low);
    opt("expected-tool mean phi", m.expected_mean_phi);
    opt("distractor mean phi", m.distractor_mean_phi);
    opt("shap gap", m.shap_gap);
    opt("shap ratio", m.shap_ratio);
    if let Some(matrix) = &m.domain_tool_matrix {
        println!("domain x tool mean phi:");
        for (domain, row) in matrix {
            let cells: Vec<String> = row.iter().map(|(t, v)| format!("{t}={v:.3}")).collect();
            println!("  {domain:<10} {}", cells.join("  "));
        }
    }
}
