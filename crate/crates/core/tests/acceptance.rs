//! Acceptance gate: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always print under `cargo test`.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{calculator_exchange, embeddings_reply, StubServer};
use toolshap_core::agent::{run_tool_loop, Agent, LiveAgentConfig, ResponseCache, ScriptedAgent};
use toolshap_core::analysis::{AnalysisOptions, Analyzer};
use toolshap_core::bundled;
use toolshap_core::experiment::{ExperimentConfig, ExperimentKind, ExperimentRunner};
use toolshap_core::report::to_json;
use toolshap_core::shapley::{
    build_plan, exact_shapley, sample_permutation_shapley, EstimatorChoice, ValueTable,
};
use toolshap_core::similarity::{EmbeddingBackend, EmbeddingConfig, SimilarityBackend, TfCosine};
use toolshap_core::Error;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn random_table(n: usize, rng: &mut ChaCha8Rng) -> ValueTable {
    ValueTable::from_fn(n, |_| rng.random_range(-1.0..1.0))
}

fn phi(t: &ValueTable) -> Vec<f64> {
    exact_shapley(t).expect("complete table")
}

fn swap_bits(mask: u32, i: usize, j: usize) -> u32 {
    let (bi, bj) = ((mask >> i) & 1, (mask >> j) & 1);
    if bi == bj {
        mask
    } else {
        mask ^ (1 << i) ^ (1 << j)
    }
}

/// Average marginal contribution over every ordering, generated by
/// recursive insertion. Independent of the library's enumeration.
fn brute_force(n: usize, v: &dyn Fn(u32) -> f64) -> Vec<f64> {
    fn orders(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for o in orders(n - 1) {
            for pos in 0..=o.len() {
                let mut p = o.clone();
                p.insert(pos, n - 1);
                out.push(p);
            }
        }
        out
    }
    let all = orders(n);
    let mut phi = vec![0.0; n];
    for o in &all {
        let mut s = 0u32;
        for &i in o {
            phi[i] += v(s | 1 << i) - v(s);
            s |= 1 << i;
        }
    }
    phi.iter().map(|p| p / all.len() as f64).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn axioms() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for n in 2..=8 {
        let full = (1u32 << n) - 1;
        for _ in 0..100 {
            let v = random_table(n, &mut rng);
            let w = random_table(n, &mut rng);
            let p = phi(&v);

            let eff = (p.iter().sum::<f64>() - (v.get(full).unwrap() - v.get(0).unwrap())).abs();

            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            let sym = ValueTable::from_fn(n, |m| {
                (v.get(m).unwrap() + v.get(swap_bits(m, i, j)).unwrap()) / 2.0
            });
            let ps = phi(&sym);
            let symmetry = (ps[i] - ps[j]).abs();

            let k = rng.random_range(0..n);
            let null = ValueTable::from_fn(n, |m| v.get(m & !(1 << k)).unwrap());
            let null_player = phi(&null)[k].abs();

            let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let lin = ValueTable::from_fn(n, |m| a * v.get(m).unwrap() + b * w.get(m).unwrap());
            let pw = phi(&w);
            let combined: Vec<f64> = p.iter().zip(&pw).map(|(x, y)| a * x + b * y).collect();
            let linearity = max_abs_diff(&phi(&lin), &combined);

            worst = worst.max(eff).max(symmetry).max(null_player).max(linearity);
        }
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-9, format!("worst axiom violation {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(10), format!("took {elapsed:?}"))?;
    Ok(format!("700 games, worst violation {worst:.1e}, {elapsed:.2?}"))
}

fn oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for n in 1..=6 {
        for _ in 0..50 {
            let t = random_table(n, &mut rng);
            let want = brute_force(n, &|m| t.get(m).unwrap());
            worst = worst.max(max_abs_diff(&phi(&t), &want));
        }
    }
    ensure(worst <= 1e-9, format!("oracle mismatch {worst:e}"))?;
    let worked = [0.0, 0.6, 0.2, 0.8, 0.0, 0.6, 0.2, 1.0];
    let p = phi(&ValueTable::from_fn(3, |m| worked[m as usize]));
    let target = [0.6667, 0.2667, 0.0667];
    ensure(
        max_abs_diff(&p, &target) <= 1e-4,
        format!("worked game gave {p:?}"),
    )?;
    Ok(format!(
        "300 games n<=6, worst {worst:.1e}; worked game ({:.4}, {:.4}, {:.4})",
        p[0], p[1], p[2]
    ))
}

/// Games take values in [0, 1], the range of the default similarity.
fn convergence() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mae = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    let (mut worst, mut coarse_total, mut fine_total) = (0.0f64, 0.0, 0.0);
    for game in 0..20u64 {
        let t = ValueTable::from_fn(5, |_| rng.random_range(0.0..1.0));
        let exact = phi(&t);
        let oracle = |m: u32| Ok(t.get(m).unwrap());
        let coarse = sample_permutation_shapley(oracle, 5, 100, 100 + game).map_err(|e| e.to_string())?;
        let fine = sample_permutation_shapley(oracle, 5, 10_000, 100 + game).map_err(|e| e.to_string())?;
        let err = mae(&exact, &fine);
        worst = worst.max(err);
        fine_total += err;
        coarse_total += mae(&exact, &coarse);
    }
    let elapsed = start.elapsed();
    ensure(worst < 0.01, format!("worst per-game MAE {worst}"))?;
    ensure(fine_total < coarse_total, "error did not shrink from 100 to 10000 permutations")?;
    ensure(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;
    Ok(format!(
        "20 games n=5, worst MAE {worst:.4} (mean {:.4} at 10000 vs {:.4} at 100), {elapsed:.2?}",
        fine_total / 20.0,
        coarse_total / 20.0
    ))
}

fn plan_arithmetic() -> Check {
    let p = build_plan(8, 0.5, 0).map_err(|e| e.to_string())?;
    ensure(p.len() == 132, format!("n=8 rho=0.5 plan has {} coalitions", p.len()))?;
    let mut masks: Vec<u32> = build_plan(3, 1.0, 0)
        .map_err(|e| e.to_string())?
        .entries()
        .map(|(m, _)| m)
        .collect();
    masks.sort_unstable();
    ensure(masks == (0..8).collect::<Vec<_>>(), format!("n=3 rho=1 plan {masks:?}"))?;
    Ok("n=8 rho=0.5: 132 of 256; n=3 rho=1: all 8 subsets".into())
}

fn run_experiment(cfg: &ExperimentConfig) -> Result<toolshap_core::ExperimentMetrics, String> {
    let agent = ScriptedAgent::bundled();
    let cache = ResponseCache::in_memory();
    ExperimentRunner::new(&agent, &TfCosine, &cache)
        .run(cfg)
        .map(|o| o.metrics)
        .map_err(|e| e.to_string())
}

fn consistency() -> Check {
    let cfg = ExperimentConfig::bundled(ExperimentKind::Consistency);
    ensure(cfg.prompt_suite.len() == 9, "suite size")?;
    let m = run_experiment(&cfg)?;
    let stab = m.mean_stability.unwrap_or(f64::NAN);
    ensure(m.top1_accuracy == 1.0, format!("top-1 {}", m.top1_accuracy))?;
    ensure(stab >= 0.99, format!("mean stability {stab}"))?;
    Ok(format!("top-1 {:.0}%, mean cosine {stab:.4}", m.top1_accuracy * 100.0))
}

fn faithfulness() -> Check {
    let m = run_experiment(&ExperimentConfig::bundled(ExperimentKind::Faithfulness))?;
    let (hi, lo) = (
        m.quality_drop_high.unwrap_or(f64::NAN),
        m.quality_drop_low.unwrap_or(f64::NAN),
    );
    ensure((hi - 1.0).abs() < 1e-12, format!("drop_high {hi}"))?;
    ensure(lo.abs() < 1e-12, format!("drop_low {lo}"))?;
    ensure(hi > lo, "ordering")?;
    Ok(format!("drop_high {hi:.3}, drop_low {lo:.3}"))
}

fn injection() -> Check {
    let mut cfg = ExperimentConfig::bundled(ExperimentKind::Injection);
    cfg.estimator = EstimatorChoice::exact();
    let m = run_experiment(&cfg)?;
    ensure(m.distractors.len() == 4, format!("{} distractors", m.distractors.len()))?;
    for r in &m.results {
        for d in &m.distractors {
            ensure(r.phi[d].abs() <= 1e-12, format!("{} {d} phi {}", r.prompt_id, r.phi[d]))?;
        }
        let gap = r.shap_gap.unwrap_or(f64::NAN);
        ensure(gap > 0.0, format!("{} gap {gap}", r.prompt_id))?;
    }
    let sub = run_experiment(&ExperimentConfig::bundled(ExperimentKind::Injection))?;
    ensure(sub.top1_accuracy == 1.0, format!("subset top-1 {}", sub.top1_accuracy))?;
    Ok(format!(
        "exact: distractor phi 0, gap {:.3}; subset top-1 {:.0}%",
        m.shap_gap.unwrap_or(f64::NAN),
        sub.top1_accuracy * 100.0
    ))
}

fn cross_domain() -> Check {
    let cfg = ExperimentConfig::bundled(ExperimentKind::CrossDomain);
    let m = run_experiment(&cfg)?;
    let matrix = m.domain_tool_matrix.as_ref().ok_or("no matrix")?;
    for (domain, row) in matrix {
        let own = cfg
            .prompt_suite
            .iter()
            .find(|c| c.domain_label.as_str() == domain)
            .and_then(|c| c.expected_tool.clone())
            .ok_or(format!("no expected tool for {domain}"))?;
        for (tool, &v) in row {
            if *tool != own {
                ensure(row[&own] > v, format!("{domain}: {own} {} vs {tool} {v}", row[&own]))?;
            }
        }
    }
    ensure(m.top1_accuracy == 1.0, format!("top-1 {}", m.top1_accuracy))?;
    Ok(format!("{} domains diagonal-dominant, top-1 100%", matrix.len()))
}

fn analyze_once(
    agent: &dyn Agent,
    backend: &dyn SimilarityBackend,
    cache: &ResponseCache,
) -> Result<String, String> {
    let catalog = bundled::full_catalog();
    let opts = AnalysisOptions {
        estimator: EstimatorChoice::subset(),
        rho: 0.5,
        seed: 42,
    };
    let report = Analyzer::new(agent, &catalog, backend, cache)
        .analyze("What is the stock price of ACME?", &opts)
        .map_err(|e| e.to_string())?;
    to_json(&report).map_err(|e| e.to_string())
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cache_path = dir.path().join("responses.jsonl");

    let cold_agent = ScriptedAgent::bundled();
    let cold = analyze_once(&cold_agent, &TfCosine, &ResponseCache::open(&cache_path))?;
    let warm_agent = ScriptedAgent::bundled();
    let warm = analyze_once(&warm_agent, &TfCosine, &ResponseCache::open(&cache_path))?;
    ensure(cold == warm, "tf report bytes differ")?;
    ensure(cold_agent.request_count() > 0, "cold run made no requests")?;
    ensure(warm_agent.request_count() == 0, format!("warm run made {} agent requests", warm_agent.request_count()))?;

    let server = StubServer::start(|_, _, body| (200, embeddings_reply(body)));
    let mut emb = EmbeddingConfig::new(server.base_url.clone(), "stub-embed");
    emb.cache_path = Some(dir.path().join("embeddings.jsonl"));
    let emb_path = dir.path().join("responses-emb.jsonl");
    let cold_backend = EmbeddingBackend::new(emb.clone());
    let cold = analyze_once(&ScriptedAgent::bundled(), &cold_backend, &ResponseCache::open(&emb_path))?;
    let warm_agent = ScriptedAgent::bundled();
    let warm_backend = EmbeddingBackend::new(emb);
    let warm = analyze_once(&warm_agent, &warm_backend, &ResponseCache::open(&emb_path))?;
    ensure(cold == warm, "embedding report bytes differ")?;
    ensure(cold_backend.request_count() > 0, "cold embedding run made no requests")?;
    ensure(
        warm_backend.request_count() == 0 && warm_agent.request_count() == 0,
        "warm embedding run made requests",
    )?;
    Ok(format!(
        "byte-identical reruns, warm runs: 0 agent / 0 embedding requests (cold: {} embedding)",
        cold_backend.request_count()
    ))
}

fn wire_protocol(suite_time: Duration) -> Check {
    let fixture = calculator_exchange();
    let server = StubServer::replay(fixture["replies"].as_array().unwrap().clone());
    let catalog = bundled::core_catalog();
    let tools = vec![catalog.get("Calculator").unwrap().clone()];
    let mut cfg = LiveAgentConfig::new(server.base_url.clone(), "stub-model");
    cfg.retry_backoff_ms = 1;
    let resp = run_tool_loop(&cfg, fixture["prompt"].as_str().unwrap(), &tools)
        .map_err(|e| e.to_string())?;
    ensure(resp.turns == 2, format!("{} turns", resp.turns))?;
    ensure(
        resp.tool_calls_made.len() == 1 && resp.tool_calls_made[0].result == "4",
        format!("tool calls {:?}", resp.tool_calls_made),
    )?;

    let call = fixture["replies"][0].clone();
    let looping = StubServer::start(move |_, _, _| (200, call.clone()));
    let mut cfg = LiveAgentConfig::new(looping.base_url.clone(), "stub-model");
    cfg.max_turns = 3;
    match run_tool_loop(&cfg, "loop", &tools) {
        Err(Error::MaxTurnsExceeded(3)) => {}
        other => return Err(format!("max_turns not enforced: {other:?}")),
    }
    ensure(looping.requests().len() == 3, "extra requests past max_turns")?;
    ensure(
        suite_time < Duration::from_secs(120),
        format!("criteria 1-9 took {suite_time:?}"),
    )?;
    Ok(format!("two-turn exchange ok, max_turns=3 enforced, criteria 1-9 in {suite_time:.2?}"))
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(&str, Check)> = vec![
        ("axioms", axioms()),
        ("oracle equivalence", oracle()),
        ("estimator convergence", convergence()),
        ("plan arithmetic", plan_arithmetic()),
        ("scripted consistency", consistency()),
        ("scripted faithfulness", faithfulness()),
        ("scripted injection", injection()),
        ("scripted cross-domain", cross_domain()),
        ("determinism", determinism()),
    ];
    let suite_time = start.elapsed();
    results.push(("wire protocol", wire_protocol(suite_time)));

    let mut failed = 0;
    for (i, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
