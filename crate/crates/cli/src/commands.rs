use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use tsa_agent::{builtin_corpus, run_campaign, CampaignConfig};
use tsa_core::dataset::{split, Dataset};
use tsa_core::grid::GridCase;
use tsa_core::labeling::{classify, StabilityLabel};
use tsa_core::sim::{simulate, Scenario, SimError, SimulationConfig, Trajectory};
use tsa_llm::{ingest_corpus, render_block, DEFAULT_CHUNK_CHARS, DEFAULT_OVERLAP_CHARS};
use tsa_nas::{search_dataset, Budget, SearchConfig, SearchResult, StopReason, SPLIT_FRACTIONS};
use tsa_nn::{evaluate, load_weights, save_weights, Metrics, Model, ARCHITECTURE_SCHEMA};

use crate::backend::Backend;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::rundir::{self, RunDir};

pub const BEST_DESCRIPTOR: &str = "search/best.arch";
pub const WEIGHTS: &str = "search/weights.tsnn";
pub const HISTORY: &str = "search/history.json";
pub const HISTORY_TABLE: &str = "search/history.md";
pub const CALLS: &str = "search/calls.json";
pub const REPORT: &str = "search/report.json";

fn out_err(e: std::io::Error) -> CliError {
    CliError::io("cannot write to stdout", e)
}

/// Runs `body` as a named stage of `run`, recording its status, wall time
/// and exit code in the manifest.
fn stage<T>(
    run: &mut RunDir,
    name: &str,
    body: impl FnOnce(&mut RunDir) -> Result<T, CliError>,
) -> Result<T, CliError> {
    run.begin(name)?;
    let start = Instant::now();
    let result = body(run);
    run.finish(start.elapsed().as_secs_f64(), result.as_ref().map(|_| ()))?;
    result
}

fn start_run(cfg: &RunConfig, command: &str, backend: String) -> Result<RunDir, CliError> {
    let mut run = RunDir::create(&cfg.output_dir, command, cfg.seed, backend)?;
    run.write(rundir::CONFIG, cfg.to_toml())?;
    run.begin("config")?;
    run.artifact(rundir::CONFIG);
    run.finish(0.0, Ok(()))?;
    Ok(run)
}

fn save_script(run: &mut RunDir, backend: &Backend) -> Result<(), CliError> {
    if let Some(script) = backend.served_script() {
        run.write(rundir::MOCK_SCRIPT, script)?;
        run.manifest.stages.last_mut().expect("a stage has run").artifacts.push(rundir::MOCK_SCRIPT.into());
        run.save_manifest()?;
    }
    Ok(())
}

// ---------------------------------------------------------------- simulate

pub fn read_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read scenario {}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Validation(format!("scenario {}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
struct TrajectoryRecord<'a> {
    case: &'a str,
    scenario: &'a Scenario,
    label: &'a StabilityLabel,
    trajectory: &'a Trajectory,
}

pub struct SimulateOutcome {
    pub run: PathBuf,
    pub label: StabilityLabel,
    pub converged: bool,
}

/// Validates, simulates and labels one scenario. Instability, including a
/// run that diverged, is a result rather than an error.
pub fn cmd_simulate(cfg: &RunConfig, scenario_path: &Path, out: &mut dyn Write) -> Result<SimulateOutcome, CliError> {
    let case = cfg.load_case()?;
    let scenario = read_scenario(scenario_path)?;
    let issues = scenario.check(&case);
    if !issues.is_empty() {
        return Err(SimError::InvalidScenario(issues).into());
    }
    let mut run = start_run(cfg, "simulate", "none".into())?;
    let (label, converged) = stage(&mut run, "simulate", |run| {
        let traj = simulate(&case, &scenario, &SimulationConfig::default())?;
        let label = classify(&traj, &cfg.thresholds);
        let record = TrajectoryRecord { case: &case.name, scenario: &scenario, label: &label, trajectory: &traj };
        run.write_json(rundir::TRAJECTORY, &record)?;
        run.artifact(rundir::TRAJECTORY);
        print_simulation(out, &label, &traj).map_err(out_err)?;
        Ok((label, traj.converged))
    })?;
    Ok(SimulateOutcome { run: run.path, label, converged })
}

fn print_simulation(out: &mut dyn Write, label: &StabilityLabel, traj: &Trajectory) -> std::io::Result<()> {
    let binary = if label.is_unstable() { "unstable" } else { "stable" };
    writeln!(out, "label: {binary} ({:?})", label.multiclass)?;
    for v in &label.violated {
        writeln!(out, "  {:?} violation at t = {:.3} s (value {:.3}, elements {:?})", v.criterion, v.time, v.value, v.elements)?;
    }
    match traj.abort_time {
        Some(t) => writeln!(out, "integration: stopped at t = {t:.3} s after losing synchronism"),
        None => writeln!(out, "integration: completed {} samples", traj.n_points()),
    }
}

// ---------------------------------------------------------------- campaign

fn campaign_config(cfg: &RunConfig) -> CampaignConfig {
    CampaignConfig {
        thresholds: cfg.thresholds,
        scheme: cfg.scheme,
        labels: cfg.campaign.labels,
        balance: cfg.campaign.balance,
        seed: cfg.seed,
        max_retries: cfg.campaign.max_retries,
        ..Default::default()
    }
}

fn campaign_stage(
    run: &mut RunDir,
    backend: &Backend,
    case: &GridCase,
    cfg: &RunConfig,
    request: &str,
    out: &mut dyn Write,
) -> Result<Dataset, CliError> {
    stage(run, "campaign", |run| {
        let start = Instant::now();
        let llm = backend.as_dyn();
        let store = ingest_corpus(llm, &builtin_corpus(case), DEFAULT_CHUNK_CHARS, DEFAULT_OVERLAP_CHARS)?;
        let result = run_campaign(llm, case, Some(&store), request, &campaign_config(cfg));
        let transcript = match &result {
            Ok((_, tr)) => Some(tr),
            Err(e) => e.transcript(),
        };
        if let Some(tr) = transcript {
            run.write(rundir::TRANSCRIPT, tr.to_json())?;
            run.write(rundir::TRANSCRIPT_TEXT, tr.to_text())?;
            run.artifact(rundir::TRANSCRIPT);
            run.artifact(rundir::TRANSCRIPT_TEXT);
        }
        let (ds, tr) = result?;
        ds.write(&run.file(rundir::DATASET)).map_err(|e| CliError::Campaign(format!("cannot write dataset: {e}")))?;
        run.artifact(rundir::DATASET);
        let summary = json!({
            "request": request,
            "case": case.name,
            "samples": ds.len(),
            "features": ds.dim(),
            "class_names": ds.metadata.class_names,
            "class_counts": ds.counts(),
            "raw_counts": ds.metadata.raw_counts,
            "scenarios_planned": tr.total,
            "scenarios_integrated": tr.integrated,
            "validity_rate": tr.validity_rate,
            "llm_calls": tr.attempts.len(),
            "wall_time_s": start.elapsed().as_secs_f64(),
        });
        run.write_json(rundir::CAMPAIGN_SUMMARY, &summary)?;
        run.artifact(rundir::CAMPAIGN_SUMMARY);
        writeln!(
            out,
            "campaign: {} samples {:?} from {} scenarios, validity rate {:.3}",
            ds.len(),
            ds.counts(),
            tr.total,
            tr.validity_rate
        )
        .map_err(out_err)?;
        if ds.len() < cfg.campaign.min_samples {
            return Err(CliError::Campaign(format!(
                "{} samples after balancing, below campaign.min_samples = {}",
                ds.len(),
                cfg.campaign.min_samples
            )));
        }
        Ok(ds)
    })
}

fn resolve_request(cfg: &RunConfig, request: Option<&str>) -> Result<String, CliError> {
    request
        .map(str::to_string)
        .or_else(|| cfg.campaign.request.clone())
        .filter(|r| !r.trim().is_empty())
        .ok_or_else(|| CliError::Validation("no study request: pass one as an argument or set campaign.request".into()))
}

/// Runs a scenario campaign and persists dataset, transcript and summary.
pub fn cmd_campaign(cfg: &RunConfig, offline: bool, request: Option<&str>, out: &mut dyn Write) -> Result<PathBuf, CliError> {
    let request = resolve_request(cfg, request)?;
    let case = cfg.load_case()?;
    let backend = Backend::open(&cfg.backend, offline)?;
    let mut run = start_run(cfg, "campaign", backend.as_dyn().describe())?;
    let result = campaign_stage(&mut run, &backend, &case, cfg, &request, out);
    save_script(&mut run, &backend)?;
    result?;
    writeln!(out, "run directory: {}", run.path.display()).map_err(out_err)?;
    Ok(run.path)
}

// ------------------------------------------------------------------ search

fn search_config(cfg: &RunConfig) -> SearchConfig {
    SearchConfig {
        candidates_per_iteration: cfg.search.candidates_per_iteration,
        budget: Budget { epoch_cap: cfg.search.epoch_cap, ..Default::default() },
        seed: cfg.seed,
        retrain_winner: cfg.search.retrain_winner,
        parallel: true,
    }
}

fn stop_reason(r: StopReason) -> &'static str {
    match r {
        StopReason::TargetMet => "target_met",
        StopReason::IterationsExhausted => "iterations_exhausted",
    }
}

/// Headline numbers of a trained classifier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scorecard {
    pub split: String,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub auc_roc: Option<f64>,
    pub params: usize,
    pub latency_ms: f64,
}

impl Scorecard {
    fn new(split: &str, m: &Metrics, params: usize, latency_ms: f64) -> Self {
        Scorecard { split: split.into(), accuracy: m.accuracy, macro_f1: m.macro_f1, auc_roc: m.auc_roc, params, latency_ms }
    }
}

pub fn print_scorecard(out: &mut dyn Write, s: &Scorecard) -> std::io::Result<()> {
    let auc = s.auc_roc.map_or("n/a".to_string(), |a| format!("{a:.4}"));
    writeln!(out, "| split | accuracy | macro-F1 | AUC | params | latency_ms |")?;
    writeln!(out, "|---|---|---|---|---|---|")?;
    writeln!(out, "| {} | {:.4} | {:.4} | {auc} | {} | {:.4} |", s.split, s.accuracy, s.macro_f1, s.params, s.latency_ms)
}

fn persist_search(run: &mut RunDir, result: &SearchResult, cfg: &RunConfig) -> Result<Scorecard, CliError> {
    run.write(BEST_DESCRIPTOR, render_block(ARCHITECTURE_SCHEMA, &result.best) + "\n")?;
    run.artifact(BEST_DESCRIPTOR);
    if let Some(model) = &result.model {
        let p = run.file(WEIGHTS);
        save_weights(model, &p).map_err(|e| CliError::Search(format!("cannot save weights: {e}")))?;
        run.artifact(WEIGHTS);
    }
    run.write_json(HISTORY, &result.history.records())?;
    run.write(HISTORY_TABLE, result.history.table(&cfg.requirements))?;
    run.write_json(CALLS, &result.calls)?;
    run.artifact(HISTORY);
    run.artifact(HISTORY_TABLE);
    run.artifact(CALLS);
    for it in &result.iterations {
        let dir = format!("{}/iter-{:03}", rundir::SEARCH_DIR, it.iteration);
        let mut strategy = it.strategy.direction.clone();
        for w in &it.warnings {
            strategy.push_str(&format!("\nwarning: {w}"));
        }
        if let Some(e) = &it.generator_error {
            strategy.push_str(&format!("\ngenerator error: {e}"));
        }
        run.write(&format!("{dir}/strategy.txt"), strategy + "\n")?;
        run.write_json(&format!("{dir}/candidates.json"), &it.candidates)?;
        run.write(&format!("{dir}/feedback.txt"), it.feedback.render())?;
        run.write(&format!("{dir}/operator.txt"), &it.operator_report)?;
        run.artifact(&dir);
    }
    let best = &result.best_record;
    let card = match (&result.test_metrics, &result.final_report) {
        (Some(m), Some(r)) => Scorecard::new("test", m, r.param_count, r.latency_ms),
        (Some(m), None) => Scorecard::new("test", m, best.params, best.latency_ms),
        _ => Scorecard::new("validation", best.metrics.as_ref().expect("feasible records carry metrics"), best.params, best.latency_ms),
    };
    let report = json!({
        "p_star": result.p_star,
        "p_star_trace": result.p_star_trace(),
        "stop_reason": stop_reason(result.stop_reason),
        "iterations": result.iterations.len(),
        "evaluated": result.history.len(),
        "best_digest": best.digest,
        "best_iteration": best.iteration,
        "requirements": cfg.requirements,
        "search": search_config(cfg),
        "split_fractions": SPLIT_FRACTIONS,
        "scorecard": card,
        "test_metrics": result.test_metrics,
        "final_epochs": result.final_report.as_ref().map(|r| r.epochs_run),
    });
    run.write_json(REPORT, &report)?;
    run.artifact(REPORT);
    Ok(card)
}

fn search_stage(
    run: &mut RunDir,
    backend: &Backend,
    dataset: &Dataset,
    cfg: &RunConfig,
    out: &mut dyn Write,
) -> Result<Scorecard, CliError> {
    stage(run, "search", |run| {
        let space = cfg.space()?;
        let result = search_dataset(backend.as_dyn(), dataset, &space, &cfg.requirements, &search_config(cfg))?;
        let card = persist_search(run, &result, cfg)?;
        writeln!(
            out,
            "search: p* = {:.4} after {} iterations ({}), best {}",
            result.p_star,
            result.iterations.len(),
            stop_reason(result.stop_reason),
            tsa_nas::summarize(&result.best)
        )
        .map_err(out_err)?;
        print_scorecard(out, &card).map_err(out_err)?;
        Ok(card)
    })
}

pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    Dataset::read(path).map_err(|e| CliError::Validation(format!("dataset {}: {e}", path.display())))
}

/// Searches an architecture for an existing dataset.
pub fn cmd_search(cfg: &RunConfig, offline: bool, dataset: &Path, out: &mut dyn Write) -> Result<PathBuf, CliError> {
    let ds = read_dataset(dataset)?;
    let backend = Backend::open(&cfg.backend, offline)?;
    let mut run = start_run(cfg, "search", backend.as_dyn().describe())?;
    let result = search_stage(&mut run, &backend, &ds, cfg, out);
    save_script(&mut run, &backend)?;
    result?;
    writeln!(out, "run directory: {}", run.path.display()).map_err(out_err)?;
    Ok(run.path)
}

// ---------------------------------------------------------------- pipeline

/// Campaign then search in one run directory; a failing campaign leaves its
/// partial outputs and no search is attempted.
pub fn cmd_pipeline(cfg: &RunConfig, offline: bool, request: Option<&str>, out: &mut dyn Write) -> Result<PathBuf, CliError> {
    let request = resolve_request(cfg, request)?;
    let case = cfg.load_case()?;
    cfg.space()?;
    let backend = Backend::open(&cfg.backend, offline)?;
    let mut run = start_run(cfg, "pipeline", backend.as_dyn().describe())?;
    let result = campaign_stage(&mut run, &backend, &case, cfg, &request, out)
        .and_then(|ds| search_stage(&mut run, &backend, &ds, cfg, out));
    save_script(&mut run, &backend)?;
    result?;
    writeln!(out, "run directory: {}", run.path.display()).map_err(out_err)?;
    Ok(run.path)
}

// -------------------------------------------------------------------- eval

/// Which rows of the dataset to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalSplit {
    All,
    Test,
}

/// Locates the weights of a run directory, its search directory or a
/// weights file given directly.
fn weights_path(model: &Path) -> PathBuf {
    if model.is_file() {
        model.to_path_buf()
    } else if model.join(WEIGHTS).is_file() {
        model.join(WEIGHTS)
    } else {
        model.join("weights.tsnn")
    }
}

fn report_seed(weights: &Path) -> Option<u64> {
    let report = weights.parent()?.join("report.json");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).ok()?).ok()?;
    v["search"]["seed"].as_u64()
}

/// Scores saved weights on a dataset. The test split is recomputed from the
/// seed recorded next to the weights, falling back to the config seed.
pub fn cmd_eval(cfg: &RunConfig, model: &Path, dataset: &Path, which: EvalSplit, out: &mut dyn Write) -> Result<Scorecard, CliError> {
    let wp = weights_path(model);
    let model: Model<f32> = load_weights(&wp).map_err(|e| CliError::Validation(format!("weights {}: {e}", wp.display())))?;
    let ds = read_dataset(dataset)?;
    if ds.dim() != model.input_dim() || ds.n_classes != model.n_classes() {
        return Err(CliError::Validation(format!(
            "model expects {} features and {} classes, dataset has {} and {}",
            model.input_dim(),
            model.n_classes(),
            ds.dim(),
            ds.n_classes
        )));
    }
    let rows = match which {
        EvalSplit::All => ds,
        EvalSplit::Test => {
            let seed = report_seed(&wp).unwrap_or(cfg.seed);
            split(&ds, SPLIT_FRACTIONS, seed).map_err(|e| CliError::Validation(e.to_string()))?.test
        }
    };
    let metrics = evaluate(&model, &rows).map_err(|e| CliError::Validation(e.to_string()))?;
    let x = tsa_nn::to_matrix::<f32>(&rows);
    let latency = tsa_nn::measure_latency(&model, &x, 100).map_err(|e| CliError::Validation(e.to_string()))?;
    let label = match which {
        EvalSplit::All => "all",
        EvalSplit::Test => "test",
    };
    let card = Scorecard::new(label, &metrics, model.param_count(), latency);
    print_scorecard(out, &card).map_err(out_err)?;
    Ok(card)
}
