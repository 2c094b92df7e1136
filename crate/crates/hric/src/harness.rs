//! Experiment orchestration: configuration loading, the training
//! comparison, the alpha sweep, the latency bench, and CSV/manifest
//! emission. The CLI in `main.rs` is a thin wrapper over these functions.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentConfig, AgentError, DdpgAgent};
use crate::guidance::{
    build_prompt, sha256_hex, synthetic_input, GuidanceError, GuidanceSource, LlmClient,
    LlmEndpointConfig,
};
use crate::topology::NetworkConfig;
use crate::trainer::{
    evaluate, run_training, Method, PhaseSchedule, TrainRun, TrainerError,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialize: {0}")]
    Dump(#[from] toml::ser::Error),
    #[error("config invalid: {0}")]
    Validation(String),
    #[error(transparent)]
    Trainer(#[from] TrainerError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Which guidance provider training consults. `heuristic` is closed-form
/// and fully deterministic; `endpoint` POSTs to the configured chat
/// completions service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceProviderConfig {
    pub provider: String,
    pub endpoint: LlmEndpointConfig,
}

impl Default for GuidanceProviderConfig {
    fn default() -> Self {
        Self {
            provider: "heuristic".into(),
            endpoint: LlmEndpointConfig::default(),
        }
    }
}

impl GuidanceProviderConfig {
    pub fn source(&self) -> Result<GuidanceSource, HarnessError> {
        match self.provider.as_str() {
            "heuristic" => Ok(GuidanceSource::Heuristic),
            "endpoint" => Ok(GuidanceSource::Endpoint(LlmClient::new(
                self.endpoint.clone(),
            )?)),
            other => Err(HarnessError::Validation(format!(
                "guidance.provider must be \"heuristic\" or \"endpoint\", got {other:?}"
            ))),
        }
    }
}

/// Everything one experiment invocation needs. Every omitted key takes the
/// documented default, so an empty file is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: NetworkConfig,
    pub agent: AgentConfig,
    /// Omitted: derived from `epochs` with the 20/50/30 phase split.
    pub schedule: Option<PhaseSchedule>,
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub guidance: GuidanceProviderConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: NetworkConfig::default(),
            agent: AgentConfig::default(),
            schedule: None,
            methods: vec!["hric".into(), "dln".into(), "dcn".into(), "epa".into()],
            seeds: vec![1, 2, 3, 4, 5],
            epochs: 200,
            guidance: GuidanceProviderConfig::default(),
            output_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.scenario
            .validate()
            .map_err(|e| HarnessError::Validation(format!("scenario: {e}")))?;
        if self.methods.is_empty() {
            return Err(HarnessError::Validation(
                "methods: at least one method is required".into(),
            ));
        }
        for m in &self.methods {
            Method::parse(m)
                .map_err(|e| HarnessError::Validation(format!("methods: {e}")))?;
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Validation(
                "seeds: at least one seed is required".into(),
            ));
        }
        if self.epochs < 1 {
            return Err(HarnessError::Validation("epochs: must be >= 1".into()));
        }
        if let Some(s) = &self.schedule {
            if s.total_epochs() != self.epochs {
                return Err(HarnessError::Validation(format!(
                    "schedule: phase epochs sum to {}, but epochs = {}",
                    s.total_epochs(),
                    self.epochs
                )));
            }
        }
        self.guidance.source().map(|_| ())?;
        Ok(())
    }

    pub fn effective_schedule(&self) -> PhaseSchedule {
        self.schedule
            .clone()
            .unwrap_or_else(|| PhaseSchedule::for_total_epochs(self.epochs))
    }

    pub fn parsed_methods(&self) -> Result<Vec<Method>, HarnessError> {
        self.methods
            .iter()
            .map(|m| Method::parse(m).map_err(HarnessError::from))
            .collect()
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let config: ExperimentConfig = toml::from_str(&text)?;
    config.validate()?;
    Ok(config)
}

pub fn dump_config(config: &ExperimentConfig) -> Result<String, HarnessError> {
    Ok(toml::to_string_pretty(config)?)
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let idx = ((sorted.len() as f64 - 1.0) * p).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Mean of the final ten (or all, if fewer) epoch throughputs of one run.
fn final10_throughput(run: &TrainRun) -> f64 {
    let tail: Vec<f64> = run
        .records
        .iter()
        .rev()
        .take(10)
        .map(|r| r.total_throughput)
        .collect();
    tail.iter().sum::<f64>() / tail.len() as f64
}

const CURVES_HEADER: &str = "method,seed,epoch,phase,w,sigma,total_throughput,fallback_count";

fn curves_csv(method: Method, seed: u64, run: &TrainRun) -> String {
    let mut out = String::from(CURVES_HEADER);
    out.push('\n');
    for r in &run.records {
        writeln!(
            out,
            "{method},{seed},{},{},{},{},{},{}",
            r.epoch, r.phase, r.w, r.sigma, r.total_throughput, r.fallback_count
        )
        .expect("write to string");
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub package_version: String,
    pub config_sha256: String,
    pub outputs: Vec<String>,
}

fn write_manifest(
    dir: &Path,
    command: &str,
    config: &ExperimentConfig,
    outputs: &[String],
) -> Result<(), HarnessError> {
    let manifest = RunManifest {
        command: command.into(),
        package_version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: sha256_hex(&dump_config(config)?),
        outputs: outputs.to_vec(),
    };
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&dir.join("manifest.json"), &body)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummaryRow {
    pub method: String,
    pub median_final10_throughput: f64,
}

/// Train every (method, seed) cell, writing per-cell curve CSVs, final
/// agent checkpoints, guidance audit logs, a summary table, and the run
/// manifest under `config.output_dir`.
pub fn cli_train(config: &ExperimentConfig) -> Result<Vec<TrainSummaryRow>, HarnessError> {
    config.validate()?;
    let dir = &config.output_dir;
    let schedule = config.effective_schedule();
    let source = config.guidance.source()?;
    let mut outputs = Vec::new();
    let mut summary_rows = Vec::new();

    for method in config.parsed_methods()? {
        let mut finals = Vec::new();
        for &seed in &config.seeds {
            let run = run_training(
                &config.scenario,
                &config.agent,
                &schedule,
                method,
                seed,
                &source,
                config.epochs,
            )?;
            let curves_name = format!("curves_{method}_seed{seed}.csv");
            write_file(&dir.join(&curves_name), &curves_csv(method, seed, &run))?;
            outputs.push(curves_name);
            for (m, agent) in run.agents.iter().enumerate() {
                let ck_name = format!("agents_{method}_seed{seed}_mbs{m}.json");
                agent.save_checkpoint(&dir.join(&ck_name))?;
                outputs.push(ck_name);
            }
            if !run.audit.is_empty() {
                let audit_name = format!("guidance_audit_{method}_seed{seed}.jsonl");
                let body: String = run
                    .audit
                    .iter()
                    .map(|r| r.to_json_line() + "\n")
                    .collect();
                write_file(&dir.join(&audit_name), &body)?;
                outputs.push(audit_name);
            }
            finals.push(final10_throughput(&run));
        }
        summary_rows.push(TrainSummaryRow {
            method: method.to_string(),
            median_final10_throughput: median(&mut finals),
        });
    }

    let mut summary = String::from("method,median_final10_throughput\n");
    for row in &summary_rows {
        writeln!(summary, "{},{}", row.method, row.median_final10_throughput)
            .expect("write to string");
    }
    write_file(&dir.join("summary.csv"), &summary)?;
    outputs.push("summary.csv".into());
    write_manifest(dir, "train", config, &outputs)?;
    Ok(summary_rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub method: String,
    pub mean_throughput: f64,
    pub stderr: f64,
}

/// Evaluate each method on each alpha of the grid, `drops` test episodes
/// per cell. Learning methods are trained (at that alpha) before
/// evaluation; EPA is evaluated directly. Rows follow grid order.
pub fn cli_sweep_alpha(
    config: &ExperimentConfig,
    grid: &[f64],
    drops: usize,
) -> Result<Vec<SweepRow>, HarnessError> {
    config.validate()?;
    if grid.is_empty() {
        return Err(HarnessError::Validation(
            "alpha grid: at least one value is required".into(),
        ));
    }
    for &a in grid {
        if !(0.0..=1.0).contains(&a) {
            return Err(HarnessError::Validation(format!(
                "alpha grid: values must lie in [0,1], got {a}"
            )));
        }
    }
    if drops == 0 {
        return Err(HarnessError::Validation("drops: must be >= 1".into()));
    }

    let schedule = config.effective_schedule();
    let source = config.guidance.source()?;
    let eval_seed = config.seeds[0];
    let mut rows = Vec::new();
    for &alpha in grid {
        let scenario = NetworkConfig {
            backhaul_fraction_alpha: alpha,
            ..config.scenario.clone()
        };
        for method in config.parsed_methods()? {
            let result = if method.learns() {
                let run = run_training(
                    &scenario,
                    &config.agent,
                    &schedule,
                    method,
                    eval_seed,
                    &source,
                    config.epochs,
                )?;
                evaluate(Some(&run.agents), &scenario, drops, eval_seed)?
            } else {
                evaluate(None, &scenario, drops, eval_seed)?
            };
            let mean = result.mean_total_throughput;
            let var = result
                .per_episode
                .iter()
                .map(|t| (t - mean) * (t - mean))
                .sum::<f64>()
                / (drops.max(2) - 1) as f64;
            rows.push(SweepRow {
                alpha,
                method: method.to_string(),
                mean_throughput: mean,
                stderr: (var / drops as f64).sqrt(),
            });
        }
    }

    let mut table = String::from("alpha,method,mean_throughput,stderr\n");
    for row in &rows {
        writeln!(
            table,
            "{},{},{},{}",
            row.alpha, row.method, row.mean_throughput, row.stderr
        )
        .expect("write to string");
    }
    write_file(&config.output_dir.join("sweep.csv"), &table)?;
    write_manifest(&config.output_dir, "sweep-alpha", config, &["sweep.csv".into()])?;
    Ok(rows)
}

/// Reference figures from the measurement this bench mirrors: hosted-LLM
/// guidance under 1.5 s per call, policy-network inference under 0.07 ms.
pub const BENCH_FOOTNOTE: &str =
    "reference: LLM guidance < 1.5 s per call; policy inference < 0.07 ms";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub samples: Vec<f64>,
    pub min_ms: f64,
    pub median_ms: f64,
    pub p99_ms: f64,
    pub footnote: &'static str,
}

impl BenchReport {
    fn from_samples(samples: Vec<f64>) -> Self {
        let mut sorted = samples.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        Self {
            min_ms: sorted[0],
            median_ms: percentile(&sorted, 0.5),
            p99_ms: percentile(&sorted, 0.99),
            samples,
            footnote: BENCH_FOOTNOTE,
        }
    }
}

/// Wall-clock latency of `count` actor forward passes on a fresh agent at
/// the configured scenario dimensions; one CSV row per sample.
pub fn cli_bench(config: &ExperimentConfig, count: usize) -> Result<BenchReport, HarnessError> {
    config.validate()?;
    let n = config.scenario.num_sbs_per_mbs;
    let agent = DdpgAgent::new(4 * n, n, config.agent.clone(), config.seeds[0]);
    let state: Vec<f64> = (0..4 * n).map(|i| (i as f64 * 0.37).sin() * 0.5 + 0.5).collect();
    // Warm-up pass so allocator effects land outside the measurement.
    agent.act(&state).map_err(AgentError::from)?;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let start = Instant::now();
        let action = agent.act(&state).map_err(AgentError::from)?;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        assert_eq!(action.len(), n);
        samples.push(elapsed);
    }
    let mut csv = String::from("sample,latency_ms\n");
    for (i, s) in samples.iter().enumerate() {
        writeln!(csv, "{i},{s}").expect("write to string");
    }
    write_file(&config.output_dir.join("latency.csv"), &csv)?;
    write_manifest(&config.output_dir, "bench", config, &["latency.csv".into()])?;
    Ok(BenchReport::from_samples(samples))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub mean_total_throughput: f64,
    pub per_episode: Vec<f64>,
}

/// Evaluate a method over noise-free test episodes. Learned methods load
/// their per-MBS checkpoints from `checkpoint_dir` (as written by
/// `cli_train`); EPA needs no checkpoint.
pub fn cli_evaluate(
    config: &ExperimentConfig,
    method_name: &str,
    checkpoint_dir: Option<&Path>,
    episodes: usize,
) -> Result<EvalReport, HarnessError> {
    config.validate()?;
    let method = Method::parse(method_name)?;
    let seed = config.seeds[0];
    let result = if method.learns() {
        let dir = checkpoint_dir.ok_or_else(|| {
            HarnessError::Validation(format!(
                "method {method} requires --checkpoint-dir with trained agents"
            ))
        })?;
        let agents: Vec<DdpgAgent> = (0..config.scenario.num_mbs)
            .map(|m| {
                let path = dir.join(format!("agents_{method}_seed{seed}_mbs{m}.json"));
                DdpgAgent::load_checkpoint(&path, seed)
            })
            .collect::<Result<_, _>>()?;
        evaluate(Some(&agents), &config.scenario, episodes, seed)?
    } else {
        evaluate(None, &config.scenario, episodes, seed)?
    };

    let mut csv = String::from("episode,total_throughput\n");
    for (i, t) in result.per_episode.iter().enumerate() {
        writeln!(csv, "{i},{t}").expect("write to string");
    }
    write_file(&config.output_dir.join("eval.csv"), &csv)?;
    write_manifest(&config.output_dir, "evaluate", config, &["eval.csv".into()])?;
    Ok(EvalReport {
        method: method.to_string(),
        mean_total_throughput: result.mean_total_throughput,
        per_episode: result.per_episode,
    })
}

/// Build and return the guidance prompt for a synthetic input at the
/// configured dimensions, plus the heuristic policy it would produce.
/// Touches no network regardless of the configured provider.
pub fn cli_guidance_dry_run(config: &ExperimentConfig) -> Result<String, HarnessError> {
    config.validate()?;
    let input = synthetic_input(config.scenario.num_mbs, config.scenario.num_sbs_per_mbs);
    let prompt = build_prompt(&input, &config.scenario);
    let outcome = GuidanceSource::Heuristic.policy(&input, &config.scenario);
    let mut out = prompt;
    out.push_str("\n--- heuristic policy for this input ---\n");
    out.push_str(&crate::guidance::serialize_policy(&outcome.policy));
    Ok(out)
}
