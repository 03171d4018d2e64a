//! Episode runner, 3-episode evaluation and the pre-evaluation competency check.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use l2r_core::control::mpc::PRESETS;
use l2r_core::control::{Agent, ControlError, MpcAgent, MpcConfig, RandomAgent, ReplayAgent};
use l2r_core::dataset::{self, DatasetError, SessionManifest};
use l2r_core::episode::run_episode as run_in_process;
use l2r_core::metrics::{compute_metrics, MetricsReport};
use l2r_core::sim::{EpisodeConfig, SimError, Simulator};
use l2r_core::track::TrackIndex;
use l2r_core::trajectory::{LogError, TerminationReason, TrajectoryLog};
use l2r_core::vehicle::ActionCommand;
use l2r_net::{Pacing, ServerConfig, ServerError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown agent `{0}` (expected mpc[:preset], random, replay:<path> or remote)")]
    UnknownAgent(String),
    #[error("agent `{0}` is not supported by this command")]
    Unsupported(String),
    #[error("no episode finished within {0:?}")]
    Timeout(Duration),
    #[error("episode count must be at least 1")]
    NoEpisodes,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentSpec {
    /// MPC with a named parameter preset.
    Mpc(String),
    Random,
    /// Recorded actions: a session directory or a trajectory log file.
    Replay(PathBuf),
    /// An external agent driving a lockstep server.
    Remote,
}

impl FromStr for AgentSpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mpc" => Ok(AgentSpec::Mpc("matched".into())),
            "random" => Ok(AgentSpec::Random),
            "remote" => Ok(AgentSpec::Remote),
            _ => {
                if let Some(preset) = s.strip_prefix("mpc:") {
                    if PRESETS.contains(&preset) {
                        return Ok(AgentSpec::Mpc(preset.into()));
                    }
                } else if let Some(path) = s.strip_prefix("replay:") {
                    if !path.is_empty() {
                        return Ok(AgentSpec::Replay(path.into()));
                    }
                }
                Err(HarnessError::UnknownAgent(s.into()))
            }
        }
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentSpec::Mpc(p) if p == "matched" => write!(f, "mpc"),
            AgentSpec::Mpc(p) => write!(f, "mpc:{p}"),
            AgentSpec::Random => write!(f, "random"),
            AgentSpec::Replay(p) => write!(f, "replay:{}", p.display()),
            AgentSpec::Remote => write!(f, "remote"),
        }
    }
}

/// Recorded actions plus the episode config they were recorded under, when
/// the source carries one.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySource {
    pub actions: Vec<ActionCommand>,
    pub config: Option<EpisodeConfig>,
    pub log: Option<TrajectoryLog>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads episode 0 of a session directory, or the actions of a log file.
pub fn load_replay(path: &Path) -> Result<ReplaySource, HarnessError> {
    if path.is_dir() {
        let (manifest, records): (SessionManifest, _) = dataset::read_session(path)?;
        let actions = if manifest.episodes.is_empty() {
            Vec::new()
        } else {
            dataset::episode_actions(&manifest, &records, 0)
        };
        return Ok(ReplaySource {
            actions,
            config: Some(manifest.config),
            log: None,
        });
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let log = TrajectoryLog::from_json(&text)?;
    Ok(ReplaySource {
        actions: log.samples.iter().skip(1).map(|s| s.action).collect(),
        config: None,
        log: Some(log),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub agent: String,
    pub seed: u64,
    pub termination_reason: TerminationReason,
    pub steps: u64,
    pub total_reward: Option<f64>,
    pub report: Option<MetricsReport>,
    pub metrics_error: Option<String>,
    pub agent_error: Option<String>,
    #[serde(skip)]
    pub log: Option<TrajectoryLog>,
}

impl EpisodeResult {
    fn from_log(agent: &AgentSpec, seed: u64, log: TrajectoryLog, track: &TrackIndex, laps: u32) -> Self {
        let (report, metrics_error) = match compute_metrics(&log, track, laps) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        EpisodeResult {
            agent: agent.to_string(),
            seed,
            termination_reason: log.metadata.termination_reason,
            steps: log.samples.len().saturating_sub(1) as u64,
            total_reward: None,
            report,
            metrics_error,
            agent_error: None,
            log: Some(log),
        }
    }

    pub fn completed(&self) -> bool {
        self.termination_reason == TerminationReason::LapsComplete
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub n: usize,
    /// Computed over incomplete episodes and possibly misleading.
    pub flagged: bool,
}

/// Metrics reported with a caveat when any episode is incomplete.
pub const FLAGGED_WHEN_INCOMPLETE: [&str; 1] = ["TrE"];

/// Mean and sample standard deviation of each metric across `reports`,
/// skipping undefined values. Keys follow [`MetricsReport::KEYS`].
pub fn aggregate(reports: &[MetricsReport], any_incomplete: bool) -> Vec<(String, MetricAggregate)> {
    MetricsReport::KEYS
        .iter()
        .filter_map(|&key| {
            let values: Vec<f64> = reports.iter().filter_map(|r| r.get(key)).collect();
            if values.is_empty() {
                return None;
            }
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            let flagged = any_incomplete && FLAGGED_WHEN_INCOMPLETE.contains(&key);
            Some((key.to_string(), MetricAggregate { mean, std, n, flagged }))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub agent: String,
    pub track: String,
    pub episodes: Vec<EpisodeResult>,
    pub aggregate: Vec<(String, MetricAggregate)>,
    pub failures: Vec<String>,
}

impl EvaluationReport {
    pub fn metric(&self, key: &str) -> Option<MetricAggregate> {
        self.aggregate.iter().find(|(k, _)| k == key).map(|(_, a)| *a)
    }

    pub fn table_header() -> String {
        format!("| Agent | {} |", MetricsReport::KEYS.join(" | "))
    }

    /// One results-table row: `mean(±std)` per metric, `*` marking flagged ones.
    pub fn table_row(&self) -> String {
        let cells: Vec<String> = MetricsReport::KEYS
            .iter()
            .map(|&k| match self.metric(k) {
                Some(a) => {
                    let digits = if matches!(k, "TrA" | "TrE") { 2 } else { 1 };
                    let star = if a.flagged { "*" } else { "" };
                    format!("{:.*}(±{:.*}){star}", digits, a.mean, digits, a.std)
                }
                None => "n/a".into(),
            })
            .collect();
        format!("| {} | {} |", self.agent.to_uppercase(), cells.join(" | "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreEvaluationReport {
    pub passed: bool,
    pub disqualified: bool,
    pub budget_steps: u64,
    pub steps_used: u64,
    pub sim_seconds_used: f64,
    pub episodes: u32,
}

/// Acceleration cap during pre-evaluation.
pub const PRE_EVAL_ACCEL_CAP: f64 = 0.5;
/// Pre-evaluation budget, in simulated seconds.
pub const PRE_EVAL_BUDGET_S: f64 = 3600.0;

#[derive(Debug, Clone)]
pub struct Harness {
    pub config: EpisodeConfig,
    /// Used for `remote` agents.
    pub server: ServerConfig,
    pub remote_timeout: Duration,
}

impl Harness {
    pub fn new(config: EpisodeConfig) -> Self {
        let server = ServerConfig {
            pacing: Pacing::Lockstep,
            episode: config.clone(),
            ..ServerConfig::default()
        };
        Harness {
            config,
            server,
            remote_timeout: Duration::from_secs(3600),
        }
    }

    fn build_agent(&self, spec: &AgentSpec, track: &Arc<TrackIndex>, seed: u64) -> Result<Box<dyn Agent>, HarnessError> {
        Ok(match spec {
            AgentSpec::Mpc(preset) => Box::new(MpcAgent::new(MpcConfig::preset(preset)?, track.clone())?),
            AgentSpec::Random => Box::new(RandomAgent::new(seed)),
            AgentSpec::Replay(path) => Box::new(ReplayAgent::new(load_replay(path)?.actions)),
            AgentSpec::Remote => return Err(HarnessError::Unsupported(spec.to_string())),
        })
    }

    /// Episode config for `spec`: replayed sessions bring their own, and
    /// replayed logs pin the track, lap count and step.
    fn config_for(&self, spec: &AgentSpec, seed: u64) -> Result<EpisodeConfig, HarnessError> {
        let mut config = self.config.clone();
        if let AgentSpec::Replay(path) = spec {
            let src = load_replay(path)?;
            if let Some(c) = src.config {
                config = c;
            } else if let Some(log) = src.log {
                config.track = log.metadata.track.clone();
                config.laps_required = log.metadata.laps_required;
                config.dt_env = log.metadata.dt_env;
                if config.hash() != log.metadata.config_hash {
                    log::warn!("replay config differs from the one that produced {}", path.display());
                }
            }
        }
        config.seed = seed;
        Ok(config)
    }

    pub fn run_episode(&self, spec: &AgentSpec, seed: u64) -> Result<EpisodeResult, HarnessError> {
        if *spec == AgentSpec::Remote {
            return self.run_remote(seed);
        }
        let config = self.config_for(spec, seed)?;
        let laps = config.laps_required;
        let mut sim = Simulator::new(config)?;
        let track = sim.track().clone();
        let mut agent = self.build_agent(spec, &track, seed)?;
        let outcome = run_in_process(&mut sim, agent.as_mut())?;
        let mut result = EpisodeResult::from_log(spec, seed, outcome.log, &track, laps);
        result.total_reward = Some(outcome.total_reward);
        result.agent_error = outcome.agent_error.map(|e| e.to_string());
        Ok(result)
    }

    /// Serves one lockstep episode to an external client and scores it.
    fn run_remote(&self, seed: u64) -> Result<EpisodeResult, HarnessError> {
        let mut server_cfg = self.server.clone();
        server_cfg.episode = self.config.clone();
        server_cfg.episode.seed = seed;
        let laps = server_cfg.episode.laps_required;
        let track = server_cfg.episode.load_track()?;
        let server = l2r_net::start(server_cfg)?;
        log::info!("waiting for a remote agent on control {}", server.addrs().control);
        let log = server
            .next_finished_episode(self.remote_timeout)
            .ok_or(HarnessError::Timeout(self.remote_timeout))?;
        Ok(EpisodeResult::from_log(&AgentSpec::Remote, seed, log, &track, laps))
    }

    /// Runs `n` episodes with seeds `seed, seed + 1, ...` and aggregates them.
    pub fn evaluate(&self, spec: &AgentSpec, n: usize, seed: u64) -> Result<EvaluationReport, HarnessError> {
        if n == 0 {
            return Err(HarnessError::NoEpisodes);
        }
        let mut episodes = Vec::new();
        let mut failures = Vec::new();
        for k in 0..n as u64 {
            match self.run_episode(spec, seed + k) {
                Ok(r) => {
                    if let Some(e) = &r.metrics_error {
                        failures.push(format!("episode {k}: metrics unavailable: {e}"));
                    }
                    if let Some(e) = &r.agent_error {
                        failures.push(format!("episode {k}: agent failed: {e}"));
                    }
                    episodes.push(r);
                }
                Err(e) => {
                    failures.push(format!("episode {k}: {e}"));
                    break;
                }
            }
        }
        let reports: Vec<MetricsReport> = episodes.iter().filter_map(|e| e.report).collect();
        let any_incomplete = episodes.iter().any(|e| !e.completed());
        Ok(EvaluationReport {
            agent: spec.to_string(),
            track: self.config.track.clone(),
            aggregate: aggregate(&reports, any_incomplete),
            episodes,
            failures,
        })
    }

    /// Repeats single-lap episodes with acceleration capped at 50% until one
    /// completes (pass) or the simulated-time budget runs out (disqualified).
    pub fn pre_evaluation(&self, spec: &AgentSpec, budget_s: f64, seed: u64) -> Result<PreEvaluationReport, HarnessError> {
        let mut config = self.config_for(spec, seed)?;
        config.accel_cap = PRE_EVAL_ACCEL_CAP;
        config.laps_required = 1;
        let dt = config.dt_env;
        let budget_steps = (budget_s.max(0.0) / dt + 1e-9).floor() as u64;
        let mut sim = Simulator::new(config)?;
        let track = sim.track().clone();
        let mut used = 0u64;
        let mut episodes = 0u32;
        let mut passed = false;
        while used < budget_steps && !passed {
            let mut agent = self.build_agent(spec, &track, seed + episodes as u64)?;
            episodes += 1;
            let mut obs = sim.reset()?;
            let start = used;
            while used < budget_steps {
                let Ok(action) = agent.act(&obs) else { break };
                let r = sim.step(action)?;
                used += 1;
                obs = r.observation;
                if r.done {
                    passed = r.info.termination_reason == TerminationReason::LapsComplete;
                    break;
                }
            }
            // A failed attempt always costs at least one step.
            if used == start {
                used += 1;
            }
        }
        let used = used.min(budget_steps);
        Ok(PreEvaluationReport {
            passed,
            disqualified: !passed,
            budget_steps,
            steps_used: used,
            sim_seconds_used: used as f64 * dt,
            episodes,
        })
    }

    /// Records `episodes` episodes of `spec` into a session directory.
    pub fn record(&self, spec: &AgentSpec, episodes: usize, dir: &Path, seed: u64) -> Result<SessionManifest, HarnessError> {
        let config = self.config_for(spec, seed)?;
        let mut sim = Simulator::new(config)?;
        let track = sim.track().clone();
        let mut agent = self.build_agent(spec, &track, seed)?;
        Ok(dataset::record_session(&mut sim, agent.as_mut(), episodes, dir)?)
    }
}
