use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use l2r_cli::{load_config, score_log, AgentSpec, Harness, PRE_EVAL_BUDGET_S};
use l2r_core::sim::EpisodeConfig;
use l2r_core::track::{self, TrackIndex, BUNDLED_TRACKS};
use l2r_net::{Pacing, ServerConfig};
use serde::Serialize;

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_DISQUALIFIED: u8 = 3;

#[derive(Parser)]
#[command(name = "l2r", version, about = "Autonomous racing simulator and evaluation harness")]
struct Cli {
    /// Episode config JSON; unspecified fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Bundled track name or track JSON path.
    #[arg(long, global = true)]
    track: Option<String>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// realtime, fast or lockstep.
    #[arg(long, global = true)]
    pacing: Option<Pacing>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the socket server until shut down over the control channel.
    Serve {
        /// Server config JSON (ports, rates); the episode section is replaced by --config.
        #[arg(long)]
        server_config: Option<PathBuf>,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        action_port: Option<u16>,
        #[arg(long)]
        sensor_host: Option<String>,
        #[arg(long)]
        sensor_port: Option<u16>,
        #[arg(long)]
        camera_port: Option<u16>,
        #[arg(long)]
        control_port: Option<u16>,
        /// Start an episode without waiting for a reset.
        #[arg(long)]
        autostart: bool,
    },
    /// Run one episode and print its result.
    Run {
        #[arg(long, default_value = "mpc")]
        agent: AgentSpec,
    },
    /// Run several episodes and aggregate their metrics.
    Eval {
        #[arg(long, default_value = "mpc")]
        agent: AgentSpec,
        #[arg(long, default_value_t = 3)]
        episodes: usize,
        /// Print a markdown table row instead of JSON.
        #[arg(long)]
        table: bool,
    },
    /// Competency check: finish one lap at half throttle within the budget.
    Preeval {
        #[arg(long, default_value = "mpc")]
        agent: AgentSpec,
        /// Simulated seconds.
        #[arg(long, default_value_t = PRE_EVAL_BUDGET_S)]
        budget: f64,
    },
    /// Record episodes into a session directory (requires --out).
    Record {
        #[arg(long, default_value = "mpc")]
        agent: AgentSpec,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
    },
    /// Score a saved trajectory log.
    Metrics { log: PathBuf },
    #[command(subcommand)]
    Tracks(TracksCommand),
}

#[derive(Subcommand)]
enum TracksCommand {
    List,
    Validate { track: String },
}

#[derive(Serialize)]
struct TrackSummary {
    name: String,
    closed: bool,
    length: f64,
    vertices: usize,
    max_half_width: f64,
}

fn summarize(reference: &str) -> anyhow::Result<TrackSummary> {
    let index = TrackIndex::new(track::resolve(reference)?)?;
    Ok(TrackSummary {
        name: index.name().to_string(),
        closed: index.closed(),
        length: index.total_length(),
        vertices: index.spec().centerline.len(),
        max_half_width: index.max_half_width(),
    })
}

fn print_line(text: &str) -> anyhow::Result<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        // Downstream closed early (`l2r ... | head`).
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    print_line(&serde_json::to_string_pretty(value)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn episode_config(cli: &Cli) -> anyhow::Result<EpisodeConfig> {
    let mut config = match &cli.config {
        Some(path) => load_config(path)?,
        None => EpisodeConfig::default(),
    };
    if let Some(t) = &cli.track {
        config.track = t.clone();
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let config = episode_config(&cli)?;
    let seed = config.seed;
    let mut harness = Harness::new(config.clone());
    if let Some(p) = cli.pacing {
        harness.server.pacing = p;
    }
    match cli.command {
        Command::Serve {
            server_config,
            host,
            action_port,
            sensor_host,
            sensor_port,
            camera_port,
            control_port,
            autostart,
        } => {
            let mut sc: ServerConfig = match server_config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
                }
                None => ServerConfig::default(),
            };
            if cli.config.is_some() || cli.track.is_some() || cli.seed.is_some() {
                sc.episode = config;
            }
            if let Some(p) = cli.pacing {
                sc.pacing = p;
            }
            sc.host = host.unwrap_or(sc.host);
            sc.sensor_host = sensor_host.unwrap_or(sc.sensor_host);
            sc.action_port = action_port.unwrap_or(sc.action_port);
            sc.sensor_port = sensor_port.unwrap_or(sc.sensor_port);
            sc.camera_port = camera_port.unwrap_or(sc.camera_port);
            sc.control_port = control_port.unwrap_or(sc.control_port);
            sc.autostart |= autostart;
            l2r_net::serve(sc)?;
        }
        Command::Run { agent } => {
            let result = harness.run_episode(&agent, seed)?;
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                if let Some(log) = &result.log {
                    std::fs::write(dir.join("log.json"), log.to_json())
                        .with_context(|| format!("writing {}", dir.display()))?;
                }
                write_json(&dir.join("result.json"), &result)?;
            }
            print_json(&result)?;
        }
        Command::Eval { agent, episodes, table } => {
            let report = harness.evaluate(&agent, episodes, seed)?;
            if let Some(path) = &cli.out {
                write_json(path, &report)?;
            }
            if table {
                print_line(&l2r_cli::EvaluationReport::table_header())?;
                print_line(&report.table_row())?;
            } else {
                print_json(&report)?;
            }
        }
        Command::Preeval { agent, budget } => {
            let report = harness.pre_evaluation(&agent, budget, seed)?;
            print_json(&report)?;
            if report.disqualified {
                return Ok(EXIT_DISQUALIFIED);
            }
        }
        Command::Record { agent, episodes } => {
            let dir = cli.out.context("record needs --out <dir>")?;
            let manifest = harness.record(&agent, episodes, &dir, seed)?;
            print_json(&manifest)?;
        }
        Command::Metrics { log } => {
            let report = score_log(&log, cli.track.as_deref())?;
            if let Some(path) = &cli.out {
                write_json(path, &report)?;
            }
            print_json(&report)?;
        }
        Command::Tracks(TracksCommand::List) => {
            let all = BUNDLED_TRACKS.iter().map(|t| summarize(t)).collect::<anyhow::Result<Vec<_>>>()?;
            print_json(&all)?;
        }
        Command::Tracks(TracksCommand::Validate { track }) => {
            print_json(&summarize(&track)?)?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
