//! Session container: `manifest.json` plus `records.bin`, a stream of
//! length-prefixed little-endian step records.
//!
//! Record layout: `u32 length | f64 sim_time | 30 × f64 multimodal |
//! f64 steering | f64 acceleration | image bytes`, where `length` counts the
//! bytes after itself.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{Agent, ReplayAgent};
use crate::episode::run_episode_with;
use crate::observation::{Observation, OBS_DIM, VECTOR_LAYOUT};
use crate::sim::{EpisodeConfig, SimError, Simulator};
use crate::trajectory::TerminationReason;
use crate::vehicle::ActionCommand;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.bin";
/// Bytes of a record before the image payload, excluding the length prefix.
pub const FIXED_RECORD_BYTES: usize = 8 + OBS_DIM * 8 + 2 * 8;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("record {index}: {reason}")]
    Corrupt { index: u64, reason: String },
    #[error("manifest declares {declared} records, found {found}")]
    CountMismatch { declared: u64, found: u64 },
    #[error("record image has {found} bytes, manifest expects {expected}")]
    ImageSize { expected: usize, found: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub indices: Vec<usize>,
    pub description: String,
}

pub fn index_map() -> Vec<IndexEntry> {
    VECTOR_LAYOUT
        .iter()
        .map(|(idx, desc)| IndexEntry {
            indices: idx.to_vec(),
            description: desc.to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ImageDims {
    pub width: u16,
    pub height: u16,
    pub channels: u8,
}

impl ImageDims {
    pub fn bytes(&self) -> usize {
        self.width as usize * self.height as usize * self.channels as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub first_record: u64,
    pub record_count: u64,
    pub termination_reason: TerminationReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub schema_version: u32,
    pub track: String,
    pub policy: String,
    pub config: EpisodeConfig,
    pub index_map: Vec<IndexEntry>,
    pub image: ImageDims,
    /// Seconds between consecutive records.
    pub sample_period: f64,
    pub record_count: u64,
    pub episodes: Vec<EpisodeEntry>,
    /// Set when recording stopped early; the reason is kept alongside.
    pub truncated: bool,
    pub truncation_reason: Option<String>,
}

impl SessionManifest {
    pub fn new(config: &EpisodeConfig, policy: &str) -> Self {
        let image = if config.camera.enabled {
            ImageDims {
                width: config.camera.width,
                height: config.camera.height,
                channels: 3,
            }
        } else {
            ImageDims::default()
        };
        SessionManifest {
            schema_version: SCHEMA_VERSION,
            track: config.track.clone(),
            policy: policy.to_string(),
            config: config.clone(),
            index_map: index_map(),
            image,
            sample_period: config.dt_env,
            record_count: 0,
            episodes: Vec::new(),
            truncated: false,
            truncation_reason: None,
        }
    }

    pub fn record_bytes(&self) -> usize {
        FIXED_RECORD_BYTES + self.image.bytes()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub sim_time: f64,
    pub multimodal: [f64; OBS_DIM],
    /// `[steering, acceleration]`.
    pub action: [f64; 2],
    pub image: Vec<u8>,
}

impl StepRecord {
    pub fn from_step(obs: &Observation, action: &ActionCommand) -> Self {
        StepRecord {
            sim_time: obs.sim_time,
            multimodal: obs.multimodal,
            action: [action.steering, action.acceleration],
            image: obs.image.as_ref().map(|i| i.data.clone()).unwrap_or_default(),
        }
    }

    pub fn command(&self) -> ActionCommand {
        ActionCommand::new(self.action[1], self.action[0])
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        let len = (FIXED_RECORD_BYTES + self.image.len()) as u32;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&self.sim_time.to_le_bytes());
        for v in &self.multimodal {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.action {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.image);
    }

    fn decode_body(body: &[u8]) -> StepRecord {
        let f = |i: usize| f64::from_le_bytes(body[i * 8..i * 8 + 8].try_into().unwrap());
        let mut multimodal = [0.0; OBS_DIM];
        for (k, m) in multimodal.iter_mut().enumerate() {
            *m = f(1 + k);
        }
        StepRecord {
            sim_time: f(0),
            multimodal,
            action: [f(1 + OBS_DIM), f(2 + OBS_DIM)],
            image: body[FIXED_RECORD_BYTES..].to_vec(),
        }
    }
}

/// Single writer of a session directory. The manifest is written by
/// [`SessionWriter::finish`].
pub struct SessionWriter {
    dir: PathBuf,
    manifest: SessionManifest,
    out: BufWriter<File>,
    buf: Vec<u8>,
}

impl SessionWriter {
    pub fn create(dir: impl AsRef<Path>, manifest: SessionManifest) -> Result<Self, DatasetError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        let out = BufWriter::new(File::create(dir.join(RECORDS_FILE))?);
        Ok(SessionWriter {
            dir,
            manifest: SessionManifest {
                record_count: 0,
                ..manifest
            },
            out,
            buf: Vec::new(),
        })
    }

    pub fn manifest(&self) -> &SessionManifest {
        &self.manifest
    }

    pub fn write(&mut self, record: &StepRecord) -> Result<(), DatasetError> {
        let expected = self.manifest.image.bytes();
        if record.image.len() != expected {
            return Err(DatasetError::ImageSize {
                expected,
                found: record.image.len(),
            });
        }
        self.buf.clear();
        record.encode(&mut self.buf);
        self.out.write_all(&self.buf)?;
        self.manifest.record_count += 1;
        Ok(())
    }

    pub fn begin_episode(&mut self) {
        self.manifest.episodes.push(EpisodeEntry {
            first_record: self.manifest.record_count,
            record_count: 0,
            termination_reason: TerminationReason::None,
        });
    }

    pub fn end_episode(&mut self, reason: TerminationReason) {
        let total = self.manifest.record_count;
        if let Some(e) = self.manifest.episodes.last_mut() {
            e.record_count = total - e.first_record;
            e.termination_reason = reason;
        }
    }

    pub fn mark_truncated(&mut self, reason: impl Into<String>) {
        self.manifest.truncated = true;
        self.manifest.truncation_reason = Some(reason.into());
    }

    pub fn finish(mut self) -> Result<SessionManifest, DatasetError> {
        self.out.flush()?;
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| DatasetError::Manifest(e.to_string()))?;
        std::fs::write(self.dir.join(MANIFEST_FILE), text)?;
        Ok(self.manifest)
    }
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<SessionManifest, DatasetError> {
    let text = std::fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Manifest(e.to_string()))
}

/// Lazily streams the records of a session, checking each length against
/// the manifest and the final count against the declared one.
pub struct SessionReader {
    manifest: SessionManifest,
    input: BufReader<File>,
    index: u64,
    failed: bool,
}

impl SessionReader {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let manifest = read_manifest(&dir)?;
        let input = BufReader::new(File::open(dir.as_ref().join(RECORDS_FILE))?);
        Ok(SessionReader {
            manifest,
            input,
            index: 0,
            failed: false,
        })
    }

    pub fn manifest(&self) -> &SessionManifest {
        &self.manifest
    }

    fn corrupt(&mut self, reason: impl Into<String>) -> Option<Result<StepRecord, DatasetError>> {
        self.failed = true;
        Some(Err(DatasetError::Corrupt {
            index: self.index,
            reason: reason.into(),
        }))
    }
}

/// Reads up to `buf.len()` bytes; returns how many were read.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

impl Iterator for SessionReader {
    type Item = Result<StepRecord, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let mut len_buf = [0u8; 4];
        let got = match read_full(&mut self.input, &mut len_buf) {
            Ok(n) => n,
            Err(e) => {
                self.failed = true;
                return Some(Err(e.into()));
            }
        };
        if got == 0 {
            if self.index != self.manifest.record_count {
                self.failed = true;
                return Some(Err(DatasetError::CountMismatch {
                    declared: self.manifest.record_count,
                    found: self.index,
                }));
            }
            return None;
        }
        if got < 4 {
            return self.corrupt("truncated length prefix");
        }
        let len = u32::from_le_bytes(len_buf) as usize;
        let expected = self.manifest.record_bytes();
        if len != expected {
            return self.corrupt(format!("length {len} does not match expected {expected}"));
        }
        let mut body = vec![0u8; len];
        match read_full(&mut self.input, &mut body) {
            Ok(n) if n == len => {}
            Ok(n) => return self.corrupt(format!("record truncated after {n} of {len} bytes")),
            Err(e) => {
                self.failed = true;
                return Some(Err(e.into()));
            }
        }
        self.index += 1;
        Some(Ok(StepRecord::decode_body(&body)))
    }
}

pub fn read_session(dir: impl AsRef<Path>) -> Result<(SessionManifest, Vec<StepRecord>), DatasetError> {
    let reader = SessionReader::open(dir)?;
    let manifest = reader.manifest().clone();
    let records = reader.collect::<Result<Vec<_>, _>>()?;
    Ok((manifest, records))
}

/// Runs `episodes` episodes of `agent` and writes one record per step,
/// pairing each observation with the action chosen from it.
pub fn record_session(
    sim: &mut Simulator,
    agent: &mut dyn Agent,
    episodes: usize,
    dir: impl AsRef<Path>,
) -> Result<SessionManifest, DatasetError> {
    let manifest = SessionManifest::new(sim.config(), agent.name());
    let mut writer = SessionWriter::create(dir, manifest)?;
    for _ in 0..episodes {
        writer.begin_episode();
        let mut write_err = None;
        let outcome = run_episode_with(sim, agent, |obs, action| {
            if write_err.is_none() {
                if let Err(e) = writer.write(&StepRecord::from_step(obs, action)) {
                    write_err = Some(e);
                }
            }
        });
        if let Some(e) = write_err {
            return Err(e);
        }
        match outcome {
            Ok(out) => {
                writer.end_episode(out.log.metadata.termination_reason);
                if let Some(e) = out.agent_error {
                    writer.mark_truncated(format!("policy failure: {e}"));
                    break;
                }
            }
            Err(e) => {
                writer.end_episode(TerminationReason::None);
                writer.mark_truncated(format!("simulator failure: {e}"));
                break;
            }
        }
    }
    writer.finish()
}

/// Action sequence of one recorded episode.
pub fn episode_actions(manifest: &SessionManifest, records: &[StepRecord], episode: usize) -> Vec<ActionCommand> {
    let e = &manifest.episodes[episode];
    let start = e.first_record as usize;
    records[start..start + e.record_count as usize].iter().map(|r| r.command()).collect()
}

/// Replays the recorded actions of `episode` through a fresh engine built
/// from the manifest config, returning the observation preceding each action.
pub fn replay_episode(
    manifest: &SessionManifest,
    records: &[StepRecord],
    episode: usize,
) -> Result<Vec<Observation>, DatasetError> {
    let mut sim = Simulator::new(manifest.config.clone())?;
    let mut agent = ReplayAgent::new(episode_actions(manifest, records, episode));
    let mut observations = Vec::new();
    run_episode_with(&mut sim, &mut agent, |obs, _| observations.push(obs.clone()))?;
    Ok(observations)
}
