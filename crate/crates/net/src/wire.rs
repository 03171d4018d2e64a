//! Fixed-width little-endian datagram and frame codecs.
//!
//! Action datagram (25 bytes):
//!
//! | offset | size | field        |
//! |--------|------|--------------|
//! | 0      | 4    | `"L2RA"`     |
//! | 4      | 4    | u32 seq      |
//! | 8      | 8    | f64 steering |
//! | 16     | 8    | f64 accel    |
//! | 24     | 1    | u8 gear      |
//!
//! Sensor datagram (256 bytes): `"L2RS"`, u32 seq, f64 sim_time, then the
//! 30 observation slots as f64 starting at offset 16.
//!
//! Camera frame: u32 length of everything after itself, u32 seq, f64
//! sim_time, u16 width, u16 height, u8 channels, raw row-major pixels.

use std::io::{self, Read};

use l2r_core::observation::{Image, Observation, OBS_DIM};
use l2r_core::vehicle::{ActionCommand, Gear};
use thiserror::Error;

pub const ACTION_MAGIC: [u8; 4] = *b"L2RA";
pub const SENSOR_MAGIC: [u8; 4] = *b"L2RS";
pub const ACTION_LEN: usize = 4 + 4 + 8 + 8 + 1;
pub const SENSOR_LEN: usize = 16 + OBS_DIM * 8;
/// Frame bytes after the length prefix and before the pixels.
pub const FRAME_HEADER_LEN: usize = 4 + 8 + 2 + 2 + 1;
/// Largest accepted frame payload; guards the reader against garbage prefixes.
pub const MAX_FRAME_LEN: usize = FRAME_HEADER_LEN + 4096 * 4096 * 4;

/// Byte offset of observation slot `k` inside a sensor datagram.
pub const fn sensor_slot_offset(k: usize) -> usize {
    16 + 8 * k
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("expected {expected} bytes, got {found}")]
    BadLength { expected: usize, found: usize },
    #[error("gear code {0} out of range")]
    BadGear(u8),
    #[error("frame of {width}x{height}x{channels} does not fit payload of {found} bytes")]
    FrameSize {
        width: u16,
        height: u16,
        channels: u8,
        found: usize,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn f64_at(buf: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(buf[at..at + 8].try_into().unwrap())
}

fn u32_at(buf: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(buf[at..at + 4].try_into().unwrap())
}

fn check(buf: &[u8], magic: [u8; 4], len: usize) -> Result<(), WireError> {
    if buf.len() != len {
        return Err(WireError::BadLength {
            expected: len,
            found: buf.len(),
        });
    }
    let got: [u8; 4] = buf[..4].try_into().unwrap();
    if got != magic {
        return Err(WireError::BadMagic(got));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionMessage {
    pub seq: u32,
    pub command: ActionCommand,
}

impl ActionMessage {
    pub fn encode(&self) -> [u8; ACTION_LEN] {
        let mut out = [0u8; ACTION_LEN];
        out[..4].copy_from_slice(&ACTION_MAGIC);
        out[4..8].copy_from_slice(&self.seq.to_le_bytes());
        out[8..16].copy_from_slice(&self.command.steering.to_le_bytes());
        out[16..24].copy_from_slice(&self.command.acceleration.to_le_bytes());
        out[24] = self.command.gear.code();
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        check(buf, ACTION_MAGIC, ACTION_LEN)?;
        let gear = Gear::from_code(buf[24]).ok_or(WireError::BadGear(buf[24]))?;
        Ok(ActionMessage {
            seq: u32_at(buf, 4),
            command: ActionCommand {
                steering: f64_at(buf, 8),
                acceleration: f64_at(buf, 16),
                gear,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorMessage {
    pub seq: u32,
    pub sim_time: f64,
    pub multimodal: [f64; OBS_DIM],
}

impl SensorMessage {
    pub fn from_observation(seq: u32, obs: &Observation) -> Self {
        SensorMessage {
            seq,
            sim_time: obs.sim_time,
            multimodal: obs.multimodal,
        }
    }

    pub fn encode(&self) -> [u8; SENSOR_LEN] {
        let mut out = [0u8; SENSOR_LEN];
        out[..4].copy_from_slice(&SENSOR_MAGIC);
        out[4..8].copy_from_slice(&self.seq.to_le_bytes());
        out[8..16].copy_from_slice(&self.sim_time.to_le_bytes());
        for (k, v) in self.multimodal.iter().enumerate() {
            let at = sensor_slot_offset(k);
            out[at..at + 8].copy_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, WireError> {
        check(buf, SENSOR_MAGIC, SENSOR_LEN)?;
        let mut multimodal = [0.0; OBS_DIM];
        for (k, m) in multimodal.iter_mut().enumerate() {
            *m = f64_at(buf, sensor_slot_offset(k));
        }
        Ok(SensorMessage {
            seq: u32_at(buf, 4),
            sim_time: f64_at(buf, 8),
            multimodal,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub seq: u32,
    pub sim_time: f64,
    pub image: Image,
}

impl CameraFrame {
    /// Value of the length prefix for this frame.
    pub fn payload_len(&self) -> usize {
        FRAME_HEADER_LEN + self.image.data.len()
    }

    /// Length prefix followed by the payload.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.payload_len());
        out.extend_from_slice(&(self.payload_len() as u32).to_le_bytes());
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&self.sim_time.to_le_bytes());
        out.extend_from_slice(&self.image.width.to_le_bytes());
        out.extend_from_slice(&self.image.height.to_le_bytes());
        out.push(self.image.channels);
        out.extend_from_slice(&self.image.data);
        out
    }

    /// Decodes a payload, i.e. everything after the length prefix.
    pub fn decode_payload(buf: &[u8]) -> Result<Self, WireError> {
        if buf.len() < FRAME_HEADER_LEN {
            return Err(WireError::BadLength {
                expected: FRAME_HEADER_LEN,
                found: buf.len(),
            });
        }
        let width = u16::from_le_bytes([buf[12], buf[13]]);
        let height = u16::from_le_bytes([buf[14], buf[15]]);
        let channels = buf[16];
        let data = &buf[FRAME_HEADER_LEN..];
        if data.len() != width as usize * height as usize * channels as usize {
            return Err(WireError::FrameSize {
                width,
                height,
                channels,
                found: data.len(),
            });
        }
        Ok(CameraFrame {
            seq: u32_at(buf, 0),
            sim_time: f64_at(buf, 4),
            image: Image {
                width,
                height,
                channels,
                data: data.to_vec(),
            },
        })
    }

    /// Reads one length-prefixed frame from a stream.
    pub fn read_from(r: &mut impl Read) -> Result<Self, WireError> {
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let len = u32::from_le_bytes(len) as usize;
        if !(FRAME_HEADER_LEN..=MAX_FRAME_LEN).contains(&len) {
            return Err(WireError::BadLength {
                expected: FRAME_HEADER_LEN,
                found: len,
            });
        }
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload)?;
        Self::decode_payload(&payload)
    }
}
