//! Demonstration files.
//!
//! Layout: the 8-byte magic `DXTDEMO\n`, a little-endian `u32` header length,
//! the JSON header, then frames. Each frame is a little-endian `u32` payload
//! length followed by the payload:
//!
//! | field | encoding |
//! |---|---|
//! | index | `u64` |
//! | timestamp (s) | `f64` |
//! | proprioception | `u32` count + `f64` values |
//! | action | `u32` count + `f64` values |
//! | success label | `u8`: 0 unknown, 1 failure, 2 success |
//! | observation | `u32` length + bytes (empty in simulation) |

use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEMO_MAGIC: &[u8; 8] = b"DXTDEMO\n";
pub const DEMO_SCHEMA_VERSION: &str = "1";
pub const PROPRIO_DIM: usize = 44;
pub const ACTION_DIM: usize = 44;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("file has no header")]
    MissingHeader,
    #[error("not a demonstration file")]
    BadMagic,
    #[error("malformed header: {0}")]
    Header(String),
    #[error("schema version {found:?} is not supported (expected {expected:?})")]
    VersionMismatch { found: String, expected: String },
    #[error("corrupt frame {index} at byte {offset}: {reason}")]
    CorruptFrame { index: u64, offset: u64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoHeader {
    pub schema_version: String,
    pub hand_model_id: String,
    /// Hex SHA-256 of the library the session ran with.
    pub library_hash: String,
    pub record_hz: u32,
    pub control_hz: u32,
    pub proprio_dim: usize,
    pub action_dim: usize,
    /// Order of the proprioception values.
    pub proprio_layout: String,
    pub seed: u64,
    pub active_types: [Option<String>; 2],
}

impl DemoHeader {
    pub fn new(hand_model_id: &str, library_hash: &str, seed: u64, active_types: [Option<String>; 2]) -> Self {
        Self {
            schema_version: DEMO_SCHEMA_VERSION.into(),
            hand_model_id: hand_model_id.into(),
            library_hash: library_hash.into(),
            record_hz: super::RECORD_HZ,
            control_hz: super::CONTROL_HZ,
            proprio_dim: PROPRIO_DIM,
            action_dim: ACTION_DIM,
            proprio_layout: "left arm xyz+rotvec, right arm xyz+rotvec, left hand joints, right hand joints".into(),
            seed,
            active_types,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemonstrationFrame {
    pub index: u64,
    pub timestamp: f64,
    pub proprioception: Vec<f64>,
    /// Commanded arm poses (xyz + rotvec per arm) and hand joint targets.
    pub action: Vec<f64>,
    pub success_label: Option<bool>,
    pub observation: Vec<u8>,
}

impl DemonstrationFrame {
    fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(32 + 8 * (self.proprioception.len() + self.action.len()));
        b.extend_from_slice(&self.index.to_le_bytes());
        b.extend_from_slice(&self.timestamp.to_le_bytes());
        for values in [&self.proprioception, &self.action] {
            b.extend_from_slice(&(values.len() as u32).to_le_bytes());
            for v in values.iter() {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b.push(match self.success_label {
            None => 0,
            Some(false) => 1,
            Some(true) => 2,
        });
        b.extend_from_slice(&(self.observation.len() as u32).to_le_bytes());
        b.extend_from_slice(&self.observation);
        b
    }

    fn decode(payload: &[u8]) -> Result<Self, String> {
        let mut cur = Cursor { buf: payload, pos: 0 };
        let index = u64::from_le_bytes(cur.take::<8>()?);
        let timestamp = f64::from_le_bytes(cur.take::<8>()?);
        let mut vectors = [Vec::new(), Vec::new()];
        for v in &mut vectors {
            let n = u32::from_le_bytes(cur.take::<4>()?) as usize;
            if n > payload.len() / 8 {
                return Err(format!("vector length {n} exceeds payload"));
            }
            *v = (0..n).map(|_| cur.take::<8>().map(f64::from_le_bytes)).collect::<Result<_, _>>()?;
        }
        let success_label = match cur.take::<1>()?[0] {
            0 => None,
            1 => Some(false),
            2 => Some(true),
            other => return Err(format!("bad success label {other}")),
        };
        let n = u32::from_le_bytes(cur.take::<4>()?) as usize;
        let observation = cur.bytes(n)?.to_vec();
        if cur.pos != payload.len() {
            return Err(format!("{} trailing bytes", payload.len() - cur.pos));
        }
        let [proprioception, action] = vectors;
        Ok(Self { index, timestamp, proprioception, action, success_label, observation })
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn bytes(&mut self, n: usize) -> Result<&[u8], String> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or("payload too short")?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N], String> {
        Ok(self.bytes(N)?.try_into().unwrap())
    }
}

pub struct DemoWriter<W: Write> {
    inner: W,
}

impl<W: Write> DemoWriter<W> {
    pub fn new(mut inner: W, header: &DemoHeader) -> Result<Self, DemoError> {
        let json = serde_json::to_vec(header).map_err(|e| DemoError::Header(e.to_string()))?;
        inner.write_all(DEMO_MAGIC)?;
        inner.write_all(&(json.len() as u32).to_le_bytes())?;
        inner.write_all(&json)?;
        Ok(Self { inner })
    }

    pub fn write_frame(&mut self, frame: &DemonstrationFrame) -> Result<(), DemoError> {
        let payload = frame.encode();
        self.inner.write_all(&(payload.len() as u32).to_le_bytes())?;
        self.inner.write_all(&payload)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, DemoError> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Streams frames out of a demonstration file.
pub struct DemoReader<R: Read> {
    inner: R,
    header: DemoHeader,
    offset: u64,
    next_index: u64,
    failed: bool,
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

impl<R: Read> DemoReader<R> {
    pub fn new(mut inner: R) -> Result<Self, DemoError> {
        let mut magic = [0u8; 8];
        let n = read_full(&mut inner, &mut magic)?;
        if n == 0 {
            return Err(DemoError::MissingHeader);
        }
        if n < 8 || &magic != DEMO_MAGIC {
            return Err(DemoError::BadMagic);
        }
        let mut len = [0u8; 4];
        if read_full(&mut inner, &mut len)? < 4 {
            return Err(DemoError::MissingHeader);
        }
        let len = u32::from_le_bytes(len) as usize;
        let mut json = vec![0u8; len];
        if read_full(&mut inner, &mut json)? < len {
            return Err(DemoError::Header("header is truncated".into()));
        }
        let value: serde_json::Value = serde_json::from_slice(&json).map_err(|e| DemoError::Header(e.to_string()))?;
        let version = value.get("schema_version").and_then(|v| v.as_str()).unwrap_or("").to_string();
        if version != DEMO_SCHEMA_VERSION {
            return Err(DemoError::VersionMismatch { found: version, expected: DEMO_SCHEMA_VERSION.into() });
        }
        let header: DemoHeader = serde_json::from_value(value).map_err(|e| DemoError::Header(e.to_string()))?;
        Ok(Self { inner, header, offset: (12 + len) as u64, next_index: 0, failed: false })
    }

    pub fn header(&self) -> &DemoHeader {
        &self.header
    }

    fn corrupt(&mut self, reason: impl Into<String>) -> DemoError {
        self.failed = true;
        DemoError::CorruptFrame { index: self.next_index, offset: self.offset, reason: reason.into() }
    }

    fn next_frame(&mut self) -> Result<Option<DemonstrationFrame>, DemoError> {
        let mut len = [0u8; 4];
        match read_full(&mut self.inner, &mut len)? {
            0 => return Ok(None),
            4 => {}
            n => return Err(self.corrupt(format!("length prefix cut after {n} bytes"))),
        }
        let len = u32::from_le_bytes(len) as usize;
        let mut payload = vec![0u8; len];
        let got = read_full(&mut self.inner, &mut payload)?;
        if got < len {
            return Err(self.corrupt(format!("payload cut after {got} of {len} bytes")));
        }
        let frame = DemonstrationFrame::decode(&payload).map_err(|e| self.corrupt(e))?;
        if frame.index != self.next_index {
            return Err(self.corrupt(format!("frame index {} out of sequence", frame.index)));
        }
        self.offset += 4 + len as u64;
        self.next_index += 1;
        Ok(Some(frame))
    }
}

impl<R: Read> Iterator for DemoReader<R> {
    type Item = Result<DemonstrationFrame, DemoError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        self.next_frame().transpose()
    }
}

pub fn write_demo(
    path: impl AsRef<Path>,
    header: &DemoHeader,
    frames: &[DemonstrationFrame],
) -> Result<(), DemoError> {
    let file = io::BufWriter::new(std::fs::File::create(path)?);
    let mut w = DemoWriter::new(file, header)?;
    for f in frames {
        w.write_frame(f)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_demo(path: impl AsRef<Path>) -> Result<(DemoHeader, Vec<DemonstrationFrame>), DemoError> {
    let reader = DemoReader::new(io::BufReader::new(std::fs::File::open(path)?))?;
    let header = reader.header().clone();
    let frames = reader.collect::<Result<Vec<_>, _>>()?;
    Ok((header, frames))
}

/// Samples control-loop states onto the recording clock.
///
/// The state reached after `m` control ticks is the state at time
/// `m / control_hz`. Frame `k`, stamped `k / record_hz`, holds the latest
/// state at or before its timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Recorder {
    control_hz: u32,
    record_hz: u32,
    limit: Option<u64>,
    next_index: u64,
    frames: Vec<DemonstrationFrame>,
}

impl Recorder {
    pub fn new(control_hz: u32, record_hz: u32) -> Self {
        Self { control_hz, record_hz, limit: None, next_index: 0, frames: Vec::new() }
    }

    /// Stops after `frames` frames.
    pub fn with_limit(mut self, frames: u64) -> Self {
        self.limit = Some(frames);
        self
    }

    fn state_for(&self, k: u64) -> u64 {
        k * self.control_hz as u64 / self.record_hz as u64
    }

    /// Offers the state after `state_index` ticks. Returns how many frames
    /// were recorded from it.
    pub fn observe(&mut self, state_index: u64, proprioception: &[f64], action: &[f64]) -> usize {
        let mut added = 0;
        while self.limit.is_none_or(|l| self.next_index < l) && self.state_for(self.next_index) <= state_index {
            self.frames.push(DemonstrationFrame {
                index: self.next_index,
                timestamp: self.next_index as f64 / self.record_hz as f64,
                proprioception: proprioception.to_vec(),
                action: action.to_vec(),
                success_label: None,
                observation: Vec::new(),
            });
            self.next_index += 1;
            added += 1;
        }
        added
    }

    pub fn frames(&self) -> &[DemonstrationFrame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<DemonstrationFrame> {
        self.frames
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(index: u64) -> DemonstrationFrame {
        DemonstrationFrame {
            index,
            timestamp: index as f64 / 15.0,
            proprioception: (0..44).map(|i| i as f64 * 0.5 + index as f64).collect(),
            action: vec![0.25; 44],
            success_label: if index % 2 == 0 { None } else { Some(true) },
            observation: Vec::new(),
        }
    }

    fn header() -> DemoHeader {
        DemoHeader::new("leap-16", "abc", 3, [None, Some("cyl-thick".into())])
    }

    fn encoded(frames: &[DemonstrationFrame]) -> Vec<u8> {
        let mut w = DemoWriter::new(Vec::new(), &header()).unwrap();
        for f in frames {
            w.write_frame(f).unwrap();
        }
        w.finish().unwrap()
    }

    #[test]
    fn round_trip() {
        let frames: Vec<_> = (0..5).map(frame).collect();
        let bytes = encoded(&frames);
        let r = DemoReader::new(bytes.as_slice()).unwrap();
        assert_eq!(r.header(), &header());
        let back: Vec<_> = r.collect::<Result<_, _>>().unwrap();
        assert_eq!(back, frames);
    }

    #[test]
    fn header_only_file_has_zero_frames() {
        let bytes = encoded(&[]);
        assert_eq!(DemoReader::new(bytes.as_slice()).unwrap().count(), 0);
    }

    #[test]
    fn empty_file_needs_a_header() {
        assert!(matches!(DemoReader::new(&b""[..]), Err(DemoError::MissingHeader)));
        assert!(matches!(DemoReader::new(&b"garbage!"[..]), Err(DemoError::BadMagic)));
    }

    #[test]
    fn truncation_reports_the_cut_frame() {
        let frames: Vec<_> = (0..4).map(frame).collect();
        let bytes = encoded(&frames);
        let cut = &bytes[..bytes.len() - 10];
        let results: Vec<_> = DemoReader::new(cut).unwrap().collect();
        assert_eq!(results.len(), 4);
        assert!(results[..3].iter().all(Result::is_ok));
        assert!(matches!(results[3], Err(DemoError::CorruptFrame { index: 3, .. })));
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut h = header();
        h.schema_version = "9".into();
        let w = DemoWriter::new(Vec::new(), &h).unwrap();
        let bytes = w.finish().unwrap();
        assert!(matches!(
            DemoReader::new(bytes.as_slice()),
            Err(DemoError::VersionMismatch { found, .. }) if found == "9"
        ));
    }

    #[test]
    fn out_of_sequence_index_is_corrupt() {
        let bytes = encoded(&[frame(0), frame(2)]);
        let results: Vec<_> = DemoReader::new(bytes.as_slice()).unwrap().collect();
        assert!(matches!(results[1], Err(DemoError::CorruptFrame { index: 1, .. })));
    }

    #[test]
    fn recorder_cadence() {
        let mut rec = Recorder::new(25, 15).with_limit(150);
        for m in 0..=250 {
            rec.observe(m, &[m as f64], &[]);
        }
        let frames = rec.frames();
        assert_eq!(frames.len(), 150);
        for (k, f) in frames.iter().enumerate() {
            assert_eq!(f.timestamp, k as f64 / 15.0);
            let m = f.proprioception[0];
            assert!(m / 25.0 <= f.timestamp + 1e-12);
            assert!((m + 1.0) / 25.0 > f.timestamp);
        }
    }
}
