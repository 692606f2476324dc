//! Versioned, checksummed on-disk store snapshots.
//!
//! Layout: one ASCII header line
//!
//! ```text
//! TRAJIS-SNAPSHOT 1 hop_cap=<n|unlimited> birth_day=<d> entities=<n> events=<n> payload_bytes=<n> sha256=<hex>
//! ```
//!
//! followed by a little-endian binary payload of exactly `payload_bytes` bytes
//! whose SHA-256 digest is `sha256`. Hop edges are not stored; they are
//! rebuilt from node dates on load.

use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{Dictionaries, EventNode, HopCap, StoreOptions, Trajectory, TrajectoryStore};
use crate::calendar::{from_epoch_days, epoch_days, YearMonth};

pub const SNAPSHOT_VERSION: u32 = 1;
const MAGIC: &str = "TRAJIS-SNAPSHOT";
const ABSENT: u32 = u32::MAX;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a trajectory snapshot")]
    NotASnapshot,
    #[error("snapshot format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}

fn corrupt(msg: impl Into<String>) -> SnapshotError {
    SnapshotError::CorruptSnapshot(msg.into())
}

/// Parsed header line of a snapshot file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SnapshotHeader {
    pub version: u32,
    pub hop_cap: HopCap,
    pub birth_day: u32,
    pub entities: u64,
    pub events: u64,
    pub payload_bytes: u64,
    pub sha256: String,
}

impl SnapshotHeader {
    fn line(&self) -> String {
        format!(
            "{MAGIC} {} hop_cap={} birth_day={} entities={} events={} payload_bytes={} sha256={}\n",
            self.version, self.hop_cap, self.birth_day, self.entities, self.events, self.payload_bytes, self.sha256
        )
    }

    fn parse(line: &str) -> Result<Self, SnapshotError> {
        let mut parts = line.split_whitespace();
        if parts.next() != Some(MAGIC) {
            return Err(SnapshotError::NotASnapshot);
        }
        let version = parts.next().ok_or_else(|| corrupt("header has no version"))?;
        if version != SNAPSHOT_VERSION.to_string() {
            return Err(SnapshotError::VersionMismatch { found: version.to_string(), expected: SNAPSHOT_VERSION });
        }
        let mut fields = std::collections::HashMap::new();
        for part in parts {
            let (k, v) = part.split_once('=').ok_or_else(|| corrupt(format!("bad header field {part:?}")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| corrupt(format!("header lacks `{k}`")));
        let num = |k: &str| -> Result<u64, SnapshotError> {
            get(k)?.parse().map_err(|_| corrupt(format!("header field `{k}` is not a number")))
        };
        Ok(Self {
            version: SNAPSHOT_VERSION,
            hop_cap: get("hop_cap")?.parse().map_err(corrupt)?,
            birth_day: num("birth_day")? as u32,
            entities: num("entities")?,
            events: num("events")?,
            payload_bytes: num("payload_bytes")?,
            sha256: get("sha256")?.to_string(),
        })
    }

    /// Read only the header of the snapshot at `path`.
    pub fn read(path: &Path) -> Result<Self, SnapshotError> {
        let mut reader = BufReader::new(fs::File::open(path)?);
        Self::parse(&read_header_line(&mut reader)?)
    }
}

fn read_header_line<R: BufRead>(reader: &mut R) -> Result<String, SnapshotError> {
    let mut line = Vec::new();
    reader.take(4096).read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(if line.starts_with(MAGIC.as_bytes()) { corrupt("truncated header") } else { SnapshotError::NotASnapshot });
    }
    String::from_utf8(line).map_err(|_| SnapshotError::NotASnapshot)
}

struct Encoder(Vec<u8>);

impl Encoder {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("payload ends early"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, SnapshotError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i32(&mut self) -> Result<i32, SnapshotError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String, SnapshotError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("invalid utf-8 string"))
    }
}

fn encode_payload(store: &TrajectoryStore) -> Vec<u8> {
    let mut e = Encoder(Vec::new());
    for slot in 0..5 {
        let dict = store.dictionaries.slot(slot);
        e.u32(dict.len() as u32);
        for v in dict.values() {
            e.str(v);
        }
    }
    e.u64(store.trajectories.len() as u64);
    for t in &store.trajectories {
        e.str(&t.entity_id);
        e.i32(t.birthdate.year());
        e.u8(t.birthdate.month() as u8);
        match t.censordate {
            Some(d) => {
                e.u8(1);
                e.i32(epoch_days(d));
            }
            None => e.u8(0),
        }
        e.u32(t.len() as u32);
        for n in t.nodes() {
            e.i32(n.day);
            e.i32(n.age_days);
            for c in n.codes {
                e.u32(c.unwrap_or(ABSENT));
            }
        }
    }
    e.0
}

fn decode_payload(buf: &[u8], options: StoreOptions, header: &SnapshotHeader) -> Result<TrajectoryStore, SnapshotError> {
    let mut d = Decoder { buf, pos: 0 };
    let mut dictionaries = Dictionaries::default();
    for slot in 0..5 {
        let n = d.u32()?;
        let dict = dictionaries.slot_mut(slot);
        for _ in 0..n {
            let v = d.str()?;
            if dict.intern(&v) as usize != dict.len() - 1 {
                return Err(corrupt("duplicate dictionary value"));
            }
        }
    }
    let entities = d.u64()?;
    if entities != header.entities {
        return Err(corrupt("entity count disagrees with header"));
    }
    let mut trajectories = Vec::with_capacity(entities.min(1 << 24) as usize);
    let mut events = 0u64;
    let mut previous_id: Option<String> = None;
    for _ in 0..entities {
        let entity_id = d.str()?;
        if previous_id.as_ref().is_some_and(|p| *p >= entity_id) {
            return Err(corrupt("entities are not in strictly increasing id order"));
        }
        let year = d.i32()?;
        let birthdate = YearMonth::new(year, d.u8()? as u32).ok_or_else(|| corrupt("invalid birth month"))?;
        let censordate = match d.u8()? {
            0 => None,
            1 => Some(from_epoch_days(d.i32()? as i64).ok_or_else(|| corrupt("invalid censor date"))?),
            _ => return Err(corrupt("invalid censor flag")),
        };
        let n = d.u32()?;
        if n == 0 {
            return Err(corrupt("trajectory without events"));
        }
        let mut nodes = Vec::with_capacity(n.min(1 << 16) as usize);
        for ordinal in 0..n {
            let day = d.i32()?;
            let age_days = d.i32()?;
            let mut codes = [None; 5];
            for (slot, code) in codes.iter_mut().enumerate() {
                let c = d.u32()?;
                if c != ABSENT {
                    if c as usize >= dictionaries.slot(slot).len() {
                        return Err(corrupt("code outside its dictionary"));
                    }
                    *code = Some(c);
                }
            }
            if nodes.last().is_some_and(|p: &EventNode| p.day > day) {
                return Err(corrupt("event dates decrease within a trajectory"));
            }
            nodes.push(EventNode { ordinal, day, age_days, codes });
        }
        events += n as u64;
        trajectories.push(Trajectory::from_nodes(entity_id.clone(), birthdate, censordate, nodes, options.hop_cap));
        previous_id = Some(entity_id);
    }
    if events != header.events {
        return Err(corrupt("event count disagrees with header"));
    }
    if d.pos != buf.len() {
        return Err(corrupt("trailing bytes after payload"));
    }
    Ok(TrajectoryStore::assemble(options, trajectories, dictionaries))
}

impl TrajectoryStore {
    /// Serialize the store to `writer`.
    pub fn write_snapshot<W: Write>(&self, mut writer: W) -> io::Result<()> {
        let payload = encode_payload(self);
        let header = SnapshotHeader {
            version: SNAPSHOT_VERSION,
            hop_cap: self.options.hop_cap,
            birth_day: self.options.birth_day,
            entities: self.stats.entities as u64,
            events: self.stats.events as u64,
            payload_bytes: payload.len() as u64,
            sha256: hex::encode(Sha256::digest(&payload)),
        };
        writer.write_all(header.line().as_bytes())?;
        writer.write_all(&payload)?;
        writer.flush()
    }

    /// Write a snapshot to `path`, replacing it atomically.
    pub fn snapshot(&self, path: &Path) -> Result<(), SnapshotError> {
        let tmp = path.with_extension("partial");
        {
            let file = fs::File::create(&tmp)?;
            self.write_snapshot(io::BufWriter::new(file))?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(reader: R) -> Result<Self, SnapshotError> {
        let mut reader = BufReader::new(reader);
        let header = SnapshotHeader::parse(&read_header_line(&mut reader)?)?;
        let mut payload = Vec::new();
        reader.take(header.payload_bytes + 1).read_to_end(&mut payload)?;
        if payload.len() as u64 != header.payload_bytes {
            return Err(corrupt(format!(
                "payload is {} bytes, header declares {}",
                payload.len(),
                header.payload_bytes
            )));
        }
        if hex::encode(Sha256::digest(&payload)) != header.sha256 {
            return Err(corrupt("checksum mismatch"));
        }
        if !(1..=28).contains(&header.birth_day) {
            return Err(corrupt("birth_day outside 1..=28"));
        }
        let options = StoreOptions { hop_cap: header.hop_cap, birth_day: header.birth_day };
        decode_payload(&payload, options, &header)
    }

    pub fn load(path: &Path) -> Result<Self, SnapshotError> {
        Self::read_snapshot(fs::File::open(path)?)
    }
}
