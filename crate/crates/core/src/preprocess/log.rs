//! Reader log records and their CSV + IQ blob wire format.
//!
//! One CSV row per window, antenna and tag:
//!
//! ```text
//! window_idx,timestamp_s,tag_id,antenna,i_mean,q_mean,iq_blob_path,rss_dbm,phase_rad,detected
//! ```
//!
//! `iq_blob_path` is relative to the CSV's directory and names a file of
//! little-endian `f64` values, interleaved I/Q. Undetected rows leave the
//! numeric fields and the blob path empty.

use num_complex::Complex64;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::{Error, Result};

pub const CSV_HEADER: &str =
    "window_idx,timestamp_s,tag_id,antenna,i_mean,q_mean,iq_blob_path,rss_dbm,phase_rad,detected";

#[derive(Debug, Clone)]
pub struct LogRecord {
    pub window_idx: usize,
    /// Time of the record's first snapshot.
    pub timestamp_s: f64,
    pub tag_id: String,
    /// 1 or 2.
    pub antenna: u8,
    pub i_mean: f64,
    pub q_mean: f64,
    pub iq_blob_path: String,
    pub rss_dbm: f64,
    pub phase_rad: f64,
    pub detected: bool,
    /// Snapshots referenced by `iq_blob_path`; empty when undetected.
    pub iq: Vec<Complex64>,
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

/// Field-wise equality where missing (NaN) values compare equal.
impl PartialEq for LogRecord {
    fn eq(&self, o: &Self) -> bool {
        self.window_idx == o.window_idx
            && same(self.timestamp_s, o.timestamp_s)
            && self.tag_id == o.tag_id
            && self.antenna == o.antenna
            && same(self.i_mean, o.i_mean)
            && same(self.q_mean, o.q_mean)
            && self.iq_blob_path == o.iq_blob_path
            && same(self.rss_dbm, o.rss_dbm)
            && same(self.phase_rad, o.phase_rad)
            && self.detected == o.detected
            && self.iq == o.iq
    }
}

impl LogRecord {
    /// Detected record, with means, RSS and phase derived from `iq`.
    ///
    /// RSS is `20 log10 |mean IQ| + rss_offset_db`, phase is `arg(mean IQ)`.
    pub fn detected(
        window_idx: usize,
        timestamp_s: f64,
        tag_id: &str,
        antenna: u8,
        iq: Vec<Complex64>,
        rss_offset_db: f64,
    ) -> Self {
        let mean = if iq.is_empty() {
            Complex64::new(0.0, 0.0)
        } else {
            iq.iter().sum::<Complex64>() / iq.len() as f64
        };
        Self {
            window_idx,
            timestamp_s,
            tag_id: tag_id.to_string(),
            antenna,
            i_mean: mean.re,
            q_mean: mean.im,
            iq_blob_path: blob_name(window_idx, tag_id, antenna),
            rss_dbm: 20.0 * mean.norm().log10() + rss_offset_db,
            phase_rad: mean.arg(),
            detected: true,
            iq,
        }
    }

    pub fn missed(window_idx: usize, timestamp_s: f64, tag_id: &str, antenna: u8) -> Self {
        Self {
            window_idx,
            timestamp_s,
            tag_id: tag_id.to_string(),
            antenna,
            i_mean: f64::NAN,
            q_mean: f64::NAN,
            iq_blob_path: String::new(),
            rss_dbm: f64::NAN,
            phase_rad: f64::NAN,
            detected: false,
            iq: Vec::new(),
        }
    }
}

fn blob_name(window_idx: usize, tag_id: &str, antenna: u8) -> String {
    format!("iq/w{window_idx:05}_{tag_id}_a{antenna}.bin")
}

/// Time-ordered reader observations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReaderLog {
    pub records: Vec<LogRecord>,
}

impl ReaderLog {
    pub fn new(records: Vec<LogRecord>) -> Result<Self> {
        let log = Self { records };
        log.validate()?;
        Ok(log)
    }

    pub fn validate(&self) -> Result<()> {
        let mut last = f64::NEG_INFINITY;
        for (i, r) in self.records.iter().enumerate() {
            let row = i + 1;
            if r.antenna != 1 && r.antenna != 2 {
                return Err(Error::Parse {
                    row,
                    msg: format!("unknown antenna index {}", r.antenna),
                });
            }
            if r.timestamp_s < last {
                return Err(Error::Parse {
                    row,
                    msg: format!("timestamp {} decreases (previous {last})", r.timestamp_s),
                });
            }
            last = r.timestamp_s;
        }
        Ok(())
    }

    pub fn tag_ids(&self) -> BTreeSet<String> {
        self.records.iter().map(|r| r.tag_id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            if r.detected {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},true",
                    r.window_idx,
                    r.timestamp_s,
                    r.tag_id,
                    r.antenna,
                    r.i_mean,
                    r.q_mean,
                    r.iq_blob_path,
                    r.rss_dbm,
                    r.phase_rad
                );
            } else {
                let _ = writeln!(
                    out,
                    "{},{},{},{},,,,,,false",
                    r.window_idx, r.timestamp_s, r.tag_id, r.antenna
                );
            }
        }
        out
    }

    /// Parse the CSV text; blobs are not loaded.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            Some(h) => {
                return Err(Error::Parse {
                    row: 0,
                    msg: format!("unexpected header {h:?}"),
                })
            }
            None => return Ok(Self::default()),
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            records.push(parse_row(line, row)?);
        }
        Self::new(records)
    }

    /// Write `<dir>/<name>` and every IQ blob under `<dir>`.
    pub fn write(&self, dir: &Path, name: &str) -> Result<()> {
        let blob_dir = dir.join("iq");
        fs::create_dir_all(&blob_dir).map_err(|e| Error::io(&blob_dir, e))?;
        for r in self.records.iter().filter(|r| r.detected) {
            let path = dir.join(&r.iq_blob_path);
            fs::write(&path, encode_iq(&r.iq)).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join(name);
        fs::write(&path, self.to_csv()).map_err(|e| Error::io(&path, e))
    }

    /// Read a CSV and load its blobs relative to the CSV's directory.
    pub fn read(csv_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
        let mut log = Self::parse_csv(&text)?;
        let base = csv_path.parent().unwrap_or_else(|| Path::new("."));
        for (i, r) in log.records.iter_mut().enumerate() {
            if !r.detected {
                continue;
            }
            let path = base.join(&r.iq_blob_path);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            r.iq = decode_iq(&bytes).map_err(|msg| Error::Parse { row: i + 1, msg })?;
        }
        Ok(log)
    }
}

fn parse_row(line: &str, row: usize) -> Result<LogRecord> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 10 {
        return Err(Error::Parse {
            row,
            msg: format!("expected 10 fields, found {}", fields.len()),
        });
    }
    let err = |name: &str, v: &str| Error::Parse {
        row,
        msg: format!("bad {name} {v:?}"),
    };
    let float = |name: &str, v: &str| -> Result<f64> {
        if v.is_empty() {
            Ok(f64::NAN)
        } else {
            v.parse().map_err(|_| err(name, v))
        }
    };
    let antenna: u8 = fields[3].parse().map_err(|_| err("antenna", fields[3]))?;
    if antenna != 1 && antenna != 2 {
        return Err(Error::Parse {
            row,
            msg: format!("unknown antenna index {antenna}"),
        });
    }
    let detected = match fields[9] {
        "true" | "1" => true,
        "false" | "0" => false,
        v => return Err(err("detected", v)),
    };
    Ok(LogRecord {
        window_idx: fields[0].parse().map_err(|_| err("window_idx", fields[0]))?,
        timestamp_s: float("timestamp_s", fields[1])?,
        tag_id: fields[2].to_string(),
        antenna,
        i_mean: float("i_mean", fields[4])?,
        q_mean: float("q_mean", fields[5])?,
        iq_blob_path: fields[6].to_string(),
        rss_dbm: float("rss_dbm", fields[7])?,
        phase_rad: float("phase_rad", fields[8])?,
        detected,
        iq: Vec::new(),
    })
}

pub fn encode_iq(samples: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * 16);
    for s in samples {
        out.extend_from_slice(&s.re.to_le_bytes());
        out.extend_from_slice(&s.im.to_le_bytes());
    }
    out
}

pub fn decode_iq(bytes: &[u8]) -> std::result::Result<Vec<Complex64>, String> {
    if !bytes.len().is_multiple_of(16) {
        return Err(format!("IQ blob length {} is not a multiple of 16", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect())
}
