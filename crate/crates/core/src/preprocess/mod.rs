//! Reader log preprocessing: per-tag split, single-antenna pruning and
//! non-overlapping windowing.
//!
//! Snapshot `j` of a record in log window `w` has the per-tag snapshot index
//! `k = w * block_len + j`, where `block_len` is the longest IQ blob in the
//! tag's stream. Analysis windows tile that index axis, so log windows that
//! were lost or pruned leave gaps instead of shifting later windows.

mod log;

pub use self::log::{decode_iq, encode_iq, LogRecord, ReaderLog, CSV_HEADER};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// Snapshots per antenna in one analysis window.
pub const DEFAULT_SAMPLES_PER_WINDOW: usize = 50;

/// One tag's paired snapshots from both antennas over one window.
#[derive(Debug, Clone, PartialEq)]
pub struct IqWindow {
    pub tag_id: String,
    pub window_idx: usize,
    /// Row `m` holds antenna `m + 1`. Columns are paired in time; a missing
    /// antenna leaves its row empty.
    pub rows: [Vec<Complex64>; 2],
    /// Per-tag snapshot index of each column.
    pub snapshot_index: Vec<u64>,
    pub midpoint_time_s: f64,
    pub complete: bool,
}

impl IqWindow {
    /// Window from two equally long rows; complete when both have at least
    /// two snapshots.
    pub fn new(
        tag_id: impl Into<String>,
        window_idx: usize,
        row1: Vec<Complex64>,
        row2: Vec<Complex64>,
        midpoint_time_s: f64,
    ) -> Self {
        let complete = row1.len() >= 2 && row1.len() == row2.len();
        let n = row1.len().max(row2.len()) as u64;
        Self {
            tag_id: tag_id.into(),
            window_idx,
            rows: [row1, row2],
            snapshot_index: (0..n).collect(),
            midpoint_time_s,
            complete,
        }
    }

    pub fn num_snapshots(&self) -> usize {
        if self.complete {
            self.rows[0].len()
        } else {
            0
        }
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let mut w = self.clone();
        for row in &mut w.rows {
            for v in row.iter_mut() {
                *v *= c;
            }
        }
        w
    }
}

/// Windows of one tag, plus the tracker's scalar time step.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedStream {
    pub tag_id: String,
    pub windows: Vec<IqWindow>,
    /// Mean midpoint spacing, seconds.
    pub dt: f64,
}

impl WindowedStream {
    pub fn per_window_dt(&self) -> Vec<f64> {
        self.windows
            .windows(2)
            .map(|p| p[1].midpoint_time_s - p[0].midpoint_time_s)
            .collect()
    }
}

/// Partition a log into per-tag streams, keeping time order.
pub fn split_by_tag(log: &ReaderLog) -> Result<BTreeMap<String, Vec<LogRecord>>> {
    let mut out: BTreeMap<String, Vec<LogRecord>> = BTreeMap::new();
    for (i, r) in log.records.iter().enumerate() {
        if r.antenna != 1 && r.antenna != 2 {
            return Err(Error::Parse {
                row: i + 1,
                msg: format!("unknown antenna index {}", r.antenna),
            });
        }
        out.entry(r.tag_id.clone()).or_default().push(r.clone());
    }
    Ok(out)
}

/// Drop every row of a log window in which only one antenna detected the tag.
pub fn prune_single_antenna_segments(stream: &[LogRecord]) -> Vec<LogRecord> {
    let mut seen: HashMap<usize, [bool; 2]> = HashMap::new();
    for r in stream.iter().filter(|r| r.detected) {
        seen.entry(r.window_idx).or_default()[(r.antenna - 1) as usize] = true;
    }
    stream
        .iter()
        .filter(|r| match seen.get(&r.window_idx) {
            Some([a, b]) => a == b,
            None => true,
        })
        .cloned()
        .collect()
}

/// Timing of a per-tag snapshot axis.
#[derive(Debug, Clone, Copy)]
struct SnapshotClock {
    origin_s: f64,
    period_s: f64,
}

fn estimate_clock(stream: &[LogRecord], block_len: usize) -> SnapshotClock {
    let mut slopes = Vec::new();
    let mut origins = Vec::new();
    for antenna in [1u8, 2] {
        let recs: Vec<&LogRecord> = stream
            .iter()
            .filter(|r| r.antenna == antenna && r.timestamp_s.is_finite())
            .collect();
        for p in recs.windows(2) {
            let dw = p[1].window_idx as f64 - p[0].window_idx as f64;
            if dw > 0.0 {
                slopes.push((p[1].timestamp_s - p[0].timestamp_s) / (dw * block_len as f64));
            }
        }
        if let Some(r) = recs.first() {
            origins.push((r.timestamp_s, r.window_idx));
        }
    }
    slopes.sort_by(f64::total_cmp);
    let period_s = if slopes.is_empty() {
        1.0 / block_len as f64
    } else {
        slopes[slopes.len() / 2]
    };
    let origin_s = if origins.is_empty() {
        0.0
    } else {
        origins
            .iter()
            .map(|&(t, w)| t - (w * block_len) as f64 * period_s)
            .sum::<f64>()
            / origins.len() as f64
    };
    SnapshotClock { origin_s, period_s }
}

/// Cut a pruned per-tag stream into non-overlapping windows of
/// `samples_per_window` snapshots per antenna.
///
/// A trailing remainder is kept only when longer than half a window. Windows
/// without at least two paired snapshots are returned with
/// `complete == false` so the tracker sees them as missing measurements.
pub fn window_segments(stream: &[LogRecord], samples_per_window: usize) -> Result<WindowedStream> {
    if samples_per_window < 4 || !samples_per_window.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "samples_per_window must be even and >= 4, got {samples_per_window}"
        )));
    }
    let tag_id = stream.first().map(|r| r.tag_id.clone()).unwrap_or_default();
    let block_len = stream
        .iter()
        .filter(|r| r.detected)
        .map(|r| r.iq.len())
        .max()
        .unwrap_or(0);
    if block_len == 0 {
        return Ok(WindowedStream {
            tag_id,
            windows: Vec::new(),
            dt: 0.0,
        });
    }
    let max_window = stream.iter().map(|r| r.window_idx).max().unwrap_or(0);
    let span = ((max_window + 1) * block_len) as u64;
    let w = samples_per_window as u64;
    let mut count = span / w;
    if span % w > w / 2 {
        count += 1;
    }

    let mut by_antenna: [BTreeMap<u64, Complex64>; 2] = [BTreeMap::new(), BTreeMap::new()];
    for r in stream.iter().filter(|r| r.detected) {
        let base = (r.window_idx * block_len) as u64;
        let map = &mut by_antenna[(r.antenna - 1) as usize];
        for (j, &v) in r.iq.iter().enumerate() {
            map.insert(base + j as u64, v);
        }
    }

    let clock = estimate_clock(stream, block_len);
    let mut windows = Vec::with_capacity(count as usize);
    for idx in 0..count {
        let lo = idx * w;
        let hi = ((idx + 1) * w).min(span);
        let mut rows = [Vec::new(), Vec::new()];
        let mut snapshot_index = Vec::new();
        for (&k, &v1) in by_antenna[0].range(lo..hi) {
            if let Some(&v2) = by_antenna[1].get(&k) {
                rows[0].push(v1);
                rows[1].push(v2);
                snapshot_index.push(k);
            }
        }
        let complete = rows[0].len() >= 2;
        if !complete {
            rows = [Vec::new(), Vec::new()];
            snapshot_index.clear();
        }
        let mid_k = (lo as f64 + hi as f64 - 1.0) / 2.0;
        windows.push(IqWindow {
            tag_id: tag_id.clone(),
            window_idx: idx as usize,
            rows,
            snapshot_index,
            midpoint_time_s: clock.origin_s + mid_k * clock.period_s,
            complete,
        });
    }
    let dt = if windows.len() >= 2 {
        (windows[windows.len() - 1].midpoint_time_s - windows[0].midpoint_time_s)
            / (windows.len() - 1) as f64
    } else {
        samples_per_window as f64 * clock.period_s
    };
    Ok(WindowedStream {
        tag_id,
        windows,
        dt,
    })
}

/// Split, prune and window a whole log.
pub fn preprocess_log(
    log: &ReaderLog,
    samples_per_window: usize,
) -> Result<BTreeMap<String, WindowedStream>> {
    split_by_tag(log)?
        .into_iter()
        .map(|(tag, stream)| {
            let pruned = prune_single_antenna_segments(&stream);
            Ok((tag, window_segments(&pruned, samples_per_window)?))
        })
        .collect()
}

/// Per-log-window RSS and phase of one tag, taken from antenna 1 after
/// pruning; `None` where the window is missing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TagChannels {
    pub window_idx: Vec<usize>,
    pub rss_dbm: Vec<Option<f64>>,
    pub phase_rad: Vec<Option<f64>>,
}

pub fn derive_channels(log: &ReaderLog) -> Result<BTreeMap<String, TagChannels>> {
    let mut out = BTreeMap::new();
    for (tag, stream) in split_by_tag(log)? {
        let pruned = prune_single_antenna_segments(&stream);
        let n = stream.iter().map(|r| r.window_idx + 1).max().unwrap_or(0);
        let mut ch = TagChannels {
            window_idx: (0..n).collect(),
            rss_dbm: vec![None; n],
            phase_rad: vec![None; n],
        };
        for r in pruned.iter().filter(|r| r.detected && r.antenna == 1) {
            ch.rss_dbm[r.window_idx] = Some(r.rss_dbm);
            ch.phase_rad[r.window_idx] = Some(r.phase_rad);
        }
        out.insert(tag, ch);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowIndexEntry {
    pub tag_id: String,
    pub window_idx: usize,
    pub midpoint_time_s: f64,
    pub complete: bool,
    pub columns: usize,
    /// Row 1 then row 2, interleaved I/Q little-endian `f64`; empty when incomplete.
    pub blob: String,
    pub snapshot_index: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowIndex {
    pub samples_per_window: usize,
    pub dt: BTreeMap<String, f64>,
    pub windows: Vec<WindowIndexEntry>,
}

/// Write one blob per complete window under `dir/` plus `dir/index.json`.
pub fn write_windows(
    dir: &Path,
    streams: &BTreeMap<String, WindowedStream>,
    samples_per_window: usize,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = WindowIndex {
        samples_per_window,
        dt: BTreeMap::new(),
        windows: Vec::new(),
    };
    for (tag, s) in streams {
        index.dt.insert(tag.clone(), s.dt);
        for w in &s.windows {
            let blob = if w.complete {
                let name = format!("{tag}_w{:05}.bin", w.window_idx);
                let mut bytes = encode_iq(&w.rows[0]);
                bytes.extend(encode_iq(&w.rows[1]));
                let path = dir.join(&name);
                fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
                name
            } else {
                String::new()
            };
            index.windows.push(WindowIndexEntry {
                tag_id: tag.clone(),
                window_idx: w.window_idx,
                midpoint_time_s: w.midpoint_time_s,
                complete: w.complete,
                columns: w.rows[0].len(),
                blob,
                snapshot_index: w.snapshot_index.clone(),
            });
        }
    }
    let path = dir.join("index.json");
    let json = serde_json::to_string_pretty(&index)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn read_windows(index_path: &Path) -> Result<BTreeMap<String, WindowedStream>> {
    let text = fs::read_to_string(index_path).map_err(|e| Error::io(index_path, e))?;
    let index: WindowIndex = serde_json::from_str(&text)?;
    let base = index_path.parent().unwrap_or_else(|| Path::new("."));
    let mut out: BTreeMap<String, WindowedStream> = BTreeMap::new();
    for (row, e) in index.windows.into_iter().enumerate() {
        let mut rows = [Vec::new(), Vec::new()];
        if e.complete {
            let path = base.join(&e.blob);
            let bytes = fs::read(&path).map_err(|err| Error::io(&path, err))?;
            let all = decode_iq(&bytes).map_err(|msg| Error::Parse { row: row + 1, msg })?;
            if all.len() != 2 * e.columns {
                return Err(Error::Parse {
                    row: row + 1,
                    msg: format!("blob has {} samples, expected {}", all.len(), 2 * e.columns),
                });
            }
            rows = [all[..e.columns].to_vec(), all[e.columns..].to_vec()];
        }
        let dt = index.dt.get(&e.tag_id).copied().unwrap_or(0.0);
        out.entry(e.tag_id.clone())
            .or_insert_with(|| WindowedStream {
                tag_id: e.tag_id.clone(),
                windows: Vec::new(),
                dt,
            })
            .windows
            .push(IqWindow {
                tag_id: e.tag_id,
                window_idx: e.window_idx,
                rows,
                snapshot_index: e.snapshot_index,
                midpoint_time_s: e.midpoint_time_s,
                complete: e.complete,
            });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    /// Stream of `n_windows` log windows with `block` snapshots per antenna.
    fn stream(tag: &str, n_windows: usize, block: usize, missing: &[(usize, u8)]) -> Vec<LogRecord> {
        let mut out = Vec::new();
        for w in 0..n_windows {
            for a in [1u8, 2] {
                let t = (w * block) as f64 * 0.01 + a as f64 * 1e-4;
                if missing.contains(&(w, a)) {
                    out.push(LogRecord::missed(w, t, tag, a));
                } else {
                    let iq = (0..block).map(|j| c((w * block + j) as f64 + 1.0)).collect();
                    out.push(LogRecord::detected(w, t, tag, a, iq, 0.0));
                }
            }
        }
        out
    }

    #[test]
    fn split_examples() {
        let mut recs = stream("A", 3, 4, &[]);
        recs.extend(stream("B", 2, 4, &[]));
        recs.sort_by(|a, b| a.timestamp_s.total_cmp(&b.timestamp_s));
        let log = ReaderLog::new(recs).unwrap();
        let parts = split_by_tag(&log).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts["A"].len() + parts["B"].len(), log.len());
        for s in parts.values() {
            assert!(s.windows(2).all(|p| p[0].timestamp_s <= p[1].timestamp_s));
        }

        assert!(split_by_tag(&ReaderLog::default()).unwrap().is_empty());

        let single = ReaderLog::new(stream("A", 2, 4, &[])).unwrap();
        let parts = split_by_tag(&single).unwrap();
        assert_eq!(parts["A"], single.records);
    }

    #[test]
    fn split_rejects_bad_antenna() {
        let mut log = ReaderLog::new(stream("A", 2, 4, &[])).unwrap();
        log.records[3].antenna = 7;
        assert!(matches!(split_by_tag(&log), Err(Error::Parse { row: 4, .. })));
    }

    #[test]
    fn prune_examples() {
        let s = stream("A", 4, 4, &[(1, 2)]);
        let pruned = prune_single_antenna_segments(&s);
        assert!(pruned.iter().all(|r| r.window_idx != 1));
        assert_eq!(pruned.len(), s.len() - 2);

        let full = stream("A", 4, 4, &[]);
        assert_eq!(prune_single_antenna_segments(&full), full);

        // Both antennas lost: nothing to discard.
        let both = stream("A", 3, 4, &[(1, 1), (1, 2)]);
        assert_eq!(prune_single_antenna_segments(&both), both);
    }

    #[test]
    fn window_counts() {
        // 100 snapshots, window 20 -> 5 disjoint windows.
        let s = stream("A", 10, 10, &[]);
        let ws = window_segments(&s, 20).unwrap();
        assert_eq!(ws.windows.len(), 5);
        for p in ws.windows.windows(2) {
            assert!(p[0].snapshot_index.last() < p[1].snapshot_index.first());
        }
        // 105 snapshots: 5-sample tail dropped.
        let s = stream("A", 21, 5, &[]);
        assert_eq!(window_segments(&s, 20).unwrap().windows.len(), 5);
        // Tail longer than half a window is kept.
        let s = stream("A", 23, 5, &[]);
        assert_eq!(window_segments(&s, 20).unwrap().windows.len(), 6);
        // 10 snapshots, window 20 -> nothing.
        let s = stream("A", 2, 5, &[]);
        assert!(window_segments(&s, 20).unwrap().windows.is_empty());
        assert!(window_segments(&s, 7).is_err());
        assert!(window_segments(&s, 2).is_err());
    }

    #[test]
    fn missing_windows_are_flagged_not_dropped() {
        let s = prune_single_antenna_segments(&stream("A", 6, 10, &[(2, 1)]));
        let ws = window_segments(&s, 10).unwrap();
        assert_eq!(ws.windows.len(), 6);
        assert!(!ws.windows[2].complete);
        assert!(ws.windows.iter().enumerate().all(|(i, w)| w.complete == (i != 2)));
        assert!((ws.dt - 0.1).abs() < 1e-9, "dt = {}", ws.dt);
        let steps = ws.per_window_dt();
        assert!(steps.iter().all(|d| (d - 0.1).abs() < 1e-9));
    }

    #[test]
    fn windows_round_trip_through_blobs() {
        let s = stream("A", 4, 10, &[(1, 1), (1, 2)]);
        let mut streams = BTreeMap::new();
        streams.insert("A".to_string(), window_segments(&s, 10).unwrap());
        let dir = tempfile::tempdir().unwrap();
        write_windows(dir.path(), &streams, 10).unwrap();
        let back = read_windows(&dir.path().join("index.json")).unwrap();
        assert_eq!(back, streams);
    }

    #[test]
    fn channels_use_antenna_one() {
        let log = ReaderLog::new(stream("A", 4, 4, &[(1, 2), (3, 1)])).unwrap();
        let ch = derive_channels(&log).unwrap();
        let a = &ch["A"];
        assert_eq!(a.rss_dbm.len(), 4);
        assert!(a.rss_dbm[0].is_some());
        assert!(a.rss_dbm[1].is_none());
        assert!(a.rss_dbm[3].is_none());
    }
}
