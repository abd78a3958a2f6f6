//! Reader log to per-tag smoothed AoA tracks and feature-ready samples.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::array::ArrayGeometry;
use crate::features::GestureSample;
use crate::music::{compensate_reference, estimate_aoa, AoAMeasurement, MusicConfig};
use crate::preprocess::{derive_channels, preprocess_log, ReaderLog, WindowedStream, DEFAULT_SAMPLES_PER_WINDOW};
use crate::sim::ReferenceSignal;
use crate::tracker::{track_sequence, AoATrack, KalmanConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackingConfig {
    pub samples_per_window: usize,
    pub music: MusicConfig,
    pub kalman: KalmanConfig,
    /// Known transmit reference to divide out before MUSIC. Tag ordinals
    /// follow ascending tag id.
    pub reference: Option<ReferenceSignal>,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            samples_per_window: DEFAULT_SAMPLES_PER_WINDOW,
            music: MusicConfig::default(),
            kalman: KalmanConfig::default(),
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagTrack {
    pub tag_id: String,
    pub midpoint_s: Vec<f64>,
    pub measurements: Vec<AoAMeasurement>,
    pub track: AoATrack,
}

impl TagTrack {
    pub fn raw_theta(&self) -> Vec<Option<f64>> {
        self.measurements.iter().map(|m| m.valid.then_some(m.theta_hat)).collect()
    }
}

/// MUSIC over every window of one stream.
pub fn measure_stream(
    stream: &WindowedStream,
    geometry: &ArrayGeometry,
    cfg: &TrackingConfig,
    ordinal: usize,
) -> Result<Vec<AoAMeasurement>> {
    stream
        .windows
        .iter()
        .map(|w| {
            let m = match &cfg.reference {
                Some(r) if w.complete => estimate_aoa(&compensate_reference(w, r, ordinal), geometry, &cfg.music),
                _ => estimate_aoa(w, geometry, &cfg.music),
            };
            m.map_err(|e| attach(e, &stream.tag_id, w.window_idx))
        })
        .collect()
}

fn attach(e: Error, tag: &str, window: usize) -> Error {
    match e {
        Error::Context { tag: t, window: w, source } if t.is_empty() => Error::Context {
            tag: tag.to_string(),
            window: w,
            source,
        },
        e @ Error::Context { .. } => e,
        e => e.with_context(tag, window),
    }
}

fn stream_dt(stream: &WindowedStream, kalman: &KalmanConfig) -> f64 {
    if let Some(dt) = kalman.dt {
        return dt;
    }
    if stream.dt > 0.0 && stream.dt.is_finite() {
        stream.dt
    } else {
        1.0
    }
}

/// Tracks of already windowed streams.
pub fn track_streams(
    streams: &BTreeMap<String, WindowedStream>,
    geometry: &ArrayGeometry,
    cfg: &TrackingConfig,
) -> Result<BTreeMap<String, TagTrack>> {
    geometry.validate()?;
    cfg.music.validate(geometry)?;
    let mut out = BTreeMap::new();
    for (rank, (tag, stream)) in streams.iter().enumerate() {
        let measurements = measure_stream(stream, geometry, cfg, rank + 1)?;
        let midpoints = stream.windows.iter().map(|w| w.midpoint_time_s).collect();
        let track = track_measurements(tag, midpoints, measurements, stream_dt(stream, &cfg.kalman), &cfg.kalman)?;
        out.insert(tag.clone(), track);
    }
    Ok(out)
}

/// Filter and smooth already estimated windows of one tag. `kalman.dt`
/// takes precedence over `dt` when set.
pub fn track_measurements(
    tag: &str,
    midpoint_s: Vec<f64>,
    measurements: Vec<AoAMeasurement>,
    dt: f64,
    kalman: &KalmanConfig,
) -> Result<TagTrack> {
    let z: Vec<Option<f64>> = measurements.iter().map(|m| m.valid.then_some(m.theta_hat)).collect();
    let kalman = kalman.with_dt(kalman.dt.unwrap_or(dt));
    let track = track_sequence(&z, &kalman).map_err(|e| attach(e, tag, 0))?;
    Ok(TagTrack {
        tag_id: tag.to_string(),
        midpoint_s,
        measurements,
        track,
    })
}

/// Preprocess, measure, filter and smooth every tag of a log.
pub fn track_aoa(log: &ReaderLog, geometry: &ArrayGeometry, cfg: &TrackingConfig) -> Result<BTreeMap<String, TagTrack>> {
    let streams = preprocess_log(log, cfg.samples_per_window)?;
    track_streams(&streams, geometry, cfg)
}

/// RSS/phase channels of a log with the smoothed AoA attached.
pub fn build_sample(
    log: &ReaderLog,
    label: &str,
    geometry: &ArrayGeometry,
    cfg: &TrackingConfig,
) -> Result<(GestureSample, BTreeMap<String, TagTrack>)> {
    let tracks = track_aoa(log, geometry, cfg)?;
    let mut sample = GestureSample::from_channels(label, &derive_channels(log)?);
    attach_aoa(&mut sample, &tracks);
    Ok((sample, tracks))
}

pub fn attach_aoa(sample: &mut GestureSample, tracks: &BTreeMap<String, TagTrack>) {
    for (tag, series) in sample.tags.iter_mut() {
        series.aoa = tracks.get(tag).map(|t| t.track.smoothed_theta());
    }
}

/// Plot-ready view of one track, angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSummary {
    pub tag_id: String,
    pub dt_s: f64,
    pub time_s: Vec<f64>,
    pub raw_deg: Vec<Option<f64>>,
    pub filtered_deg: Vec<f64>,
    pub smoothed_deg: Vec<f64>,
    pub smoothed_rad: Vec<f64>,
    pub filtered_cov_trace: Vec<f64>,
    pub smoothed_cov_trace: Vec<f64>,
    pub missing: Vec<bool>,
    pub low_confidence: bool,
}

impl From<&TagTrack> for TrackSummary {
    fn from(t: &TagTrack) -> Self {
        let tr = &t.track;
        Self {
            tag_id: t.tag_id.clone(),
            dt_s: tr.dt,
            time_s: t.midpoint_s.clone(),
            raw_deg: t.raw_theta().iter().map(|v| v.map(f64::to_degrees)).collect(),
            filtered_deg: tr.filtered_theta().into_iter().map(f64::to_degrees).collect(),
            smoothed_deg: tr.smoothed_theta().into_iter().map(f64::to_degrees).collect(),
            smoothed_rad: tr.smoothed_theta(),
            filtered_cov_trace: tr.post_cov.iter().map(|p| p.trace()).collect(),
            smoothed_cov_trace: tr.smoothed_cov.iter().map(|p| p.trace()).collect(),
            missing: tr.measurements.iter().map(|m| m.is_none()).collect(),
            low_confidence: tr.low_confidence,
        }
    }
}
