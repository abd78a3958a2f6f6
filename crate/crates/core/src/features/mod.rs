//! Per-gesture feature vectors from RSS, phase and AoA series.

pub mod stats;
pub mod wavelet;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use crate::preprocess::TagChannels;
use crate::{Error, Result};

pub use stats::{pearson, resample_linear, stats_vector, NUM_STATS, STAT_NAMES};
pub use wavelet::{dwt, dwt_coeffs, idwt, Extension, Wavelet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Rss,
    Phase,
    Aoa,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 3] = [ChannelKind::Rss, ChannelKind::Phase, ChannelKind::Aoa];

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Rss => "rss",
            ChannelKind::Phase => "phase",
            ChannelKind::Aoa => "aoa",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Gap-free series of one tag: RSS (dB), unwrapped phase (rad) and, once
/// tracked, AoA (rad).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TagSeries {
    pub rss: Vec<f64>,
    pub phase: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aoa: Option<Vec<f64>>,
}

impl TagSeries {
    pub fn channel(&self, kind: ChannelKind) -> Option<&[f64]> {
        match kind {
            ChannelKind::Rss => Some(&self.rss),
            ChannelKind::Phase => Some(&self.phase),
            ChannelKind::Aoa => self.aoa.as_deref(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GestureSample {
    pub label: String,
    pub tags: BTreeMap<String, TagSeries>,
}

/// Unwrap a phase sequence so successive steps stay within `(-pi, pi]`.
pub fn unwrap_phase(phase: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phase.len());
    let mut offset = 0.0;
    for (i, &p) in phase.iter().enumerate() {
        if i > 0 {
            let d = p - phase[i - 1];
            offset -= 2.0 * PI * ((d + PI) / (2.0 * PI)).floor();
        }
        out.push(p + offset);
    }
    out
}

/// Fill gaps by linear interpolation, holding the nearest value at the ends.
/// An entirely missing series becomes zeros.
pub fn impute_linear(values: &[Option<f64>]) -> Vec<f64> {
    let known: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.filter(|x| x.is_finite()).map(|x| (i, x)))
        .collect();
    if known.is_empty() {
        if !values.is_empty() {
            log::warn!("series of {} values has no observations; filled with zeros", values.len());
        }
        return vec![0.0; values.len()];
    }
    let mut out = vec![0.0; values.len()];
    let mut next = 0;
    for (i, slot) in out.iter_mut().enumerate() {
        while next < known.len() && known[next].0 < i {
            next += 1;
        }
        *slot = match (next.checked_sub(1).map(|p| known[p]), known.get(next)) {
            (_, Some(&(j, v))) if j == i => v,
            (Some((i0, v0)), Some(&(i1, v1))) => v0 + (v1 - v0) * (i - i0) as f64 / (i1 - i0) as f64,
            (Some((_, v0)), None) => v0,
            (None, Some(&(_, v1))) => v1,
            (None, None) => unreachable!(),
        };
    }
    out
}

impl GestureSample {
    /// Impute missing windows; phase is unwrapped over the observed windows
    /// before the gaps are filled.
    pub fn from_channels(label: &str, channels: &BTreeMap<String, TagChannels>) -> Self {
        let tags = channels
            .iter()
            .map(|(tag, ch)| {
                let observed: Vec<f64> = ch.phase_rad.iter().flatten().copied().collect();
                let unwrapped = unwrap_phase(&observed);
                let mut it = unwrapped.into_iter();
                let phase: Vec<Option<f64>> = ch.phase_rad.iter().map(|p| p.and_then(|_| it.next())).collect();
                let series = TagSeries {
                    rss: impute_linear(&ch.rss_dbm),
                    phase: impute_linear(&phase),
                    aoa: None,
                };
                (tag.clone(), series)
            })
            .collect();
        Self {
            label: label.to_string(),
            tags,
        }
    }

    /// One series per tag (ascending id) for a channel.
    pub fn bundle(&self, kind: ChannelKind) -> Result<Vec<&[f64]>> {
        self.tags
            .iter()
            .map(|(tag, s)| {
                s.channel(kind)
                    .ok_or_else(|| Error::ConfigMismatch(format!("tag {tag} has no {kind} channel")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub enum FeatureSet {
    SP,
    SWP,
    SPR,
    SA,
    SWA,
    SPRA,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 6] = [
        FeatureSet::SP,
        FeatureSet::SWP,
        FeatureSet::SPR,
        FeatureSet::SA,
        FeatureSet::SWA,
        FeatureSet::SPRA,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::SP => "SP",
            FeatureSet::SWP => "SWP",
            FeatureSet::SPR => "SPR",
            FeatureSet::SA => "SA",
            FeatureSet::SWA => "SWA",
            FeatureSet::SPRA => "SPRA",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name().eq_ignore_ascii_case(name))
    }

    /// Channels in layout order.
    pub fn channels(self) -> &'static [ChannelKind] {
        use ChannelKind::*;
        match self {
            FeatureSet::SP | FeatureSet::SWP => &[Phase],
            FeatureSet::SPR => &[Rss, Phase],
            FeatureSet::SA | FeatureSet::SWA => &[Aoa],
            FeatureSet::SPRA => &[Rss, Phase, Aoa],
        }
    }

    pub fn wavelet(self) -> bool {
        matches!(self, FeatureSet::SWP | FeatureSet::SWA)
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub set: FeatureSet,
    pub wavelet_order: usize,
    pub levels: usize,
    /// Fixed coefficient count per series; zero-filled or truncated.
    pub wavelet_len: Option<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            set: FeatureSet::SPRA,
            wavelet_order: 4,
            levels: 2,
            wavelet_len: None,
        }
    }
}

impl FeatureConfig {
    pub fn new(set: FeatureSet) -> Self {
        Self {
            set,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub config_name: String,
    pub values: Vec<f64>,
    pub layout: Vec<String>,
}

/// Grid for the correlation terms: the AoA length when tracked, else the
/// longest included series.
fn correlation_grid(series: &[(&str, ChannelKind, &[f64])]) -> usize {
    series
        .iter()
        .find(|s| s.1 == ChannelKind::Aoa)
        .map(|s| s.2.len())
        .unwrap_or_else(|| series.iter().map(|s| s.2.len()).max().unwrap_or(0))
}

pub fn assemble_features(sample: &GestureSample, cfg: &FeatureConfig) -> Result<FeatureVector> {
    if sample.tags.is_empty() {
        return Err(Error::invalid("sample has no tags"));
    }
    let set = cfg.set;
    let wavelet = if set.wavelet() {
        Some(Wavelet::daubechies(cfg.wavelet_order)?)
    } else {
        None
    };
    let mut series = Vec::new();
    for (tag, s) in &sample.tags {
        for &kind in set.channels() {
            let v = s.channel(kind).ok_or_else(|| {
                Error::ConfigMismatch(format!(
                    "{} needs channel {kind} but tag {tag} of sample '{}' has none",
                    set.name(),
                    sample.label
                ))
            })?;
            series.push((tag.as_str(), kind, v));
        }
    }

    let mut values = Vec::new();
    let mut layout = Vec::new();
    for &(tag, kind, v) in &series {
        let st = stats_vector(v).map_err(|e| Error::invalid(format!("{tag}.{kind}: {e}")))?;
        values.extend_from_slice(&st);
        layout.extend(STAT_NAMES.iter().map(|n| format!("{tag}.{kind}.{n}")));
        if let Some(w) = &wavelet {
            let mut c = dwt_coeffs(v, w, cfg.levels, Extension::Symmetric)
                .map_err(|e| Error::invalid(format!("{tag}.{kind}: {e}")))?;
            if let Some(len) = cfg.wavelet_len {
                c.resize(len, 0.0);
            }
            layout.extend((0..c.len()).map(|i| format!("{tag}.{kind}.dwt{i}")));
            values.extend(c);
        }
    }

    let grid = correlation_grid(&series);
    let aligned: Vec<Vec<f64>> = series.iter().map(|s| resample_linear(s.2, grid)).collect();
    for i in 0..series.len() {
        for j in i + 1..series.len() {
            values.push(pearson(&aligned[i], &aligned[j])?);
            layout.push(format!(
                "corr.{}.{}.{}.{}",
                series[i].0, series[i].1, series[j].0, series[j].1
            ));
        }
    }
    Ok(FeatureVector {
        config_name: set.name().to_string(),
        values,
        layout,
    })
}

/// Feature matrix of a dataset under one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub config: FeatureConfig,
    pub layout: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

impl FeatureTable {
    /// FNV-1a over the layout names.
    pub fn layout_fingerprint(&self) -> u64 {
        layout_fingerprint(&self.layout)
    }
}

pub fn layout_fingerprint(layout: &[String]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for name in layout {
        for b in name.bytes().chain(std::iter::once(0)) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Featurize every sample with one shared layout. Wavelet coefficient
/// vectors are zero-filled to the longest one observed unless the config
/// pins a length.
pub fn featurize_dataset(samples: &[GestureSample], cfg: &FeatureConfig) -> Result<FeatureTable> {
    let mut cfg = *cfg;
    if cfg.set.wavelet() && cfg.wavelet_len.is_none() {
        let w = Wavelet::daubechies(cfg.wavelet_order)?;
        let longest = samples
            .iter()
            .flat_map(|s| s.tags.values())
            .filter_map(|t| cfg.set.channels().iter().filter_map(|&k| t.channel(k)).map(|v| v.len()).max())
            .max()
            .unwrap_or(0);
        cfg.wavelet_len = Some(wavelet::coeffs_len(longest, &w, cfg.levels, Extension::Symmetric));
    }
    let mut table = FeatureTable {
        config: cfg,
        layout: Vec::new(),
        rows: Vec::with_capacity(samples.len()),
        labels: Vec::with_capacity(samples.len()),
    };
    for (i, s) in samples.iter().enumerate() {
        let fv = assemble_features(s, &cfg).map_err(|e| match e {
            Error::ConfigMismatch(m) => Error::ConfigMismatch(format!("sample {i}: {m}")),
            other => other,
        })?;
        if i == 0 {
            table.layout = fv.layout;
        } else if fv.layout != table.layout {
            return Err(Error::ConfigMismatch(format!(
                "sample {i} ('{}') has a different tag set or layout",
                s.label
            )));
        }
        table.rows.push(fv.values);
        table.labels.push(s.label.clone());
    }
    Ok(table)
}
