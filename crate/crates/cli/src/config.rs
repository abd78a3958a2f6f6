//! Run configuration: defaults, file merge, dotted overrides and validation.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use rfid_aoa::array::ArrayGeometry;
use rfid_aoa::features::{ChannelKind, FeatureConfig, FeatureSet};
use rfid_aoa::music::MusicConfig;
use rfid_aoa::pipeline::TrackingConfig;
use rfid_aoa::sim::dataset::DatasetConfig;
use rfid_aoa::sim::gesture::GestureClass;
use rfid_aoa::sim::{MultipathConfig, SasSchedule};
use rfid_aoa::tracker::KalmanConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// LoS SNR at the reference range, dB.
    pub snr_db: f64,
    pub misdetect_prob: f64,
    pub multipath: MultipathConfig,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let d = DatasetConfig::default();
        Self {
            snr_db: d.snr_db,
            misdetect_prob: d.misdetect_prob,
            multipath: d.multipath,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetBlock {
    pub classes: Vec<GestureClass>,
    pub samples_per_class: usize,
    pub windows: usize,
    pub amplitude_jitter: f64,
    pub speed_jitter: f64,
    pub shift_jitter: f64,
    pub base_range_m: (f64, f64),
}

impl Default for DatasetBlock {
    fn default() -> Self {
        let d = DatasetConfig::default();
        Self {
            classes: d.classes,
            samples_per_class: d.samples_per_class,
            windows: d.windows,
            amplitude_jitter: d.amplitude_jitter,
            speed_jitter: d.speed_jitter,
            shift_jitter: d.shift_jitter,
            base_range_m: d.base_range_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowingConfig {
    /// Snapshots per antenna per analysis window.
    pub samples_per_window: usize,
}

impl Default for WindowingConfig {
    fn default() -> Self {
        Self {
            samples_per_window: TrackingConfig::default().samples_per_window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesBlock {
    pub sets: Vec<FeatureSet>,
    pub wavelet_order: usize,
    pub levels: usize,
}

impl Default for FeaturesBlock {
    fn default() -> Self {
        let f = FeatureConfig::default();
        Self {
            sets: FeatureSet::ALL.to_vec(),
            wavelet_order: f.wavelet_order,
            levels: f.levels,
        }
    }
}

impl FeaturesBlock {
    pub fn config(&self, set: FeatureSet) -> FeatureConfig {
        FeatureConfig {
            set,
            wavelet_order: self.wavelet_order,
            levels: self.levels,
            wavelet_len: None,
        }
    }
}

/// A classifier run: k-NN over a feature set, or DTW 1-NN over one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Knn(FeatureSet),
    Dtw(ChannelKind),
}

impl Method {
    pub fn parse(name: &str) -> Option<Self> {
        if let Some(ch) = name.strip_prefix("DTW_") {
            return ChannelKind::ALL.into_iter().find(|k| k.name() == ch).map(Method::Dtw);
        }
        FeatureSet::from_name(name).map(Method::Knn)
    }

    pub fn name(&self) -> String {
        match self {
            Method::Knn(s) => s.name().to_string(),
            Method::Dtw(k) => format!("DTW_{}", k.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    /// Feature set names for k-NN, or `DTW_rss`, `DTW_phase`, `DTW_aoa`.
    pub methods: Vec<String>,
    pub k: usize,
    pub train_fraction: f64,
    /// Defaults to the run seed.
    pub split_seed: Option<u64>,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            methods: ["SPR", "SPRA", "DTW_phase", "DTW_aoa"].map(String::from).to_vec(),
            k: 5,
            train_fraction: 0.7,
            split_seed: None,
        }
    }
}

impl ClassifyConfig {
    pub fn parsed_methods(&self) -> Vec<Method> {
        self.methods.iter().filter_map(|m| Method::parse(m)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub geometry: ArrayGeometry,
    pub schedule: SasSchedule,
    pub scene: SceneConfig,
    pub dataset: DatasetBlock,
    pub windowing: WindowingConfig,
    pub music: MusicConfig,
    pub kalman: KalmanConfig,
    pub features: FeaturesBlock,
    pub classify: ClassifyConfig,
    /// Output directory. Not part of the config hash.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
}


fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// Apply `a.b.c=value`; the value is read as JSON, falling back to a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("--set expects key=value, got '{assignment}'")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Validation(format!("--set: malformed key '{key}'")));
    }
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Validation(format!("--set {key}: '{}' is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!()
}

impl RunConfig {
    /// Defaults, then the config file, then `--set` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut root = serde_json::to_value(RunConfig::default()).expect("default config serializes");
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?;
            let file: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("config {}: {e}", p.display())))?;
            if !file.is_object() {
                return Err(CliError::Validation(format!("config {}: expected a JSON object", p.display())));
            }
            merge(&mut root, file);
        }
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(root).map_err(|e| {
            let path = e.path().to_string();
            CliError::Validation(format!("config at '{path}': {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        fn at(block: &'static str) -> impl Fn(rfid_aoa::Error) -> CliError {
            move |e| CliError::Validation(format!("config at '{block}': {e}"))
        }
        self.geometry.validate().map_err(at("geometry"))?;
        self.schedule.validate().map_err(at("schedule"))?;
        self.music.validate(&self.geometry).map_err(at("music"))?;
        self.kalman.validate().map_err(at("kalman"))?;
        self.dataset_config().validate().map_err(at("dataset"))?;
        let w = self.windowing.samples_per_window;
        if w < 4 || !w.is_multiple_of(2) {
            return Err(CliError::Validation(format!(
                "config at 'windowing.samples_per_window': must be even and >= 4, got {w}"
            )));
        }
        let f = &self.features;
        if !(1..=4).contains(&f.wavelet_order) {
            return Err(CliError::Validation(format!(
                "config at 'features.wavelet_order': expected 1..=4, got {}",
                f.wavelet_order
            )));
        }
        if f.levels == 0 {
            return Err(CliError::Validation("config at 'features.levels': must be >= 1".into()));
        }
        let c = &self.classify;
        for (i, m) in c.methods.iter().enumerate() {
            match Method::parse(m) {
                None => {
                    return Err(CliError::Validation(format!(
                        "config at 'classify.methods[{i}]': unknown method '{m}'"
                    )))
                }
                Some(Method::Knn(s)) if !f.sets.contains(&s) => {
                    return Err(CliError::Validation(format!(
                        "config at 'classify.methods[{i}]': feature set {s} is not listed in features.sets"
                    )))
                }
                _ => {}
            }
        }
        if c.k == 0 {
            return Err(CliError::Validation("config at 'classify.k': must be >= 1".into()));
        }
        if !(c.train_fraction > 0.0 && c.train_fraction < 1.0) {
            return Err(CliError::Validation(format!(
                "config at 'classify.train_fraction': expected (0, 1), got {}",
                c.train_fraction
            )));
        }
        Ok(())
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        let d = &self.dataset;
        DatasetConfig {
            classes: d.classes.clone(),
            samples_per_class: d.samples_per_class,
            snr_db: self.scene.snr_db,
            misdetect_prob: self.scene.misdetect_prob,
            windows: d.windows,
            multipath: self.scene.multipath,
            amplitude_jitter: d.amplitude_jitter,
            speed_jitter: d.speed_jitter,
            shift_jitter: d.shift_jitter,
            base_range_m: d.base_range_m,
        }
    }

    pub fn tracking(&self) -> TrackingConfig {
        TrackingConfig {
            samples_per_window: self.windowing.samples_per_window,
            music: self.music,
            kalman: self.kalman,
            reference: None,
        }
    }

    pub fn split_seed(&self) -> u64 {
        self.classify.split_seed.unwrap_or(self.seed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the pretty JSON form, hex.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_json().as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
