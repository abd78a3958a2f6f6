//! Pipeline stages. Each reads its inputs from and writes its outputs to
//! the output directory, so stages can be rerun one at a time.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rfid_aoa::classify::{
    class_set, dtw_split_predict, knn_split_predict, stratified_split, EvalReport, Predictions, Split,
};
use rfid_aoa::features::{featurize_dataset, FeatureConfig, FeatureSet, GestureSample, TagSeries};
use rfid_aoa::music::AoAMeasurement;
use rfid_aoa::pipeline::{measure_stream, track_aoa, track_measurements, TagTrack, TrackSummary};
use rfid_aoa::preprocess::{derive_channels, preprocess_log, read_windows, write_windows, ReaderLog, TagChannels, WindowIndex};
use rfid_aoa::sim::dataset::synthesize;

use crate::artifacts::{fmt_opt, parse_opt, read_csv, read_json, write_csv, write_json, Stamp};
use crate::config::{Method, RunConfig};

pub struct Ctx {
    pub cfg: RunConfig,
    pub hash: String,
    pub out: PathBuf,
}

impl Ctx {
    pub fn new(cfg: RunConfig, out: PathBuf) -> Self {
        Self {
            hash: cfg.hash(),
            cfg,
            out,
        }
    }

    pub fn stamp(&self) -> Stamp {
        Stamp {
            config_hash: self.hash.clone(),
            seed: self.cfg.seed,
        }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: usize,
    pub label: String,
    pub seed: u64,
    pub dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetIndex {
    #[serde(flatten)]
    pub stamp: Stamp,
    pub samples: Vec<SampleEntry>,
}

fn load_dataset(ctx: &Ctx) -> Result<DatasetIndex> {
    let index: DatasetIndex = read_json(&ctx.path("dataset.json")).context("run `simulate` first")?;
    if index.stamp.config_hash != ctx.hash {
        log::warn!("dataset.json was produced by config {}, current is {}", index.stamp.config_hash, ctx.hash);
    }
    Ok(index)
}

pub fn simulate(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;
    // Drop samples left by an earlier run of a different size.
    let samples_dir = ctx.path("samples");
    if ctx.path("dataset.json").exists() && samples_dir.exists() {
        fs::remove_dir_all(&samples_dir).with_context(|| format!("clearing {}", samples_dir.display()))?;
    }
    fs::write(ctx.path("config.json"), cfg.to_json() + "\n").context("writing config.json")?;
    let data = synthesize(&cfg.dataset_config(), cfg.geometry, &cfg.schedule, cfg.seed)?;
    let mut entries = Vec::with_capacity(data.len());
    for d in &data {
        let dir = format!("samples/{:05}", d.id);
        let abs = ctx.path(&dir);
        d.recording
            .log
            .write(&abs, "reader_log.csv")
            .with_context(|| format!("sample {}", d.id))?;
        write_json(&abs.join("truth.json"), &d.recording.truth)?;
        entries.push(SampleEntry {
            id: d.id,
            label: d.class.name().to_string(),
            seed: d.seed,
            dir,
        });
    }
    log::info!("simulated {} samples", entries.len());
    write_json(
        &ctx.path("dataset.json"),
        &DatasetIndex {
            stamp: ctx.stamp(),
            samples: entries,
        },
    )
}

fn channels_rows(channels: &BTreeMap<String, TagChannels>) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (tag, ch) in channels {
        for (i, w) in ch.window_idx.iter().enumerate() {
            rows.push(vec![tag.clone(), w.to_string(), fmt_opt(ch.rss_dbm[i]), fmt_opt(ch.phase_rad[i])]);
        }
    }
    rows
}

pub fn read_channels(path: &Path) -> Result<BTreeMap<String, TagChannels>> {
    let (_, rows) = read_csv(path)?;
    let mut out: BTreeMap<String, TagChannels> = BTreeMap::new();
    for r in rows {
        if r.len() != 4 {
            bail!("{}: expected 4 columns, got {}", path.display(), r.len());
        }
        let ch = out.entry(r[0].clone()).or_default();
        ch.window_idx.push(r[1].parse().with_context(|| format!("{}: window_idx", path.display()))?);
        ch.rss_dbm.push(parse_opt(&r[2])?);
        ch.phase_rad.push(parse_opt(&r[3])?);
    }
    Ok(out)
}

pub const MEASUREMENTS_HEADER: [&str; 5] = ["tag_id", "window_idx", "theta_deg", "peak", "valid"];

/// MUSIC per window; writes `windows/`, `channels.csv`, `measurements.csv`.
pub fn estimate(ctx: &Ctx) -> Result<()> {
    let dataset = load_dataset(ctx)?;
    let tracking = ctx.cfg.tracking();
    let spw = tracking.samples_per_window;
    for s in &dataset.samples {
        let dir = ctx.path(&s.dir);
        let log = ReaderLog::read(&dir.join("reader_log.csv"))?;
        let streams = preprocess_log(&log, spw).with_context(|| format!("sample {}", s.id))?;
        let windows = dir.join("windows");
        if windows.exists() {
            fs::remove_dir_all(&windows)?;
        }
        write_windows(&windows, &streams, spw)?;
        let header = ["tag_id", "window_idx", "rss_dbm", "phase_rad"].map(String::from);
        write_csv(&dir.join("channels.csv"), &header, &channels_rows(&derive_channels(&log)?))?;

        let streams = read_windows(&windows.join("index.json"))?;
        let mut rows = Vec::new();
        for (rank, (tag, stream)) in streams.iter().enumerate() {
            let ms = measure_stream(stream, &ctx.cfg.geometry, &tracking, rank + 1)
                .with_context(|| format!("sample {}", s.id))?;
            for m in ms {
                let (theta, peak) = if m.valid {
                    (m.theta_hat.to_degrees().to_string(), m.spectrum_peak.to_string())
                } else {
                    (String::new(), String::new())
                };
                rows.push(vec![tag.clone(), m.window_idx.to_string(), theta, peak, m.valid.to_string()]);
            }
        }
        write_csv(&dir.join("measurements.csv"), &MEASUREMENTS_HEADER.map(String::from), &rows)?;
    }
    Ok(())
}

pub fn read_measurements(path: &Path) -> Result<BTreeMap<String, Vec<AoAMeasurement>>> {
    let (header, rows) = read_csv(path)?;
    if header != MEASUREMENTS_HEADER {
        bail!("{}: unexpected header {:?}", path.display(), header);
    }
    let mut out: BTreeMap<String, Vec<AoAMeasurement>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let ctx = || format!("{} row {}", path.display(), i + 1);
        let valid: bool = r[4].parse().with_context(ctx)?;
        let theta = parse_opt(&r[2]).with_context(ctx)?;
        if valid && theta.is_none() {
            bail!("{}: valid window without an angle", ctx());
        }
        out.entry(r[0].clone()).or_default().push(AoAMeasurement {
            window_idx: r[1].parse().with_context(ctx)?,
            theta_hat: theta.map(f64::to_radians).unwrap_or(f64::NAN),
            spectrum_peak: parse_opt(&r[3]).with_context(ctx)?.unwrap_or(f64::NAN),
            valid,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TracksFile {
    #[serde(flatten)]
    pub stamp: Stamp,
    pub tracks: Vec<TrackSummary>,
}

/// Tracks from `measurements.csv` when present, else straight from the log.
fn sample_tracks(ctx: &Ctx, dir: &Path) -> Result<BTreeMap<String, TagTrack>> {
    let meas_path = dir.join("measurements.csv");
    if !meas_path.exists() {
        let log = ReaderLog::read(&dir.join("reader_log.csv"))?;
        return Ok(track_aoa(&log, &ctx.cfg.geometry, &ctx.cfg.tracking())?);
    }
    let index: WindowIndex = read_json(&dir.join("windows/index.json"))?;
    let mut midpoints: BTreeMap<&str, BTreeMap<usize, f64>> = BTreeMap::new();
    for w in &index.windows {
        midpoints.entry(&w.tag_id).or_default().insert(w.window_idx, w.midpoint_time_s);
    }
    let mut out = BTreeMap::new();
    for (tag, ms) in read_measurements(&meas_path)? {
        let times = ms
            .iter()
            .map(|m| {
                midpoints
                    .get(tag.as_str())
                    .and_then(|t| t.get(&m.window_idx))
                    .copied()
                    .ok_or_else(|| anyhow!("tag {tag} window {} missing from the window index", m.window_idx))
            })
            .collect::<Result<Vec<_>>>()?;
        let dt = index.dt.get(&tag).copied().filter(|d| *d > 0.0).unwrap_or(1.0);
        let t = track_measurements(&tag, times, ms, dt, &ctx.cfg.kalman)?;
        out.insert(tag, t);
    }
    Ok(out)
}

pub fn track(ctx: &Ctx) -> Result<()> {
    let dataset = load_dataset(ctx)?;
    for s in &dataset.samples {
        let dir = ctx.path(&s.dir);
        let tracks = sample_tracks(ctx, &dir).with_context(|| format!("sample {}", s.id))?;
        let truth_path = dir.join("truth.json");
        let truth: BTreeMap<String, Vec<f64>> = if truth_path.exists() {
            read_json(&truth_path)?
        } else {
            BTreeMap::new()
        };
        let summaries: Vec<TrackSummary> = tracks.values().map(TrackSummary::from).collect();
        let mut rows = Vec::new();
        for t in &summaries {
            for i in 0..t.smoothed_deg.len() {
                let tr = truth.get(&t.tag_id).and_then(|v| v.get(i)).map(|v| v.to_degrees());
                rows.push(vec![
                    t.tag_id.clone(),
                    i.to_string(),
                    t.time_s[i].to_string(),
                    fmt_opt(tr),
                    fmt_opt(t.raw_deg[i]),
                    t.filtered_deg[i].to_string(),
                    t.smoothed_deg[i].to_string(),
                ]);
            }
        }
        let header = ["tag_id", "window_idx", "time_s", "truth_deg", "raw_deg", "filtered_deg", "smoothed_deg"];
        write_csv(&dir.join("track_plot.csv"), &header.map(String::from), &rows)?;
        write_json(
            &dir.join("tracks.json"),
            &TracksFile {
                stamp: ctx.stamp(),
                tracks: summaries,
            },
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub id: usize,
    pub label: String,
    pub tags: BTreeMap<String, TagSeries>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesFile {
    #[serde(flatten)]
    pub stamp: Stamp,
    pub samples: Vec<SeriesEntry>,
}

impl SeriesFile {
    pub fn gesture_samples(&self) -> Vec<GestureSample> {
        self.samples
            .iter()
            .map(|s| GestureSample {
                label: s.label.clone(),
                tags: s.tags.clone(),
            })
            .collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.label.clone()).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayoutFile {
    #[serde(flatten)]
    pub stamp: Stamp,
    pub feature_config: FeatureConfig,
    pub fingerprint: String,
    pub layout: Vec<String>,
}

pub fn features_dir(set: FeatureSet) -> String {
    format!("features/{}", set.name())
}

/// `series.json` plus `features.csv` and `layout.json` per feature set.
pub fn featurize(ctx: &Ctx) -> Result<()> {
    let dataset = load_dataset(ctx)?;
    let mut series = Vec::with_capacity(dataset.samples.len());
    for s in &dataset.samples {
        let dir = ctx.path(&s.dir);
        let channels = read_channels(&dir.join("channels.csv")).context("run `estimate` first")?;
        let mut sample = GestureSample::from_channels(&s.label, &channels);
        let tracks: TracksFile = read_json(&dir.join("tracks.json")).context("run `track` first")?;
        for t in tracks.tracks {
            if let Some(ts) = sample.tags.get_mut(&t.tag_id) {
                ts.aoa = Some(t.smoothed_rad);
            }
        }
        series.push(SeriesEntry {
            id: s.id,
            label: s.label.clone(),
            tags: sample.tags,
        });
    }
    let series = SeriesFile {
        stamp: ctx.stamp(),
        samples: series,
    };
    write_json(&ctx.path("series.json"), &series)?;

    let samples = series.gesture_samples();
    let features = ctx.path("features");
    if features.exists() {
        fs::remove_dir_all(&features)?;
    }
    for &set in &ctx.cfg.features.sets {
        let table = featurize_dataset(&samples, &ctx.cfg.features.config(set)).with_context(|| format!("feature set {set}"))?;
        let dir = ctx.path(&features_dir(set));
        let mut header = table.layout.clone();
        header.push("label".into());
        let rows: Vec<Vec<String>> = table
            .rows
            .iter()
            .zip(&table.labels)
            .map(|(r, l)| r.iter().map(|v| v.to_string()).chain(std::iter::once(l.clone())).collect())
            .collect();
        write_csv(&dir.join("features.csv"), &header, &rows)?;
        write_json(
            &dir.join("layout.json"),
            &LayoutFile {
                stamp: ctx.stamp(),
                feature_config: table.config,
                fingerprint: format!("{:016x}", table.layout_fingerprint()),
                layout: table.layout,
            },
        )?;
    }
    Ok(())
}

type FeatureTable = (Vec<String>, Vec<Vec<f64>>, Vec<String>);

/// Rows and labels of a `features.csv`.
pub fn read_features(path: &Path) -> Result<FeatureTable> {
    let (mut header, rows) = read_csv(path)?;
    if header.last().map(String::as_str) != Some("label") {
        bail!("{}: last column must be 'label'", path.display());
    }
    header.pop();
    let mut values = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (i, mut r) in rows.into_iter().enumerate() {
        if r.len() != header.len() + 1 {
            bail!("{} row {}: {} columns, expected {}", path.display(), i + 1, r.len(), header.len() + 1);
        }
        labels.push(r.pop().expect("label"));
        values.push(
            r.iter()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .with_context(|| format!("{} row {}", path.display(), i + 1))?,
        );
    }
    Ok((header, values, labels))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitFile {
    #[serde(flatten)]
    pub stamp: Stamp,
    pub split: Split,
}

pub fn method_dir(m: &Method) -> String {
    format!("classify/{}", m.name())
}

fn load_series(ctx: &Ctx) -> Result<SeriesFile> {
    read_json(&ctx.path("series.json")).context("run `featurize` first")
}

pub fn predict(ctx: &Ctx, method: &Method, series: &SeriesFile, split: &Split) -> Result<Predictions> {
    let labels = series.labels();
    match *method {
        Method::Knn(set) => {
            let (_, rows, file_labels) = read_features(&ctx.path(&features_dir(set)).join("features.csv"))?;
            if file_labels != labels {
                bail!("features for {set} do not match series.json");
            }
            Ok(knn_split_predict(&rows, &labels, split, ctx.cfg.classify.k)?)
        }
        Method::Dtw(kind) => {
            let bundles = series
                .gesture_samples()
                .iter()
                .map(|s| Ok(s.bundle(kind)?.into_iter().map(<[f64]>::to_vec).collect()))
                .collect::<Result<Vec<Vec<Vec<f64>>>>>()?;
            Ok(dtw_split_predict(&bundles, &labels, split)?)
        }
    }
}

pub fn classify(ctx: &Ctx) -> Result<()> {
    let series = load_series(ctx)?;
    let c = &ctx.cfg.classify;
    let split = stratified_split(&series.labels(), c.train_fraction, ctx.cfg.split_seed())?;
    write_json(
        &ctx.path("classify/split.json"),
        &SplitFile {
            stamp: ctx.stamp(),
            split: split.clone(),
        },
    )?;
    for m in c.parsed_methods() {
        let p = predict(ctx, &m, &series, &split).with_context(|| format!("method {}", m.name()))?;
        let rows: Vec<Vec<String>> = p
            .indices
            .iter()
            .zip(p.truth.iter().zip(&p.predicted))
            .map(|(&i, (t, pr))| vec![series.samples[i].id.to_string(), t.clone(), pr.clone()])
            .collect();
        let header = ["sample_id", "label", "predicted"].map(String::from);
        write_csv(&ctx.path(&method_dir(&m)).join("predictions.csv"), &header, &rows)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodReport {
    #[serde(flatten)]
    pub stamp: Stamp,
    pub method: String,
    pub split_seed: u64,
    pub train_fraction: f64,
    pub train: usize,
    pub test: usize,
    pub metrics: EvalReport,
}

/// The side-by-side `report.json`: stamp, one `accuracy_<method>` key per
/// method, and the per-method reports.
#[derive(Debug, Clone)]
pub struct Report {
    pub stamp: Stamp,
    pub accuracy: BTreeMap<String, f64>,
    pub methods: Vec<MethodReport>,
}

impl Report {
    pub fn accuracy_of(&self, method: &str) -> Option<f64> {
        self.accuracy.get(method).copied()
    }

    pub fn to_value(&self) -> Result<Value> {
        let mut map = serde_json::Map::new();
        map.insert("config_hash".into(), self.stamp.config_hash.clone().into());
        map.insert("seed".into(), self.stamp.seed.into());
        for (m, a) in &self.accuracy {
            map.insert(format!("accuracy_{m}"), (*a).into());
        }
        map.insert("methods".into(), serde_json::to_value(&self.methods)?);
        Ok(Value::Object(map))
    }

    pub fn from_value(v: Value) -> Result<Self> {
        let Value::Object(mut map) = v else {
            bail!("report is not a JSON object");
        };
        let methods: Vec<MethodReport> =
            serde_json::from_value(map.remove("methods").ok_or_else(|| anyhow!("report has no methods"))?)?;
        let stamp = Stamp {
            config_hash: map.get("config_hash").and_then(Value::as_str).unwrap_or_default().to_string(),
            seed: map.get("seed").and_then(Value::as_u64).unwrap_or_default(),
        };
        let accuracy = map
            .iter()
            .filter_map(|(k, v)| Some((k.strip_prefix("accuracy_")?.to_string(), v.as_f64()?)))
            .collect();
        Ok(Self {
            stamp,
            accuracy,
            methods,
        })
    }
}

fn class_order(ctx: &Ctx, labels: &[String]) -> Vec<String> {
    let mut classes: Vec<String> = ctx.cfg.dataset.classes.iter().map(|c| c.name().to_string()).collect();
    for l in class_set(labels) {
        if !classes.contains(&l) {
            classes.push(l);
        }
    }
    classes
}

/// Per-method `report.json`/`confusion.csv`, then the combined `report.json`.
/// Returns one summary line per method.
pub fn eval(ctx: &Ctx) -> Result<Vec<String>> {
    let split: SplitFile = read_json(&ctx.path("classify/split.json")).context("run `classify` first")?;
    let mut methods = Vec::new();
    let mut accuracy = BTreeMap::new();
    let mut lines = Vec::new();
    for m in ctx.cfg.classify.parsed_methods() {
        let dir = ctx.path(&method_dir(&m));
        let (_, rows) = read_csv(&dir.join("predictions.csv"))?;
        let truth: Vec<String> = rows.iter().map(|r| r[1].clone()).collect();
        let predicted: Vec<String> = rows.iter().map(|r| r[2].clone()).collect();
        let classes = class_order(ctx, &truth);
        let metrics = rfid_aoa::classify::evaluate(&predicted, &truth, &classes)?;
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(classes.iter().cloned());
        let confusion: Vec<Vec<String>> = classes
            .iter()
            .zip(&metrics.confusion)
            .map(|(c, row)| std::iter::once(c.clone()).chain(row.iter().map(|v| v.to_string())).collect())
            .collect();
        write_csv(&dir.join("confusion.csv"), &header, &confusion)?;
        let report = MethodReport {
            stamp: ctx.stamp(),
            method: m.name(),
            split_seed: split.split.seed,
            train_fraction: ctx.cfg.classify.train_fraction,
            train: split.split.train.len(),
            test: split.split.test.len(),
            metrics,
        };
        write_json(&dir.join("report.json"), &report)?;
        lines.push(format!(
            "{:<10} accuracy {:6.2}%  macro-F1 {:6.2}%",
            report.method, report.metrics.accuracy, report.metrics.f1
        ));
        accuracy.insert(report.method.clone(), report.metrics.accuracy);
        methods.push(report);
    }
    let report = Report {
        stamp: ctx.stamp(),
        accuracy,
        methods,
    };
    write_json(&ctx.path("report.json"), &report.to_value()?)?;
    Ok(lines)
}

pub fn demo(ctx: &Ctx) -> Result<Vec<String>> {
    simulate(ctx)?;
    estimate(ctx)?;
    track(ctx)?;
    featurize(ctx)?;
    classify(ctx)?;
    eval(ctx)
}

pub fn read_report(out: &Path) -> Result<Report> {
    Report::from_value(read_json(&out.join("report.json"))?)
}
