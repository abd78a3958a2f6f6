//! Browser bindings. Each operation returns a JSON string for the page to
//! draw; the plain functions are also used natively by the tests.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use rfid_aoa::array::{aliases, ArrayGeometry, DEFAULT_CARRIER_HZ};
use rfid_aoa::music::{estimate_aoa, window_spectrum, MusicConfig};
use rfid_aoa::pipeline::{track_aoa, TrackSummary, TrackingConfig};
use rfid_aoa::seed;
use rfid_aoa::sim::gesture::{simulate_gesture, GestureClass, Variation, LEFT_HAND, RIGHT_HAND};
use rfid_aoa::sim::{simulate_window, MultipathConfig, SasSchedule, SimScene};

fn geometry(spacing_wavelengths: f64) -> Result<ArrayGeometry, String> {
    ArrayGeometry::with_spacing_wavelengths(DEFAULT_CARRIER_HZ, spacing_wavelengths).map_err(|e| e.to_string())
}

/// Search over the whole unambiguous field of view of `g`.
fn search(g: &ArrayGeometry) -> MusicConfig {
    let fov = g.fov_limit();
    MusicConfig {
        theta_min: -fov,
        theta_max: fov,
        ..MusicConfig::default()
    }
}

fn scene(g: ArrayGeometry, tags: &[(&str, f64)], snr_db: f64, multipath: bool, rng_seed: u64) -> SimScene {
    let s = SimScene::los_only(g, tags, snr_db);
    if multipath {
        s.with_multipath(&MultipathConfig::default(), &mut seed::rng(rng_seed))
    } else {
        s
    }
}

#[derive(Debug, Serialize)]
pub struct Geometry {
    pub wavelength_m: f64,
    pub spacing_m: f64,
    pub fov_deg: f64,
    /// Sine period of the steering vector, `lambda / 2d`.
    pub sin_period: f64,
    pub far_field_m: f64,
}

pub fn geometry_info(spacing_wavelengths: f64) -> Result<Geometry, String> {
    let g = geometry(spacing_wavelengths)?;
    Ok(Geometry {
        wavelength_m: g.wavelength(),
        spacing_m: g.element_spacing_m,
        fov_deg: g.fov_limit().to_degrees(),
        sin_period: g.wavelength() / (2.0 * g.element_spacing_m),
        far_field_m: g.far_field_distance(),
    })
}

#[derive(Debug, Serialize)]
pub struct Spectrum {
    pub theta_deg: Vec<f64>,
    /// Normalized to a 0 dB maximum.
    pub spectrum_db: Vec<f64>,
    pub estimate_deg: Option<f64>,
    pub alias_deg: Vec<f64>,
    /// Spectrum at the true angle and at each alias, same scale.
    pub truth_db: f64,
    pub alias_db: Vec<f64>,
    pub fov_deg: f64,
}

/// One simulated window at `truth_deg`, its MUSIC pseudo-spectrum over
/// -90..90 deg and the estimate inside the field of view.
pub fn spectrum(truth_deg: f64, snr_db: f64, spacing_wavelengths: f64, multipath: bool, rng_seed: u64) -> Result<Spectrum, String> {
    let g = geometry(spacing_wavelengths)?;
    let truth = truth_deg.to_radians();
    let sc = scene(g, &[("T1", truth)], snr_db, multipath, seed::derive(rng_seed, 0));
    let w = simulate_window(&sc, &SasSchedule::default(), &[truth], 0, seed::derive(rng_seed, 1)).map_err(|e| e.to_string())?;
    let thetas: Vec<f64> = (0..=720).map(|i| (-90.0 + 0.25 * i as f64).to_radians()).collect();
    let values = window_spectrum(&w[0], &g, &thetas).map_err(|e| e.to_string())?;
    let peak = values.iter().cloned().fold(f64::MIN, f64::max);
    let db = |v: f64| 10.0 * (v / peak).log10();
    let m = estimate_aoa(&w[0], &g, &search(&g)).map_err(|e| e.to_string())?;
    let alias = aliases(truth, &g);
    let at = window_spectrum(&w[0], &g, &alias).map_err(|e| e.to_string())?;
    let truth_v = window_spectrum(&w[0], &g, &[truth]).map_err(|e| e.to_string())?[0];
    Ok(Spectrum {
        theta_deg: thetas.iter().map(|t| t.to_degrees()).collect(),
        spectrum_db: values.iter().map(|&v| db(v)).collect(),
        estimate_deg: m.valid.then(|| m.theta_hat.to_degrees()),
        alias_deg: alias.into_iter().map(f64::to_degrees).collect(),
        truth_db: db(truth_v),
        alias_db: at.into_iter().map(db).collect(),
        fov_deg: g.fov_limit().to_degrees(),
    })
}

#[derive(Debug, Serialize)]
pub struct TagView {
    pub tag_id: String,
    pub truth_deg: Vec<f64>,
    #[serde(flatten)]
    pub track: TrackSummary,
}

#[derive(Debug, Serialize)]
pub struct GestureView {
    pub label: String,
    pub tags: Vec<TagView>,
}

/// Simulate one gesture recording and track both hands.
pub fn gesture(label: &str, snr_db: f64, misdetect_prob: f64, multipath: bool, rng_seed: u64) -> Result<GestureView, String> {
    let class = GestureClass::from_name(label).ok_or_else(|| format!("unknown gesture '{label}'"))?;
    let g = ArrayGeometry::default();
    let schedule = SasSchedule::default();
    let sc = scene(g, &[(RIGHT_HAND, 0.0), (LEFT_HAND, 0.0)], snr_db, multipath, seed::derive(rng_seed, 0))
        .with_misdetection(misdetect_prob);
    let windows = 20;
    let spec = class.spec(windows, windows as f64 * schedule.window_duration(2), &Variation::default());
    let rec = simulate_gesture(&spec, &sc, &schedule, seed::derive(rng_seed, 1)).map_err(|e| e.to_string())?;
    let tracks = track_aoa(&rec.log, &g, &TrackingConfig::default()).map_err(|e| e.to_string())?;
    let tags = tracks
        .values()
        .map(|t| TagView {
            tag_id: t.tag_id.clone(),
            truth_deg: rec.truth.get(&t.tag_id).map(|v| v.iter().map(|x| x.to_degrees()).collect()).unwrap_or_default(),
            track: TrackSummary::from(t),
        })
        .collect();
    Ok(GestureView {
        label: label.to_string(),
        tags,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = geometryInfo)]
pub fn geometry_info_js(spacing_wavelengths: f64) -> Result<String, JsError> {
    to_js(geometry_info(spacing_wavelengths))
}

#[wasm_bindgen(js_name = musicSpectrum)]
pub fn spectrum_js(truth_deg: f64, snr_db: f64, spacing_wavelengths: f64, multipath: bool, seed: u32) -> Result<String, JsError> {
    to_js(spectrum(truth_deg, snr_db, spacing_wavelengths, multipath, seed as u64))
}

#[wasm_bindgen(js_name = trackGesture)]
pub fn gesture_js(label: &str, snr_db: f64, misdetect_prob: f64, multipath: bool, seed: u32) -> Result<String, JsError> {
    to_js(gesture(label, snr_db, misdetect_prob, multipath, seed as u64))
}

#[wasm_bindgen(js_name = gestureNames)]
pub fn gesture_names() -> Vec<String> {
    GestureClass::ALL.iter().map(|c| c.name().to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry() {
        let g = geometry_info(0.8).unwrap();
        assert!((g.fov_deg - 18.21).abs() < 0.01);
        assert!((g.sin_period - 0.625).abs() < 1e-12);
        assert!(geometry_info(0.0).is_err());
    }

    #[test]
    fn spectrum_peaks_at_truth_and_aliases() {
        let s = spectrum(10.0, 30.0, 0.8, false, 3).unwrap();
        assert!((s.estimate_deg.unwrap() - 10.0).abs() < 0.5);
        assert_eq!(s.theta_deg.len(), s.spectrum_db.len());
        assert!(s.spectrum_db.iter().all(|v| *v <= 1e-12));
        assert!(s.alias_deg.iter().any(|a| (a - 10.0).abs() > 1.0));
        assert_eq!(s.alias_db.len(), s.alias_deg.len());
        for (a, v) in s.alias_deg.iter().zip(&s.alias_db) {
            assert!((v - s.truth_db).abs() < 1e-6, "alias {a}: {v} vs {}", s.truth_db);
        }
    }

    #[test]
    fn gesture_views_follow_truth() {
        let v = gesture("SL", 20.0, 0.0, false, 1).unwrap();
        assert_eq!(v.tags.len(), 2);
        let t1 = &v.tags[0];
        assert_eq!(t1.tag_id, RIGHT_HAND);
        assert_eq!(t1.truth_deg.len(), t1.track.smoothed_deg.len());
        let err = t1
            .truth_deg
            .iter()
            .zip(&t1.track.smoothed_deg)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 2.0, "{err}");
        assert!(gesture("XX", 20.0, 0.0, false, 1).is_err());
        assert_eq!(gesture_names().len(), 8);
    }
}
