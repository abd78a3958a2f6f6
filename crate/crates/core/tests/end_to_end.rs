use rfid_aoa::array::ArrayGeometry;
use rfid_aoa::music::{estimate_aoa, MusicConfig};
use rfid_aoa::pipeline::{track_aoa, TrackingConfig};
use rfid_aoa::preprocess::ReaderLog;
use rfid_aoa::seed;
use rfid_aoa::sim::gesture::{simulate_gesture, GestureClass, Variation, LEFT_HAND, RIGHT_HAND};
use rfid_aoa::sim::{simulate_window, MultipathConfig, SasSchedule, SimScene};

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

#[test]
fn music_error_shrinks_with_snr() {
    let g = ArrayGeometry::default();
    let theta = 8f64.to_radians();
    let mut prev = f64::INFINITY;
    for snr in [0.0, 10.0, 20.0, 30.0] {
        let scene = SimScene::los_only(g, &[("T1", theta)], snr);
        let mut sq = 0.0;
        for s in 0..200u64 {
            let w = simulate_window(&scene, &SasSchedule::default(), &[theta], 0, seed::derive(3, s)).unwrap();
            let m = estimate_aoa(&w[0], &g, &MusicConfig::default()).unwrap();
            sq += (m.theta_hat - theta).powi(2);
        }
        let r = (sq / 200.0).sqrt();
        assert!(r <= prev, "snr {snr}: {r} > {prev}");
        prev = r;
    }
}

#[test]
fn noisy_swipe_tracks_beat_raw_music() {
    let g = ArrayGeometry::default();
    let schedule = SasSchedule::default();
    let (mut raw, mut smooth) = (0.0, 0.0);
    for s in 0..50u64 {
        let scene = SimScene::los_only(g, &[(RIGHT_HAND, 0.0), (LEFT_HAND, 0.0)], 0.0).with_misdetection(0.05);
        let spec = GestureClass::SwipeLeft.spec(20, 20.0 * schedule.window_duration(2), &Variation::default());
        let rec = simulate_gesture(&spec, &scene, &schedule, seed::derive(8, s)).unwrap();
        let tracks = track_aoa(&rec.log, &g, &TrackingConfig::default()).unwrap();
        let t = &tracks[RIGHT_HAND];
        let truth = &rec.truth[RIGHT_HAND];
        let pairs: Vec<(f64, f64)> = t
            .raw_theta()
            .iter()
            .zip(truth)
            .filter_map(|(r, tr)| r.map(|r| (r, *tr)))
            .collect();
        let (r, tr): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        raw += rmse(&r, &tr);
        smooth += rmse(&t.track.smoothed_theta(), truth);
    }
    assert!(smooth <= raw, "smoothed {smooth} raw {raw}");
}

#[test]
fn static_tag_in_lab_scene_has_lower_spread_after_smoothing() {
    let g = ArrayGeometry::default();
    let theta = 15f64.to_radians();
    let mut rng = seed::rng(12);
    let scene = SimScene::los_only(g, &[("T1", theta)], 20.0).with_multipath(&MultipathConfig::default(), &mut rng);
    let log = rfid_aoa::sim::simulate_log(&scene, &SasSchedule::default(), &vec![vec![theta]; 60], 4).unwrap();
    let t = &track_aoa(&log, &g, &TrackingConfig::default()).unwrap()["T1"];
    let std = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let raw: Vec<f64> = t.raw_theta().into_iter().flatten().collect();
    assert!(std(&t.track.smoothed_theta()) < std(&raw));
}

#[test]
fn reader_log_survives_disk_round_trip() {
    let g = ArrayGeometry::default();
    let scene = SimScene::los_only(g, &[(RIGHT_HAND, 0.0), (LEFT_HAND, 0.0)], 10.0).with_misdetection(0.1);
    let schedule = SasSchedule::default();
    let spec = GestureClass::TwoHandsInwardCircle.spec(12, 1.0, &Variation::default());
    let rec = simulate_gesture(&spec, &scene, &schedule, 42).unwrap();
    let dir = tempfile::tempdir().unwrap();
    rec.log.write(dir.path(), "reader_log.csv").unwrap();
    let back = ReaderLog::read(&dir.path().join("reader_log.csv")).unwrap();
    assert_eq!(back, rec.log);
    let a = track_aoa(&rec.log, &g, &TrackingConfig::default()).unwrap();
    let b = track_aoa(&back, &g, &TrackingConfig::default()).unwrap();
    // Invalid windows hold NaN angles.
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}
