//! Parametric gesture trajectories and gesture recording synthesis.
//!
//! Trajectory shapes are made up for the synthetic data set: each class moves
//! the LoS angle and range of the two hand tags along monotone cubic
//! (PCHIP) splines over normalized time `s` in `[0, 1]`. Mirrored classes are
//! exact sign flips of their partner's angle tracks and share its range
//! tracks, so radial cues (phase, RSS) cannot tell the pair apart while AoA
//! can.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::{push_records, simulate_rows, SasSchedule, SimScene};
use crate::features::GestureSample;
use crate::preprocess::{derive_channels, ReaderLog};
use crate::{Error, Result};

/// Distance at which scene path gains are specified, metres.
pub const REFERENCE_RANGE_M: f64 = 3.0;

/// Shape-preserving piecewise cubic Hermite interpolant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    knots: Vec<(f64, f64)>,
    slopes: Vec<f64>,
}

impl Profile {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::invalid("profile needs at least one knot"));
        }
        if knots.windows(2).any(|p| !(p[1].0 > p[0].0)) {
            return Err(Error::invalid("profile knots must be strictly increasing in s"));
        }
        let slopes = pchip_slopes(&knots);
        Ok(Self { knots, slopes })
    }

    pub fn constant(v: f64) -> Self {
        Self::new(vec![(0.0, v)]).expect("single knot")
    }

    /// Knots sampled from `f` at `n + 1` evenly spaced points.
    pub fn sampled(n: usize, f: impl Fn(f64) -> f64) -> Self {
        let knots = (0..=n)
            .map(|i| {
                let s = i as f64 / n as f64;
                (s, f(s))
            })
            .collect();
        Self::new(knots).expect("evenly spaced knots")
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn eval(&self, s: f64) -> f64 {
        let k = &self.knots;
        if k.len() == 1 || s <= k[0].0 {
            return k[0].1;
        }
        let last = k.len() - 1;
        if s >= k[last].0 {
            return k[last].1;
        }
        let i = k.partition_point(|&(x, _)| x <= s) - 1;
        let (x0, y0) = k[i];
        let (x1, y1) = k[i + 1];
        let h = x1 - x0;
        let t = (s - x0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * y0 + h10 * h * self.slopes[i] + h01 * y1 + h11 * h * self.slopes[i + 1]
    }

    /// Profile `a * v + b` at every knot.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(self.knots.iter().map(|&(s, v)| (s, f(v))).collect()).expect("same knots")
    }

    pub fn negated(&self) -> Self {
        self.map(|v| -v)
    }
}

/// Fritsch-Carlson slopes with the three-point, shape-preserving end rule.
fn pchip_slopes(k: &[(f64, f64)]) -> Vec<f64> {
    let n = k.len();
    if n == 1 {
        return vec![0.0];
    }
    let h: Vec<f64> = k.windows(2).map(|p| p[1].0 - p[0].0).collect();
    let d: Vec<f64> = k
        .windows(2)
        .zip(&h)
        .map(|(p, &h)| (p[1].1 - p[0].1) / h)
        .collect();
    if n == 2 {
        return vec![d[0], d[0]];
    }
    let mut m = vec![0.0; n];
    for i in 1..n - 1 {
        if d[i - 1] * d[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if m.signum() != d0.signum() || d0 == 0.0 {
            0.0
        } else if d0.signum() != d1.signum() && m.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            m
        }
    };
    m[0] = end(h[0], h[1], d[0], d[1]);
    m[n - 1] = end(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    m
}

/// Motion of one tag: LoS angle (rad) and range (m) over normalized time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagMotion {
    pub tag_id: String,
    pub theta: Profile,
    pub range_m: Profile,
}

/// Playback-rate jitter: `s_eff = clamp((s - 0.5) * speed + 0.5 - shift)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWarp {
    pub speed: f64,
    pub shift: f64,
}

impl Default for TimeWarp {
    fn default() -> Self {
        Self {
            speed: 1.0,
            shift: 0.0,
        }
    }
}

impl TimeWarp {
    pub fn apply(&self, s: f64) -> f64 {
        ((s - 0.5) * self.speed + 0.5 - self.shift).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureSpec {
    pub label: String,
    pub duration_s: f64,
    /// Number of windows `T`.
    pub windows: usize,
    pub warp: TimeWarp,
    pub tags: Vec<TagMotion>,
}

impl GestureSpec {
    /// Every tag holds its pose for the whole recording.
    pub fn still(label: &str, windows: usize, duration_s: f64, poses: &[(&str, f64, f64)]) -> Self {
        Self {
            label: label.to_string(),
            duration_s,
            windows,
            warp: TimeWarp::default(),
            tags: poses
                .iter()
                .map(|&(id, theta, range)| TagMotion {
                    tag_id: id.to_string(),
                    theta: Profile::constant(theta),
                    range_m: Profile::constant(range),
                })
                .collect(),
        }
    }

    /// Angle tracks negated, ranges and timing kept.
    pub fn mirrored(&self, label: &str) -> Self {
        let mut out = self.clone();
        out.label = label.to_string();
        for t in &mut out.tags {
            t.theta = t.theta.negated();
        }
        out
    }

    /// Normalized time of window `w`'s midpoint.
    pub fn window_s(&self, w: usize) -> f64 {
        (w as f64 + 0.5) / self.windows as f64
    }

    pub fn tag_position(&self, tag_id: &str) -> Option<usize> {
        self.tags.iter().position(|t| t.tag_id == tag_id)
    }

    fn motion(&self, tag_index: usize) -> Result<&TagMotion> {
        self.tags.get(tag_index).ok_or_else(|| {
            Error::invalid(format!(
                "tag index {tag_index} out of range for {} tags",
                self.tags.len()
            ))
        })
    }

    pub fn range_series(&self, tag_index: usize) -> Result<Vec<f64>> {
        let m = self.motion(tag_index)?;
        Ok((0..self.windows)
            .map(|w| m.range_m.eval(self.warp.apply(self.window_s(w))))
            .collect())
    }
}

/// LoS angle of tag `tag_index` at every window midpoint.
pub fn gesture_trajectory(spec: &GestureSpec, tag_index: usize) -> Result<Vec<f64>> {
    let m = spec.motion(tag_index)?;
    Ok((0..spec.windows)
        .map(|w| m.theta.eval(spec.warp.apply(spec.window_s(w))))
        .collect())
}

/// The eight synthetic gesture classes, as four mirrored pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GestureClass {
    #[serde(rename = "SL")]
    SwipeLeft,
    #[serde(rename = "SR")]
    SwipeRight,
    #[serde(rename = "LAC")]
    LeftArmCircle,
    #[serde(rename = "RAC")]
    RightArmCircle,
    #[serde(rename = "2HLR")]
    TwoHandsLateralRaise,
    #[serde(rename = "2HLD")]
    TwoHandsLateralDown,
    #[serde(rename = "2HIC")]
    TwoHandsInwardCircle,
    #[serde(rename = "2HOC")]
    TwoHandsOutwardCircle,
}

/// Per-trial variation applied to a class template.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variation {
    /// Scales angle and range excursions.
    pub amplitude: f64,
    pub warp: TimeWarp,
    /// Subject distance from the array, metres.
    pub base_range_m: f64,
}

impl Default for Variation {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            warp: TimeWarp::default(),
            base_range_m: REFERENCE_RANGE_M,
        }
    }
}

pub const RIGHT_HAND: &str = "T1";
pub const LEFT_HAND: &str = "T2";

impl GestureClass {
    pub const ALL: [GestureClass; 8] = [
        GestureClass::SwipeLeft,
        GestureClass::SwipeRight,
        GestureClass::LeftArmCircle,
        GestureClass::RightArmCircle,
        GestureClass::TwoHandsLateralRaise,
        GestureClass::TwoHandsLateralDown,
        GestureClass::TwoHandsInwardCircle,
        GestureClass::TwoHandsOutwardCircle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GestureClass::SwipeLeft => "SL",
            GestureClass::SwipeRight => "SR",
            GestureClass::LeftArmCircle => "LAC",
            GestureClass::RightArmCircle => "RAC",
            GestureClass::TwoHandsLateralRaise => "2HLR",
            GestureClass::TwoHandsLateralDown => "2HLD",
            GestureClass::TwoHandsInwardCircle => "2HIC",
            GestureClass::TwoHandsOutwardCircle => "2HOC",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn mirror(self) -> Self {
        use GestureClass::*;
        match self {
            SwipeLeft => SwipeRight,
            SwipeRight => SwipeLeft,
            LeftArmCircle => RightArmCircle,
            RightArmCircle => LeftArmCircle,
            TwoHandsLateralRaise => TwoHandsLateralDown,
            TwoHandsLateralDown => TwoHandsLateralRaise,
            TwoHandsInwardCircle => TwoHandsOutwardCircle,
            TwoHandsOutwardCircle => TwoHandsInwardCircle,
        }
    }

    /// The member of the mirrored pair that carries the template.
    fn is_template(self) -> bool {
        matches!(
            self,
            GestureClass::SwipeLeft
                | GestureClass::LeftArmCircle
                | GestureClass::TwoHandsLateralRaise
                | GestureClass::TwoHandsInwardCircle
        )
    }

    /// Template angle (deg) and range offset (m) tracks for both hands.
    fn template(self) -> [(Profile, Profile); 2] {
        let deg = |p: Profile| p.map(f64::to_radians);
        let tau = 2.0 * PI;
        match self {
            GestureClass::SwipeLeft => [
                (
                    deg(Profile::new(vec![(0.0, -12.0), (0.2, -10.0), (0.5, 0.0), (0.8, 10.0), (1.0, 12.0)]).unwrap()),
                    Profile::sampled(8, |s| -0.12 * (PI * s).sin()),
                ),
                (deg(Profile::constant(4.0)), Profile::constant(0.0)),
            ],
            GestureClass::LeftArmCircle => [
                (deg(Profile::constant(-4.0)), Profile::constant(0.0)),
                (
                    deg(Profile::sampled(16, |s| 9.0 * (tau * s).sin())),
                    Profile::sampled(16, |s| 0.08 * (1.0 - (tau * s).cos())),
                ),
            ],
            GestureClass::TwoHandsLateralRaise => [
                (
                    deg(Profile::sampled(8, |s| 2.0 + 11.0 * smoothstep(s))),
                    Profile::sampled(8, |s| -0.2 * smoothstep(s)),
                ),
                (
                    deg(Profile::sampled(8, |s| -2.0 + 8.0 * smoothstep(s))),
                    Profile::sampled(8, |s| -0.1 * smoothstep(s)),
                ),
            ],
            GestureClass::TwoHandsInwardCircle => [
                (
                    deg(Profile::sampled(16, |s| 6.0 + 5.0 * (tau * s).sin())),
                    Profile::sampled(16, |s| 0.1 * (2.0 * tau * s).sin()),
                ),
                (
                    deg(Profile::sampled(16, |s| -6.0 + 5.0 * (tau * s).sin())),
                    Profile::sampled(16, |s| -0.1 * (2.0 * tau * s).sin()),
                ),
            ],
            other => other.mirror().template(),
        }
    }

    pub fn spec(self, windows: usize, duration_s: f64, v: &Variation) -> GestureSpec {
        if !self.is_template() {
            return self.mirror().spec(windows, duration_s, v).mirrored(self.name());
        }
        let [right, left] = self.template();
        let tags = [(RIGHT_HAND, right), (LEFT_HAND, left)]
            .into_iter()
            .map(|(id, (theta, dr))| TagMotion {
                tag_id: id.to_string(),
                theta: theta.map(|t| t * v.amplitude),
                range_m: dr.map(|d| v.base_range_m + d * v.amplitude),
            })
            .collect();
        GestureSpec {
            label: self.name().to_string(),
            duration_s,
            windows,
            warp: v.warp,
            tags,
        }
    }
}

fn smoothstep(s: f64) -> f64 {
    s * s * (3.0 - 2.0 * s)
}

/// Simulated recording: raw log, ground truth and derived RSS/phase channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedGesture {
    pub sample: GestureSample,
    pub log: ReaderLog,
    /// Tag id to LoS angle per window, radians.
    pub truth: BTreeMap<String, Vec<f64>>,
}

/// Gain multiplier for a tag at `range`: round-trip amplitude `~1/r^2` and
/// phase `-4 pi r / lambda`, both relative to [`REFERENCE_RANGE_M`].
pub fn range_gain(range: f64, wavelength: f64) -> Complex64 {
    let amp = (REFERENCE_RANGE_M / range).powi(2);
    let excess = (range - REFERENCE_RANGE_M) / wavelength;
    Complex64::from_polar(amp, -4.0 * PI * excess.fract())
}

pub fn simulate_gesture(
    spec: &GestureSpec,
    scene: &SimScene,
    schedule: &SasSchedule,
    rng_seed: u64,
) -> Result<SimulatedGesture> {
    scene.validate()?;
    schedule.validate()?;
    if spec.windows == 0 {
        return Err(Error::invalid("gesture needs at least one window"));
    }
    let fov = scene.geometry.fov_limit();
    let lambda = scene.geometry.wavelength();

    // Scene tag index -> (angle series, range series) for moving tags.
    let mut motion: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; scene.tags.len()];
    let mut truth = BTreeMap::new();
    for (ti, tm) in spec.tags.iter().enumerate() {
        let si = scene.tag_index(&tm.tag_id).ok_or_else(|| {
            Error::invalid(format!("scene has no tag {} used by the gesture", tm.tag_id))
        })?;
        let theta = gesture_trajectory(spec, ti)?;
        if let Some(bad) = theta.iter().find(|t| t.abs() > fov) {
            return Err(Error::OutOfFov {
                tag: ti,
                theta_deg: bad.to_degrees(),
                limit_deg: fov.to_degrees(),
            });
        }
        let range = spec.range_series(ti)?;
        if range.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::invalid(format!("non-positive range for tag {}", tm.tag_id)));
        }
        truth.insert(tm.tag_id.clone(), theta.clone());
        motion[si] = Some((theta, range));
    }

    let mut records = Vec::new();
    let mut window_scene = scene.clone();
    for w in 0..spec.windows {
        let mut angles = Vec::with_capacity(scene.tags.len());
        for (si, tag) in scene.tags.iter().enumerate() {
            let (theta, gain) = match &motion[si] {
                Some((theta, range)) => (theta[w], range_gain(range[w], lambda)),
                None => (tag.paths[0].aoa, Complex64::new(1.0, 0.0)),
            };
            angles.push(theta);
            for (p, base) in window_scene.tags[si].paths.iter_mut().zip(&tag.paths) {
                p.gain = base.gain * gain;
            }
        }
        let rows = simulate_rows(&window_scene, schedule, Some(&angles), w, rng_seed)?;
        push_records(&mut records, rows, schedule, w, scene.rss_offset_db);
    }
    let log = ReaderLog::new(records)?;
    let channels = derive_channels(&log)?;
    let sample = GestureSample::from_channels(&spec.label, &channels);
    Ok(SimulatedGesture { sample, log, truth })
}
