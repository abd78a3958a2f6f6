//! Constant-rate Kalman filter over per-window AoA measurements, with an
//! RTS backward pass.
//!
//! State is `[theta, omega]`. Windows without a measurement get the predict
//! step only.

use nalgebra::{Matrix2, RowVector2, Vector2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Diagonal loading used when a prior covariance cannot be inverted.
pub const SMOOTHER_LOADING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KalmanConfig {
    /// Window spacing in seconds; `None` takes it from the windowing.
    pub dt: Option<f64>,
    pub sigma_theta: f64,
    pub sigma_omega: f64,
    pub sigma_v: f64,
    pub p0: [[f64; 2]; 2],
    /// Initial `[theta, omega]`; `None` seeds theta from the first valid
    /// measurement.
    pub x0: Option<[f64; 2]>,
    /// Seed omega from the first two valid measurements instead of 0.
    pub rate_from_first_two: bool,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            dt: None,
            sigma_theta: 0.01,
            sigma_omega: 0.1,
            sigma_v: 0.035,
            p0: [[1.0, 0.0], [0.0, 1.0]],
            x0: None,
            rate_from_first_two: false,
        }
    }
}

impl KalmanConfig {
    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::invalid(format!("dt must be positive, got {dt}")));
            }
        }
        if !(self.sigma_theta >= 0.0 && self.sigma_omega >= 0.0) {
            return Err(Error::invalid("process noise deviations must be non-negative"));
        }
        if !(self.sigma_v > 0.0 && self.sigma_v.is_finite()) {
            return Err(Error::invalid("sigma_v must be positive"));
        }
        let p = self.p0_matrix();
        if (p[(0, 1)] - p[(1, 0)]).abs() > 1e-12 || p[(0, 0)] < 0.0 || p[(1, 1)] < 0.0 || p.determinant() < -1e-12 {
            return Err(Error::invalid("p0 must be symmetric positive semidefinite"));
        }
        Ok(())
    }

    fn dt(&self) -> Result<f64> {
        self.validate()?;
        self.dt.ok_or_else(|| Error::invalid("Kalman dt is not set"))
    }

    pub fn transition(&self, dt: f64) -> Matrix2<f64> {
        Matrix2::new(1.0, dt, 0.0, 1.0)
    }

    pub fn process_noise(&self) -> Matrix2<f64> {
        Matrix2::new(self.sigma_theta.powi(2), 0.0, 0.0, self.sigma_omega.powi(2))
    }

    pub fn measurement_var(&self) -> f64 {
        self.sigma_v * self.sigma_v
    }

    pub fn p0_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.p0[0][0], self.p0[0][1], self.p0[1][0], self.p0[1][1])
    }
}

fn symmetrize(p: Matrix2<f64>) -> Matrix2<f64> {
    let off = 0.5 * (p[(0, 1)] + p[(1, 0)]);
    Matrix2::new(p[(0, 0)], off, off, p[(1, 1)])
}

const H: RowVector2<f64> = RowVector2::new(1.0, 0.0);

/// `(F x, F P F^T + Q)`.
pub fn predict(
    state: &Vector2<f64>,
    cov: &Matrix2<f64>,
    f: &Matrix2<f64>,
    q: &Matrix2<f64>,
) -> (Vector2<f64>, Matrix2<f64>) {
    (f * state, symmetrize(f * cov * f.transpose() + q))
}

/// Measurement update; returns `(state, cov, gain)`.
pub fn update(
    prior: &Vector2<f64>,
    prior_cov: &Matrix2<f64>,
    z: f64,
    r: f64,
) -> Result<(Vector2<f64>, Matrix2<f64>, Vector2<f64>)> {
    let s = prior_cov[(0, 0)] + r;
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::NumericalDegeneracy(format!("innovation variance {s} is not positive")));
    }
    let k = prior_cov.column(0) / s;
    let state = prior + k * (z - prior[0]);
    let cov = symmetrize((Matrix2::identity() - k * H) * prior_cov);
    Ok((state, cov, k))
}

/// Joseph-form posterior covariance `(I - kH) P (I - kH)^T + k r k^T`.
pub fn joseph_cov(prior_cov: &Matrix2<f64>, k: &Vector2<f64>, r: f64) -> Matrix2<f64> {
    let a = Matrix2::identity() - k * H;
    symmetrize(a * prior_cov * a.transpose() + k * k.transpose() * r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoATrack {
    pub measurements: Vec<Option<f64>>,
    pub dt: f64,
    pub x0: Vector2<f64>,
    pub prior_state: Vec<Vector2<f64>>,
    pub prior_cov: Vec<Matrix2<f64>>,
    pub post_state: Vec<Vector2<f64>>,
    pub post_cov: Vec<Matrix2<f64>>,
    /// Kalman gain per window; `None` where the update was skipped.
    pub gains: Vec<Option<Vector2<f64>>>,
    /// Empty until [`rts_smooth`] runs.
    pub smoothed_state: Vec<Vector2<f64>>,
    pub smoothed_cov: Vec<Matrix2<f64>>,
    /// Smoother gains `g_t` for `t < T - 1`.
    pub smoother_gains: Vec<Matrix2<f64>>,
    /// No valid measurement at all: the track is pure prediction.
    pub low_confidence: bool,
}

impl AoATrack {
    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn filtered_theta(&self) -> Vec<f64> {
        self.post_state.iter().map(|x| x[0]).collect()
    }

    pub fn smoothed_theta(&self) -> Vec<f64> {
        self.smoothed_state.iter().map(|x| x[0]).collect()
    }

    pub fn is_smoothed(&self) -> bool {
        self.smoothed_state.len() == self.len()
    }
}

fn initial_state(z: &[Option<f64>], cfg: &KalmanConfig, dt: f64) -> (Vector2<f64>, bool) {
    let valid: Vec<(usize, f64)> = z
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.filter(|x| x.is_finite()).map(|x| (i, x)))
        .take(2)
        .collect();
    if let Some([t, w]) = cfg.x0 {
        return (Vector2::new(t, w), valid.is_empty());
    }
    match valid.as_slice() {
        [] => (Vector2::zeros(), true),
        [(_, t)] => (Vector2::new(*t, 0.0), false),
        [(i0, t0), (i1, t1), ..] => {
            let rate = if cfg.rate_from_first_two {
                (t1 - t0) / ((i1 - i0) as f64 * dt)
            } else {
                0.0
            };
            (Vector2::new(*t0, rate), false)
        }
    }
}

/// Forward pass. Every window is predicted from the previous posterior (the
/// initial state for the first), then updated when a finite measurement is
/// present.
pub fn filter_sequence(z: &[Option<f64>], cfg: &KalmanConfig) -> Result<AoATrack> {
    let dt = cfg.dt()?;
    let f = cfg.transition(dt);
    let q = cfg.process_noise();
    let r = cfg.measurement_var();
    let (x0, low_confidence) = initial_state(z, cfg, dt);
    if low_confidence && !z.is_empty() {
        log::warn!("no valid AoA measurement in {} windows; track is pure prediction", z.len());
    }
    let t_len = z.len();
    let mut track = AoATrack {
        measurements: z.to_vec(),
        dt,
        x0,
        prior_state: Vec::with_capacity(t_len),
        prior_cov: Vec::with_capacity(t_len),
        post_state: Vec::with_capacity(t_len),
        post_cov: Vec::with_capacity(t_len),
        gains: Vec::with_capacity(t_len),
        smoothed_state: Vec::new(),
        smoothed_cov: Vec::new(),
        smoother_gains: Vec::new(),
        low_confidence,
    };
    let mut x = x0;
    let mut p = symmetrize(cfg.p0_matrix());
    for (t, zt) in z.iter().enumerate() {
        let (xp, pp) = predict(&x, &p, &f, &q);
        track.prior_state.push(xp);
        track.prior_cov.push(pp);
        match zt.filter(|v| v.is_finite()) {
            Some(v) => {
                let (xu, pu, k) =
                    update(&xp, &pp, v, r).map_err(|e| Error::Context {
                        tag: String::new(),
                        window: t,
                        source: Box::new(e),
                    })?;
                x = xu;
                p = pu;
                track.gains.push(Some(k));
            }
            None => {
                x = xp;
                p = pp;
                track.gains.push(None);
            }
        }
        track.post_state.push(x);
        track.post_cov.push(p);
    }
    Ok(track)
}

fn invert_prior(p: &Matrix2<f64>, t: usize) -> Matrix2<f64> {
    let scale = p.abs().max();
    let det = p.determinant();
    if det > f64::EPSILON * scale * scale && det.is_finite() {
        if let Some(inv) = p.try_inverse() {
            return inv;
        }
    }
    log::warn!("prior covariance at window {t} is singular; loading its diagonal by {SMOOTHER_LOADING}");
    (p + Matrix2::identity() * SMOOTHER_LOADING)
        .try_inverse()
        .unwrap_or_else(|| Matrix2::identity() / SMOOTHER_LOADING)
}

/// Backward pass filling the smoothed sequences and smoother gains.
pub fn rts_smooth(mut track: AoATrack) -> AoATrack {
    let t_len = track.len();
    track.smoothed_state = track.post_state.clone();
    track.smoothed_cov = track.post_cov.clone();
    track.smoother_gains = vec![Matrix2::zeros(); t_len.saturating_sub(1)];
    if t_len < 2 {
        return track;
    }
    let f = Matrix2::new(1.0, track.dt, 0.0, 1.0);
    for t in (0..t_len - 1).rev() {
        let g = track.post_cov[t] * f.transpose() * invert_prior(&track.prior_cov[t + 1], t + 1);
        let xs = track.post_state[t] + g * (track.smoothed_state[t + 1] - track.prior_state[t + 1]);
        let ps = track.post_cov[t] + g * (track.smoothed_cov[t + 1] - track.prior_cov[t + 1]) * g.transpose();
        track.smoothed_state[t] = xs;
        track.smoothed_cov[t] = symmetrize(ps);
        track.smoother_gains[t] = g;
    }
    track
}

/// Filter then smooth.
pub fn track_sequence(z: &[Option<f64>], cfg: &KalmanConfig) -> Result<AoATrack> {
    Ok(rts_smooth(filter_sequence(z, cfg)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg(dt: f64) -> KalmanConfig {
        KalmanConfig::default().with_dt(dt)
    }

    #[test]
    fn predict_examples() {
        let f = Matrix2::new(1.0, 0.5, 0.0, 1.0);
        let (x, _) = predict(&Vector2::new(1.0, 2.0), &Matrix2::identity(), &f, &Matrix2::zeros());
        assert_eq!(x, Vector2::new(2.0, 2.0));
        let (x, _) = predict(&Vector2::new(0.3, 0.0), &Matrix2::identity(), &f, &Matrix2::zeros());
        assert_eq!(x, Vector2::new(0.3, 0.0));
        let q = Matrix2::new(0.2, 0.0, 0.0, 0.7);
        let (_, p) = predict(&Vector2::zeros(), &Matrix2::zeros(), &f, &q);
        assert_eq!(p, q);
    }

    #[test]
    fn update_examples() {
        let prior = Vector2::new(0.2, -0.1);
        let (x, _, k) = update(&prior, &Matrix2::identity(), 0.5, 1e12).unwrap();
        assert!(k.norm() < 1e-11);
        assert_abs_diff_eq!((x - prior).norm(), 0.0, epsilon = 1e-11);
        let (_, _, k) = update(&prior, &Matrix2::identity(), 0.5, 1.0).unwrap();
        assert_eq!(k, Vector2::new(0.5, 0.0));
        let p = Matrix2::new(2.0, 0.3, 0.3, 1.0);
        let (x, _, _) = update(&prior, &p, 0.2, 0.1).unwrap();
        assert_eq!(x, prior);
        assert!(matches!(
            update(&prior, &Matrix2::zeros(), 0.0, 0.0),
            Err(Error::NumericalDegeneracy(_))
        ));
    }

    #[test]
    fn noiseless_constant_rate_is_recovered() {
        let dt = 0.1;
        let truth: Vec<f64> = (0..20).map(|t| -0.2 + 0.05 * dt * t as f64).collect();
        let z: Vec<Option<f64>> = truth.iter().map(|v| Some(*v)).collect();
        let c = KalmanConfig {
            sigma_theta: 0.0,
            sigma_omega: 0.0,
            sigma_v: 1e-9,
            ..cfg(dt)
        };
        let tr = track_sequence(&z, &c).unwrap();
        for (t, x) in tr.post_state.iter().enumerate().skip(3) {
            assert!((x[0] - truth[t]).abs() < 1e-6, "t={t}");
            assert!((x[1] - 0.05).abs() < 1e-4);
        }
        for (x, want) in tr.smoothed_state.iter().zip(&truth) {
            assert!((x[0] - want).abs() < 1e-6);
        }
    }

    #[test]
    fn missing_measurement_skips_update() {
        let mut z: Vec<Option<f64>> = (0..10).map(|t| Some(0.01 * t as f64)).collect();
        z[5] = None;
        let tr = filter_sequence(&z, &cfg(0.1)).unwrap();
        assert_eq!(tr.post_state[5], tr.prior_state[5]);
        assert_eq!(tr.post_cov[5], tr.prior_cov[5]);
        assert!(tr.gains[5].is_none());
        assert!(!tr.low_confidence);
    }

    #[test]
    fn single_window() {
        let tr = track_sequence(&[Some(0.3)], &cfg(0.1)).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.smoothed_state, tr.post_state);
        assert_eq!(tr.smoothed_cov, tr.post_cov);
        let k = tr.gains[0].unwrap();
        assert!(k[0] > 0.0 && k[0] < 1.0);
    }

    #[test]
    fn all_missing_is_pure_prediction() {
        let c = KalmanConfig {
            x0: Some([0.1, 0.2]),
            ..cfg(0.5)
        };
        let tr = track_sequence(&[None; 4], &c).unwrap();
        assert!(tr.low_confidence);
        for t in 0..4 {
            assert_abs_diff_eq!(tr.post_state[t][0], 0.1 + 0.2 * 0.5 * (t + 1) as f64, epsilon = 1e-12);
        }
        assert!(filter_sequence(&[None; 3], &cfg(0.5)).unwrap().low_confidence);
    }

    #[test]
    fn rate_seeding_option() {
        let z = [None, Some(0.1), None, Some(0.3)];
        let c = KalmanConfig {
            rate_from_first_two: true,
            ..cfg(0.1)
        };
        let tr = filter_sequence(&z, &c).unwrap();
        assert_abs_diff_eq!(tr.x0[0], 0.1);
        assert_abs_diff_eq!(tr.x0[1], 1.0, epsilon = 1e-12);
        assert_eq!(filter_sequence(&z, &cfg(0.1)).unwrap().x0[1], 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(filter_sequence(&[Some(0.0)], &KalmanConfig::default()).is_err());
        assert!(cfg(-1.0).validate().is_err());
        let bad = KalmanConfig {
            sigma_v: 0.0,
            ..cfg(0.1)
        };
        assert!(bad.validate().is_err());
        let asym = KalmanConfig {
            p0: [[1.0, 0.5], [0.0, 1.0]],
            ..cfg(0.1)
        };
        assert!(asym.validate().is_err());
    }

    #[test]
    fn singular_prior_is_regularized() {
        let c = KalmanConfig {
            sigma_theta: 0.0,
            sigma_omega: 0.0,
            p0: [[0.0, 0.0], [0.0, 0.0]],
            x0: Some([0.0, 0.0]),
            ..cfg(0.1)
        };
        let tr = track_sequence(&[Some(0.1), Some(0.2), Some(0.1)], &c).unwrap();
        assert!(tr.smoothed_state.iter().all(|x| x.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn smoothing_never_inflates_trace() {
        let mut rng = crate::seed::rng(2);
        use rand::Rng;
        let z: Vec<Option<f64>> = (0..30)
            .map(|_| if rng.random_bool(0.8) { Some(rng.random_range(-0.3..0.3)) } else { None })
            .collect();
        let tr = track_sequence(&z, &cfg(0.2)).unwrap();
        for t in 0..30 {
            assert!(tr.smoothed_cov[t].trace() <= tr.post_cov[t].trace() + 1e-9);
        }
    }
}
