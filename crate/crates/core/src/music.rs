//! Per-window MUSIC angle measurement for the two-element array.
//!
//! The sample covariance `R = Y Y^H / n` of a window is split into a
//! one-dimensional signal subspace and a one-dimensional noise subspace by a
//! closed-form Hermitian eigendecomposition. The AoA is the peak of
//! `1 / (a^H u_n u_n^H a)` over a grid, refined by golden-section search.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{steering_vector, ArrayGeometry};
use crate::preprocess::IqWindow;
use crate::sim::ReferenceSignal;
use crate::{Error, Result};

/// Floor on the pseudospectrum denominator.
pub const SPECTRUM_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovEstimate {
    pub matrix: Matrix2<Complex64>,
    pub num_snapshots: usize,
}

impl CovEstimate {
    pub fn trace(&self) -> f64 {
        self.matrix[(0, 0)].re + self.matrix[(1, 1)].re
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eig2 {
    /// `(signal, noise)`, signal >= noise.
    pub eigvals: (f64, f64),
    pub signal: Vector2<Complex64>,
    pub noise: Vector2<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AoAMeasurement {
    pub window_idx: usize,
    pub theta_hat: f64,
    pub spectrum_peak: f64,
    pub valid: bool,
}

/// Search settings, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MusicConfig {
    pub theta_min: f64,
    pub theta_max: f64,
    pub grid_step: f64,
    /// Golden-section search stops once the bracket is this narrow.
    pub refine_tol: f64,
}

impl Default for MusicConfig {
    fn default() -> Self {
        Self {
            theta_min: (-18f64).to_radians(),
            theta_max: 18f64.to_radians(),
            grid_step: 0.1f64.to_radians(),
            refine_tol: 0.01f64.to_radians(),
        }
    }
}

impl MusicConfig {
    pub fn validate(&self, geometry: &ArrayGeometry) -> Result<()> {
        if !(self.theta_min < self.theta_max) {
            return Err(Error::invalid(format!(
                "search range [{}, {}] is empty",
                self.theta_min, self.theta_max
            )));
        }
        let fov = geometry.fov_limit() + 1e-12;
        if self.theta_min < -fov || self.theta_max > fov {
            return Err(Error::invalid(format!(
                "search range [{:.3}, {:.3}] deg exceeds the unambiguous field of view +/-{:.3} deg",
                self.theta_min.to_degrees(),
                self.theta_max.to_degrees(),
                geometry.fov_limit().to_degrees()
            )));
        }
        if !(self.grid_step > 0.0 && self.refine_tol > 0.0) {
            return Err(Error::invalid("grid_step and refine_tol must be positive"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.theta_max - self.theta_min) / self.grid_step).round() as usize;
        let n = n.max(1);
        (0..=n)
            .map(|i| self.theta_min + (self.theta_max - self.theta_min) * i as f64 / n as f64)
            .collect()
    }
}

/// `(1/n) Y Y^H`; `None` for an incomplete window.
pub fn sample_covariance(window: &IqWindow) -> Option<CovEstimate> {
    if !window.complete {
        return None;
    }
    let [y1, y2] = &window.rows;
    let n = y1.len();
    if n < 2 || y2.len() != n {
        return None;
    }
    let mut r11 = 0.0;
    let mut r22 = 0.0;
    let mut r12 = Complex64::new(0.0, 0.0);
    for (a, b) in y1.iter().zip(y2) {
        r11 += a.norm_sqr();
        r22 += b.norm_sqr();
        r12 += a * b.conj();
    }
    let inv = 1.0 / n as f64;
    let matrix = Matrix2::new(
        Complex64::new(r11 * inv, 0.0),
        r12 * inv,
        r12.conj() * inv,
        Complex64::new(r22 * inv, 0.0),
    );
    Some(CovEstimate {
        matrix,
        num_snapshots: n,
    })
}

/// Divide every snapshot by the known transmit sample of its ADC slot.
pub fn compensate_reference(window: &IqWindow, reference: &ReferenceSignal, ordinal: usize) -> IqWindow {
    let mut out = window.clone();
    for (m, row) in out.rows.iter_mut().enumerate() {
        for (v, &k) in row.iter_mut().zip(&window.snapshot_index) {
            *v /= reference.sample(k, m as u8 + 1, ordinal);
        }
    }
    out
}

/// Closed-form eigenpairs of a 2x2 Hermitian matrix.
pub fn eig2_hermitian(r: &Matrix2<Complex64>) -> Result<Eig2> {
    let scale = r.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let tol = 1e-9 * scale.max(f64::MIN_POSITIVE);
    if (r[(0, 1)] - r[(1, 0)].conj()).norm() > tol || r[(0, 0)].im.abs() > tol || r[(1, 1)].im.abs() > tol {
        return Err(Error::invalid("matrix is not Hermitian"));
    }
    let a = r[(0, 0)].re;
    let d = r[(1, 1)].re;
    let b = (r[(0, 1)] + r[(1, 0)].conj()) * 0.5;
    let half_tr = 0.5 * (a + d);
    // sqrt(tr^2 - 4 det) / 2 written without cancellation.
    let disc = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    let ls = half_tr + disc;
    let ln = half_tr - disc;

    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let signal = if b.norm() <= f64::EPSILON * scale {
        if a >= d {
            Vector2::new(one, zero)
        } else {
            Vector2::new(zero, one)
        }
    } else {
        // Rows of (R - ls I) give two candidate null vectors; keep the better scaled one.
        let v1 = Vector2::new(b, Complex64::new(ls - a, 0.0));
        let v2 = Vector2::new(Complex64::new(ls - d, 0.0), b.conj());
        let v = if v1.norm() >= v2.norm() { v1 } else { v2 };
        v / Complex64::new(v.norm(), 0.0)
    };
    let noise = Vector2::new(-signal[1].conj(), signal[0].conj());
    Ok(Eig2 {
        eigvals: (ls, ln),
        signal,
        noise,
    })
}

/// `1 / (a^H u u^H a)` with the denominator floored at [`SPECTRUM_FLOOR`].
pub fn music_spectrum(theta: f64, noise_vec: &Vector2<Complex64>, geometry: &ArrayGeometry) -> f64 {
    let a = steering_vector(theta, geometry);
    let proj = a[0].conj() * noise_vec[0] + a[1].conj() * noise_vec[1];
    1.0 / proj.norm_sqr().max(SPECTRUM_FLOOR)
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximize `f` on `[lo, hi]` until the bracket is narrower than `tol`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Peak of the pseudospectrum over `[theta_min, theta_max]` for a noise vector.
pub fn peak_search(noise: &Vector2<Complex64>, geometry: &ArrayGeometry, cfg: &MusicConfig) -> (f64, f64) {
    let grid = cfg.grid();
    let spectrum = |t: f64| music_spectrum(t, noise, geometry);
    let (best, best_val) = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| (i, spectrum(t)))
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (t, v) = golden_max(spectrum, lo, hi, cfg.refine_tol);
    if v >= best_val {
        (t, v)
    } else {
        (grid[best], best_val)
    }
}

/// MUSIC estimate for one window; incomplete windows give `valid == false`.
pub fn estimate_aoa(window: &IqWindow, geometry: &ArrayGeometry, cfg: &MusicConfig) -> Result<AoAMeasurement> {
    cfg.validate(geometry)?;
    let Some(cov) = sample_covariance(window) else {
        return Ok(AoAMeasurement {
            window_idx: window.window_idx,
            theta_hat: f64::NAN,
            spectrum_peak: 0.0,
            valid: false,
        });
    };
    let eig = eig2_hermitian(&cov.matrix).map_err(|e| e.with_context(&window.tag_id, window.window_idx))?;
    let (theta, peak) = peak_search(&eig.noise, geometry, cfg);
    Ok(AoAMeasurement {
        window_idx: window.window_idx,
        theta_hat: theta,
        spectrum_peak: peak,
        valid: true,
    })
}

/// Pseudospectrum of a window over `thetas`, for plotting.
pub fn window_spectrum(window: &IqWindow, geometry: &ArrayGeometry, thetas: &[f64]) -> Result<Vec<f64>> {
    let cov = sample_covariance(window).ok_or_else(|| Error::invalid("window is incomplete"))?;
    let eig = eig2_hermitian(&cov.matrix)?;
    Ok(thetas.iter().map(|&t| music_spectrum(t, &eig.noise, geometry)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{SasSchedule, SimScene, simulate_window};
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn window(row1: Vec<Complex64>, row2: Vec<Complex64>) -> IqWindow {
        IqWindow::new("T", 0, row1, row2, 0.0)
    }

    fn noiseless(theta: f64) -> IqWindow {
        let scene = SimScene {
            noise_var: 0.0,
            ..SimScene::los_only(ArrayGeometry::default(), &[("T", 0.0)], 0.0)
        };
        simulate_window(&scene, &SasSchedule::default(), &[theta], 0, 0)
            .unwrap()
            .remove(0)
    }

    #[test]
    fn covariance_examples() {
        let r = sample_covariance(&window(vec![c(1., 0.), c(1., 0.)], vec![c(1., 0.), c(1., 0.)])).unwrap();
        for v in r.matrix.iter() {
            assert_abs_diff_eq!((v - c(1., 0.)).norm(), 0.0, epsilon = 1e-15);
        }
        let r = sample_covariance(&window(vec![c(1., 0.), c(0., 0.)], vec![c(0., 0.), c(1., 0.)])).unwrap();
        assert_abs_diff_eq!((r.matrix - Matrix2::identity() * c(0.5, 0.)).norm(), 0.0, epsilon = 1e-15);

        let r = sample_covariance(&noiseless(15f64.to_radians())).unwrap();
        assert_abs_diff_eq!(r.matrix[(0, 1)].arg(), -2.6018, epsilon = 1e-3);
        assert_eq!(r.num_snapshots, 50);
    }

    #[test]
    fn incomplete_window_has_no_covariance() {
        let w = window(vec![c(1., 0.); 4], vec![]);
        assert!(!w.complete);
        assert!(sample_covariance(&w).is_none());
        let m = estimate_aoa(&w, &ArrayGeometry::default(), &MusicConfig::default()).unwrap();
        assert!(!m.valid);
    }

    #[test]
    fn covariance_trace_is_scaled_energy() {
        let w = noiseless(0.1).scaled(c(0.3, -1.2));
        let r = sample_covariance(&w).unwrap();
        let energy: f64 = w.rows.iter().flatten().map(|v| v.norm_sqr()).sum();
        assert_abs_diff_eq!(r.trace(), energy / 50.0, epsilon = 1e-12);
    }

    #[test]
    fn eig_examples() {
        let diag = Matrix2::new(c(2., 0.), c(0., 0.), c(0., 0.), c(1., 0.));
        let e = eig2_hermitian(&diag).unwrap();
        assert_eq!(e.eigvals, (2.0, 1.0));
        assert_abs_diff_eq!((e.signal - Vector2::new(c(1., 0.), c(0., 0.))).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((e.noise - Vector2::new(c(0., 0.), c(1., 0.))).norm(), 0.0, epsilon = 1e-15);

        let ones = Matrix2::from_element(c(1., 0.));
        let e = eig2_hermitian(&ones).unwrap();
        assert_abs_diff_eq!(e.eigvals.0, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.eigvals.1, 0.0, epsilon = 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let dot = e.signal[0].conj() * s + e.signal[1].conj() * s;
        assert_abs_diff_eq!(dot.norm(), 1.0, epsilon = 1e-12);

        let r = Matrix2::new(c(2., 0.), c(0.3, -0.4), c(0.3, 0.4), c(1., 0.));
        let e1 = eig2_hermitian(&r).unwrap();
        let e3 = eig2_hermitian(&(r * c(3., 0.))).unwrap();
        assert_abs_diff_eq!(e3.eigvals.0, 3.0 * e1.eigvals.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e3.eigvals.1, 3.0 * e1.eigvals.1, epsilon = 1e-12);
        let overlap = (e1.signal.adjoint() * e3.signal)[(0, 0)].norm();
        assert_abs_diff_eq!(overlap, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let r = Matrix2::new(c(1., 0.), c(1., 0.), c(0., 0.), c(1., 0.));
        assert!(matches!(eig2_hermitian(&r), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn spectrum_examples() {
        let g = ArrayGeometry::default();
        let theta0 = 10f64.to_radians();
        let cov = sample_covariance(&noiseless(theta0)).unwrap();
        let e = eig2_hermitian(&cov.matrix).unwrap();
        assert!(music_spectrum(theta0, &e.noise, &g) >= 1e12);

        // u_n = a / |a|: a^H u u^H a = |a|^2 = 2.
        let a = steering_vector(0.2, &g);
        let u = a / c(2f64.sqrt(), 0.);
        assert_abs_diff_eq!(music_spectrum(0.2, &u, &g), 0.5, epsilon = 1e-12);
        // Unnormalized a gives 1/|a|^4.
        assert_abs_diff_eq!(music_spectrum(0.2, &a, &g), 0.25, epsilon = 1e-12);

        let u = Vector2::new(c(0.6, 0.1), c(-0.3, 0.733));
        let u = u / c(u.norm(), 0.);
        let alias = ((-0.2f64).sin() + 0.625).asin();
        let ratio = music_spectrum(-0.2, &u, &g) / music_spectrum(alias, &u, &g);
        assert_abs_diff_eq!(ratio, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn noiseless_estimates() {
        let g = ArrayGeometry::default();
        let cfg = MusicConfig::default();
        let m = estimate_aoa(&noiseless(0.0), &g, &cfg).unwrap();
        assert!(m.valid);
        assert!(m.theta_hat.to_degrees().abs() <= 0.01);
        let m = estimate_aoa(&noiseless(-7.3f64.to_radians()), &g, &cfg).unwrap();
        assert_abs_diff_eq!(m.theta_hat.to_degrees(), -7.3, epsilon = 0.01);
    }

    #[test]
    fn search_range_must_fit_fov() {
        let g = ArrayGeometry::default();
        let wide = MusicConfig {
            theta_max: 25f64.to_radians(),
            ..MusicConfig::default()
        };
        assert!(estimate_aoa(&noiseless(0.0), &g, &wide).is_err());
        let empty = MusicConfig {
            theta_min: 0.1,
            theta_max: 0.1,
            ..MusicConfig::default()
        };
        assert!(empty.validate(&g).is_err());
    }

    #[test]
    fn golden_section_matches_fine_grid() {
        let g = ArrayGeometry::default();
        let cfg = MusicConfig::default();
        let scene = SimScene::los_only(g, &[("T", 0.0)], 5.0);
        for seed in 0..20u64 {
            let theta = (-15.0 + 1.5 * seed as f64).to_radians();
            let w = simulate_window(&scene, &SasSchedule::default(), &[theta], 0, seed).unwrap().remove(0);
            let e = eig2_hermitian(&sample_covariance(&w).unwrap().matrix).unwrap();
            let (t, _) = peak_search(&e.noise, &g, &cfg);
            // Exhaustive 0.001 deg grid.
            let n = 36_000;
            let brute = (0..=n)
                .map(|i| (-18.0 + 36.0 * i as f64 / n as f64).to_radians())
                .map(|x| (x, music_spectrum(x, &e.noise, &g)))
                .fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
                .0;
            assert!((t - brute).to_degrees().abs() <= 0.02, "seed {seed}: {t} vs {brute}");
        }
    }
}
