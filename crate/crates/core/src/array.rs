//! Two-element reader array: geometry, round-trip steering vectors and the
//! unambiguous field of view.
//!
//! Angles are radians measured from array broadside (the +y axis of the
//! reader frame) as `atan2(q_y, q_x) - pi/2`, which makes them positive
//! toward -x.

use nalgebra::Vector2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::{Error, Result, SPEED_OF_LIGHT};

/// Carrier used in the reference deployment, Hz.
pub const DEFAULT_CARRIER_HZ: f64 = 865.7e6;
/// Reference element spacing in wavelengths.
pub const DEFAULT_SPACING_WAVELENGTHS: f64 = 0.8;

pub type SteeringVector = Vector2<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    pub carrier_freq_hz: f64,
    pub element_spacing_m: f64,
}

impl ArrayGeometry {
    pub const NUM_ELEMENTS: usize = 2;

    pub fn new(carrier_freq_hz: f64, element_spacing_m: f64) -> Result<Self> {
        let g = Self {
            carrier_freq_hz,
            element_spacing_m,
        };
        g.validate()?;
        Ok(g)
    }

    /// Geometry with spacing given as a multiple of the carrier wavelength.
    pub fn with_spacing_wavelengths(carrier_freq_hz: f64, spacing: f64) -> Result<Self> {
        let lambda = wavelength_for(carrier_freq_hz)?;
        Self::new(carrier_freq_hz, spacing * lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_freq_hz.is_finite() && self.carrier_freq_hz > 0.0) {
            return Err(Error::invalid(format!(
                "carrier_freq_hz must be positive, got {}",
                self.carrier_freq_hz
            )));
        }
        if !(self.element_spacing_m.is_finite() && self.element_spacing_m > 0.0) {
            return Err(Error::invalid(format!(
                "element_spacing_m must be positive, got {}",
                self.element_spacing_m
            )));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    /// Round-trip inter-element phase slope, `4 pi d / lambda`.
    pub fn phase_slope(&self) -> f64 {
        4.0 * PI * self.element_spacing_m / self.wavelength()
    }

    pub fn fov_limit(&self) -> f64 {
        unambiguous_fov(self)
    }

    /// Far-field (Fraunhofer) distance `2 D^2 / lambda`, with `D` the spacing.
    pub fn far_field_distance(&self) -> f64 {
        2.0 * self.element_spacing_m.powi(2) / self.wavelength()
    }
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self::with_spacing_wavelengths(DEFAULT_CARRIER_HZ, DEFAULT_SPACING_WAVELENGTHS)
            .expect("default geometry is valid")
    }
}

fn wavelength_for(carrier_freq_hz: f64) -> Result<f64> {
    if !(carrier_freq_hz.is_finite() && carrier_freq_hz > 0.0) {
        return Err(Error::invalid(format!(
            "carrier frequency must be positive, got {carrier_freq_hz}"
        )));
    }
    Ok(SPEED_OF_LIGHT / carrier_freq_hz)
}

/// Carrier wavelength in metres.
pub fn wavelength(geometry: &ArrayGeometry) -> Result<f64> {
    wavelength_for(geometry.carrier_freq_hz)
}

/// Reader and tag positions in the reader frame, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenePose {
    pub reader_pos: [f64; 2],
    pub tag_pos: [f64; 2],
}

impl ScenePose {
    pub fn distance(&self) -> f64 {
        let dx = self.tag_pos[0] - self.reader_pos[0];
        let dy = self.tag_pos[1] - self.reader_pos[1];
        dx.hypot(dy)
    }

    pub fn is_far_field(&self, geometry: &ArrayGeometry) -> bool {
        self.distance() >= geometry.far_field_distance()
    }

    /// Pose of a tag at `range` metres and angle `theta` from a reader at the origin.
    pub fn from_polar(range: f64, theta: f64) -> Self {
        Self {
            reader_pos: [0.0, 0.0],
            tag_pos: [-range * theta.sin(), range * theta.cos()],
        }
    }
}

/// LoS angle of a tag relative to the array centre:
/// `atan2(q_y, q_x) - pi/2` with `q` the unit reader-to-tag direction.
///
/// The result lies in `(-3pi/2, pi/2]`; tags in front of the array map into
/// `(-pi/2, pi/2)`.
pub fn aoa_from_positions(pose: &ScenePose) -> Result<f64> {
    let dist = pose.distance();
    if !(dist > 0.0) {
        return Err(Error::invalid("reader and tag positions coincide"));
    }
    let qx = (pose.tag_pos[0] - pose.reader_pos[0]) / dist;
    let qy = (pose.tag_pos[1] - pose.reader_pos[1]) / dist;
    Ok(qy.atan2(qx) - FRAC_PI_2)
}

/// Round-trip steering vector `[1, exp(j (4 pi d / lambda) sin theta)]`.
pub fn steering_vector(theta: f64, geometry: &ArrayGeometry) -> SteeringVector {
    let phase = geometry.phase_slope() * theta.sin();
    Vector2::new(Complex64::new(1.0, 0.0), Complex64::from_polar(1.0, phase))
}

/// Half-width of the unambiguous field of view, `asin(lambda / (4 d))`,
/// saturating at `pi/2` for dense arrays.
pub fn unambiguous_fov(geometry: &ArrayGeometry) -> f64 {
    let arg = geometry.wavelength() / (4.0 * geometry.element_spacing_m);
    if arg >= 1.0 {
        FRAC_PI_2
    } else {
        arg.asin()
    }
}

/// Angles that share a steering vector with `theta`, i.e. those whose sine
/// differs by a multiple of `lambda / (2 d)`, restricted to `[-pi/2, pi/2]`.
pub fn aliases(theta: f64, geometry: &ArrayGeometry) -> Vec<f64> {
    let period = geometry.wavelength() / (2.0 * geometry.element_spacing_m);
    let s = theta.sin();
    let mut out = Vec::new();
    let max_k = (2.0 / period).ceil() as i64 + 1;
    for k in -max_k..=max_k {
        if k == 0 {
            continue;
        }
        let s_alias = s + k as f64 * period;
        if (-1.0..=1.0).contains(&s_alias) {
            out.push(s_alias.asin());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn geometry(spacing_wavelengths: f64) -> ArrayGeometry {
        ArrayGeometry::with_spacing_wavelengths(DEFAULT_CARRIER_HZ, spacing_wavelengths).unwrap()
    }

    #[test]
    fn wavelength_examples() {
        let g = ArrayGeometry::default();
        let lambda = wavelength(&g).unwrap();
        assert_abs_diff_eq!(lambda, 0.346_300_633, epsilon = 1e-8);
        // Reported 34.65 cm (rounded with c ~ 3e8).
        assert_abs_diff_eq!(lambda, 0.3465, epsilon = 5e-4);

        let g = ArrayGeometry::new(SPEED_OF_LIGHT, 0.1).unwrap();
        assert_abs_diff_eq!(wavelength(&g).unwrap(), 1.0, epsilon = 1e-15);
        let g = ArrayGeometry::new(2.0 * SPEED_OF_LIGHT, 0.1).unwrap();
        assert_abs_diff_eq!(wavelength(&g).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn rejects_non_positive_frequency() {
        assert!(ArrayGeometry::new(0.0, 0.1).is_err());
        assert!(ArrayGeometry::new(-1.0, 0.1).is_err());
        assert!(ArrayGeometry::new(1e9, 0.0).is_err());
        let bad = ArrayGeometry {
            carrier_freq_hz: -5.0,
            element_spacing_m: 0.1,
        };
        assert!(matches!(wavelength(&bad), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn aoa_from_positions_examples() {
        let pose = |x: f64, y: f64| ScenePose {
            reader_pos: [0.0, 0.0],
            tag_pos: [x, y],
        };
        assert_abs_diff_eq!(aoa_from_positions(&pose(0.0, 3.0)).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            aoa_from_positions(&pose(3.0, 3.0)).unwrap(),
            -std::f64::consts::FRAC_PI_4,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            aoa_from_positions(&pose(-3.0, 3.0)).unwrap(),
            std::f64::consts::FRAC_PI_4,
            epsilon = 1e-15
        );
        assert!(aoa_from_positions(&pose(0.0, 0.0)).is_err());
    }

    #[test]
    fn aoa_range_in_front_of_array() {
        for i in 1..180 {
            let phi = (i as f64).to_radians();
            let p = ScenePose {
                reader_pos: [1.0, -2.0],
                tag_pos: [1.0 + 3.0 * phi.cos(), -2.0 + 3.0 * phi.sin()],
            };
            let theta = aoa_from_positions(&p).unwrap();
            assert!(theta > -FRAC_PI_2 && theta < FRAC_PI_2);
        }
        let behind = ScenePose {
            reader_pos: [0.0, 0.0],
            tag_pos: [-1.0, -1.0],
        };
        let theta = aoa_from_positions(&behind).unwrap();
        assert!(theta > -1.5 * PI && theta <= FRAC_PI_2);
    }

    #[test]
    fn steering_vector_examples() {
        let g = geometry(0.8);
        let a0 = steering_vector(0.0, &g);
        assert_eq!(a0[0], Complex64::new(1.0, 0.0));
        assert_abs_diff_eq!(a0[1].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a0[1].im, 0.0, epsilon = 1e-15);

        let a15 = steering_vector(15f64.to_radians(), &g);
        assert_eq!(a15[0], Complex64::new(1.0, 0.0));
        assert_abs_diff_eq!(a15[1].norm(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a15[1].arg(), 2.6018, epsilon = 1e-3);

        let am = steering_vector(-15f64.to_radians(), &g);
        assert_abs_diff_eq!((am[1] - a15[1].conj()).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn round_trip_phase_is_twice_one_way() {
        let g = geometry(0.8);
        let one_way = 2.0 * PI * g.element_spacing_m / g.wavelength();
        for deg in -90..=90 {
            let theta = (deg as f64).to_radians();
            let expected = Complex64::from_polar(1.0, 2.0 * one_way * theta.sin());
            let got = steering_vector(theta, &g)[1];
            assert_abs_diff_eq!((got - expected).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn fov_examples() {
        assert_abs_diff_eq!(unambiguous_fov(&geometry(0.8)).to_degrees(), 18.21, epsilon = 0.01);
        assert_abs_diff_eq!(unambiguous_fov(&geometry(0.25)), FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(unambiguous_fov(&geometry(0.5)).to_degrees(), 30.0, epsilon = 1e-9);
        // Dense arrays saturate.
        assert_eq!(unambiguous_fov(&geometry(0.1)), FRAC_PI_2);
    }

    #[test]
    fn alias_of_broadside() {
        let g = geometry(0.8);
        let alias = 0.625f64.asin();
        assert_abs_diff_eq!(alias.to_degrees(), 38.68, epsilon = 0.01);
        let a = steering_vector(0.0, &g);
        let b = steering_vector(alias, &g);
        assert!((a - b).norm() < 1e-12);
        let all = aliases(0.0, &g);
        assert!(all.iter().any(|t| (t - alias).abs() < 1e-12));
        assert!(all.iter().any(|t| (t + alias).abs() < 1e-12));
    }

    #[test]
    fn distinct_inside_fov() {
        let g = geometry(0.8);
        let fov = unambiguous_fov(&g);
        let n = 200;
        // Half-open: the two edges alias onto each other.
        let grid: Vec<f64> = (0..n)
            .map(|i| -fov + 2.0 * fov * i as f64 / n as f64)
            .collect();
        for (i, &t1) in grid.iter().enumerate() {
            for &t2 in &grid[i + 1..] {
                let d = (steering_vector(t1, &g) - steering_vector(t2, &g)).norm();
                assert!(d > 1e-6, "{t1} vs {t2}");
            }
        }
    }

    #[test]
    fn far_field_flag() {
        let g = geometry(0.8);
        let pose = ScenePose::from_polar(3.0, 0.1);
        assert!(pose.is_far_field(&g));
        let near = ScenePose::from_polar(0.05, 0.1);
        assert!(!near.is_far_field(&g));
        assert_abs_diff_eq!(aoa_from_positions(&pose).unwrap(), 0.1, epsilon = 1e-12);
    }
}
