//! Daubechies discrete wavelet transform.
//!
//! Filter taps and the downsampling phase follow the PyWavelets convention,
//! so coefficients are directly comparable with `pywt.wavedec`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const DB1: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
const DB2: [f64; 4] = [-0.12940952255126037, 0.2241438680420134, 0.8365163037378079, 0.48296291314453416];
const DB3: [f64; 6] = [
    0.03522629188570953,
    -0.08544127388202666,
    -0.13501102001025458,
    0.45987750211849154,
    0.8068915093110925,
    0.33267055295008263,
];
const DB4: [f64; 8] = [
    -0.010597401785069032,
    0.0328830116668852,
    0.030841381835560764,
    -0.18703481171909309,
    -0.027983769416859854,
    0.6308807679298589,
    0.7148465705529157,
    0.2303778133088965,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extension {
    /// Half-sample symmetric: `x[-1] = x[0]`.
    Symmetric,
    /// Circular, even-length signals only.
    Periodization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Wavelet {
    pub order: usize,
    pub dec_lo: Vec<f64>,
    pub dec_hi: Vec<f64>,
}

impl Wavelet {
    pub fn daubechies(order: usize) -> Result<Self> {
        let lo: &[f64] = match order {
            1 => &DB1,
            2 => &DB2,
            3 => &DB3,
            4 => &DB4,
            _ => return Err(Error::invalid(format!("Daubechies order {order} not available (1-4)"))),
        };
        let f = lo.len();
        let hi = (0..f)
            .map(|k| if k % 2 == 0 { -lo[f - 1 - k] } else { lo[f - 1 - k] })
            .collect();
        Ok(Self {
            order,
            dec_lo: lo.to_vec(),
            dec_hi: hi,
        })
    }

    pub fn filter_len(&self) -> usize {
        self.dec_lo.len()
    }

    /// Output length of one analysis step.
    pub fn output_len(&self, n: usize, mode: Extension) -> usize {
        match mode {
            Extension::Symmetric => (n + self.filter_len() - 1) / 2,
            Extension::Periodization => n.div_ceil(2),
        }
    }
}

fn reflect(i: isize, n: usize) -> usize {
    let p = 2 * n as isize;
    let m = i.rem_euclid(p) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

fn convolve_down(x: &[f64], h: &[f64], mode: Extension) -> Vec<f64> {
    let n = x.len();
    let f = h.len();
    let out_len = match mode {
        Extension::Symmetric => (n + f - 1) / 2,
        Extension::Periodization => n / 2,
    };
    (0..out_len)
        .map(|o| {
            let centre = match mode {
                Extension::Symmetric => 2 * o as isize + 1,
                Extension::Periodization => 2 * o as isize + 1 + f as isize / 2 - 1,
            };
            h.iter()
                .enumerate()
                .map(|(j, hj)| {
                    let i = centre - j as isize;
                    let idx = match mode {
                        Extension::Symmetric => reflect(i, n),
                        Extension::Periodization => i.rem_euclid(n as isize) as usize,
                    };
                    hj * x[idx]
                })
                .sum()
        })
        .collect()
}

/// One analysis step: `(approximation, detail)`.
pub fn dwt(x: &[f64], wavelet: &Wavelet, mode: Extension) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() < wavelet.filter_len() {
        return Err(Error::invalid(format!(
            "series of length {} is shorter than the db{} filter ({})",
            x.len(),
            wavelet.order,
            wavelet.filter_len()
        )));
    }
    if mode == Extension::Periodization && x.len() % 2 == 1 {
        let mut padded = x.to_vec();
        padded.push(x[x.len() - 1]);
        return dwt(&padded, wavelet, mode);
    }
    Ok((
        convolve_down(x, &wavelet.dec_lo, mode),
        convolve_down(x, &wavelet.dec_hi, mode),
    ))
}

/// One synthesis step producing `out_len` samples.
pub fn idwt(approx: &[f64], detail: &[f64], wavelet: &Wavelet, mode: Extension, out_len: usize) -> Result<Vec<f64>> {
    if approx.len() != detail.len() {
        return Err(Error::invalid("approximation and detail lengths differ"));
    }
    let f = wavelet.filter_len() as isize;
    let shift = match mode {
        Extension::Symmetric => 0,
        Extension::Periodization => f / 2 - 1,
    };
    let mut x = vec![0.0; out_len];
    for (o, (a, d)) in approx.iter().zip(detail).enumerate() {
        let centre = 2 * o as isize + 1 + shift;
        for j in 0..f {
            let i = centre - j;
            let idx = match mode {
                Extension::Symmetric if (0..out_len as isize).contains(&i) => i as usize,
                Extension::Symmetric => continue,
                Extension::Periodization => i.rem_euclid(out_len as isize) as usize,
            };
            x[idx] += a * wavelet.dec_lo[j as usize] + d * wavelet.dec_hi[j as usize];
        }
    }
    Ok(x)
}

/// Approximation coefficients after `levels` analysis steps.
pub fn dwt_coeffs(x: &[f64], wavelet: &Wavelet, levels: usize, mode: Extension) -> Result<Vec<f64>> {
    if x.len() < wavelet.filter_len() {
        return Err(Error::invalid(format!(
            "series of length {} is shorter than the db{} filter ({})",
            x.len(),
            wavelet.order,
            wavelet.filter_len()
        )));
    }
    let mut a = x.to_vec();
    for _ in 0..levels {
        // Later levels may run on inputs shorter than the filter; the
        // symmetric extension still defines them.
        a = if mode == Extension::Symmetric {
            convolve_down(&a, &wavelet.dec_lo, mode)
        } else {
            dwt(&a, wavelet, mode)?.0
        };
    }
    Ok(a)
}

/// Coefficient count of [`dwt_coeffs`] for an input of length `n`.
pub fn coeffs_len(n: usize, wavelet: &Wavelet, levels: usize, mode: Extension) -> usize {
    (0..levels).fold(n, |len, _| wavelet.output_len(len, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample20() -> Vec<f64> {
        (0..20).map(|i| (0.3 * i as f64).sin() + 0.005 * (i * i) as f64).collect()
    }

    #[test]
    fn filters_are_orthonormal() {
        for order in 1..=4 {
            let w = Wavelet::daubechies(order).unwrap();
            let e: f64 = w.dec_lo.iter().map(|v| v * v).sum();
            assert_abs_diff_eq!(e, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(w.dec_lo.iter().sum::<f64>(), 2f64.sqrt(), epsilon = 1e-12);
            assert_abs_diff_eq!(w.dec_hi.iter().sum::<f64>(), 0.0, epsilon = 1e-12);
        }
        assert!(Wavelet::daubechies(7).is_err());
    }

    #[test]
    fn matches_pywavelets() {
        let w = Wavelet::daubechies(4).unwrap();
        let x = sample20();
        let a2 = dwt_coeffs(&x, &w, 2, Extension::Symmetric).unwrap();
        let expected = [
            1.4086619641222322,
            0.32785390713525675,
            2.123911183282504,
            0.7688986003389993,
            0.7678926638675578,
            2.2489137703801716,
            1.6101703167528603,
            0.155242962156193,
            1.516119518460811,
            2.140044248536828,
        ];
        assert_eq!(a2.len(), expected.len());
        for (a, e) in a2.iter().zip(&expected) {
            assert_abs_diff_eq!(a, e, epsilon = 1e-12);
        }
        let (a1, d1) = dwt(&x, &w, Extension::Symmetric).unwrap();
        assert_eq!(a1.len(), 13);
        assert_abs_diff_eq!(a1[0], 1.428873153363976, epsilon = 1e-12);
        assert_abs_diff_eq!(a1[3], 0.43201642423452413, epsilon = 1e-12);
        let (_, d2) = dwt(&a1, &w, Extension::Symmetric).unwrap();
        assert_abs_diff_eq!(d2[0], -0.133862287598103, epsilon = 1e-12);
        assert_abs_diff_eq!(d2[7], -0.5557736847378209, epsilon = 1e-12);
        assert_eq!(d1.len(), 13);
    }

    #[test]
    fn constant_has_sqrt2_gain() {
        let w = Wavelet::daubechies(4).unwrap();
        let a = dwt_coeffs(&[2.5; 30], &w, 1, Extension::Symmetric).unwrap();
        for v in a {
            assert_abs_diff_eq!(v, 2.5 * 2f64.sqrt(), epsilon = 1e-9);
        }
    }

    #[test]
    fn coefficient_counts() {
        let w = Wavelet::daubechies(4).unwrap();
        assert_eq!(coeffs_len(64, &w, 2, Extension::Symmetric), 21);
        assert_eq!(dwt_coeffs(&vec![1.0; 64], &w, 2, Extension::Symmetric).unwrap().len(), 21);
        assert_eq!(coeffs_len(20, &w, 2, Extension::Symmetric), 10);
        assert_eq!(coeffs_len(64, &w, 2, Extension::Periodization), 16);
    }

    #[test]
    fn short_input_rejected() {
        let w = Wavelet::daubechies(4).unwrap();
        assert!(dwt(&[1.0; 7], &w, Extension::Symmetric).is_err());
        assert!(dwt_coeffs(&[1.0; 7], &w, 2, Extension::Symmetric).is_err());
    }

    #[test]
    fn impulse_round_trip() {
        for order in 1..=4 {
            let w = Wavelet::daubechies(order).unwrap();
            for mode in [Extension::Symmetric, Extension::Periodization] {
                let mut x = vec![0.0; 16];
                x[5] = 1.0;
                let (a, d) = dwt(&x, &w, mode).unwrap();
                let y = idwt(&a, &d, &w, mode, x.len()).unwrap();
                for (p, q) in x.iter().zip(&y) {
                    assert_abs_diff_eq!(p, q, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn periodic_energy_partition() {
        let w = Wavelet::daubechies(4).unwrap();
        let x = sample20();
        let (a, d) = dwt(&x, &w, Extension::Periodization).unwrap();
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ec: f64 = a.iter().chain(&d).map(|v| v * v).sum();
        assert!(((ex - ec) / ex).abs() < 1e-6);
    }
}
