//! The RTS smoother against a dense batch MAP solve of the same
//! linear-Gaussian problem.

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rfid_aoa::seed;
use rfid_aoa::tracker::{filter_sequence, rts_smooth, KalmanConfig};

/// Minimize over states x_0..x_T:
///   |x_0 - m0|^2_{P0^-1} + sum |x_t - F x_{t-1}|^2_{Q^-1} + sum (z_t - x_t[0])^2 / r
/// and return x_1..x_T.
fn batch_map(z: &[f64], cfg: &KalmanConfig, m0: [f64; 2]) -> Vec<[f64; 2]> {
    let t_len = z.len();
    let n = 2 * (t_len + 1);
    let dt = cfg.dt.unwrap();
    let f = Matrix2::new(1.0, dt, 0.0, 1.0);
    let q_inv = cfg.process_noise().try_inverse().unwrap();
    let p0_inv = cfg.p0_matrix().try_inverse().unwrap();
    let r = cfg.measurement_var();

    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    let add_block = |a: &mut DMatrix<f64>, i: usize, j: usize, m: &Matrix2<f64>| {
        for r in 0..2 {
            for c in 0..2 {
                a[(2 * i + r, 2 * j + c)] += m[(r, c)];
            }
        }
    };
    add_block(&mut a, 0, 0, &p0_inv);
    let pm = p0_inv * nalgebra::Vector2::new(m0[0], m0[1]);
    b[0] += pm[0];
    b[1] += pm[1];
    for t in 1..=t_len {
        // Residual x_t - F x_{t-1}.
        add_block(&mut a, t, t, &q_inv);
        add_block(&mut a, t - 1, t - 1, &(f.transpose() * q_inv * f));
        add_block(&mut a, t, t - 1, &(-q_inv * f));
        add_block(&mut a, t - 1, t, &(-f.transpose() * q_inv));
        a[(2 * t, 2 * t)] += 1.0 / r;
        b[2 * t] += z[t - 1] / r;
    }
    let x = a.cholesky().expect("normal equations are positive definite").solve(&b);
    (1..=t_len).map(|t| [x[2 * t], x[2 * t + 1]]).collect()
}

fn simulate(cfg: &KalmanConfig, t_len: usize, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let dt = cfg.dt.unwrap();
    let wt = Normal::new(0.0, cfg.sigma_theta).unwrap();
    let ww = Normal::new(0.0, cfg.sigma_omega).unwrap();
    let v = Normal::new(0.0, cfg.sigma_v).unwrap();
    let mut theta = rng.random_range(-0.2..0.2);
    let mut omega = rng.random_range(-0.3..0.3);
    let mut truth = Vec::with_capacity(t_len);
    let mut z = Vec::with_capacity(t_len);
    for _ in 0..t_len {
        theta += omega * dt + wt.sample(rng);
        omega += ww.sample(rng);
        truth.push(theta);
        z.push(theta + v.sample(rng));
    }
    (truth, z)
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

#[test]
fn smoother_matches_batch_map() {
    let cfg = KalmanConfig::default().with_dt(0.1);
    for s in 0..25 {
        let mut rng = seed::rng(seed::derive(77, s));
        let (_, z) = simulate(&cfg, 20, &mut rng);
        let obs: Vec<Option<f64>> = z.iter().copied().map(Some).collect();
        let tr = rts_smooth(filter_sequence(&obs, &cfg).unwrap());
        let oracle = batch_map(&z, &cfg, [tr.x0[0], tr.x0[1]]);
        for (t, x) in oracle.iter().enumerate() {
            let got = tr.smoothed_state[t];
            assert!((got[0] - x[0]).abs() < 1e-8, "seed {s} t {t}: {} vs {}", got[0], x[0]);
            assert!((got[1] - x[1]).abs() < 1e-7);
            assert!(tr.smoothed_cov[t].trace() <= tr.post_cov[t].trace() + 1e-12);
        }
    }
}

#[test]
fn smoothed_beats_filtered_beats_raw() {
    let cfg = KalmanConfig::default().with_dt(0.1);
    let (mut raw, mut filt, mut smooth) = (0.0, 0.0, 0.0);
    for s in 0..200 {
        let mut rng = seed::rng(seed::derive(5, s));
        let (truth, z) = simulate(&cfg, 20, &mut rng);
        let obs: Vec<Option<f64>> = z.iter().copied().map(Some).collect();
        let tr = rts_smooth(filter_sequence(&obs, &cfg).unwrap());
        raw += rmse(&z, &truth);
        filt += rmse(&tr.filtered_theta(), &truth);
        smooth += rmse(&tr.smoothed_theta(), &truth);
    }
    assert!(smooth <= filt && filt <= raw, "{smooth} {filt} {raw}");
}

/// Least-squares line through the observed points, evaluated at `t`.
fn line_fit_at(z: &[Option<f64>], t: f64) -> f64 {
    let pts: Vec<(f64, f64)> = z.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i as f64, v))).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    my + sxy / sxx * (t - mx)
}

#[test]
fn gap_estimate_lies_between_neighbours() {
    // Monotone truth with one interior gap.
    let cfg = KalmanConfig::default().with_dt(0.1);
    let (mut inside, mut inside_line) = (0, 0);
    let n = 200;
    for s in 0..n {
        let mut rng = seed::rng(seed::derive(19, s));
        let noise = Normal::new(0.0, cfg.sigma_v).unwrap();
        let truth: Vec<f64> = (0..15).map(|t| -0.3 + 0.04 * t as f64).collect();
        let mut z: Vec<Option<f64>> = truth.iter().map(|v| Some(v + noise.sample(&mut rng))).collect();
        z[7] = None;
        let tr = rts_smooth(filter_sequence(&z, &cfg).unwrap());
        let (lo, hi) = (tr.post_state[6][0], tr.post_state[8][0]);
        let between = |g: f64| g >= lo.min(hi) && g <= lo.max(hi);
        inside += between(tr.smoothed_state[7][0]) as usize;
        inside_line += between(line_fit_at(&z, 7.0)) as usize;
    }
    assert!(inside as f64 >= 0.9 * n as f64, "{inside}/{n}");
    assert!(inside + 10 >= inside_line, "{inside} vs line fit {inside_line}");
}
