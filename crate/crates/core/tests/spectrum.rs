//! Periodogram check of the synthetic initial conditions: the velocity power
//! per wavenumber falls off as |kappa|^-(2H+2).

use std::f64::consts::PI;

use okdmd::synthgen::{sample_initial, GridSpec};

/// `|DFT|^2` of one `n x n` component, by separable direct transforms.
fn power(field: &[f64], n: usize) -> Vec<f64> {
    let (cos, sin): (Vec<f64>, Vec<f64>) = (0..n).map(|t| ((2.0 * PI * t as f64 / n as f64).cos(), (2.0 * PI * t as f64 / n as f64).sin())).unzip();
    // Transform along j for every row, then along i.
    let mut re = vec![0.0; n * n];
    let mut im = vec![0.0; n * n];
    for i in 0..n {
        for kj in 0..n {
            let (mut a, mut b) = (0.0, 0.0);
            for j in 0..n {
                let t = (kj * j) % n;
                a += field[i * n + j] * cos[t];
                b -= field[i * n + j] * sin[t];
            }
            re[i * n + kj] = a;
            im[i * n + kj] = b;
        }
    }
    let mut out = vec![0.0; n * n];
    for ki in 0..n {
        for kj in 0..n {
            let (mut a, mut b) = (0.0, 0.0);
            for i in 0..n {
                let t = (ki * i) % n;
                let (c, s) = (cos[t], -sin[t]);
                a += re[i * n + kj] * c - im[i * n + kj] * s;
                b += re[i * n + kj] * s + im[i * n + kj] * c;
            }
            out[ki * n + kj] = a * a + b * b;
        }
    }
    out
}

fn wrap(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

#[test]
fn velocity_spectrum_follows_the_hurst_power_law() {
    let n = 64;
    let hurst = 1.0 / 3.0;
    let grid = GridSpec::new(n).unwrap();
    let shells = 20;
    let mut sum = vec![0.0; shells + 1];
    let mut count = vec![0usize; shells + 1];
    for seed in 0..20 {
        let x = sample_initial(grid, hurst, None, seed);
        let (u, v) = x.as_slice().split_at(n * n);
        let (pu, pv) = (power(u, n), power(v, n));
        for ki in 0..n {
            for kj in 0..n {
                let r = wrap(ki, n).hypot(wrap(kj, n)).round() as usize;
                if (1..=shells).contains(&r) {
                    sum[r] += pu[ki * n + kj] + pv[ki * n + kj];
                    count[r] += 1;
                }
            }
        }
    }
    // Least-squares slope of log mean power against log |kappa|, shells 2..=shells.
    let pts: Vec<(f64, f64)> = (2..=shells).map(|r| ((r as f64).ln(), (sum[r] / count[r] as f64).ln())).collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let want = -(2.0 * hurst + 2.0);
    assert!((slope - want).abs() <= 0.3, "slope {slope}, expected {want}");
}
