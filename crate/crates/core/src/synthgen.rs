//! Synthetic snapshots: divergence-free fractional velocity fields advanced
//! by a quadratic map with diffusion.
//!
//! A state holds two velocity components on a periodic `n x n` grid, laid
//! out as `x[c n^2 + i n + j]` for component `c` (0 = u, 1 = v), row `i` and
//! column `j`. Initial fields come from a random stream function `psi` with
//! a power-law spectrum; `u = D_j psi`, `v = -D_i psi` with periodic central
//! differences, so the discrete divergence `D_i u + D_j v` vanishes.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{self, Meta};
use crate::linalg::Mat;
use crate::okdmd::ensure_dir;
use crate::snapshots::SnapshotSet;

/// Number of retained real basis functions when not configured.
pub const DEFAULT_MODES: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub n: usize,
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("grid side must be at least 2"));
        }
        Ok(GridSpec { n })
    }

    /// State dimension, two components per grid point.
    pub fn p(&self) -> usize {
        2 * self.n * self.n
    }

    pub fn index(&self, c: usize, i: usize, j: usize) -> usize {
        c * self.n * self.n + i * self.n + j
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    /// Trajectories per set.
    pub trajectories: usize,
    /// States per trajectory.
    pub length: usize,
    pub alpha: f64,
    pub hurst: f64,
    pub noise_std: f64,
    /// Target median of `|x_2|` over a set.
    pub target_scale: f64,
    pub seed: u64,
    /// Retained stream-function basis functions; `None` keeps all of them.
    pub modes: Option<usize>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            trajectories: 20,
            length: 2,
            alpha: 0.5,
            hurst: 1.0 / 3.0,
            noise_std: 1e-6,
            target_scale: 1e-2,
            seed: 0,
            modes: Some(DEFAULT_MODES),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trajectories < 1 {
            return Err(Error::invalid("need at least one trajectory"));
        }
        if self.length < 2 {
            return Err(Error::invalid("trajectories need at least two states"));
        }
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return Err(Error::invalid("Hurst exponent must lie in (0, 1)"));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::invalid("noise_std must be finite and non-negative"));
        }
        if !(self.target_scale > 0.0) || !self.target_scale.is_finite() {
            return Err(Error::invalid("target_scale must be positive"));
        }
        if !self.alpha.is_finite() {
            return Err(Error::invalid("alpha must be finite"));
        }
        if self.modes == Some(0) {
            return Err(Error::invalid("modes must be positive"));
        }
        Ok(())
    }
}

/// Five-point periodic Laplacian with unit spacing, applied to each
/// component separately.
pub fn laplacian(grid: GridSpec) -> Mat {
    let n = grid.n;
    let mut l = Mat::zeros(grid.p(), grid.p());
    for c in 0..2 {
        for i in 0..n {
            for j in 0..n {
                let r = grid.index(c, i, j);
                for (di, dj) in [(1, 0), (n - 1, 0), (0, 1), (0, n - 1)] {
                    l[(r, grid.index(c, (i + di) % n, (j + dj) % n))] += 1.0;
                }
                l[(r, r)] -= 4.0;
            }
        }
    }
    l
}

/// `(x + 1)^2 + alpha L x - 1`, squares taken entry-wise.
pub fn quadratic_step(x: &DVector<f64>, alpha: f64, l: &Mat) -> DVector<f64> {
    let lx = l * x;
    DVector::from_fn(x.len(), |i, _| (x[i] + 1.0).powi(2) + alpha * lx[i] - 1.0)
}

/// One real stream-function basis function: `cos` or `sin` of the phase
/// `2 pi (kx i + ky j) / n`.
#[derive(Debug, Clone, Copy)]
struct Basis {
    kx: i64,
    ky: i64,
    sine: bool,
}

/// Basis functions ordered by `|kappa|^2`, then `kx`, `ky`, cosine first.
/// Only one wavenumber of each `+-kappa` pair is kept; wavenumbers whose
/// velocity vanishes under central differences are skipped.
fn basis(n: usize) -> Vec<Basis> {
    let n_i = n as i64;
    let lo = -((n_i - 1) / 2);
    let hi = n_i / 2;
    let fold = |k: i64| {
        let r = k.rem_euclid(n_i);
        if r > hi {
            r - n_i
        } else {
            r
        }
    };
    let mut out = Vec::new();
    for kx in lo..=hi {
        for ky in lo..=hi {
            // kappa and -kappa give the same pair of real functions; keep
            // the lexicographically smaller representative.
            let neg = (fold(-kx), fold(-ky));
            if (kx, ky) > neg || symbol(n, kx, ky) == 0.0 {
                continue;
            }
            out.push(Basis { kx, ky, sine: false });
            if (kx, ky) != neg {
                out.push(Basis { kx, ky, sine: true });
            }
        }
    }
    out.sort_by_key(|b| (b.kx * b.kx + b.ky * b.ky, b.kx, b.ky, b.sine));
    out
}

/// `sin^2(2 pi kx / n) + sin^2(2 pi ky / n)`, the squared symbol of the
/// central-difference gradient.
fn symbol(n: usize, kx: i64, ky: i64) -> f64 {
    let s = |k: i64| (2.0 * PI * k as f64 / n as f64).sin().powi(2);
    let v = s(kx) + s(ky);
    if v < 1e-24 {
        0.0
    } else {
        v
    }
}

fn central_difference(grid: GridSpec, f: &[f64], along_rows: bool) -> Vec<f64> {
    let n = grid.n;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (a, b) = if along_rows {
                (((i + 1) % n) * n + j, ((i + n - 1) % n) * n + j)
            } else {
                (i * n + (j + 1) % n, i * n + (j + n - 1) % n)
            };
            out[i * n + j] = 0.5 * (f[a] - f[b]);
        }
    }
    out
}

/// Periodic central-difference divergence of a state, one value per cell.
pub fn divergence(grid: GridSpec, x: &DVector<f64>) -> Vec<f64> {
    let nn = grid.n * grid.n;
    let u = &x.as_slice()[..nn];
    let v = &x.as_slice()[nn..];
    let du = central_difference(grid, u, true);
    let dv = central_difference(grid, v, false);
    du.iter().zip(&dv).map(|(a, b)| a + b).collect()
}

fn sample_with(grid: GridSpec, hurst: f64, modes: Option<usize>, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let n = grid.n;
    let all = basis(n);
    let keep = modes.map_or(all.len(), |k| k.min(all.len()));
    let mut psi = vec![0.0; n * n];
    for b in &all[..keep] {
        let k2 = (b.kx * b.kx + b.ky * b.ky) as f64;
        // Velocity power |kappa|^-(2H+2) once multiplied by the symbol.
        let var = k2.powf(-(hurst + 1.0)) / symbol(n, b.kx, b.ky);
        let z: f64 = StandardNormal.sample(rng);
        let c = z * var.sqrt();
        for i in 0..n {
            for j in 0..n {
                let phase = 2.0 * PI * ((b.kx * i as i64 + b.ky * j as i64) as f64) / n as f64;
                psi[i * n + j] += c * if b.sine { phase.sin() } else { phase.cos() };
            }
        }
    }
    let u = central_difference(grid, &psi, false);
    let v: Vec<f64> = central_difference(grid, &psi, true).iter().map(|d| -d).collect();
    DVector::from_iterator(grid.p(), u.into_iter().chain(v))
}

/// A divergence-free random field with a power-law spectrum, before scaling.
pub fn sample_initial(grid: GridSpec, hurst: f64, modes: Option<usize>, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(grid, hurst, modes, &mut rng)
}

fn stream(seed: u64, set: u64, j: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((set << 32) | j as u64);
    rng
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Relative accuracy of the scale calibration.
const SCALE_TOL: f64 = 1e-6;

/// Finds one scalar `s` so that the median of `|x_2(s psi_j + noise_j)|`
/// equals the target.
fn calibrate(shapes: &[DVector<f64>], noise: &[DVector<f64>], cfg: &GenConfig, l: &Mat) -> Result<f64> {
    let level = |s: f64| {
        median(
            shapes
                .iter()
                .zip(noise)
                .map(|(psi, e)| quadratic_step(&(psi * s + e), cfg.alpha, l).norm())
                .collect(),
        )
    };
    let target = cfg.target_scale;
    let lin = median(shapes.iter().map(|psi| quadratic_step(psi, cfg.alpha, l).norm()).collect());
    if !(lin > 0.0) {
        return Err(Error::Generation("initial fields are identically zero".into()));
    }
    // Bracket in log scale around the linearized guess.
    let guess = target / lin;
    let (mut lo, mut hi) = (guess, guess);
    let mut tries = 0;
    while level(lo) > target {
        lo *= 0.5;
        tries += 1;
        if tries > 200 {
            return Err(Error::Generation("could not bracket the scale factor from below".into()));
        }
    }
    tries = 0;
    while level(hi) < target {
        hi *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(Error::Generation("could not bracket the scale factor from above".into()));
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        let f = level(mid);
        if (f - target).abs() <= SCALE_TOL * target {
            return Ok(mid);
        }
        if f < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = (lo * hi).sqrt();
    if (level(s) - target).abs() <= 0.05 * target {
        Ok(s)
    } else {
        Err(Error::Generation(
            "scale bisection failed; the median norm is not monotone in the scale".into(),
        ))
    }
}

fn generate_set(grid: GridSpec, cfg: &GenConfig, set: u64, l: &Mat) -> Result<SnapshotSet> {
    let drawn: Vec<(DVector<f64>, DVector<f64>)> = (0..cfg.trajectories)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(cfg.seed, set, j);
            let psi = sample_with(grid, cfg.hurst, cfg.modes, &mut rng);
            let noise = DVector::from_fn(grid.p(), |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                cfg.noise_std * z
            });
            (psi, noise)
        })
        .collect();
    let (shapes, noise): (Vec<_>, Vec<_>) = drawn.into_iter().unzip();
    let s = calibrate(&shapes, &noise, cfg, l)?;
    let trajectories: Vec<Mat> = shapes
        .par_iter()
        .zip(&noise)
        .map(|(psi, e)| {
            let mut tr = Mat::zeros(grid.p(), cfg.length);
            let mut x = psi * s + e;
            tr.set_column(0, &x);
            for t in 1..cfg.length {
                x = quadratic_step(&x, cfg.alpha, l);
                tr.set_column(t, &x);
            }
            tr
        })
        .collect();
    SnapshotSet::from_trajectories(&trajectories)
}

/// Independent training and test sets drawn from disjoint random streams.
pub fn generate_dataset(grid: GridSpec, cfg: &GenConfig) -> Result<(SnapshotSet, SnapshotSet)> {
    cfg.validate()?;
    let l = laplacian(grid);
    let train = generate_set(grid, cfg, 0, &l)?;
    let test = generate_set(grid, cfg, 1, &l)?;
    Ok((train, test))
}

/// Training and (optional) test pairs plus the manifest they came with.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: SnapshotSet,
    pub test: Option<SnapshotSet>,
    pub meta: Meta,
}

pub fn generation_meta(grid: GridSpec, cfg: &GenConfig) -> Meta {
    let mut meta = Meta::default();
    meta.push("n", grid.n);
    meta.push("N", cfg.trajectories);
    meta.push("T", cfg.length);
    meta.push("alpha", io::format_real(cfg.alpha));
    meta.push("hurst", io::format_real(cfg.hurst));
    meta.push("noise_std", io::format_real(cfg.noise_std));
    meta.push("target_scale", io::format_real(cfg.target_scale));
    meta.push("seed", cfg.seed);
    meta.push("modes", cfg.modes.map_or("all".to_string(), |m| m.to_string()));
    meta
}

impl Dataset {
    pub fn save(&self, dir: &Path) -> Result<()> {
        ensure_dir(dir)?;
        io::write_matrix(&dir.join("X.mat"), &self.train.x)?;
        io::write_matrix(&dir.join("Y.mat"), &self.train.y)?;
        if let Some(test) = &self.test {
            io::write_matrix(&dir.join("X_test.mat"), &test.x)?;
            io::write_matrix(&dir.join("Y_test.mat"), &test.y)?;
        }
        self.meta.write(&dir.join("gen.meta"))
    }

    /// Reads `X.mat`, `Y.mat` and, when present, `X_test.mat`, `Y_test.mat`
    /// and `gen.meta`.
    pub fn load(dir: &Path) -> Result<Self> {
        let train = SnapshotSet::new(io::read_matrix(&dir.join("X.mat"))?, io::read_matrix(&dir.join("Y.mat"))?)?;
        let test = if dir.join("X_test.mat").exists() {
            let test = SnapshotSet::new(
                io::read_matrix(&dir.join("X_test.mat"))?,
                io::read_matrix(&dir.join("Y_test.mat"))?,
            )?;
            if test.p() != train.p() {
                return Err(Error::invalid("test and training states differ in dimension"));
            }
            Some(test)
        } else {
            None
        };
        let meta_path = dir.join("gen.meta");
        let meta = if meta_path.exists() { Meta::read(&meta_path)? } else { Meta::default() };
        Ok(Dataset { train, test, meta })
    }
}

/// Generates both sets and packages them with their manifest.
pub fn generate(grid: GridSpec, cfg: &GenConfig) -> Result<Dataset> {
    let (train, test) = generate_dataset(grid, cfg)?;
    Ok(Dataset {
        train,
        test: Some(test),
        meta: generation_meta(grid, cfg),
    })
}
