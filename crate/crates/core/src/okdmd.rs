//! Optimal kernel-based DMD.
//!
//! The optimal rank-`k` operator `A = P P* Y X^+` acts on a possibly
//! infinite-dimensional feature space, but its eigen-triples have an exact
//! `m`-dimensional representation: left eigenvectors are `U_X xi`, right
//! eigenvectors are `P zeta`, and both small vectors come from `m x m`
//! matrices built from the three Gram matrices alone. Prediction then maps
//! `sum_j zeta_j lambda_j^(t-1) phi_j(theta)` back to state space through a
//! pre-image over the training successors.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::io::{self, Meta};
use crate::kernels::KernelSpec;
use crate::linalg::{self, gram_eig, gram_rank, CMat, CVec, Mat, SymEig};
use crate::preimage::{InverseMode, Preimage, PreimageProblem, SolverOptions};
use crate::snapshots::SnapshotSet;

/// Acceptance gate for matching left and right spectra, relative to `|lambda_1|`.
pub const PAIRING_GATE: f64 = 1e-6;
/// Smallest `|zeta* E xi|` accepted before rescaling.
pub const NORMALIZATION_FLOOR: f64 = 1e-12;
/// Eigenvalues closer than this (relative to `|lambda_1|`) are treated as one
/// repeated eigenvalue whose eigenvectors are fixed only up to a basis change.
pub const CLUSTER_GATE: f64 = 1e-8;
/// Imaginary residual of `g` (relative to its real part) that triggers a warning.
pub const CONJUGACY_WARN: f64 = 1e-6;
const POWER_CAP: f64 = 1e300;

/// The Gram matrices `X*X`, `Y*Y` and `Y*X`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramCache {
    pub gxx: Mat,
    pub gyy: Mat,
    pub gyx: Mat,
    pub kernel: KernelSpec,
}

impl GramCache {
    pub fn build(snapshots: &SnapshotSet, kernel: KernelSpec) -> Result<Self> {
        let gxx = kernel.gram(&snapshots.x, &snapshots.x)?;
        let gyy = kernel.gram(&snapshots.y, &snapshots.y)?;
        let gyx = kernel.gram(&snapshots.x, &snapshots.y)?;
        Ok(GramCache { gxx, gyy, gyx, kernel })
    }

    pub fn m(&self) -> usize {
        self.gxx.nrows()
    }
}

/// Which algorithm produced a saved model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Okdmd,
    Kdmd,
    Lowrank,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Okdmd, Method::Kdmd, Method::Lowrank];

    pub fn name(self) -> &'static str {
        match self {
            Method::Okdmd => "okdmd",
            Method::Kdmd => "kdmd",
            Method::Lowrank => "lowrank",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "okdmd" => Ok(Method::Okdmd),
            "kdmd" => Ok(Method::Kdmd),
            "lowrank" => Ok(Method::Lowrank),
            other => Err(Error::invalid(format!("unknown method '{other}' (okdmd, kdmd, lowrank)"))),
        }
    }
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        reason: e.to_string(),
    })
}

/// Rough multiply-add accounting for a fit, plus kernel evaluations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FitStats {
    pub kernel_evals: u64,
    pub flops: u64,
}

impl FitStats {
    fn product(&mut self, a: &Mat, b: &Mat) -> Mat {
        self.flops += (a.nrows() * a.ncols() * b.ncols()) as u64;
        a * b
    }

    /// Standard operation-count estimates for dense eigen-solvers.
    fn eigensolve(&mut self, n: usize, symmetric: bool) {
        let n3 = (n * n * n) as u64;
        self.flops += if symmetric { 9 * n3 } else { 25 * n3 };
    }
}

/// Spectral data of `X*X` shared by the kernel DMD variants.
#[derive(Debug, Clone)]
pub struct XFactor {
    /// `Sigma_X^+ V_X*`
    pub r: Mat,
    /// Orthogonal projector onto the row space of `X`, `X^+ X`.
    pub projector: Mat,
    pub rank: usize,
}

impl XFactor {
    pub fn from_gram(gxx: &Mat, rank_tol: f64) -> Result<Self> {
        let dec = gram_eig(gxx)?;
        Ok(Self::from_eig(&dec, rank_tol))
    }

    fn from_eig(dec: &SymEig, rank_tol: f64) -> Self {
        let m = dec.values.len();
        let rank = gram_rank(&dec.values, rank_tol);
        let mut r = Mat::zeros(m, m);
        for i in 0..rank {
            let s = dec.values[i].sqrt();
            r.row_mut(i).copy_from(&(dec.vectors.column(i).transpose() / s));
        }
        XFactor {
            r,
            projector: linalg::projector_from_eig(dec, rank_tol),
            rank,
        }
    }
}

/// `Z*Z = P_X* Gyy P_X*` with `Z = Y P_X*`.
pub fn z_gram(g: &GramCache, rank_tol: f64) -> Result<Mat> {
    let xf = XFactor::from_gram(&g.gxx, rank_tol)?;
    Ok(linalg::symmetrize(&(&xf.projector * &g.gyy * &xf.projector)))
}

/// The `m x m` matrices whose eigen-pairs give the reduced model.
#[derive(Debug, Clone)]
pub struct SmallMatrices {
    /// `R Gyy S Gyx R*`; its eigenvectors give the left eigenvectors.
    pub a_left_star: Mat,
    /// `C Gyy R* R Gyx* C*`; its eigenvectors give the right eigenvectors.
    pub a_right: Mat,
    pub r: Mat,
    pub s: Mat,
    pub c: Mat,
    pub e: Mat,
    /// Numerical rank of `Z*Z` capped at the requested rank.
    pub k_eff: usize,
}

pub fn small_matrices(g: &GramCache, k: usize, rank_tol: f64) -> Result<SmallMatrices> {
    small_matrices_counted(g, k, rank_tol, &mut FitStats::default())
}

fn small_matrices_counted(g: &GramCache, k: usize, rank_tol: f64, stats: &mut FitStats) -> Result<SmallMatrices> {
    let m = g.m();
    if k == 0 || k > m {
        return Err(Error::invalid(format!("rank k = {k} must lie in 1..={m}")));
    }
    if !(rank_tol >= 0.0) {
        return Err(Error::invalid("rank_tol must be non-negative"));
    }
    stats.eigensolve(m, true);
    let xf = XFactor::from_gram(&g.gxx, rank_tol)?;
    let p_x = &xf.projector;

    let pg = stats.product(p_x, &g.gyy);
    let ztz = linalg::symmetrize(&stats.product(&pg, p_x));
    stats.eigensolve(m, true);
    let zdec = gram_eig(&ztz)?;
    let k_eff = gram_rank(&zdec.values, rank_tol).min(k);

    // C = diag(1/sigma_Z,1..k, 0..) V_Z* P_X*
    let mut c_core = Mat::zeros(m, m);
    for i in 0..k_eff {
        let s = zdec.values[i].sqrt();
        c_core.row_mut(i).copy_from(&(zdec.vectors.column(i).transpose() / s));
    }
    let c = stats.product(&c_core, p_x);
    let s = stats.product(&c.transpose(), &c);

    let r = &xf.r;
    let rt = r.transpose();
    let gyx_t = g.gyx.transpose();

    // Both matrices factor through K = C Gyy R* and W = R Gyx* C*, which stay
    // well scaled; multiplying through S directly loses about cond(Z*Z).
    let cg = stats.product(&c, &g.gyy);
    let k_mat = stats.product(&cg, &rt);
    let gc = stats.product(&gyx_t, &c.transpose());
    let w_mat = stats.product(r, &gc);
    let a_right = stats.product(&k_mat, &w_mat);
    let a_left_star = stats.product(&w_mat, &k_mat).transpose();

    // E = C P_Y* Gyx R*, so that zeta* E xi = <xi, zeta> in feature space.
    stats.eigensolve(m, true);
    let p_y = linalg::projector_from_gram(&g.gyy, rank_tol)?;
    let e1 = stats.product(&c, &p_y);
    let e2 = stats.product(&e1, &g.gyx);
    let e = stats.product(&e2, &rt);

    Ok(SmallMatrices {
        a_left_star,
        a_right,
        r: xf.r,
        s,
        c,
        e,
        k_eff,
    })
}

/// A fitted OK-DMD reduced model. Immutable after `fit`.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub method: Method,
    pub k: usize,
    pub k_eff: usize,
    pub lambda: Vec<Complex64>,
    /// Left small eigenvectors, `m x k_eff`; `phi_i(theta) = xi_i* R X*Psi(theta)`.
    pub xi: CMat,
    /// Rescaled right small eigenvectors, `m x k_eff`.
    pub zeta: CMat,
    pub r: Mat,
    pub c: Mat,
    pub e: Mat,
    pub gram: GramCache,
    pub x_train: Mat,
    pub y_train: Mat,
    pub kernel: KernelSpec,
    pub rank_tol: f64,
    pub stats: FitStats,
}

/// One state prediction plus diagnostics.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub state: DVector<f64>,
    /// `|Im g| / |Re g|` before the real part was taken.
    pub imag_residual: f64,
    pub conjugacy_warning: bool,
    pub preimage: Preimage,
}

/// Matches two spectra greedily by nearest distance in the complex plane.
/// Returns, for each left index, the chosen right index.
pub fn pair_spectra(left: &[Complex64], right: &[Complex64], gate: f64) -> Result<Vec<usize>> {
    if left.len() != right.len() {
        return Err(Error::Pairing(format!(
            "{} left eigenvalues but {} right eigenvalues",
            left.len(),
            right.len()
        )));
    }
    let mut taken = vec![false; right.len()];
    let mut out = Vec::with_capacity(left.len());
    for (i, l) in left.iter().enumerate() {
        let best = right
            .iter()
            .enumerate()
            .filter(|(j, _)| !taken[*j])
            .map(|(j, r)| (j, (r - l).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((j, d)) if d <= gate => {
                taken[j] = true;
                out.push(j);
            }
            Some((_, d)) => {
                return Err(Error::Pairing(format!(
                    "left eigenvalue {i} ({l}) is {d:.3e} away from any right eigenvalue"
                )))
            }
            None => unreachable!("lengths checked"),
        }
    }
    Ok(out)
}

/// Indices of the eigenvalues kept for the reduced model: at most `k_eff`
/// of them, each with `|lambda| > rank_tol * |lambda_1|`.
fn leading(values: &[Complex64], k_eff: usize, rank_tol: f64) -> usize {
    let top = values.first().map_or(0.0, |v| v.norm());
    values
        .iter()
        .take(k_eff)
        .take_while(|v| top > 0.0 && v.norm() > rank_tol * top)
        .count()
}

impl ReducedModel {
    /// Fits the optimal rank-`k` reduced model.
    pub fn fit(snapshots: &SnapshotSet, kernel: KernelSpec, k: usize, rank_tol: f64) -> Result<Self> {
        let before = crate::kernels::counters();
        let gram = GramCache::build(snapshots, kernel)?;
        let mut stats = FitStats::default();
        stats.flops += (3 * snapshots.m() * snapshots.m() * snapshots.p()) as u64;
        let mut model = Self::fit_gram(gram, snapshots, k, rank_tol, stats)?;
        model.stats.kernel_evals = crate::kernels::counters().since(before).kernel_evals;
        Ok(model)
    }

    fn fit_gram(gram: GramCache, snapshots: &SnapshotSet, k: usize, rank_tol: f64, mut stats: FitStats) -> Result<Self> {
        let sm = small_matrices_counted(&gram, k, rank_tol, &mut stats)?;
        let m = gram.m();

        stats.eigensolve(m, false);
        let left = linalg::eig(&sm.a_left_star)?;
        stats.eigensolve(m, false);
        let right = linalg::eig(&sm.a_right)?;

        let n_left = leading(&left.values, sm.k_eff, rank_tol);
        let n_right = leading(&right.values, sm.k_eff, rank_tol);
        let k_eff = n_left.min(n_right);
        let scale = left.values.first().map_or(0.0, |v| v.norm());
        let pairing = pair_spectra(
            &left.values[..k_eff],
            &right.values[..k_eff],
            PAIRING_GATE * scale.max(f64::MIN_POSITIVE),
        )?;

        let mut xi = CMat::zeros(m, k_eff);
        let mut zeta = CMat::zeros(m, k_eff);
        let mut lambda = Vec::with_capacity(k_eff);
        for (i, &j) in pairing.iter().enumerate() {
            // xi_i is stored conjugated so that phi_i = xi_i* R X*Psi and
            // xi_i* A = lambda_i xi_i* hold with the same lambda_i.
            let mut w = left.vectors.column(i).map(|c| c.conj());
            w /= Complex64::new(w.norm(), 0.0);
            xi.set_column(i, &w);
            zeta.set_column(i, &right.vectors.column(j));
            lambda.push(left.values[i]);
        }
        biorthonormalize(&mut zeta, &xi, &sm.e, &lambda, CLUSTER_GATE * scale)?;

        Ok(ReducedModel {
            method: Method::Okdmd,
            k,
            k_eff,
            lambda,
            xi,
            zeta,
            r: sm.r,
            c: sm.c,
            e: sm.e,
            kernel: gram.kernel,
            gram,
            x_train: snapshots.x.clone(),
            y_train: snapshots.y.clone(),
            rank_tol,
            stats,
        })
    }

    pub fn m(&self) -> usize {
        self.x_train.ncols()
    }

    pub fn p(&self) -> usize {
        self.x_train.nrows()
    }

    /// `phi(theta)` from a precomputed `X*Psi(theta)`.
    pub fn eigenfunctions_from_cross(&self, cross: &DVector<f64>) -> CVec {
        let rk = (&self.r * cross).map(|v| Complex64::new(v, 0.0));
        self.xi.adjoint() * rk
    }

    /// `phi_i(theta) = xi_i* R X*Psi(theta)` for every retained eigen-pair.
    pub fn eigenfunctions(&self, theta: &[f64]) -> Result<CVec> {
        let cross = self.kernel.cross(&self.x_train, theta)?;
        Ok(self.eigenfunctions_from_cross(&cross))
    }

    /// `lambda_i^(t-1) phi_i`, guarding against overflow.
    pub fn advance(&self, phi: &CVec, t: usize) -> Result<CVec> {
        if t == 0 {
            return Err(Error::invalid("time index starts at 1"));
        }
        advance(&self.lambda, phi, t)
    }

    pub fn coefficients_from_phi(&self, phi: &CVec, t: usize) -> Result<CVec> {
        let nu = self.advance(phi, t)?;
        Ok(linalg::to_complex(&self.c.transpose()) * (&self.zeta * nu))
    }

    /// `g = C* (zeta_1 .. zeta_k) (lambda_i^(t-1) phi_i(theta))_i`.
    pub fn coefficient_vector(&self, theta: &[f64], t: usize) -> Result<CVec> {
        let phi = self.eigenfunctions(theta)?;
        self.coefficients_from_phi(&phi, t)
    }

    /// Reduced-model approximation of `x_t(theta)`.
    pub fn predict(&self, theta: &[f64], t: usize, mode: InverseMode, opts: &SolverOptions) -> Result<Prediction> {
        let g = self.coefficient_vector(theta, t)?;
        self.invert(&g, mode, opts)
    }

    /// Maps a complex coefficient vector back to state space.
    pub fn invert(&self, g: &CVec, mode: InverseMode, opts: &SolverOptions) -> Result<Prediction> {
        let (g_re, imag_residual) = real_coefficients(g);
        let prob = PreimageProblem::new(g_re, &self.y_train, self.kernel)?;
        let preimage = prob.solve(mode, opts)?;
        Ok(Prediction {
            state: preimage.z.clone(),
            imag_residual,
            conjugacy_warning: imag_residual > CONJUGACY_WARN,
            preimage,
        })
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.lambda
    }

    /// Writes the model as matrix files plus a `model.meta` manifest.
    pub fn save(&self, dir: &Path) -> Result<()> {
        ensure_dir(dir)?;
        let mut meta = Meta::default();
        meta.push("method", self.method);
        meta.push("kernel", self.kernel);
        meta.push("k", self.k);
        meta.push("k_eff", self.k_eff);
        meta.push("p", self.p());
        meta.push("m", self.m());
        meta.push("rank_tol", io::format_real(self.rank_tol));
        meta.write(&dir.join("model.meta"))?;
        let lambda = CMat::from_column_slice(self.k_eff, 1, &self.lambda);
        io::write_cmatrix(&dir.join("lambda.mat"), &lambda)?;
        io::write_cmatrix(&dir.join("xi.mat"), &self.xi)?;
        io::write_cmatrix(&dir.join("zeta.mat"), &self.zeta)?;
        for (name, m) in [
            ("R.mat", &self.r),
            ("C.mat", &self.c),
            ("E.mat", &self.e),
            ("Gxx.mat", &self.gram.gxx),
            ("Gyy.mat", &self.gram.gyy),
            ("Gyx.mat", &self.gram.gyx),
            ("X.mat", &self.x_train),
            ("Y.mat", &self.y_train),
        ] {
            io::write_matrix(&dir.join(name), m)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta = Meta::read(&dir.join("model.meta"))?;
        let method: Method = meta.get("method").unwrap_or("okdmd").parse()?;
        if method == Method::Kdmd {
            return Err(Error::invalid("model directory holds a K-DMD model"));
        }
        let kernel: KernelSpec = meta.get("kernel")?.parse()?;
        let k: usize = meta.parse("k")?;
        let k_eff: usize = meta.parse("k_eff")?;
        let p: usize = meta.parse("p")?;
        let m: usize = meta.parse("m")?;
        let rank_tol: f64 = meta.parse("rank_tol")?;
        let lambda = io::read_cmatrix(&dir.join("lambda.mat"))?;
        let xi = io::read_cmatrix(&dir.join("xi.mat"))?;
        let zeta = io::read_cmatrix(&dir.join("zeta.mat"))?;
        let read = |name: &str| io::read_matrix(&dir.join(name));
        let model = ReducedModel {
            method,
            k,
            k_eff,
            lambda: lambda.iter().copied().collect(),
            xi,
            zeta,
            r: read("R.mat")?,
            c: read("C.mat")?,
            e: read("E.mat")?,
            gram: GramCache {
                gxx: read("Gxx.mat")?,
                gyy: read("Gyy.mat")?,
                gyx: read("Gyx.mat")?,
                kernel,
            },
            x_train: read("X.mat")?,
            y_train: read("Y.mat")?,
            kernel,
            rank_tol,
            stats: FitStats::default(),
        };
        let shapes_ok = model.lambda.len() == k_eff
            && model.xi.shape() == (m, k_eff)
            && model.zeta.shape() == (m, k_eff)
            && [&model.r, &model.c, &model.e, &model.gram.gxx].iter().all(|a| a.shape() == (m, m))
            && model.x_train.shape() == (p, m)
            && model.y_train.shape() == (p, m);
        if !shapes_ok {
            return Err(Error::Parse(format!("model files in {} disagree with model.meta", dir.display())));
        }
        Ok(model)
    }
}

/// Rescales the right vectors so that `zeta* E xi = I`. Distinct eigenvalues
/// are already biorthogonal, so only diagonal entries need fixing, except in
/// clusters of repeated eigenvalues where the whole block is inverted.
fn biorthonormalize(zeta: &mut CMat, xi: &CMat, e: &Mat, lambda: &[Complex64], gate: f64) -> Result<()> {
    let d = zeta.adjoint() * linalg::to_complex(e) * xi;
    let n = lambda.len();
    let mut done = vec![false; n];
    for i in 0..n {
        if done[i] {
            continue;
        }
        let members: Vec<usize> = (i..n)
            .filter(|&j| !done[j] && (lambda[j] - lambda[i]).norm() <= gate)
            .collect();
        members.iter().for_each(|&j| done[j] = true);
        if members.len() == 1 {
            let dot = d[(i, i)];
            if dot.norm() < NORMALIZATION_FLOOR {
                return Err(Error::DegenerateEigenpair { index: i, value: dot.norm() });
            }
            // (c z)* E w = conj(c) dot = 1
            let c = (Complex64::new(1.0, 0.0) / dot).conj();
            zeta.column_mut(i).iter_mut().for_each(|v| *v *= c);
            continue;
        }
        let b = CMat::from_fn(members.len(), members.len(), |a, c| d[(members[a], members[c])]);
        let smallest = b.singular_values().min();
        if smallest < NORMALIZATION_FLOOR {
            return Err(Error::DegenerateEigenpair { index: i, value: smallest });
        }
        let inv = b.try_inverse().ok_or(Error::DegenerateEigenpair { index: i, value: smallest })?;
        let block = CMat::from_fn(zeta.nrows(), members.len(), |r, c| zeta[(r, members[c])]);
        let fixed = block * inv.adjoint();
        for (c, &j) in members.iter().enumerate() {
            zeta.set_column(j, &fixed.column(c));
        }
    }
    Ok(())
}

pub(crate) fn advance(lambda: &[Complex64], phi: &CVec, t: usize) -> Result<CVec> {
    let power = t - 1;
    let mut out = phi.clone();
    for (i, lam) in lambda.iter().enumerate().take(phi.len()) {
        if power > 0 && lam.norm() > 0.0 && (power as f64) * lam.norm().ln() > POWER_CAP.ln() {
            return Err(Error::HorizonOverflow { index: i, t, power });
        }
        out[i] *= lam.powu(power as u32);
    }
    Ok(out)
}

/// Real part of `g` and the ratio `|Im g| / |Re g|`.
pub(crate) fn real_coefficients(g: &CVec) -> (DVector<f64>, f64) {
    let re = g.map(|c| c.re);
    let im = g.map(|c| c.im);
    let rn = re.norm();
    let ratio = if rn > 0.0 {
        im.norm() / rn
    } else if im.norm() > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    (re, ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DEFAULT_RANK_TOL;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, scale: f64, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(rows, cols, |_, _| scale * rng.random_range(-1.0..1.0))
    }

    fn orthonormal(p: usize, m: usize, seed: u64) -> Mat {
        let q = random(p, m, 1.0, seed).qr().q();
        q.columns(0, m).into_owned()
    }

    #[test]
    fn linear_gram_is_plain_product() {
        let x = random(5, 3, 1.0, 1);
        let s = SnapshotSet::new(x.clone(), x.clone()).unwrap();
        let g = GramCache::build(&s, KernelSpec::Linear).unwrap();
        assert_eq!(g.gxx, x.transpose() * &x);
    }

    #[test]
    fn duplicated_columns_duplicate_gram_rows() {
        let mut x = random(4, 3, 0.3, 2);
        let c0 = x.column(0).into_owned();
        x.set_column(2, &c0);
        let s = SnapshotSet::new(x.clone(), x).unwrap();
        let g = GramCache::build(&s, KernelSpec::Logarithmic).unwrap();
        assert_eq!(g.gxx.row(0), g.gxx.row(2));
        assert_eq!(g.gxx.column(0), g.gxx.column(2));
    }

    #[test]
    fn z_gram_full_rank_cases() {
        let x = random(5, 3, 1.0, 3);
        let y = random(5, 3, 1.0, 4);
        let g = GramCache::build(&SnapshotSet::new(x.clone(), y).unwrap(), KernelSpec::Linear).unwrap();
        assert!((z_gram(&g, DEFAULT_RANK_TOL).unwrap() - &g.gyy).amax() < 1e-12);
        let g = GramCache::build(&SnapshotSet::new(x.clone(), x).unwrap(), KernelSpec::Linear).unwrap();
        assert!((z_gram(&g, DEFAULT_RANK_TOL).unwrap() - &g.gxx).amax() < 1e-12);
    }

    #[test]
    fn no_truncation_gives_pseudo_inverse_factors() {
        let x = random(6, 4, 1.0, 5);
        let y = random(6, 4, 1.0, 6);
        let g = GramCache::build(&SnapshotSet::new(x, y).unwrap(), KernelSpec::Linear).unwrap();
        let sm = small_matrices(&g, 4, DEFAULT_RANK_TOL).unwrap();
        let ztz = z_gram(&g, DEFAULT_RANK_TOL).unwrap();
        let pinv = linalg::pseudo_inverse(&ztz, 1e-12).unwrap();
        assert!((&sm.s - &pinv).amax() <= 1e-8 * pinv.amax());
        assert_eq!(sm.k_eff, 4);
    }

    #[test]
    fn orthonormal_fixed_point_small_matrices_are_identity() {
        let x = orthonormal(5, 3, 7);
        let g = GramCache::build(&SnapshotSet::new(x.clone(), x).unwrap(), KernelSpec::Linear).unwrap();
        let sm = small_matrices(&g, 3, DEFAULT_RANK_TOL).unwrap();
        assert!((&sm.a_left_star - Mat::identity(3, 3)).amax() < 1e-12);
        assert!((&sm.a_right - Mat::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn rejects_bad_rank() {
        let x = random(3, 2, 1.0, 8);
        let g = GramCache::build(&SnapshotSet::new(x.clone(), x).unwrap(), KernelSpec::Linear).unwrap();
        assert!(small_matrices(&g, 0, DEFAULT_RANK_TOL).is_err());
        assert!(small_matrices(&g, 3, DEFAULT_RANK_TOL).is_err());
    }

    #[test]
    fn k_eff_tracks_rank_of_z() {
        // Y has rank 2 while m = 4.
        let x = random(6, 4, 1.0, 9);
        let y = random(6, 2, 1.0, 10) * random(2, 4, 1.0, 11);
        let s = SnapshotSet::new(x, y).unwrap();
        let model = ReducedModel::fit(&s, KernelSpec::Linear, 4, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(model.k, 4);
        assert_eq!(model.k_eff, 2);
    }

    #[test]
    fn normalization_holds() {
        let x = random(8, 5, 0.1, 12);
        let y = x.map(|v| (1.0 + v).powi(2) - 1.0);
        let s = SnapshotSet::new(x, y).unwrap();
        let model = ReducedModel::fit(&s, KernelSpec::Logarithmic, 3, DEFAULT_RANK_TOL).unwrap();
        let e = linalg::to_complex(&model.e);
        let d = model.zeta.adjoint() * e * &model.xi;
        for i in 0..model.k_eff {
            assert!((d[(i, i)] - Complex64::new(1.0, 0.0)).norm() < 1e-8);
        }
        for w in model.lambda.windows(2) {
            assert!(w[0].norm() >= w[1].norm() - 1e-12);
        }
    }

    #[test]
    fn fixed_point_data_has_unit_eigenvalues() {
        let x = random(6, 3, 0.5, 13);
        let s = SnapshotSet::new(x.clone(), x.clone()).unwrap();
        let model = ReducedModel::fit(&s, KernelSpec::Linear, 3, DEFAULT_RANK_TOL).unwrap();
        for l in &model.lambda {
            assert!((l - Complex64::new(1.0, 0.0)).norm() < 1e-8);
        }
        let opts = SolverOptions::default();
        for j in 0..3 {
            let theta: Vec<f64> = x.column(j).iter().copied().collect();
            for t in [1, 2, 5] {
                let pred = model.predict(&theta, t, InverseMode::ClosedForm, &opts).unwrap();
                assert!((pred.state - x.column(j)).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn training_eigenfunctions_use_x_factor() {
        let x = random(7, 4, 0.2, 14);
        let y = random(7, 4, 0.2, 15);
        let s = SnapshotSet::new(x.clone(), y).unwrap();
        let model = ReducedModel::fit(&s, KernelSpec::Logarithmic, 4, DEFAULT_RANK_TOL).unwrap();
        let dec = gram_eig(&model.gram.gxx).unwrap();
        let mut sv = Mat::zeros(4, 4);
        for i in 0..4 {
            sv.row_mut(i).copy_from(&(dec.vectors.column(i).transpose() * dec.values[i].sqrt()));
        }
        let want = model.xi.adjoint() * linalg::to_complex(&sv);
        for j in 0..4 {
            let theta: Vec<f64> = x.column(j).iter().copied().collect();
            let phi = model.eigenfunctions(&theta).unwrap();
            assert!((phi - want.column(j)).norm() < 1e-10 * want.norm());
        }
    }

    #[test]
    fn zero_left_vector_gives_zero_eigenfunction() {
        let x = random(5, 3, 0.2, 16);
        let y = random(5, 3, 0.2, 17);
        let s = SnapshotSet::new(x, y).unwrap();
        let mut model = ReducedModel::fit(&s, KernelSpec::Linear, 3, DEFAULT_RANK_TOL).unwrap();
        model.xi.column_mut(0).fill(Complex64::new(0.0, 0.0));
        let phi = model.eigenfunctions(&[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        assert_eq!(phi[0], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn first_step_has_no_powers() {
        let x = random(5, 3, 0.2, 18);
        let y = random(5, 3, 0.2, 19);
        let s = SnapshotSet::new(x, y).unwrap();
        let model = ReducedModel::fit(&s, KernelSpec::Linear, 3, DEFAULT_RANK_TOL).unwrap();
        let theta = [0.1, -0.1, 0.05, 0.0, 0.2];
        let phi = model.eigenfunctions(&theta).unwrap();
        let want = linalg::to_complex(&model.c.transpose()) * (&model.zeta * &phi);
        assert!((model.coefficient_vector(&theta, 1).unwrap() - want).norm() < 1e-14);
    }

    #[test]
    fn horizon_overflow_is_reported() {
        let lambda = vec![Complex64::new(10.0, 0.0)];
        let phi = CVec::from_vec(vec![Complex64::new(1.0, 0.0)]);
        assert!(advance(&lambda, &phi, 200).is_ok());
        assert!(matches!(
            advance(&lambda, &phi, 400),
            Err(Error::HorizonOverflow { index: 0, t: 400, .. })
        ));
    }

    #[test]
    fn linear_dynamics_recover_operator_spectrum() {
        // A = V diag(mu) V^-1 with a complex pair and real eigenvalues.
        let p = 5;
        let v = random(p, p, 1.0, 20) + Mat::identity(p, p) * 2.0;
        let mut d = Mat::zeros(p, p);
        d[(0, 0)] = 0.9;
        d[(1, 1)] = 0.6;
        d[(2, 2)] = -0.3;
        d[(3, 3)] = 0.5;
        d[(3, 4)] = -0.4;
        d[(4, 3)] = 0.4;
        d[(4, 4)] = 0.5;
        let a = &v * d * v.clone().try_inverse().unwrap();
        let x = random(p, 8, 1.0, 21);
        let y = &a * &x;
        let s = SnapshotSet::new(x, y).unwrap();
        let model = ReducedModel::fit(&s, KernelSpec::Linear, 5, DEFAULT_RANK_TOL).unwrap();
        let truth: Vec<Complex64> = a.complex_eigenvalues().iter().copied().collect();
        assert_eq!(model.k_eff, 5);
        for l in &model.lambda {
            let dist = truth.iter().map(|t| (t - l).norm()).fold(f64::INFINITY, f64::min);
            assert!(dist < 1e-8, "{l} not in spectrum");
        }
    }

    #[test]
    fn log_kernel_first_step_reproduces_training_inputs() {
        // p = m with full rank, so the span of the X and Y features coincide
        // and the projection of Psi(x_j) is Psi(x_j) itself.
        let x = random(4, 4, 0.3, 22);
        let y = x.map(|v| (1.0 + v).powi(2) - 1.0);
        let s = SnapshotSet::new(x.clone(), y).unwrap();
        let model = ReducedModel::fit(&s, KernelSpec::Logarithmic, 4, DEFAULT_RANK_TOL).unwrap();
        let opts = SolverOptions::default();
        for j in 0..4 {
            let theta: Vec<f64> = x.column(j).iter().copied().collect();
            let pred = model.predict(&theta, 1, InverseMode::ClosedForm, &opts).unwrap();
            assert!((pred.state - x.column(j)).amax() < 1e-8);
        }
    }

    #[test]
    fn full_rank_reproduces_successors() {
        let x = random(10, 6, 0.05, 23);
        let y = x.map(|v| (1.0 + v).powi(2) - 1.0);
        let s = SnapshotSet::new(x.clone(), y.clone()).unwrap();
        let model = ReducedModel::fit(&s, KernelSpec::Logarithmic, 6, DEFAULT_RANK_TOL).unwrap();
        let opts = SolverOptions::default();
        for j in 0..6 {
            let theta: Vec<f64> = x.column(j).iter().copied().collect();
            let pred = model.predict(&theta, 2, InverseMode::ClosedForm, &opts).unwrap();
            assert!(pred.imag_residual < 1e-8);
            assert!((pred.state - y.column(j)).norm() < 1e-9 * y.column(j).norm());
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        let x = random(6, 4, 0.1, 24);
        let y = x.map(|v| (1.0 + v).powi(2) - 1.0);
        let s = SnapshotSet::new(x, y).unwrap();
        let model = ReducedModel::fit(&s, KernelSpec::Logarithmic, 3, DEFAULT_RANK_TOL).unwrap();
        let dir = std::env::temp_dir().join(format!("okdmd-model-{}", std::process::id()));
        model.save(&dir).unwrap();
        let back = ReducedModel::load(&dir).unwrap();
        std::fs::remove_dir_all(&dir).unwrap();
        assert_eq!(back.lambda, model.lambda);
        assert_eq!(back.zeta, model.zeta);
        assert_eq!(back.kernel, model.kernel);
        let theta = [0.01, 0.02, -0.01, 0.0, 0.03, 0.01];
        let opts = SolverOptions::default();
        let a = model.predict(&theta, 3, InverseMode::ClosedForm, &opts).unwrap();
        let b = back.predict(&theta, 3, InverseMode::ClosedForm, &opts).unwrap();
        assert_eq!(a.state, b.state);
    }

    #[test]
    fn pairing_rejects_distant_spectra() {
        let a = [Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.0)];
        let b = [Complex64::new(0.5, 0.0), Complex64::new(1.0 + 1e-9, 0.0)];
        assert_eq!(pair_spectra(&a, &b, 1e-6).unwrap(), vec![1, 0]);
        let c = [Complex64::new(0.5, 0.0), Complex64::new(0.9, 0.0)];
        assert!(matches!(pair_spectra(&a, &c, 1e-6), Err(Error::Pairing(_))));
    }
}
