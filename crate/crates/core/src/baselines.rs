//! Reference methods for comparison: kernel DMD and low-rank DMD.
//!
//! Kernel DMD diagonalizes the unconstrained least-squares operator
//! `Y X^+` through `R Gyx R*`, evaluates eigenfunctions with the kernel
//! trick and fits modes in state space by least squares, which amounts to
//! assuming a linear inverse feature map. Low-rank DMD is the optimal
//! reduced model with the identity feature map.

use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::io::{self, Meta};
use crate::kernels::KernelSpec;
use crate::linalg::{self, CMat, CVec, Mat};
use crate::okdmd::{self, ensure_dir, FitStats, GramCache, Method, ReducedModel, XFactor, CONJUGACY_WARN};
use crate::snapshots::SnapshotSet;

#[derive(Debug, Clone)]
pub struct KdmdModel {
    /// All `m` eigenvalues of `R Gyx R*`, by non-increasing modulus.
    pub lambda: Vec<Complex64>,
    /// Conjugated, unit-norm eigenvectors (`phi_i = xi_i* R X*Psi`).
    pub xi: CMat,
    pub r: Mat,
    /// `p x m` complex modes.
    pub modes: CMat,
    pub gram: GramCache,
    pub x_train: Mat,
    pub kernel: KernelSpec,
    pub rank_tol: f64,
    /// Non-fatal diagnostics, e.g. a rank-deficient `X*X`.
    pub warnings: Vec<String>,
    pub stats: FitStats,
}

#[derive(Debug, Clone)]
pub struct KdmdPrediction {
    pub state: DVector<f64>,
    pub imag_residual: f64,
    pub conjugacy_warning: bool,
}

pub fn kdmd_fit(snapshots: &SnapshotSet, kernel: KernelSpec, rank_tol: f64) -> Result<KdmdModel> {
    let before = crate::kernels::counters();
    // Y*Y is not needed by the method itself; it is kept so saved models
    // share one layout with the other methods.
    let gram = GramCache::build(snapshots, kernel)?;
    let m = gram.m();
    let mut warnings = Vec::new();
    let xf = XFactor::from_gram(&gram.gxx, rank_tol)?;
    if xf.rank < m {
        warnings.push(format!(
            "X*X has numerical rank {} < m = {m}; kernel DMD assumes full rank and proceeds with pseudo-inverses",
            xf.rank
        ));
    }
    let small = &xf.r * &gram.gyx * xf.r.transpose();
    let eig = linalg::eig(&small)?;

    let mut xi = eig.vectors.map(|c| c.conj());
    for mut col in xi.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= Complex64::new(n, 0.0);
        }
    }

    let top = eig.values.first().map_or(0.0, |v| v.norm());
    let inv_lambda: Vec<Complex64> = eig
        .values
        .iter()
        .map(|l| {
            if l.norm() > rank_tol * top && l.norm() > 0.0 {
                Complex64::new(1.0, 0.0) / l
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let xi_star_pinv = linalg::pseudo_inverse(&xi.adjoint(), rank_tol)?;
    let yr = linalg::to_complex(&(&snapshots.y * xf.r.transpose()));
    let mut modes = yr * xi_star_pinv;
    for (j, s) in inv_lambda.iter().enumerate() {
        modes.column_mut(j).iter_mut().for_each(|v| *v *= s);
    }
    linalg::ensure_finite(&modes, "kernel DMD modes")?;

    let (p, m2) = (snapshots.p() as u64, (m * m) as u64);
    let m3 = m2 * m as u64;
    // Gram assembly, two eigen-solves, one pseudo-inverse, mode products.
    let stats = FitStats {
        kernel_evals: crate::kernels::counters().since(before).kernel_evals,
        flops: 3 * m2 * p + 9 * m3 + 25 * m3 + 9 * m3 + 2 * m2 * p,
    };
    Ok(KdmdModel {
        lambda: eig.values,
        xi,
        r: xf.r,
        modes,
        gram,
        x_train: snapshots.x.clone(),
        kernel,
        rank_tol,
        warnings,
        stats,
    })
}

impl KdmdModel {
    pub fn m(&self) -> usize {
        self.x_train.ncols()
    }

    pub fn p(&self) -> usize {
        self.x_train.nrows()
    }

    pub fn eigenfunctions(&self, theta: &[f64]) -> Result<CVec> {
        let cross = self.kernel.cross(&self.x_train, theta)?;
        Ok(self.eigenfunctions_from_cross(&cross))
    }

    pub fn eigenfunctions_from_cross(&self, cross: &DVector<f64>) -> CVec {
        let rk = (&self.r * cross).map(|v| Complex64::new(v, 0.0));
        self.xi.adjoint() * rk
    }

    /// `Re sum_{i<=k} lambda_i^(t-1) phi_i(theta) mu_i`.
    pub fn predict(&self, theta: &[f64], t: usize, k: usize) -> Result<KdmdPrediction> {
        let phi = self.eigenfunctions(theta)?;
        self.predict_from_phi(&phi, t, k)
    }

    pub fn predict_from_phi(&self, phi: &CVec, t: usize, k: usize) -> Result<KdmdPrediction> {
        let m = self.m();
        if k == 0 || k > m {
            return Err(Error::invalid(format!("rank k = {k} must lie in 1..={m}")));
        }
        if t == 0 {
            return Err(Error::invalid("time index starts at 1"));
        }
        let nu = okdmd::advance(&self.lambda[..k], &phi.rows(0, k).into_owned(), t)?;
        let x = self.modes.columns(0, k) * nu;
        let (state, imag_residual) = okdmd::real_coefficients(&x);
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure {
                reason: "predicted state has non-finite entries".into(),
                condition: f64::INFINITY,
            });
        }
        Ok(KdmdPrediction {
            state,
            imag_residual,
            conjugacy_warning: imag_residual > CONJUGACY_WARN,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        ensure_dir(dir)?;
        let mut meta = Meta::default();
        meta.push("method", Method::Kdmd);
        meta.push("kernel", self.kernel);
        meta.push("k", self.m());
        meta.push("k_eff", self.m());
        meta.push("p", self.p());
        meta.push("m", self.m());
        meta.push("rank_tol", io::format_real(self.rank_tol));
        meta.write(&dir.join("model.meta"))?;
        let lambda = CMat::from_column_slice(self.m(), 1, &self.lambda);
        io::write_cmatrix(&dir.join("lambda.mat"), &lambda)?;
        io::write_cmatrix(&dir.join("xi.mat"), &self.xi)?;
        io::write_cmatrix(&dir.join("modes.mat"), &self.modes)?;
        for (name, m) in [
            ("R.mat", &self.r),
            ("Gxx.mat", &self.gram.gxx),
            ("Gyy.mat", &self.gram.gyy),
            ("Gyx.mat", &self.gram.gyx),
            ("X.mat", &self.x_train),
        ] {
            io::write_matrix(&dir.join(name), m)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta = Meta::read(&dir.join("model.meta"))?;
        let method: Method = meta.get("method")?.parse()?;
        if method != Method::Kdmd {
            return Err(Error::invalid(format!("model directory holds a {method} model")));
        }
        let kernel: KernelSpec = meta.get("kernel")?.parse()?;
        let (p, m): (usize, usize) = (meta.parse("p")?, meta.parse("m")?);
        let read = |name: &str| io::read_matrix(&dir.join(name));
        let model = KdmdModel {
            lambda: io::read_cmatrix(&dir.join("lambda.mat"))?.iter().copied().collect(),
            xi: io::read_cmatrix(&dir.join("xi.mat"))?,
            r: read("R.mat")?,
            modes: io::read_cmatrix(&dir.join("modes.mat"))?,
            gram: GramCache {
                gxx: read("Gxx.mat")?,
                gyy: read("Gyy.mat")?,
                gyx: read("Gyx.mat")?,
                kernel,
            },
            x_train: read("X.mat")?,
            kernel,
            rank_tol: meta.parse("rank_tol")?,
            warnings: Vec::new(),
            stats: FitStats::default(),
        };
        if model.lambda.len() != m
            || model.xi.shape() != (m, m)
            || model.modes.shape() != (p, m)
            || model.x_train.shape() != (p, m)
        {
            return Err(Error::Parse(format!("model files in {} disagree with model.meta", dir.display())));
        }
        Ok(model)
    }
}

/// Optimal rank-`k` DMD with the identity feature map.
pub fn lowrank_dmd_fit(snapshots: &SnapshotSet, k: usize, rank_tol: f64) -> Result<ReducedModel> {
    let mut model = ReducedModel::fit(snapshots, KernelSpec::Linear, k, rank_tol)?;
    model.method = Method::Lowrank;
    Ok(model)
}
