//! Explicit-coordinate cross-check of the Gram-only pipeline.
//!
//! For kernels with a finite feature map the optimal operator can be
//! assembled directly as `A = P P* Psi(Y) Psi(X)^+`, where `P` spans the
//! leading left singular vectors of `Psi(Y)` projected on the row space of
//! `Psi(X)`. It is kept factored as `A = P M` with `M = P* Psi(Y) Psi(X)^+`
//! and compared against eigen-triples and predictions of the fitted model.

use std::fmt;

use nalgebra::DVector;
use num_complex::Complex64;
use okdmd::linalg::{self, svd, CMat, CVec, Mat};
use okdmd::okdmd::ReducedModel;
use okdmd::preimage::{InverseMode, SolverOptions};
use okdmd::snapshots::SnapshotSet;
use okdmd::{Error, KernelSpec, Result};

/// Largest explicit feature dimension the oracle accepts.
pub const ORACLE_DIM_CAP: usize = 10_000;

/// The optimal rank-`k` operator in explicit coordinates, `A = P M`.
#[derive(Debug, Clone)]
pub struct ExplicitOperator {
    /// `dim(H) x k_eff`, orthonormal columns.
    pub p: Mat,
    /// `k_eff x dim(H)`.
    pub m: Mat,
    /// `Psi(X)^+`, `m x dim(H)`.
    pub x_pinv: Mat,
    pub rank_x: usize,
    pub k_eff: usize,
}

/// Number of singular values with `sigma_i^2 > tol sigma_1^2`, the rule the
/// Gram pipeline applies to Gram eigenvalues.
fn gram_rule_rank(sigma: &[f64], tol: f64) -> usize {
    let top = sigma.first().map_or(0.0, |s| s * s);
    sigma.iter().take_while(|s| top > 0.0 && *s * *s > tol * top).count()
}

impl ExplicitOperator {
    pub fn assemble(fx: &Mat, fy: &Mat, k: usize, rank_tol: f64) -> Result<Self> {
        let sx = svd(fx)?;
        let r = gram_rule_rank(&sx.sigma, rank_tol);
        let m = fx.ncols();
        let mut x_pinv = Mat::zeros(m, fx.nrows());
        for i in 0..r {
            x_pinv += sx.v.column(i) * sx.u.column(i).transpose() / sx.sigma[i];
        }
        let vr = sx.v.columns(0, r);
        let proj = vr * vr.transpose();
        let z = fy * proj;
        let sz = svd(&z)?;
        let k_eff = gram_rule_rank(&sz.sigma, rank_tol).min(k);
        let p = sz.u.columns(0, k_eff).into_owned();
        let mm = p.transpose() * fy * &x_pinv;
        Ok(ExplicitOperator {
            p,
            m: mm,
            x_pinv,
            rank_x: r,
            k_eff,
        })
    }

    pub fn apply(&self, v: &Mat) -> Mat {
        &self.p * (&self.m * v)
    }

    pub fn apply_transpose(&self, v: &Mat) -> Mat {
        self.m.transpose() * (self.p.transpose() * v)
    }

    pub fn frobenius(&self) -> f64 {
        self.m.norm()
    }

    /// `|fy - A fx|_F^2`.
    pub fn objective(&self, fx: &Mat, fy: &Mat) -> f64 {
        (fy - self.apply(fx)).norm_squared()
    }

    /// Non-zero spectrum of `A`, equal to the spectrum of `M P`.
    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        if self.k_eff == 0 {
            return Ok(Vec::new());
        }
        Ok(linalg::eig(&(&self.m * &self.p))?.values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub kernel: KernelSpec,
    pub k: usize,
    pub k_eff: usize,
    pub feature_dim: usize,
    pub eigenvalue_residual: f64,
    pub left_residual: f64,
    pub right_residual: f64,
    pub biorthogonality_residual: f64,
    /// Feature-space mismatch between `Psi(Y) g` and `A^(t-1) Psi(theta)`.
    pub prediction_residual: f64,
    /// State-space mismatch after the exact inverse, when one exists.
    pub state_residual: Option<f64>,
    /// Mismatch against `Psi(Y) Psi(X)^+` when no truncation happens.
    pub unconstrained_residual: Option<f64>,
}

impl OracleReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.eigenvalue_residual,
            self.left_residual,
            self.right_residual,
            self.biorthogonality_residual,
            self.prediction_residual,
            self.state_residual.unwrap_or(0.0),
            self.unconstrained_residual.unwrap_or(0.0),
        ]
        .into_iter()
        .fold(0.0, |a, b| if b.is_nan() { f64::NAN } else { a.max(b) })
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3e}"));
        writeln!(f, "kernel={} k={} k_eff={} dim(H)={}", self.kernel, self.k, self.k_eff, self.feature_dim)?;
        writeln!(f, "eigenvalue_residual={:.3e}", self.eigenvalue_residual)?;
        writeln!(f, "left_residual={:.3e}", self.left_residual)?;
        writeln!(f, "right_residual={:.3e}", self.right_residual)?;
        writeln!(f, "biorthogonality_residual={:.3e}", self.biorthogonality_residual)?;
        writeln!(f, "prediction_residual={:.3e}", self.prediction_residual)?;
        writeln!(f, "state_residual={}", opt(self.state_residual))?;
        writeln!(f, "unconstrained_residual={}", opt(self.unconstrained_residual))?;
        write!(f, "max_residual={:.3e}", self.max_residual())
    }
}

fn complex(m: &Mat) -> CMat {
    linalg::to_complex(m)
}

/// Exact inverse feature map, for kernels that have one.
fn exact_inverse(kernel: KernelSpec, v: &DVector<f64>) -> Option<DVector<f64>> {
    match kernel {
        KernelSpec::Linear => Some(v.clone()),
        KernelSpec::Logarithmic => Some(v.map(f64::exp_m1)),
        _ => None,
    }
}

/// Fits the Gram pipeline and checks it against the explicit operator.
/// `probes` holds the states `theta` used for the prediction checks.
pub fn oracle_check(train: &SnapshotSet, probes: &Mat, kernel: KernelSpec, k: usize, rank_tol: f64) -> Result<OracleReport> {
    let dim = kernel
        .feature_dim(train.p())
        .ok_or_else(|| Error::Capability(format!("kernel {kernel} has no finite feature map")))?;
    if dim > ORACLE_DIM_CAP {
        return Err(Error::Capacity {
            dim,
            cap: ORACLE_DIM_CAP,
        });
    }
    if probes.nrows() != train.p() {
        return Err(Error::InvalidInput("probe states have the wrong dimension".into()));
    }
    let model = ReducedModel::fit(train, kernel, k, rank_tol)?;
    let fx = kernel.feature_matrix(&train.x)?;
    let fy = kernel.feature_matrix(&train.y)?;
    let op = ExplicitOperator::assemble(&fx, &fy, k, rank_tol)?;
    let a_norm = op.frobenius().max(f64::MIN_POSITIVE);

    // Eigenvalues: each model eigenvalue against its nearest explicit one.
    let explicit = op.eigenvalues()?;
    let scale = explicit.first().map_or(1.0, |l| l.norm().max(f64::MIN_POSITIVE));
    let mut used = vec![false; explicit.len()];
    let mut eigenvalue_residual: f64 = if model.k_eff > explicit.len() { f64::INFINITY } else { 0.0 };
    for l in &model.lambda {
        let best = explicit
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, e)| (j, (e - l).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((j, d)) = best {
            used[j] = true;
            eigenvalue_residual = eigenvalue_residual.max(d / scale);
        }
    }

    // Left vectors U_X w with w = conj(xi); right vectors Psi(Y) C* zeta.
    let ux = complex(&(&fx * model.r.transpose()));
    let left: CMat = &ux * model.xi.map(|c| c.conj());
    let right: CMat = complex(&(&fy * model.c.transpose())) * &model.zeta;
    let (pc, mc) = (complex(&op.p), complex(&op.m));
    let apply = |v: &CMat| &pc * (&mc * v);
    let apply_t = |v: &CMat| mc.transpose() * (pc.transpose() * v);

    let mut left_residual: f64 = 0.0;
    let mut right_residual: f64 = 0.0;
    for (i, lam) in model.lambda.iter().enumerate() {
        let l = left.column(i).into_owned();
        let lm = CMat::from_column_slice(l.len(), 1, l.as_slice());
        let res = (apply_t(&lm).column(0) - &l * *lam).norm() / (a_norm * l.norm().max(f64::MIN_POSITIVE));
        left_residual = left_residual.max(res);
        let r = right.column(i).into_owned();
        let rm = CMat::from_column_slice(r.len(), 1, r.as_slice());
        let res = (apply(&rm).column(0) - &r * *lam).norm() / (a_norm * r.norm().max(f64::MIN_POSITIVE));
        right_residual = right_residual.max(res);
    }

    // Bilinear pairing: l_i^T r_i = 1 exactly, and off the diagonal the
    // cosine |l_i^T r_j| / (|l_i| |r_j|) vanishes.
    let gram = left.transpose() * &right;
    let mut biorthogonality_residual: f64 = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let d = if i == j {
                (gram[(i, j)] - Complex64::new(1.0, 0.0)).norm()
            } else {
                gram[(i, j)].norm() / (left.column(i).norm() * right.column(j).norm()).max(f64::MIN_POSITIVE)
            };
            biorthogonality_residual = biorthogonality_residual.max(d);
        }
    }

    let full_rank_no_truncation = k == train.m() && op.rank_x == train.m();
    let mut prediction_residual: f64 = 0.0;
    let mut state_residual = exact_inverse(kernel, &DVector::zeros(1)).map(|_| 0.0f64);
    let mut unconstrained_residual = full_rank_no_truncation.then_some(0.0f64);
    let opts = SolverOptions::default();
    let fprobe = kernel.feature_matrix(probes)?;
    let fy_c = complex(&fy);
    for j in 0..probes.ncols() {
        let theta: Vec<f64> = probes.column(j).iter().copied().collect();
        let psi = fprobe.column(j).into_owned();
        let mut power = Mat::from_column_slice(psi.len(), 1, psi.as_slice());
        for t in 2..=3 {
            power = op.apply(&power);
            let want = power.column(0).into_owned();
            let g: CVec = model.coefficient_vector(&theta, t)?;
            let got = &fy_c * &g;
            let denom = want.norm().max(f64::MIN_POSITIVE);
            let res = (&got - want.map(|v| Complex64::new(v, 0.0))).norm() / denom;
            prediction_residual = prediction_residual.max(res);

            if let (Some(acc), Some(exact)) = (state_residual.as_mut(), exact_inverse(kernel, &want)) {
                let pred = model.predict(&theta, t, InverseMode::ClosedForm, &opts)?;
                *acc = acc.max((pred.state - &exact).norm() / exact.norm().max(f64::MIN_POSITIVE));
            }
            if let Some(acc) = unconstrained_residual.as_mut() {
                let mut ls = Mat::from_column_slice(psi.len(), 1, psi.as_slice());
                for _ in 1..t {
                    ls = &fy * (&op.x_pinv * ls);
                }
                let ls = ls.column(0).into_owned();
                let got_re = got.map(|c| c.re);
                *acc = acc.max((got_re - &ls).norm() / ls.norm().max(f64::MIN_POSITIVE));
            }
        }
    }

    Ok(OracleReport {
        kernel,
        k,
        k_eff: model.k_eff,
        feature_dim: dim,
        eigenvalue_residual,
        left_residual,
        right_residual,
        biorthogonality_residual,
        prediction_residual,
        state_residual,
        unconstrained_residual,
    })
}
