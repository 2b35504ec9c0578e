//! Dense linear algebra used by the reduced models.
//!
//! Everything here works on small `m x m` matrices (`m` = number of snapshot
//! pairs) plus the occasional tall `p x m` data matrix. Factorisations go
//! through LAPACK: divide-and-conquer SVD, `dsyev` for symmetric matrices and
//! `dgeev` for the general eigenproblem.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Relative rank tolerance used when callers do not supply one.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Internal gate on eigen-pair residuals, relative to `||M||_F`.
const EIG_RESIDUAL_GATE: f64 = 1e-8;
/// Eigenvalues closer than this (relative to `|M|_F`) are treated as one
/// repeated eigenvalue.
const CLUSTER_TOL: f64 = 1e-8;

/// Thin singular value decomposition `M = U diag(sigma) V*`.
#[derive(Debug, Clone)]
pub struct Svd<T: ComplexField<RealField = f64>> {
    pub u: DMatrix<T>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<T>,
}

impl<T: ComplexField<RealField = f64>> Svd<T> {
    /// Number of singular values above `rank_tol * sigma_1`.
    pub fn rank(&self, rank_tol: f64) -> usize {
        let top = self.sigma.first().copied().unwrap_or(0.0);
        self.sigma
            .iter()
            .filter(|&&s| s > rank_tol * top && s > 0.0)
            .count()
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        let mut us = self.u.clone();
        for (j, &s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(s);
        }
        &us * self.v.adjoint()
    }
}

/// Eigen-decomposition of a real square matrix.
#[derive(Debug, Clone)]
pub struct Eig {
    /// Sorted by modulus, then real part, then imaginary part, all descending.
    pub values: Vec<Complex64>,
    /// One unit-norm column per eigenvalue.
    pub vectors: CMat,
}

/// Symmetric eigen-decomposition with eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

pub fn ensure_finite<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, what: &str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::invalid(format!("{what}: empty matrix")));
    }
    if m.iter().any(|x| !x.clone().is_finite()) {
        return Err(Error::invalid(format!("{what}: non-finite entry")));
    }
    Ok(())
}

/// Scalars with a LAPACK `?gesdd` binding.
pub trait SvdScalar: ComplexField<RealField = f64> + Copy {
    /// Thin SVD of a column-major `rows x cols` buffer; returns LAPACK's `info`.
    #[doc(hidden)]
    fn gesdd(rows: i32, cols: i32, a: &mut [Self], s: &mut [f64], u: &mut [Self], vt: &mut [Self]) -> i32;
}

impl SvdScalar for f64 {
    fn gesdd(rows: i32, cols: i32, a: &mut [f64], s: &mut [f64], u: &mut [f64], vt: &mut [f64]) -> i32 {
        let k = rows.min(cols);
        let mut iwork = vec![0i32; 8 * k as usize];
        let mut info = 0;
        let mut query = [0.0];
        unsafe {
            lapack::dgesdd(b'S', rows, cols, a, rows, s, u, rows, vt, k, &mut query, -1, &mut iwork, &mut info);
        }
        if info != 0 {
            return info;
        }
        let mut work = vec![0.0; query[0] as usize];
        let lwork = work.len() as i32;
        unsafe {
            lapack::dgesdd(b'S', rows, cols, a, rows, s, u, rows, vt, k, &mut work, lwork, &mut iwork, &mut info);
        }
        info
    }
}

impl SvdScalar for Complex64 {
    fn gesdd(rows: i32, cols: i32, a: &mut [Complex64], s: &mut [f64], u: &mut [Complex64], vt: &mut [Complex64]) -> i32 {
        let k = rows.min(cols) as usize;
        let big = rows.max(cols) as usize;
        let mut iwork = vec![0i32; 8 * k];
        let mut rwork = vec![0.0; (5 * k * k + 7 * k).max(2 * big * k + 2 * k * k + k)];
        let mut info = 0;
        let mut query = [Complex64::new(0.0, 0.0)];
        let ki = k as i32;
        unsafe {
            lapack::zgesdd(
                b'S', rows, cols, a, rows, s, u, rows, vt, ki, &mut query, -1, &mut rwork, &mut iwork, &mut info,
            );
        }
        if info != 0 {
            return info;
        }
        let mut work = vec![Complex64::new(0.0, 0.0); query[0].re as usize];
        let lwork = work.len() as i32;
        unsafe {
            lapack::zgesdd(
                b'S', rows, cols, a, rows, s, u, rows, vt, ki, &mut work, lwork, &mut rwork, &mut iwork, &mut info,
            );
        }
        info
    }
}

pub fn svd<T: SvdScalar>(m: &DMatrix<T>) -> Result<Svd<T>> {
    ensure_finite(m, "svd")?;
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    let mut a = m.clone();
    let mut sigma = vec![0.0; k];
    let mut u = DMatrix::<T>::zeros(rows, k);
    let mut vt = DMatrix::<T>::zeros(k, cols);
    let info = T::gesdd(
        rows as i32,
        cols as i32,
        a.as_mut_slice(),
        &mut sigma,
        u.as_mut_slice(),
        vt.as_mut_slice(),
    );
    if info != 0 {
        return Err(Error::NumericalFailure {
            reason: format!("SVD did not converge (info {info})"),
            condition: f64::INFINITY,
        });
    }
    Ok(Svd { u, sigma, v: vt.adjoint() })
}

/// Moore-Penrose pseudo-inverse; singular values `<= rank_tol * sigma_1` count as zero.
pub fn pseudo_inverse<T: SvdScalar>(m: &DMatrix<T>, rank_tol: f64) -> Result<DMatrix<T>> {
    if !(rank_tol >= 0.0) {
        return Err(Error::invalid("rank_tol must be non-negative"));
    }
    let dec = svd(m)?;
    let r = dec.rank(rank_tol);
    let mut out = DMatrix::<T>::zeros(m.ncols(), m.nrows());
    for i in 0..r {
        let inv = T::from_real(1.0 / dec.sigma[i]);
        let vi = dec.v.column(i);
        let ui = dec.u.column(i);
        out += (vi * ui.adjoint()) * inv;
    }
    Ok(out)
}

pub fn sym_eig(g: &Mat) -> Result<SymEig> {
    ensure_finite(g, "symmetric eigen-decomposition")?;
    if g.nrows() != g.ncols() {
        return Err(Error::invalid("symmetric eigen-decomposition needs a square matrix"));
    }
    let sym = symmetrize(g);
    let dec = nalgebra_lapack::SymmetricEigen::try_new(sym).ok_or_else(|| Error::NumericalFailure {
        reason: "symmetric eigen-solver did not converge".into(),
        condition: f64::INFINITY,
    })?;
    let mut order: Vec<usize> = (0..g.nrows()).collect();
    order.sort_by(|&a, &b| dec.eigenvalues[b].total_cmp(&dec.eigenvalues[a]));
    let values = order.iter().map(|&i| dec.eigenvalues[i]).collect();
    let vectors = Mat::from_fn(g.nrows(), g.ncols(), |r, c| dec.eigenvectors[(r, order[c])]);
    Ok(SymEig { values, vectors })
}

pub fn symmetrize(g: &Mat) -> Mat {
    (g + g.transpose()) * 0.5
}

/// Checks symmetry and positive semi-definiteness of a Gram matrix and
/// returns its sorted eigen-decomposition.
pub fn gram_eig(g: &Mat) -> Result<SymEig> {
    ensure_finite(g, "gram")?;
    if g.nrows() != g.ncols() {
        return Err(Error::invalid("Gram matrix must be square"));
    }
    let scale = g.amax().max(f64::MIN_POSITIVE);
    let asym = (g - g.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::invalid(format!(
            "Gram matrix is not symmetric (max asymmetry {asym:.3e})"
        )));
    }
    let dec = sym_eig(g)?;
    let top = dec.values.first().copied().unwrap_or(0.0).max(0.0);
    if let Some(&low) = dec.values.last() {
        if low < -1e-10 * top.max(scale) {
            return Err(Error::invalid(format!(
                "Gram matrix is indefinite (eigenvalue {low:.3e})"
            )));
        }
    }
    Ok(dec)
}

/// Numerical rank of a Gram spectrum. Gram eigenvalues are the squared
/// singular values of the underlying operator and are only known to
/// `eps * lambda_1` absolute accuracy, so the tolerance applies to them
/// directly.
pub fn gram_rank(values: &[f64], rank_tol: f64) -> usize {
    let top = values.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    values.iter().filter(|&&l| l > rank_tol * top).count()
}

/// Coordinate form of the orthogonal projector onto the row space of `M`,
/// computed from `G = M* M` alone.
pub fn projector_from_gram(g: &Mat, rank_tol: f64) -> Result<Mat> {
    let dec = gram_eig(g)?;
    Ok(projector_from_eig(&dec, rank_tol))
}

pub(crate) fn projector_from_eig(dec: &SymEig, rank_tol: f64) -> Mat {
    let r = gram_rank(&dec.values, rank_tol);
    let vr = dec.vectors.columns(0, r);
    vr * vr.transpose()
}

/// Eigenvalues and eigenvectors of a real, possibly non-symmetric matrix.
pub fn eig(m: &Mat) -> Result<Eig> {
    ensure_finite(m, "eig")?;
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::invalid("eig needs a square matrix"));
    }
    let norm = m.norm();
    if norm == 0.0 {
        return Ok(Eig {
            values: vec![Complex64::new(0.0, 0.0); n],
            vectors: CMat::identity(n, n),
        });
    }
    let dec = nalgebra_lapack::Eigen::new(m.clone(), false, true).ok_or_else(|| Error::NumericalFailure {
        reason: "eigenvalue iteration did not converge".into(),
        condition: condition_estimate(m),
    })?;
    let vr = dec.eigenvectors.expect("right eigenvectors requested");
    // Complex pairs come as (re, im) column pairs, the first with positive imaginary part.
    let mut raw = Vec::with_capacity(n);
    let mut raw_vectors = CMat::zeros(n, n);
    let mut j = 0;
    while j < n {
        let (re, im) = (dec.eigenvalues_re[j], dec.eigenvalues_im[j]);
        if im != 0.0 && j + 1 < n {
            let v = CVec::from_fn(n, |r, _| Complex64::new(vr[(r, j)], vr[(r, j + 1)]));
            raw.push(Complex64::new(re, im));
            raw.push(Complex64::new(re, -im));
            raw_vectors.set_column(j, &v);
            raw_vectors.set_column(j + 1, &v.map(|c| c.conj()));
            j += 2;
        } else {
            raw.push(Complex64::new(re, 0.0));
            raw_vectors.set_column(j, &vr.column(j).map(|x| Complex64::new(x, 0.0)));
            j += 1;
        }
    }
    let values = conjugate_closed(&raw, norm)?;

    let mut used = vec![false; n];
    let mut vectors = CMat::zeros(n, n);
    for (col, lam) in values.iter().enumerate() {
        let (slot, _) = raw
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, r)| (i, (r - lam).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("slot available");
        used[slot] = true;
        let mut v = raw_vectors.column(slot).into_owned();
        if lam.im == 0.0 {
            v = real_part_vector(&v);
        }
        let len = v.norm();
        if len > 0.0 {
            v /= Complex64::new(len, 0.0);
        }
        normalize_phase(&mut v);
        vectors.set_column(col, &v);
    }

    let mut values = values;
    merge_clusters(m, &mut values, &mut vectors, CLUSTER_TOL * norm)?;

    // Conjugate partners get exactly conjugated vectors.
    let mut paired = vec![false; n];
    for i in 0..n {
        if values[i].im > 0.0 {
            if let Some(j) = (0..n).find(|&j| !paired[j] && values[j] == values[i].conj()) {
                paired[j] = true;
                let v = vectors.column(i).map(|c| c.conj());
                vectors.set_column(j, &v);
            }
        }
    }

    let cm: CMat = m.map(|x| Complex64::new(x, 0.0));
    for (i, lam) in values.iter().enumerate() {
        let v = vectors.column(i);
        let res = (&cm * v - v * *lam).norm();
        if !(res <= EIG_RESIDUAL_GATE * norm) {
            return Err(Error::NumericalFailure {
                reason: format!("eigen-pair {i} residual {res:.3e} exceeds gate"),
                condition: condition_estimate(m),
            });
        }
    }
    Ok(Eig { values, vectors })
}

/// Ratio of extreme singular values, used as a diagnostic in error reports.
pub fn condition_estimate(m: &Mat) -> f64 {
    match svd(m) {
        Ok(d) => {
            let hi = d.sigma.first().copied().unwrap_or(0.0);
            let lo = d.sigma.last().copied().unwrap_or(0.0);
            if lo > 0.0 {
                hi / lo
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::NAN,
    }
}

/// Snap a numerically computed real-matrix spectrum onto an exactly
/// conjugate-closed one, sorted by (|l| desc, Re desc, Im desc).
fn conjugate_closed(raw: &[Complex64], norm: f64) -> Result<Vec<Complex64>> {
    let tol = 1e-10 * norm;
    let mut reals = Vec::new();
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for &z in raw {
        if z.im.abs() <= tol {
            reals.push(Complex64::new(z.re, 0.0));
        } else if z.im > 0.0 {
            upper.push(z);
        } else {
            lower.push(z);
        }
    }
    if upper.len() != lower.len() {
        return Err(Error::NumericalFailure {
            reason: "spectrum of a real matrix is not conjugate-closed".into(),
            condition: f64::NAN,
        });
    }
    // Average each upper value with its nearest lower partner.
    let mut taken = vec![false; lower.len()];
    let mut out = reals;
    for z in upper {
        let (j, _) = lower
            .iter()
            .enumerate()
            .filter(|(j, _)| !taken[*j])
            .map(|(j, w)| (j, (w.conj() - z).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("partner available");
        taken[j] = true;
        let avg = (z + lower[j].conj()) * 0.5;
        out.push(avg);
        out.push(avg.conj());
    }
    sort_spectrum(&mut out);
    Ok(out)
}

pub fn spectrum_order(a: &Complex64, b: &Complex64) -> std::cmp::Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(b.re.total_cmp(&a.re))
        .then(b.im.total_cmp(&a.im))
}

fn sort_spectrum(v: &mut [Complex64]) {
    v.sort_by(spectrum_order);
}

/// Replaces each cluster of (nearly) repeated eigenvalues whose computed
/// eigenvectors are nearly parallel by the cluster mean and an orthonormal
/// basis of the near-null space of `M - mean I`. Clusters with independent
/// eigenvectors are left untouched.
/// Smallest singular value of a cluster's unit eigenvectors below which they
/// count as parallel.
const PARALLEL_TOL: f64 = 1e-6;

fn merge_clusters(m: &Mat, values: &mut [Complex64], vectors: &mut CMat, tol: f64) -> Result<()> {
    let n = values.len();
    let mut done = vec![false; n];
    for i in 0..n {
        if done[i] || values[i].im < 0.0 {
            continue;
        }
        let members: Vec<usize> = (i..n)
            .filter(|&j| !done[j] && (values[j] - values[i]).norm() <= tol)
            .collect();
        members.iter().for_each(|&j| done[j] = true);
        if members.len() < 2 {
            continue;
        }
        let block = CMat::from_fn(n, members.len(), |r, c| vectors[(r, members[c])]);
        let smin = svd(&block)?.sigma.last().copied().unwrap_or(0.0);
        if smin > PARALLEL_TOL {
            continue;
        }
        let mean = members.iter().map(|&j| values[j]).sum::<Complex64>() / members.len() as f64;
        let mean = if members.iter().all(|&j| values[j].im == 0.0) {
            Complex64::new(mean.re, 0.0)
        } else {
            mean
        };
        let basis: CMat = if mean.im == 0.0 {
            to_complex(&svd(&(m - Mat::identity(n, n) * mean.re))?.v)
        } else {
            svd(&(to_complex(m) - CMat::identity(n, n) * mean))?.v
        };
        for (c, &j) in members.iter().enumerate() {
            let mut v = basis.column(n - 1 - c).into_owned();
            normalize_phase(&mut v);
            vectors.set_column(j, &v);
            values[j] = mean;
        }
        // The conjugate cluster is filled in by the caller.
        if mean.im != 0.0 {
            let conj = mean.conj();
            for j in 0..n {
                if !done[j] && (values[j] - conj).norm() <= tol {
                    done[j] = true;
                    values[j] = conj;
                }
            }
        }
    }
    Ok(())
}

fn real_part_vector(v: &CVec) -> CVec {
    let re: DVector<f64> = v.map(|c| c.re);
    let im: DVector<f64> = v.map(|c| c.im);
    let pick = if re.norm() >= im.norm() { re } else { im };
    pick.map(|x| Complex64::new(x, 0.0))
}

/// Unit 2-norm, first non-negligible component real and positive.
pub fn normalize_phase(v: &mut CVec) {
    let nrm = v.norm();
    if nrm == 0.0 {
        return;
    }
    v.scale_mut(1.0 / nrm);
    let amax = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if let Some(c) = v.iter().find(|c| c.norm() > 1e-8 * amax).copied() {
        let phase = c.conj() / c.norm();
        for x in v.iter_mut() {
            *x *= phase;
        }
    }
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn real_part(m: &CMat) -> Mat {
    m.map(|c| c.re)
}

pub fn imag_part(m: &CMat) -> Mat {
    m.map(|c| c.im)
}
