//! Kernel families, Gram matrices and explicit feature maps.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Largest explicit feature dimension `feature_map` will build.
pub const FEATURE_DIM_CAP: usize = 1_000_000;

static KERNEL_EVALS: AtomicU64 = AtomicU64::new(0);
static FEATURE_MAP_CALLS: AtomicU64 = AtomicU64::new(0);

/// Process-wide call counters, used to audit that the reduced-model
/// pipeline only touches the RKHS through kernel evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    pub kernel_evals: u64,
    pub feature_map_calls: u64,
}

impl Counters {
    pub fn since(self, earlier: Counters) -> Counters {
        Counters {
            kernel_evals: self.kernel_evals - earlier.kernel_evals,
            feature_map_calls: self.feature_map_calls - earlier.feature_map_calls,
        }
    }
}

pub(crate) fn record_evals(n: u64) {
    KERNEL_EVALS.fetch_add(n, Ordering::Relaxed);
}

pub fn counters() -> Counters {
    Counters {
        kernel_evals: KERNEL_EVALS.load(Ordering::SeqCst),
        feature_map_calls: FEATURE_MAP_CALLS.load(Ordering::SeqCst),
    }
}

/// A reproducing kernel `h(y, z) = <Psi(y), Psi(z)>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `(1 + y.z)^gamma`
    Polynomial { gamma: u32 },
    /// `exp(-|y - z|^2 / (2 sigma^2))`
    Gaussian { sigma: f64 },
    /// `log(1 + y) . log(1 + z)`, defined for components > -1
    Logarithmic,
    /// `y.z`
    Linear,
}

impl KernelSpec {
    pub fn polynomial(gamma: u32) -> Result<Self> {
        if gamma == 0 {
            return Err(Error::invalid("polynomial degree must be >= 1"));
        }
        Ok(KernelSpec::Polynomial { gamma })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("gaussian bandwidth must be positive and finite"));
        }
        Ok(KernelSpec::Gaussian { sigma })
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Polynomial { .. } => "poly",
            KernelSpec::Gaussian { .. } => "gauss",
            KernelSpec::Logarithmic => "log",
            KernelSpec::Linear => "linear",
        }
    }

    /// Whether `Psi` is linear, so that the pre-image of a combination is
    /// exactly the same combination of states.
    pub fn has_linear_inverse(&self) -> bool {
        matches!(self, KernelSpec::Linear)
    }

    /// Checks that `y` lies in the kernel's domain.
    pub fn check_domain(&self, y: &[f64], column: usize) -> Result<()> {
        if let Some(bad) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain {
                column,
                reason: format!("component {bad} is not finite"),
            });
        }
        if matches!(self, KernelSpec::Logarithmic) {
            if let Some(bad) = y.iter().position(|&v| v <= -1.0) {
                return Err(Error::Domain {
                    column,
                    reason: format!("log kernel needs components > -1, component {bad} is {}", y[bad]),
                });
            }
        }
        Ok(())
    }

    /// Kernel value without domain checks or counting.
    pub(crate) fn eval_unchecked(&self, y: &[f64], z: &[f64]) -> f64 {
        match *self {
            KernelSpec::Polynomial { gamma } => (1.0 + dot(y, z)).powi(gamma as i32),
            KernelSpec::Gaussian { sigma } => {
                let d2: f64 = y.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
            KernelSpec::Logarithmic => y.iter().zip(z).map(|(a, b)| a.ln_1p() * b.ln_1p()).sum(),
            KernelSpec::Linear => dot(y, z),
        }
    }

    pub fn eval(&self, y: &[f64], z: &[f64]) -> Result<f64> {
        if y.len() != z.len() {
            return Err(Error::invalid(format!(
                "kernel arguments differ in length ({} vs {})",
                y.len(),
                z.len()
            )));
        }
        self.check_domain(y, 0)?;
        self.check_domain(z, 1)?;
        KERNEL_EVALS.fetch_add(1, Ordering::Relaxed);
        Ok(self.eval_unchecked(y, z))
    }

    /// Gram matrix with entry `(i, j) = h(a_j, b_i)`, so `gram(X, Y)` is `Y* X`.
    pub fn gram(&self, a: &Mat, b: &Mat) -> Result<Mat> {
        if a.nrows() != b.nrows() {
            return Err(Error::invalid(format!(
                "gram operands have {} and {} rows",
                a.nrows(),
                b.nrows()
            )));
        }
        let acols = columns(a);
        let bcols = columns(b);
        for (j, c) in acols.iter().enumerate() {
            self.check_domain(c, j)?;
        }
        for (i, c) in bcols.iter().enumerate() {
            self.check_domain(c, i)?;
        }
        let (rows, cols) = (bcols.len(), acols.len());
        let entries: Vec<f64> = (0..rows * cols)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / cols, idx % cols);
                self.eval_unchecked(&acols[j], &bcols[i])
            })
            .collect();
        KERNEL_EVALS.fetch_add((rows * cols) as u64, Ordering::Relaxed);
        Ok(Mat::from_row_slice(rows, cols, &entries))
    }

    /// Vector `(h(a_1, z), ..., h(a_m, z))`.
    pub fn cross(&self, a: &Mat, z: &[f64]) -> Result<DVector<f64>> {
        if a.nrows() != z.len() {
            return Err(Error::invalid(format!(
                "state has dimension {}, training data has {}",
                z.len(),
                a.nrows()
            )));
        }
        self.check_domain(z, 0)?;
        let mut out = DVector::zeros(a.ncols());
        for j in 0..a.ncols() {
            let col: Vec<f64> = a.column(j).iter().copied().collect();
            self.check_domain(&col, j)?;
            out[j] = self.eval_unchecked(&col, z);
        }
        KERNEL_EVALS.fetch_add(a.ncols() as u64, Ordering::Relaxed);
        Ok(out)
    }

    /// Dimension of the explicit feature space, when finite.
    pub fn feature_dim(&self, p: usize) -> Option<usize> {
        match *self {
            KernelSpec::Linear | KernelSpec::Logarithmic => Some(p),
            KernelSpec::Polynomial { gamma } => binomial(p + gamma as usize, gamma as usize),
            KernelSpec::Gaussian { .. } => None,
        }
    }

    /// Explicit `Psi(y)`; only used by coordinate oracles.
    pub fn feature_map(&self, y: &[f64]) -> Result<Vec<f64>> {
        FEATURE_MAP_CALLS.fetch_add(1, Ordering::Relaxed);
        self.check_domain(y, 0)?;
        match *self {
            KernelSpec::Linear => Ok(y.to_vec()),
            KernelSpec::Logarithmic => Ok(y.iter().map(|v| v.ln_1p()).collect()),
            KernelSpec::Gaussian { .. } => Err(Error::Capability(
                "the Gaussian kernel has no finite feature map".into(),
            )),
            KernelSpec::Polynomial { gamma } => {
                let dim = self.feature_dim(y.len()).unwrap_or(usize::MAX);
                if dim > FEATURE_DIM_CAP {
                    return Err(Error::Capacity { dim, cap: FEATURE_DIM_CAP });
                }
                Ok(polynomial_features(y, gamma))
            }
        }
    }

    /// Stacks `feature_map` of each column into a `dim(H) x cols` matrix.
    pub fn feature_matrix(&self, a: &Mat) -> Result<Mat> {
        let cols: Vec<Vec<f64>> = columns(a)
            .iter()
            .enumerate()
            .map(|(j, c)| {
                self.feature_map(c).map_err(|e| match e {
                    Error::Domain { reason, .. } => Error::Domain { column: j, reason },
                    other => other,
                })
            })
            .collect::<Result<_>>()?;
        let dim = cols.first().map_or(0, Vec::len);
        Ok(Mat::from_fn(dim, cols.len(), |r, c| cols[c][r]))
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Polynomial { gamma } => write!(f, "poly:{gamma}"),
            KernelSpec::Gaussian { sigma } => write!(f, "gauss:{sigma}"),
            KernelSpec::Logarithmic => write!(f, "log"),
            KernelSpec::Linear => write!(f, "linear"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (family, arg) = match s.split_once(':') {
            Some((f, a)) => (f, Some(a)),
            None => (s, None),
        };
        match (family, arg) {
            ("log", None) => Ok(KernelSpec::Logarithmic),
            ("linear", None) => Ok(KernelSpec::Linear),
            ("poly", Some(g)) => {
                let gamma = g
                    .parse::<u32>()
                    .map_err(|_| Error::invalid(format!("bad polynomial degree in '{s}'")))?;
                KernelSpec::polynomial(gamma)
            }
            ("gauss", Some(v)) => {
                let sigma = v
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad gaussian bandwidth in '{s}'")))?;
                KernelSpec::gaussian(sigma)
            }
            _ => Err(Error::invalid(format!(
                "unknown kernel '{s}' (expected poly:GAMMA, gauss:SIGMA, log or linear)"
            ))),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn columns(a: &Mat) -> Vec<Vec<f64>> {
    (0..a.ncols()).map(|j| a.column(j).iter().copied().collect()).collect()
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

/// Multi-indices of total degree `deg` over `p` variables.
fn multi_indices(p: usize, deg: usize) -> Vec<Vec<u32>> {
    fn rec(p: usize, left: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == p - 1 {
            cur.push(left as u32);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for e in (0..=left).rev() {
            cur.push(e as u32);
            rec(p, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if p == 0 {
        if deg == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(p, deg, &mut Vec::with_capacity(p), &mut out);
    out
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Coordinates `sqrt(gamma! / ((gamma - |a|)! prod a_i!)) y^a` of the
/// binomial expansion of `(1 + y.z)^gamma`, ordered by degree, then by
/// number of distinct variables (descending), then lexicographically
/// descending in the exponents.
fn polynomial_features(y: &[f64], gamma: u32) -> Vec<f64> {
    let p = y.len();
    let mut out = Vec::new();
    for deg in 0..=gamma as usize {
        let mut idx = multi_indices(p, deg);
        idx.sort_by(|a, b| {
            let sa = a.iter().filter(|&&e| e > 0).count();
            let sb = b.iter().filter(|&&e| e > 0).count();
            sb.cmp(&sa).then_with(|| b.cmp(a))
        });
        for alpha in idx {
            let coef = factorial(gamma)
                / (factorial(gamma - deg as u32) * alpha.iter().map(|&e| factorial(e)).product::<f64>());
            let mono: f64 = alpha.iter().zip(y).map(|(&e, &v)| v.powi(e as i32)).product();
            out.push(coef.sqrt() * mono);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn polynomial_footnote_case() {
        let k = KernelSpec::polynomial(2).unwrap();
        let (y, z) = ([1.0, 2.0], [3.0, 4.0]);
        assert_eq!(k.eval(&y, &z).unwrap(), 144.0);
        let s2 = 2f64.sqrt();
        let fy = k.feature_map(&y).unwrap();
        let want = [1.0, s2, 2.0 * s2, 2.0 * s2, 1.0, 4.0];
        for (a, b) in fy.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let fz = k.feature_map(&z).unwrap();
        assert!((dot(&fy, &fz) - 144.0).abs() <= 1e-12 * 144.0);
    }

    #[test]
    fn gaussian_diagonal_is_one() {
        let k = KernelSpec::gaussian(0.3).unwrap();
        assert_eq!(k.eval(&[0.4, -2.0, 7.0], &[0.4, -2.0, 7.0]).unwrap(), 1.0);
    }

    #[test]
    fn log_kernel_at_e_minus_one() {
        let e1 = std::f64::consts::E - 1.0;
        let v = KernelSpec::Logarithmic.eval(&[e1], &[e1]).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        assert_eq!(KernelSpec::Logarithmic.feature_map(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn log_kernel_domain_error() {
        let err = KernelSpec::Logarithmic.eval(&[0.0, -1.0], &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Domain { .. }));
        let a = Mat::from_row_slice(2, 3, &[0.0, 0.1, 0.2, 0.0, -1.5, 0.1]);
        match KernelSpec::Logarithmic.gram(&a, &a) {
            Err(Error::Domain { column, .. }) => assert_eq!(column, 1),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn gaussian_has_no_feature_map() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        assert!(matches!(k.feature_map(&[1.0]), Err(Error::Capability(_))));
    }

    #[test]
    fn polynomial_feature_cap() {
        let k = KernelSpec::polynomial(6).unwrap();
        let y = vec![0.1; 60];
        assert!(matches!(k.feature_map(&y), Err(Error::Capacity { .. })));
    }

    #[test]
    fn linear_gram_is_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Mat::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0));
        let b = Mat::from_fn(4, 5, |_, _| rng.random_range(-1.0..1.0));
        let g = KernelSpec::Linear.gram(&a, &b).unwrap();
        assert!((g - b.transpose() * &a).amax() < 1e-15);
    }

    #[test]
    fn polynomial_gram_matches_feature_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = KernelSpec::polynomial(2).unwrap();
        let a = Mat::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0));
        let b = Mat::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let g = k.gram(&a, &b).unwrap();
        let oracle = k.feature_matrix(&b).unwrap().transpose() * k.feature_matrix(&a).unwrap();
        assert!((g - oracle).amax() < 1e-12);
    }

    #[test]
    fn designations_round_trip() {
        for s in ["poly:2", "gauss:0.01", "log", "linear"] {
            let k: KernelSpec = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        for bad in ["poly:0", "poly", "gauss:-1", "gauss:x", "rbf", "log:2"] {
            assert!(bad.parse::<KernelSpec>().is_err(), "{bad}");
        }
    }
}
