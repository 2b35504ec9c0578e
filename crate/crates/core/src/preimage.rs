//! Pre-images of training-span combinations `sum_i g_i Psi(y_i)`.
//!
//! The variational pre-image minimizes
//! `f(z) = h(z, z) - 2 sum_i g_i h(y_i, z)` over `z`, which only needs kernel
//! evaluations. Each kernel family also has a closed form: exact for the
//! linear and logarithmic kernels, a small-data approximation for the
//! polynomial and Gaussian ones.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kernels::{columns, KernelSpec};
use crate::lbfgs::{self, LbfgsOptions};
use crate::linalg::Mat;

/// How a coefficient vector is mapped back to state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InverseMode {
    Variational,
    ClosedForm,
}

impl std::str::FromStr for InverseMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variational" => Ok(InverseMode::Variational),
            "closed" | "closed_form" | "closed-form" => Ok(InverseMode::ClosedForm),
            _ => Err(Error::invalid(format!("unknown inverse mode '{s}'"))),
        }
    }
}

impl std::fmt::Display for InverseMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InverseMode::Variational => "variational",
            InverseMode::ClosedForm => "closed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialPoint {
    /// The kernel's closed-form approximation.
    ClosedForm,
    Given(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub gradient_tolerance: f64,
    pub initial_point: InitialPoint,
    pub memory: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 500,
            gradient_tolerance: 1e-9,
            initial_point: InitialPoint::ClosedForm,
            memory: 10,
            armijo: 1e-4,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.gradient_tolerance > 0.0) || self.memory == 0 {
            return Err(Error::invalid("solver options need positive iterations, tolerance and memory"));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::invalid("Armijo constant must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Result of a pre-image computation with solver diagnostics.
#[derive(Debug, Clone)]
pub struct Preimage {
    pub z: DVector<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Kernel evaluations spent by the solver.
    pub kernel_evals: u64,
}

/// The problem `min_z h(z,z) - 2 sum_i g_i h(y_i, z)`.
#[derive(Debug, Clone)]
pub struct PreimageProblem<'a> {
    pub g: DVector<f64>,
    pub y: &'a Mat,
    pub kernel: KernelSpec,
}

impl<'a> PreimageProblem<'a> {
    pub fn new(g: DVector<f64>, y: &'a Mat, kernel: KernelSpec) -> Result<Self> {
        if g.len() != y.ncols() {
            return Err(Error::invalid(format!(
                "coefficient vector has length {}, training set has {} columns",
                g.len(),
                y.ncols()
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite pre-image coefficients"));
        }
        for (j, c) in columns(y).iter().enumerate() {
            kernel.check_domain(c, j)?;
        }
        Ok(PreimageProblem { g, y, kernel })
    }

    fn p(&self) -> usize {
        self.y.nrows()
    }

    /// `Y g`
    fn combination(&self) -> DVector<f64> {
        self.y * &self.g
    }

    fn count_evals(&self) {
        crate::kernels::record_evals(self.g.len() as u64 + 1);
    }

    /// Objective and gradient of the raw variational problem.
    pub fn objective_and_gradient(&self, z: &[f64]) -> Result<(f64, DVector<f64>)> {
        if z.len() != self.p() {
            return Err(Error::invalid(format!("z has dimension {}, expected {}", z.len(), self.p())));
        }
        self.kernel.check_domain(z, 0)?;
        self.count_evals();
        Ok(self.raw(z))
    }

    fn raw(&self, z: &[f64]) -> (f64, DVector<f64>) {
        let p = self.p();
        let zv = DVector::from_column_slice(z);
        match self.kernel {
            KernelSpec::Linear => {
                let c = self.combination();
                let f = zv.dot(&zv) - 2.0 * c.dot(&zv);
                (f, (&zv - &c) * 2.0)
            }
            KernelSpec::Polynomial { gamma } => {
                let gm = gamma as i32;
                let zz = 1.0 + zv.dot(&zv);
                let mut f = zz.powi(gm);
                let mut grad = &zv * (2.0 * f64::from(gamma) * zz.powi(gm - 1));
                for (i, gi) in self.g.iter().enumerate() {
                    let yi = self.y.column(i);
                    let base = 1.0 + yi.dot(&zv);
                    f -= 2.0 * gi * base.powi(gm);
                    grad.axpy(-2.0 * f64::from(gamma) * gi * base.powi(gm - 1), &yi, 1.0);
                }
                (f, grad)
            }
            KernelSpec::Gaussian { sigma } => {
                let (s, ds) = self.gaussian_sum(&zv, sigma);
                // h(z, z) = 1
                (1.0 - 2.0 * s, ds * -2.0)
            }
            KernelSpec::Logarithmic => {
                let a = self.log_target();
                let mut f = 0.0;
                let mut grad = DVector::zeros(p);
                for j in 0..p {
                    let l = z[j].ln_1p();
                    f += l * l - 2.0 * a[j] * l;
                    grad[j] = 2.0 * (l - a[j]) / (1.0 + z[j]);
                }
                (f, grad)
            }
        }
    }

    /// `S(z) = sum_i g_i exp(-|y_i - z|^2 / 2 sigma^2)` and its gradient.
    fn gaussian_sum(&self, z: &DVector<f64>, sigma: f64) -> (f64, DVector<f64>) {
        let s2 = sigma * sigma;
        let mut s = 0.0;
        let mut ds = DVector::zeros(z.len());
        for (i, gi) in self.g.iter().enumerate() {
            let diff = self.y.column(i) - z;
            let e = (-diff.norm_squared() / (2.0 * s2)).exp();
            s += gi * e;
            ds.axpy(gi * e / s2, &diff, 1.0);
        }
        (s, ds)
    }

    /// `sum_i g_i log(1 + y_i)`, the feature vector of the target element.
    fn log_target(&self) -> DVector<f64> {
        self.y.map(f64::ln_1p) * &self.g
    }

    /// Closed-form pre-image of the kernel family.
    pub fn closed_form(&self) -> Result<DVector<f64>> {
        match self.kernel {
            KernelSpec::Linear | KernelSpec::Polynomial { .. } => Ok(self.combination()),
            KernelSpec::Gaussian { .. } => {
                let total: f64 = self.g.sum();
                if total.abs() <= 1e-12 {
                    return Err(Error::DegenerateCoefficients(total));
                }
                Ok(self.combination() / total)
            }
            KernelSpec::Logarithmic => Ok(self.log_target().map(f64::exp_m1)),
        }
    }

    /// Minimizes the variational objective with L-BFGS.
    ///
    /// Gaussian problems are solved in the `-log S(z)` form when `S > 0` at
    /// the starting point. Hitting the iteration cap is not an error; the
    /// best iterate is returned with `converged = false`.
    pub fn solve_variational(&self, opts: &SolverOptions) -> Result<Preimage> {
        opts.validate()?;
        let z0: Vec<f64> = match &opts.initial_point {
            InitialPoint::Given(z) => {
                if z.len() != self.p() {
                    return Err(Error::invalid("initial point has wrong dimension"));
                }
                z.clone()
            }
            InitialPoint::ClosedForm => match self.closed_form() {
                Ok(z) => z.iter().copied().collect(),
                Err(Error::DegenerateCoefficients(_)) => self.combination().iter().copied().collect(),
                Err(e) => return Err(e),
            },
        };
        self.kernel.check_domain(&z0, 0)?;

        let lopts = LbfgsOptions {
            max_iters: opts.max_iters,
            gradient_tolerance: opts.gradient_tolerance,
            memory: opts.memory,
            armijo: opts.armijo,
        };
        let per_eval = self.g.len() as u64 + 1;
        let kernel = self.kernel;

        let report = match kernel {
            KernelSpec::Gaussian { sigma }
                if self.gaussian_sum(&DVector::from_column_slice(&z0), sigma).0 > 0.0 =>
            {
                lbfgs::minimize(
                    |z| {
                        let (s, ds) = self.gaussian_sum(&DVector::from_column_slice(z), sigma);
                        (s > 0.0).then(|| (-s.ln(), (ds / -s).iter().copied().collect()))
                    },
                    z0,
                    &lopts,
                )
            }
            _ => lbfgs::minimize(
                |z| {
                    if kernel.check_domain(z, 0).is_err() {
                        return None;
                    }
                    let (f, g) = self.raw(z);
                    Some((f, g.iter().copied().collect()))
                },
                z0,
                &lopts,
            ),
        };
        let kernel_evals = per_eval * report.evaluations as u64;
        crate::kernels::record_evals(kernel_evals);
        if report.f == f64::NEG_INFINITY || report.f < -1e300 {
            return Err(Error::Divergence);
        }
        Ok(Preimage {
            z: DVector::from_vec(report.x),
            iterations: report.iterations,
            gradient_norm: report.grad_norm,
            converged: report.converged,
            kernel_evals,
        })
    }

    pub fn solve(&self, mode: InverseMode, opts: &SolverOptions) -> Result<Preimage> {
        let out = match mode {
            InverseMode::Variational => self.solve_variational(opts)?,
            InverseMode::ClosedForm => Preimage {
                z: self.closed_form()?,
                iterations: 0,
                gradient_norm: f64::NAN,
                converged: true,
                kernel_evals: 0,
            },
        };
        if out.z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure {
                reason: "pre-image has non-finite entries".into(),
                condition: f64::INFINITY,
            });
        }
        Ok(out)
    }
}
