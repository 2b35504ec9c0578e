//! Rank and kernel sweeps over the three methods.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use okdmd::baselines::{kdmd_fit, lowrank_dmd_fit, KdmdModel};
use okdmd::io::format_real;
use okdmd::linalg::{Mat, DEFAULT_RANK_TOL};
use okdmd::okdmd::{Method, ReducedModel};
use okdmd::preimage::{InverseMode, SolverOptions};
use okdmd::snapshots::SnapshotSet;
use okdmd::{Error, KernelSpec, Result};
use rayon::prelude::*;

use crate::metrics::epsilon;

pub const CSV_HEADER: [&str; 8] = [
    "method",
    "kernel",
    "k",
    "eps_train",
    "eps_test",
    "fit_seconds",
    "preimage_convergence_rate",
    "status",
];

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub kernels: Vec<KernelSpec>,
    pub ranks: Vec<usize>,
    pub inverse: InverseMode,
    pub rank_tol: f64,
    pub solver: SolverOptions,
    /// Record wall-clock fit times; off by default so tables are reproducible.
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn new(methods: Vec<Method>, kernels: Vec<KernelSpec>, ranks: Vec<usize>) -> Self {
        ExperimentConfig {
            methods,
            kernels,
            ranks,
            inverse: InverseMode::ClosedForm,
            rank_tol: DEFAULT_RANK_TOL,
            solver: SolverOptions::default(),
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.ranks.is_empty() {
            return Err(Error::InvalidInput("methods and ranks must be non-empty".into()));
        }
        let needs_kernel = self.methods.iter().any(|m| *m != Method::Lowrank);
        if needs_kernel && self.kernels.is_empty() {
            return Err(Error::InvalidInput("kernels must be non-empty".into()));
        }
        if self.ranks.contains(&0) {
            return Err(Error::InvalidInput("ranks must be positive".into()));
        }
        if !(self.rank_tol >= 0.0) {
            return Err(Error::InvalidInput("rank_tol must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub method: Method,
    pub kernel: KernelSpec,
    pub k: usize,
    pub eps_train: f64,
    pub eps_test: f64,
    pub fit_seconds: f64,
    pub preimage_convergence_rate: f64,
    /// `ok`, `warn:<what>` or an error code.
    pub status: String,
}

impl Row {
    fn failed(method: Method, kernel: KernelSpec, k: usize, e: &Error) -> Self {
        Row {
            method,
            kernel,
            k,
            eps_train: f64::NAN,
            eps_test: f64::NAN,
            fit_seconds: 0.0,
            preimage_convergence_rate: f64::NAN,
            status: e.code().to_string(),
        }
    }

    pub fn ok(&self) -> bool {
        self.status == "ok" || self.status.starts_with("warn:")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentTable {
    pub rows: Vec<Row>,
}

impl ExperimentTable {
    pub fn get(&self, method: Method, kernel: KernelSpec, k: usize) -> Option<&Row> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.k == k && (method == Method::Lowrank || r.kernel == kernel))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| Error::Io {
            path: "<csv>".into(),
            reason: e.to_string(),
        };
        w.write_record(CSV_HEADER).map_err(fail)?;
        for r in &self.rows {
            w.write_record([
                r.method.name().to_string(),
                r.kernel.to_string(),
                r.k.to_string(),
                format_real(r.eps_train),
                format_real(r.eps_test),
                format_real(r.fit_seconds),
                format_real(r.preimage_convergence_rate),
                r.status.clone(),
            ])
            .map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io {
            path: "<csv>".into(),
            reason: e.to_string(),
        })?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let parse_err = |what: &str| Error::Parse(format!("bad CSV field: {what}"));
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            if rec.len() != CSV_HEADER.len() {
                return Err(parse_err("column count"));
            }
            let num = |i: usize| rec[i].parse::<f64>().map_err(|_| parse_err(CSV_HEADER[i]));
            rows.push(Row {
                method: rec[0].parse()?,
                kernel: rec[1].parse()?,
                k: rec[2].parse().map_err(|_| parse_err("k"))?,
                eps_train: num(3)?,
                eps_test: num(4)?,
                fit_seconds: num(5)?,
                preimage_convergence_rate: num(6)?,
                status: rec[7].to_string(),
            });
        }
        Ok(ExperimentTable { rows })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// Predictions of `x_2` for every column of `x`, plus the fraction of
/// pre-images that converged and whether any conjugacy warning was raised.
pub fn predict_okdmd(
    model: &ReducedModel,
    x: &Mat,
    mode: InverseMode,
    opts: &SolverOptions,
) -> Result<(Mat, f64, bool)> {
    let cols: Vec<_> = (0..x.ncols())
        .into_par_iter()
        .map(|j| {
            let theta: Vec<f64> = x.column(j).iter().copied().collect();
            model.predict(&theta, 2, mode, opts)
        })
        .collect::<Result<_>>()?;
    let states: Vec<_> = cols.iter().map(|p| p.state.clone()).collect();
    let converged = cols.iter().filter(|p| p.preimage.converged).count() as f64 / cols.len().max(1) as f64;
    let warned = cols.iter().any(|p| p.conjugacy_warning);
    Ok((Mat::from_columns(&states), converged, warned))
}

pub fn predict_kdmd(model: &KdmdModel, x: &Mat, k: usize) -> Result<(Mat, bool)> {
    let cols: Vec<_> = (0..x.ncols())
        .into_par_iter()
        .map(|j| {
            let theta: Vec<f64> = x.column(j).iter().copied().collect();
            model.predict(&theta, 2, k)
        })
        .collect::<Result<_>>()?;
    let states: Vec<_> = cols.iter().map(|p| p.state.clone()).collect();
    Ok((Mat::from_columns(&states), cols.iter().any(|p| p.conjugacy_warning)))
}

fn status(warned: bool) -> String {
    if warned {
        "warn:conjugacy".into()
    } else {
        "ok".into()
    }
}

fn okdmd_cell(
    method: Method,
    kernel: KernelSpec,
    k: usize,
    train: &SnapshotSet,
    test: &SnapshotSet,
    cfg: &ExperimentConfig,
) -> Row {
    let run = || -> Result<Row> {
        let start = Instant::now();
        let model = match method {
            Method::Lowrank => lowrank_dmd_fit(train, k, cfg.rank_tol)?,
            _ => ReducedModel::fit(train, kernel, k, cfg.rank_tol)?,
        };
        let fit_seconds = if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 };
        let (p_train, c_train, w_train) = predict_okdmd(&model, &train.x, cfg.inverse, &cfg.solver)?;
        let (p_test, c_test, w_test) = predict_okdmd(&model, &test.x, cfg.inverse, &cfg.solver)?;
        let n = (train.m() + test.m()) as f64;
        Ok(Row {
            method,
            kernel,
            k,
            eps_train: epsilon(&p_train, &train.y)?,
            eps_test: epsilon(&p_test, &test.y)?,
            fit_seconds,
            preimage_convergence_rate: (c_train * train.m() as f64 + c_test * test.m() as f64) / n,
            status: status(w_train || w_test),
        })
    };
    run().unwrap_or_else(|e| Row::failed(method, kernel, k, &e))
}

fn kdmd_rows(kernel: KernelSpec, ranks: &[usize], train: &SnapshotSet, test: &SnapshotSet, cfg: &ExperimentConfig) -> Vec<Row> {
    let start = Instant::now();
    let model = match kdmd_fit(train, kernel, cfg.rank_tol) {
        Ok(m) => m,
        Err(e) => return ranks.iter().map(|&k| Row::failed(Method::Kdmd, kernel, k, &e)).collect(),
    };
    let fit_seconds = if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 };
    ranks
        .par_iter()
        .map(|&k| {
            let run = || -> Result<Row> {
                let (p_train, w_train) = predict_kdmd(&model, &train.x, k)?;
                let (p_test, w_test) = predict_kdmd(&model, &test.x, k)?;
                Ok(Row {
                    method: Method::Kdmd,
                    kernel,
                    k,
                    eps_train: epsilon(&p_train, &train.y)?,
                    eps_test: epsilon(&p_test, &test.y)?,
                    fit_seconds,
                    // No pre-image problem is solved.
                    preimage_convergence_rate: 1.0,
                    status: status(w_train || w_test),
                })
            };
            run().unwrap_or_else(|e| Row::failed(Method::Kdmd, kernel, k, &e))
        })
        .collect()
}

/// Runs every (method, kernel, k) cell. Cell failures are recorded in the
/// row status; only configuration errors abort the sweep.
pub fn sweep(train: &SnapshotSet, test: &SnapshotSet, cfg: &ExperimentConfig) -> Result<ExperimentTable> {
    cfg.validate()?;
    if train.p() != test.p() {
        return Err(Error::InvalidInput("training and test states differ in dimension".into()));
    }
    let mut ranks = cfg.ranks.clone();
    ranks.sort_unstable();
    ranks.dedup();
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();

    let mut rows = Vec::new();
    for method in methods {
        match method {
            Method::Kdmd => {
                for &kernel in &cfg.kernels {
                    rows.extend(kdmd_rows(kernel, &ranks, train, test, cfg));
                }
            }
            Method::Okdmd => {
                for &kernel in &cfg.kernels {
                    let cells: Vec<Row> = ranks
                        .par_iter()
                        .map(|&k| okdmd_cell(method, kernel, k, train, test, cfg))
                        .collect();
                    rows.extend(cells);
                }
            }
            Method::Lowrank => {
                let cells: Vec<Row> = ranks
                    .par_iter()
                    .map(|&k| okdmd_cell(method, KernelSpec::Linear, k, train, test, cfg))
                    .collect();
                rows.extend(cells);
            }
        }
    }
    Ok(ExperimentTable { rows })
}

/// Human-readable summary, one line per row.
pub fn summary(table: &ExperimentTable) -> String {
    let mut out = String::new();
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{:<8} {:<12} k={:<4} eps_train={:<10.3e} eps_test={:<10.3e} {}",
            r.method.name(),
            r.kernel.to_string(),
            r.k,
            r.eps_train,
            r.eps_test,
            r.status
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use okdmd::synthgen::{generate_dataset, GenConfig, GridSpec};

    fn data() -> (SnapshotSet, SnapshotSet) {
        let cfg = GenConfig {
            trajectories: 6,
            ..GenConfig::default()
        };
        generate_dataset(GridSpec::new(4).unwrap(), &cfg).unwrap()
    }

    #[test]
    fn rows_are_ordered_and_lowrank_appears_once() {
        let (train, test) = data();
        let cfg = ExperimentConfig::new(
            vec![Method::Lowrank, Method::Okdmd, Method::Kdmd],
            vec![KernelSpec::Logarithmic, KernelSpec::Linear],
            vec![4, 2],
        );
        let table = sweep(&train, &test, &cfg).unwrap();
        let keys: Vec<(Method, String, usize)> = table
            .rows
            .iter()
            .map(|r| (r.method, r.kernel.to_string(), r.k))
            .collect();
        assert_eq!(keys.len(), 2 * 2 + 2 * 2 + 2);
        assert_eq!(keys[0], (Method::Okdmd, "log".into(), 2));
        assert_eq!(keys[4], (Method::Kdmd, "log".into(), 2));
        assert_eq!(keys[8], (Method::Lowrank, "linear".into(), 2));
        assert!(table.rows.iter().all(|r| r.ok()));
    }

    #[test]
    fn csv_round_trip_and_header() {
        let (train, test) = data();
        let cfg = ExperimentConfig::new(vec![Method::Okdmd], vec![KernelSpec::Logarithmic], vec![3]);
        let table = sweep(&train, &test, &cfg).unwrap();
        let text = table.to_csv().unwrap();
        assert!(text.starts_with("method,kernel,k,eps_train,eps_test,fit_seconds,preimage_convergence_rate,status\n"));
        assert_eq!(ExperimentTable::from_csv(&text).unwrap(), table);
    }

    #[test]
    fn oversized_rank_is_recorded_not_fatal() {
        let (train, test) = data();
        let cfg = ExperimentConfig::new(vec![Method::Okdmd, Method::Kdmd], vec![KernelSpec::Logarithmic], vec![2, 50]);
        let table = sweep(&train, &test, &cfg).unwrap();
        let bad = table.get(Method::Okdmd, KernelSpec::Logarithmic, 50).unwrap();
        assert_eq!(bad.status, "invalid_input");
        assert!(table.get(Method::Okdmd, KernelSpec::Logarithmic, 2).unwrap().ok());
        assert_eq!(table.get(Method::Kdmd, KernelSpec::Logarithmic, 50).unwrap().status, "invalid_input");
    }

    #[test]
    fn empty_config_is_rejected() {
        let (train, test) = data();
        let cfg = ExperimentConfig::new(vec![], vec![KernelSpec::Linear], vec![1]);
        assert!(sweep(&train, &test, &cfg).is_err());
    }
}
