use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use okdmd::baselines::{kdmd_fit, lowrank_dmd_fit, KdmdModel};
use okdmd::io::{read_matrix, write_matrix, Meta};
use okdmd::linalg::{Mat, DEFAULT_RANK_TOL};
use okdmd::okdmd::{Method, ReducedModel};
use okdmd::preimage::{InverseMode, SolverOptions};
use okdmd::synthgen::{generate, Dataset, GenConfig, GridSpec, DEFAULT_MODES};
use okdmd::{Error, KernelSpec, Result};
use okdmd_harness::experiment::{summary, sweep, ExperimentConfig};
use okdmd_harness::oracle::oracle_check;
use okdmd_harness::plot::render_svg;

#[derive(Parser)]
#[command(name = "okdmd", version, about = "Optimal kernel-based DMD reduced models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic train/test snapshot dataset.
    Generate(GenerateArgs),
    /// Fit one reduced model and save it.
    Fit(FitArgs),
    /// Predict the state t-1 steps after each column of a theta file.
    Predict(PredictArgs),
    /// Error-vs-rank sweep over methods and kernels.
    Sweep(SweepArgs),
    /// Compare the Gram pipeline against explicit feature coordinates.
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Grid side; the state has 2 n^2 entries.
    #[arg(long)]
    n: usize,
    /// Trajectories per set.
    #[arg(long = "N", default_value_t = 20)]
    trajectories: usize,
    /// States per trajectory.
    #[arg(long = "T", default_value_t = 2)]
    length: usize,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    hurst: f64,
    #[arg(long, default_value_t = 1e-6)]
    noise: f64,
    #[arg(long, default_value_t = 1e-2)]
    scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stream-function modes kept per initial condition; 0 keeps all.
    #[arg(long, default_value_t = DEFAULT_MODES)]
    modes: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    method: Method,
    /// poly:GAMMA, gauss:SIGMA, log or linear. Ignored by lowrank.
    #[arg(long, default_value = "log")]
    kernel: KernelSpec,
    /// Reduced dimension. Ignored by kdmd, which keeps every mode.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    rank_tol: f64,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Matrix file whose columns are initial states.
    #[arg(long)]
    theta: PathBuf,
    #[arg(long, default_value_t = 2)]
    t: usize,
    #[arg(long, default_value = "closed")]
    inverse: InverseMode,
    /// Number of modes summed by a kdmd model; defaults to all.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "okdmd,kdmd,lowrank")]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "log")]
    kernels: Vec<KernelSpec>,
    #[arg(long, value_delimiter = ',')]
    ranks: Vec<usize>,
    /// Output directory for results.csv (and results.svg).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    plot: bool,
    /// Record wall-clock fit times; makes the CSV non-reproducible.
    #[arg(long)]
    timing: bool,
    #[arg(long, default_value = "closed")]
    inverse: InverseMode,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    rank_tol: f64,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    kernel: KernelSpec,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    rank_tol: f64,
}

fn run_generate(a: GenerateArgs) -> Result<()> {
    let grid = GridSpec::new(a.n)?;
    let cfg = GenConfig {
        trajectories: a.trajectories,
        length: a.length,
        alpha: a.alpha,
        hurst: a.hurst,
        noise_std: a.noise,
        target_scale: a.scale,
        seed: a.seed,
        modes: (a.modes > 0).then_some(a.modes),
    };
    let ds = generate(grid, &cfg)?;
    ds.save(&a.out)?;
    println!("wrote {} training pairs of dimension {} to {}", ds.train.m(), ds.train.p(), a.out.display());
    Ok(())
}

fn run_fit(a: FitArgs) -> Result<()> {
    let ds = Dataset::load(&a.data)?;
    match a.method {
        Method::Okdmd => {
            let model = ReducedModel::fit(&ds.train, a.kernel, a.k, a.rank_tol)?;
            model.save(&a.out)?;
            println!("okdmd kernel={} k={} k_eff={}", a.kernel, a.k, model.k_eff);
        }
        Method::Lowrank => {
            let model = lowrank_dmd_fit(&ds.train, a.k, a.rank_tol)?;
            model.save(&a.out)?;
            println!("lowrank k={} k_eff={}", a.k, model.k_eff);
        }
        Method::Kdmd => {
            let model = kdmd_fit(&ds.train, a.kernel, a.rank_tol)?;
            for w in &model.warnings {
                eprintln!("warning: {w}");
            }
            model.save(&a.out)?;
            println!("kdmd kernel={} modes={}", a.kernel, model.lambda.len());
        }
    }
    Ok(())
}

fn model_method(dir: &Path) -> Result<Method> {
    Meta::read(&dir.join("model.meta"))?.parse("method")
}

fn run_predict(a: PredictArgs) -> Result<()> {
    let theta = read_matrix(&a.theta)?;
    let mut out = Mat::zeros(theta.nrows(), theta.ncols());
    let mut warned = false;
    match model_method(&a.model)? {
        Method::Kdmd => {
            let model = KdmdModel::load(&a.model)?;
            let k = a.k.unwrap_or(model.lambda.len());
            for (j, col) in theta.column_iter().enumerate() {
                let theta_j: Vec<f64> = col.iter().copied().collect();
                let pred = model.predict(&theta_j, a.t, k)?;
                warned |= pred.conjugacy_warning;
                out.set_column(j, &pred.state);
            }
        }
        _ => {
            let model = ReducedModel::load(&a.model)?;
            let opts = SolverOptions::default();
            for (j, col) in theta.column_iter().enumerate() {
                let theta_j: Vec<f64> = col.iter().copied().collect();
                let pred = model.predict(&theta_j, a.t, a.inverse, &opts)?;
                warned |= pred.conjugacy_warning;
                if !pred.preimage.converged {
                    eprintln!("warning: pre-image solver did not converge for column {j}");
                }
                out.set_column(j, &pred.state);
            }
        }
    }
    if warned {
        eprintln!("warning: predicted coefficients carry a non-negligible imaginary part");
    }
    write_matrix(&a.out, &out)
}

fn run_sweep(a: SweepArgs) -> Result<()> {
    let ds = Dataset::load(&a.data)?;
    let test = ds
        .test
        .ok_or_else(|| Error::InvalidInput("dataset has no test set".into()))?;
    let mut cfg = ExperimentConfig::new(a.methods, a.kernels, a.ranks);
    cfg.inverse = a.inverse;
    cfg.rank_tol = a.rank_tol;
    cfg.timing = a.timing;
    let table = sweep(&ds.train, &test, &cfg)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.display().to_string(),
        reason: e.to_string(),
    })?;
    table.write_csv(&a.out.join("results.csv"))?;
    if a.plot {
        let path = a.out.join("results.svg");
        std::fs::write(&path, render_svg(&table)).map_err(|e| Error::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
    }
    print!("{}", summary(&table));
    Ok(())
}

fn run_oracle(a: OracleArgs) -> Result<()> {
    let ds = Dataset::load(&a.data)?;
    let probes = ds.test.as_ref().map_or(&ds.train.x, |t| &t.x);
    let report = oracle_check(&ds.train, probes, a.kernel, a.k, a.rank_tol)?;
    println!("{report}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => run_generate(a),
        Command::Fit(a) => run_fit(a),
        Command::Predict(a) => run_predict(a),
        Command::Sweep(a) => run_sweep(a),
        Command::OracleCheck(a) => run_oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
