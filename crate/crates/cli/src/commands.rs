//! Subcommand implementations. Each returns the text for stdout and the
//! process exit code; input errors surface as `Err` and map to exit 1.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use conic_sv::gridapp::{
    default_kernel_tol, greedy_design, objective_on_cone, realify, tangent_cone, DesignValue,
};
use conic_sv::io::{parse_cone, parse_matrix, parse_model, parse_vector, write_cone, write_generators};
use conic_sv::{grid_oracle, pg_oracle, polar_g, polar_h, solve, ConeH64, OracleMethod, Sampler, SolveOptions};
use nalgebra::{DMatrix, DVector};

use crate::record::{dispersion, format_f64, RunRecord, CSV_HEADER};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_UNCERTIFIED: i32 = 2;

/// Default cap on the benchmark dimension.
pub const DEFAULT_MAX_N: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

impl Output {
    fn ok(stdout: String) -> Self {
        Self {
            stdout,
            stderr: String::new(),
            code: EXIT_CONVERGED,
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(&read(path)?).with_context(|| format!("in {}", path.display()))
}

pub fn load_cone(path: &Path, dim: Option<usize>) -> Result<ConeH64> {
    parse_cone(&read(path)?, dim).with_context(|| format!("in {}", path.display()))
}

fn load_vector(path: &Path) -> Result<DVector<f64>> {
    parse_vector(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn file_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().replace(',', "_"))
        .unwrap_or_else(|| "instance".into())
}

#[derive(Debug, Clone)]
pub struct SigmaArgs {
    pub matrix: PathBuf,
    pub cone: PathBuf,
    pub eps: f64,
    pub max_iter: usize,
    pub json: bool,
    pub no_timing: bool,
}

pub fn cmd_sigma(args: &SigmaArgs) -> Result<Output> {
    if args.eps <= 0.0 || args.eps.is_nan() {
        bail!("--eps must be positive");
    }
    let a = load_matrix(&args.matrix)?;
    let cone = load_cone(&args.cone, Some(a.ncols()))?;
    let opts = SolveOptions {
        eps: args.eps,
        max_iter: args.max_iter,
        ..Default::default()
    };
    let res = solve(&a, &cone, &opts)?;
    let record = RunRecord {
        id: file_id(&args.matrix),
        n: a.ncols(),
        d: a.nrows(),
        m: cone.n_ineq(),
        seed: None,
        sigma_min: res.sigma_min,
        gap: res.gap,
        iters: res.iters,
        converged: res.converged,
        wall_time_seconds: if args.no_timing { 0.0 } else { res.wall_time },
    };
    let stdout = if args.json {
        format!("{}\n", serde_json::to_string(&record)?)
    } else {
        format!(
            "sigma_min = {}\ngap = {}\niters = {}\nconverged = {}\nwall_time = {}\n",
            format_f64(record.sigma_min),
            format_f64(record.gap),
            record.iters,
            record.converged,
            format_f64(record.wall_time_seconds)
        )
    };
    Ok(Output {
        stdout,
        stderr: String::new(),
        code: if res.converged { EXIT_CONVERGED } else { EXIT_UNCERTIFIED },
    })
}

#[derive(Debug, Clone)]
pub struct BenchArgs {
    pub n: Vec<usize>,
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub max_n: usize,
    pub no_timing: bool,
}

/// Seed of trial `trial` at dimension `n`.
pub fn instance_seed(base: u64, n: usize, trial: usize) -> u64 {
    let mut s = Sampler::new(base ^ ((n as u64) << 32) ^ trial as u64);
    s.next_u64()
}

/// `A` (`n x n`) then the inequality normals (`n x m`), both standard
/// Gaussian and filled row by row.
pub fn bench_instance(seed: u64, n: usize, m: usize) -> (DMatrix<f64>, ConeH64) {
    let mut s = Sampler::new(seed);
    let a = s.gaussian_matrix(n, n);
    let c = s.gaussian_matrix(n, m);
    (a, ConeH64::from_inequalities(c).expect("finite normals"))
}

pub fn cmd_bench(args: &BenchArgs) -> Result<Output> {
    if args.n.is_empty() {
        bail!("--n needs at least one dimension");
    }
    if let Some(&bad) = args.n.iter().find(|&&n| n == 0) {
        bail!("dimension n = {bad} must be positive");
    }
    if let Some(&big) = args.n.iter().find(|&&n| n > args.max_n) {
        bail!(
            "n = {big} exceeds the desk-scale cap of {}; raise --max-n to run larger instances",
            args.max_n
        );
    }
    if args.trials == 0 {
        bail!("--trials must be positive");
    }
    let mut csv = format!("{CSV_HEADER}\n");
    let mut summary = String::new();
    for &n in &args.n {
        let mut times = Vec::with_capacity(args.trials);
        for trial in 0..args.trials {
            let seed = instance_seed(args.seed, n, trial);
            let (a, cone) = bench_instance(seed, n, args.m);
            let res = solve(&a, &cone, &SolveOptions::default())?;
            let wall = if args.no_timing { 0.0 } else { res.wall_time };
            times.push(wall);
            let rec = RunRecord {
                id: format!("n{n}-t{trial}"),
                n,
                d: n,
                m: args.m,
                seed: Some(seed),
                sigma_min: res.sigma_min,
                gap: res.gap,
                iters: res.iters,
                converged: res.converged,
                wall_time_seconds: wall,
            };
            csv.push_str(&rec.to_csv_row());
            csv.push('\n');
        }
        let d = dispersion(&times).expect("at least one trial");
        let _ = writeln!(
            summary,
            "n = {n}: trials = {}, wall time mean = {}, median = {}, min = {}, max = {}",
            args.trials,
            format_f64(d.mean),
            format_f64(d.median),
            format_f64(d.min),
            format_f64(d.max)
        );
    }
    match &args.out {
        Some(path) => {
            fs::write(path, &csv).with_context(|| format!("cannot write {}", path.display()))?;
            Ok(Output::ok(summary))
        }
        None => Ok(Output {
            stdout: csv,
            stderr: summary,
            code: EXIT_CONVERGED,
        }),
    }
}

pub fn cmd_polar(cone_path: &Path) -> Result<Output> {
    let cone = load_cone(cone_path, None)?;
    let h = polar_h(&cone)?;
    let g = polar_g(&cone);
    let mut out = String::new();
    out.push_str("# polar cone, half-space form\n");
    out.push_str(&write_cone(&h));
    out.push_str("# polar cone, generators\n");
    out.push_str(&write_generators(&g));
    if g.n_gens() == 0 {
        out.push_str("# polar is {0}\n");
    }
    Ok(Output::ok(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    Grid,
    Pg,
}

#[derive(Debug, Clone)]
pub struct OracleArgs {
    pub matrix: PathBuf,
    pub cone: PathBuf,
    pub method: OracleKind,
    pub resolution: f64,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

pub fn cmd_oracle(args: &OracleArgs) -> Result<Output> {
    let a = load_matrix(&args.matrix)?;
    let cone = load_cone(&args.cone, Some(a.ncols()))?;
    let r = match args.method {
        OracleKind::Grid => grid_oracle(&a, &cone, args.resolution)?,
        OracleKind::Pg => pg_oracle(&a, &cone, args.restarts, args.max_iter, args.seed)?,
    };
    let mut out = String::new();
    match r.method {
        OracleMethod::Grid { resolution } => {
            let _ = writeln!(out, "method = grid\nresolution = {}", format_f64(resolution));
        }
        OracleMethod::ProjectedGradient {
            restarts,
            max_iter,
            seed,
        } => {
            let _ = writeln!(
                out,
                "method = projected_gradient\nrestarts = {restarts}\nmax_iter = {max_iter}\nseed = {seed}"
            );
        }
    }
    let _ = writeln!(out, "value = {}", format_f64(r.value));
    let _ = writeln!(out, "sigma = {}", format_f64((2.0 * r.value).max(0.0).sqrt()));
    if let Some(b) = r.bound {
        let _ = writeln!(out, "bound = {}", format_f64(b));
    }
    let x: Vec<String> = r.x_best.iter().map(|&v| format_f64(v)).collect();
    let _ = writeln!(out, "x_best = {}", x.join(" "));
    Ok(Output::ok(out))
}

#[derive(Debug, Clone)]
pub enum DesignMode {
    Greedy { budget: usize },
    Eval { delta: PathBuf },
}

#[derive(Debug, Clone)]
pub struct DesignArgs {
    pub model: PathBuf,
    pub w0: PathBuf,
    pub mode: DesignMode,
}

pub fn cmd_design(args: &DesignArgs) -> Result<Output> {
    let model = parse_model::<f64>(&read(&args.model)?).with_context(|| format!("in {}", args.model.display()))?;
    let realified = realify(&model)?;
    let w0 = load_vector(&args.w0)?;
    if w0.len() != realified.vec_dim() {
        bail!("w0 has {} entries, expected {}", w0.len(), realified.vec_dim());
    }
    let delta: Vec<f64> = match &args.mode {
        DesignMode::Greedy { budget } => greedy_design(&realified, &w0, *budget)?,
        DesignMode::Eval { delta } => load_vector(delta)?.iter().copied().collect(),
    };
    let w = realified.t_map.inverse(&w0);
    let cone = tangent_cone(&realified, &w0, default_kernel_tol(&w))?;
    let DesignValue { value, certified } = objective_on_cone(&realified, &delta, &cone, &SolveOptions::default())?;
    let d: Vec<String> = delta.iter().map(|v| v.to_string()).collect();
    let stdout = format!(
        "objective = {}\ncertified = {certified}\ndelta = {}\n",
        format_f64(value),
        d.join(" ")
    );
    Ok(Output::ok(stdout))
}
