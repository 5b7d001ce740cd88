//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use conic_sv::gridapp::{design_objective, greedy_design, realify, realify_matrix, MeasurementModel, RealifiedModel};
use conic_sv::io::{write_cone, write_matrix, write_model, write_vector};
use conic_sv::{
    grid_oracle, member_g, member_h, pg_oracle, polar_g, polar_h, solve, solve_sphere_qp, sphere_qp_scan,
    ConeH64, Sampler, SolveOptions, SpectralDecomposition, StepRule,
};
use conic_sv_cli::record::{parse_csv, CSV_HEADER};
use nalgebra::{Complex, DMatrix, DVector};
use tempfile::TempDir;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn gaussian_cone(s: &mut Sampler, n: usize, m: usize) -> ConeH64 {
    ConeH64::from_inequalities(s.gaussian_matrix(n, m)).unwrap()
}

/// 1. Unconstrained reduction to the classical smallest singular value.
fn unconstrained_reduction() -> Verdict {
    let start = Instant::now();
    let mut s = Sampler::new(101);
    let mut worst = 0.0f64;
    let mut count = 0;
    for n in [10usize, 50, 200] {
        for _ in 0..50 {
            let a = s.gaussian_matrix::<f64>(n, n);
            let res = solve(&a, &ConeH64::whole_space(n), &SolveOptions::default()).unwrap();
            let sv = a.singular_values().min();
            worst = worst.max((res.sigma_min - sv).abs() / (1.0 + sv));
            count += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-8 && secs < 10.0,
        format!("{count} instances, max |err|/(1+sigma) = {worst:.3e} (tol 1e-8), {secs:.2} s (limit 10 s)"),
    )
}

/// 2. Identity on the nonnegative orthant.
fn orthant_identity() -> Verdict {
    let mut worst = 0.0f64;
    for n in [2usize, 10, 100] {
        let res = solve(
            &DMatrix::identity(n, n),
            &ConeH64::nonnegative_orthant(n),
            &SolveOptions::default(),
        )
        .unwrap();
        worst = worst.max((res.sigma_min - 1.0).abs());
    }
    verdict(worst <= 1e-8, format!("max |sigma - 1| = {worst:.3e} (tol 1e-8)"))
}

/// 3. Agreement with the grid oracle at n = 3.
fn grid_agreement() -> Verdict {
    let start = Instant::now();
    let mut s = Sampler::new(303);
    let mut failures = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    for i in 0..100 {
        let m = 1 + i % 3;
        let a = s.gaussian_matrix::<f64>(3, 3);
        let cone = gaussian_cone(&mut s, 3, m);
        let res = solve(&a, &cone, &SolveOptions::default()).unwrap();
        let value = 0.5 * res.sigma_min * res.sigma_min;
        match grid_oracle(&a, &cone, 1e-3) {
            Ok(grid) => {
                let bound = grid.bound.unwrap();
                let excess = (value - grid.value).abs() - (bound + 1e-6);
                worst_excess = worst_excess.max(excess);
                if excess > 0.0 {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        failures == 0 && secs < 120.0,
        format!(
            "100 instances, {failures} outside bound + 1e-6, max(|diff| - bound - 1e-6) = {worst_excess:.3e}, {secs:.1} s (limit 120 s)"
        ),
    )
}

/// 4. Duality sandwich and certification rate at n = 50.
fn duality_sandwich() -> Verdict {
    let mut s = Sampler::new(404);
    let mut sandwich_failures = 0;
    let mut certified = 0;
    let mut bad_certified = 0;
    for seed in 0..100u64 {
        let a = s.gaussian_matrix::<f64>(50, 50);
        let cone = gaussian_cone(&mut s, 50, 10);
        let res = solve(&a, &cone, &SolveOptions::default()).unwrap();
        let value = 0.5 * res.sigma_min * res.sigma_min;
        let pg = pg_oracle(&a, &cone, 10, 1000, seed).unwrap();
        if !(res.theta - 1e-9 <= value && value <= pg.value + 1e-6) {
            sandwich_failures += 1;
        }
        if res.converged {
            if res.gap <= 1e-6 * (1.0 + value) {
                certified += 1;
            } else {
                bad_certified += 1;
            }
        }
    }
    let rate = certified as f64 / 100.0;
    verdict(
        sandwich_failures == 0 && bad_certified == 0 && rate >= 0.95,
        format!(
            "sandwich violations {sandwich_failures}/100; certified with gap <= 1e-6(1+value): {certified}/100 \
             (need >= 95); converged but gap above tol: {bad_certified}"
        ),
    )
}

/// 5. Sphere-QP closed form against the angular scan and the secular equation.
fn sphere_qp_formulas() -> Verdict {
    let mut s = Sampler::new(505);
    let mut scan_failures = 0;
    let mut worst_residual = 0.0f64;
    let mut mu_failures = 0;
    let mut nondegenerate = 0;
    for i in 0..500 {
        let n = 1 + i % 3;
        let mut lambdas: Vec<f64> = (0..n).map(|_| 4.0 * s.uniform()).collect();
        lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut gammas: Vec<f64> = (0..n).map(|_| s.gaussian()).collect();
        if i % 10 == 0 {
            gammas[0] = 0.0;
        }
        let spec = SpectralDecomposition::from_diagonal(&lambdas);
        let sol = solve_sphere_qp(&spec, &DVector::from_vec(gammas.clone())).unwrap();
        let res = if n == 3 { 1e-2 } else { 1e-4 };
        let scan = sphere_qp_scan(&lambdas, &gammas, res);
        let lip = lambdas[n - 1] + gammas.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !(sol.value <= scan + 1e-12 && scan - sol.value <= lip * res) {
            scan_failures += 1;
        }
        if !sol.degenerate {
            nondegenerate += 1;
            let mu = sol.multiplier;
            let f: f64 = lambdas.iter().zip(&gammas).map(|(l, g)| (g / (l - mu)).powi(2)).sum();
            worst_residual = worst_residual.max((f - 1.0).abs());
            if mu >= lambdas[0] || mu.is_nan() {
                mu_failures += 1;
            }
        }
    }
    verdict(
        scan_failures == 0 && worst_residual <= 1e-10 && mu_failures == 0,
        format!(
            "500 draws ({nondegenerate} nondegenerate): {scan_failures} outside scan bound, \
             max |f(mu) - 1| = {worst_residual:.3e} (tol 1e-10), {mu_failures} with mu >= lambda_1"
        ),
    )
}

/// Unit vector of `cone` sampled in the equality null space, then rejected
/// against the inequalities.
fn sample_in_cone(s: &mut Sampler, cone: &ConeH64) -> Option<DVector<f64>> {
    let n = cone.dim();
    let proj = if cone.n_eq() == 0 {
        DMatrix::identity(n, n)
    } else {
        let b = &cone.eq;
        DMatrix::identity(n, n) - b * b.clone().pseudo_inverse(1e-14).unwrap()
    };
    for _ in 0..5000 {
        let x = &proj * s.gaussian_vector::<f64>(n);
        let norm = x.norm();
        if norm < 1e-12 {
            return None;
        }
        let x = x / norm;
        if member_h(cone, &x, 1e-12) {
            return Some(x);
        }
    }
    None
}

/// 6. Half-space and generator forms of the polar agree.
fn polar_cross_representation() -> Verdict {
    let mut s = Sampler::new(606);
    let mut disagreements = 0;
    let mut probes = 0;
    let mut worst_bilinear = f64::NEG_INFINITY;
    let mut pairs = 0;
    for i in 0..50 {
        let r = i % 3;
        let m = 1 + (i / 3) % (5 - r).min(4);
        let cone = ConeH64::new(s.gaussian_matrix(5, m), s.gaussian_matrix(5, r)).unwrap();
        let h = polar_h(&cone).unwrap();
        let g = polar_g(&cone);
        for p in 0..1000 {
            let y = if p % 2 == 0 {
                &g.gens * DVector::from_fn(g.n_gens(), |_, _| s.uniform())
            } else {
                s.gaussian_vector(5)
            };
            probes += 1;
            if member_h(&h, &y, 1e-7) != member_g(&g, &y, 1e-7) {
                disagreements += 1;
            }
        }
        for _ in 0..20 {
            if let Some(x) = sample_in_cone(&mut s, &cone) {
                let y = &g.gens * DVector::from_fn(g.n_gens(), |_, _| s.uniform());
                worst_bilinear = worst_bilinear.max(x.dot(&y));
                pairs += 1;
            }
        }
    }
    verdict(
        disagreements == 0 && worst_bilinear <= 1e-9 && pairs > 0,
        format!(
            "{probes} probes, {disagreements} disagreements at tol 1e-7; {pairs} pairs, max <x,y> = {worst_bilinear:.3e} (tol 1e-9)"
        ),
    )
}

/// 7. Secant equation after every applied inverse-BFGS update.
fn bfgs_secant() -> Verdict {
    let mut s = Sampler::new(707);
    let a = s.gaussian_matrix::<f64>(20, 20);
    let cone = gaussian_cone(&mut s, 20, 10);
    let opts = SolveOptions {
        step_rule: StepRule::Literal,
        record_trace: true,
        max_iter: 200,
        ..Default::default()
    };
    let res = solve(&a, &cone, &opts).unwrap();
    let applied: Vec<_> = res.bfgs_log.iter().filter(|r| r.applied).collect();
    let worst = applied
        .iter()
        .map(|r| (&r.h_inv * &r.y - &r.s).norm() / (1.0 + r.s.norm()))
        .fold(0.0f64, f64::max);
    verdict(
        !applied.is_empty() && worst <= 1e-10,
        format!(
            "{} applied updates ({} logged), max |H y - s|/(1+|s|) = {worst:.3e} (tol 1e-10)",
            applied.len(),
            res.bfgs_log.len()
        ),
    )
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_conic-sv"))
}

/// 8. Benchmark protocol at desk scale.
fn bench_protocol(dir: &Path) -> Verdict {
    let csv = dir.join("bench.csv");
    let out = bin()
        .args(["bench", "--n", "500,1000,2000", "--m", "100", "--trials", "5", "--out"])
        .arg(&csv)
        .output()
        .unwrap();
    let code = out.status.code().unwrap_or(-1);
    if code == 1 {
        return verdict(false, format!("bench failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    let text = fs::read_to_string(&csv).unwrap_or_default();
    let rows = match parse_csv(&text) {
        Ok(rows) => rows,
        Err(e) => return verdict(false, format!("invalid CSV: {e}")),
    };
    let header_ok = text.lines().next() == Some(CSV_HEADER);
    let shape_ok = rows.len() == 15
        && [500usize, 1000, 2000]
            .iter()
            .all(|&n| rows.iter().filter(|r| r.n == n && r.m == 100).count() == 5);
    let summaries = String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter(|l| l.starts_with("n = "))
        .count();
    let converged = rows.iter().filter(|r| r.converged).count();
    let slowest = rows
        .iter()
        .filter(|r| r.n == 2000)
        .map(|r| r.wall_time_seconds)
        .fold(0.0f64, f64::max);
    verdict(
        header_ok && shape_ok && summaries == 3 && converged == rows.len() && slowest < 60.0,
        format!(
            "CSV valid: {}, {} rows, {summaries} dispersion summaries, converged {converged}/{}, \
             slowest n = 2000 trial {slowest:.1} s (limit 60 s)",
            header_ok && shape_ok,
            rows.len(),
            rows.len()
        ),
    )
}

fn random_hermitian(s: &mut Sampler, n: usize) -> DMatrix<Complex<f64>> {
    let g = DMatrix::from_fn(n, n, |_, _| Complex::new(s.gaussian(), s.gaussian()));
    (&g + g.adjoint()) * Complex::new(0.5, 0.0)
}

fn random_design_instance(s: &mut Sampler) -> (MeasurementModel<f64>, RealifiedModel<f64>, DVector<f64>) {
    let model = MeasurementModel::from_operators((0..6).map(|_| random_hermitian(s, 2)).collect());
    let r = realify(&model).unwrap();
    let v = DVector::from_fn(2, |_, _| Complex::new(s.gaussian(), s.gaussian()));
    let w0 = r.t_map.apply(&realify_matrix(&(&v * v.adjoint())));
    (model, r, w0)
}

/// 9. Monotonicity of the design objective and greedy saturation.
fn design_monotonicity() -> Verdict {
    let mut s = Sampler::new(909);
    let mut pairs = 0;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let mut greedy_failures = 0;
    for _ in 0..50 {
        let (_, r, w0) = random_design_instance(&mut s);
        for _ in 0..4 {
            let lo: Vec<f64> = (0..6).map(|_| if s.uniform() < 0.5 { s.uniform() } else { 0.0 }).collect();
            let hi: Vec<f64> = lo
                .iter()
                .map(|&v| if s.uniform() < 0.5 { v + (1.0 - v) * s.uniform() } else { v })
                .collect();
            let a = design_objective(&r, &lo, &w0).unwrap().value;
            let b = design_objective(&r, &hi, &w0).unwrap().value;
            pairs += 1;
            worst = worst.max(a - b);
            if a > b + 1e-8 {
                violations += 1;
            }
        }
        if greedy_design(&r, &w0, 6).unwrap() != vec![1.0; 6] {
            greedy_failures += 1;
        }
    }
    verdict(
        violations == 0 && greedy_failures == 0,
        format!(
            "{pairs} pairs, {violations} violations, max f(lo) - f(hi) = {worst:.3e} (tol 1e-8); \
             greedy budget = L not all-ones on {greedy_failures}/50"
        ),
    )
}

/// 10. Repeated seeded CLI runs are byte-identical.
fn determinism(dir: &Path) -> Verdict {
    let mut s = Sampler::new(42);
    let a = s.gaussian_matrix::<f64>(3, 3);
    let cone = gaussian_cone(&mut s, 3, 2);
    let ap = dir.join("a.txt");
    let kp = dir.join("k.txt");
    fs::write(&ap, write_matrix(&a)).unwrap();
    fs::write(&kp, write_cone(&cone)).unwrap();
    let (model, _, w0) = random_design_instance(&mut s);
    let mp = dir.join("model.txt");
    let wp = dir.join("w0.txt");
    fs::write(&mp, write_model(&model)).unwrap();
    fs::write(&wp, write_vector(&w0)).unwrap();
    let (ap, kp, mp, wp) = (
        ap.to_str().unwrap(),
        kp.to_str().unwrap(),
        mp.to_str().unwrap(),
        wp.to_str().unwrap(),
    );
    let runs: Vec<Vec<&str>> = vec![
        vec!["sigma", ap, kp, "--json", "--no-timing"],
        vec!["sigma", ap, kp, "--no-timing"],
        vec!["bench", "--n", "30,60", "--m", "20", "--trials", "3", "--seed", "9", "--no-timing"],
        vec!["oracle", ap, kp, "--method", "pg", "--restarts", "5", "--seed", "3"],
        vec!["oracle", ap, kp, "--resolution", "1e-2"],
        vec!["polar", kp],
        vec!["design", mp, wp, "--greedy", "--budget", "3"],
    ];
    let mut mismatched = Vec::new();
    for args in &runs {
        let first = bin().args(args).output().unwrap();
        let second = bin().args(args).output().unwrap();
        if first.stdout != second.stdout || first.stderr != second.stderr || first.status != second.status {
            mismatched.push(args[0]);
        }
    }
    verdict(
        mismatched.is_empty(),
        format!("{} commands run twice, mismatched: {:?}", runs.len(), mismatched),
    )
}

fn main() -> ExitCode {
    let dir = TempDir::new().unwrap();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict>)> = vec![
        ("1 unconstrained reduction", Box::new(unconstrained_reduction)),
        ("2 orthant identity", Box::new(orthant_identity)),
        ("3 grid-oracle agreement", Box::new(grid_agreement)),
        ("4 duality sandwich", Box::new(duality_sandwich)),
        ("5 sphere-QP formulas", Box::new(sphere_qp_formulas)),
        ("6 polar cross-representation", Box::new(polar_cross_representation)),
        ("7 BFGS secant", Box::new(bfgs_secant)),
        ("8 benchmark protocol", Box::new(|| bench_protocol(dir.path()))),
        ("9 design monotonicity", Box::new(design_monotonicity)),
        ("10 determinism", Box::new(|| determinism(dir.path()))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!("{} criterion {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
