//! Quasi-Newton ascent on the dual function over the polar cone, followed
//! by primal recovery and a duality-gap certificate.
//!
//! The dual iteration starts at `u = 0` with `h_inv = I`. Each step takes a
//! supergradient `g` (a sphere minimizer at `u`), solves the centered model
//! `max_{u in K°} <g, u - u_l> - 1/(2t) <u - u_l, h_inv (u - u_l)>`
//! through the generators of `K°`, and halves `t` until `theta` does not
//! decrease. The inverse BFGS update is fed `y = g_l - g_{l+1}` so that the
//! curvature condition refers to `-theta`.
//!
//! `theta(u) <= lambda_1 / 2 = theta(0)` for every `u` (average the
//! Lagrangian over `±phi_1`), so the dual bound is only tight when the
//! bottom eigenspace of `A'A` meets `K`. Results that the gap cannot
//! certify are returned with `converged = false` and a feasible primal
//! point found by [`crate::primal`].

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::cones::{polar_g, ConeG, ConeH};
use crate::error::{Error, Result};
use crate::nnqp::solve_nnqp;
use crate::primal::{
    face_enumeration, normalized_violation, projected_gradient, refine_active_set, sphere_feasibility, CachedProjector,
    PrimalPoint,
};
use crate::sphere_qp::{decompose_gram, dual_value, solution_representative, solve_sphere_qp, SpectralDecomposition};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct DualState<T: Scalar> {
    pub u: DVector<T>,
    /// Generator coefficients of `u` (warm start for the step QP).
    pub coeffs: DVector<T>,
    pub h_inv: DMatrix<T>,
    pub theta: T,
    pub g: DVector<T>,
    pub iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// Centered model with backtracking; `theta` never decreases.
    Centered,
    /// The uncentered subproblem `argmin_{u in K°} <g, u> + 1/2 <u, h_inv u>`
    /// taken as is, without backtracking.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// `|u_{l+1} - u_l| < eps`.
    SmallStep,
    /// Neither the quasi-Newton step nor the supergradient fallback
    /// increased `theta`.
    NoAscent,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimalSource {
    DualRecovery,
    FaceEnumeration,
    /// Projected gradient followed by active-set refinement.
    ProjectedGradient,
}

#[derive(Debug, Clone)]
pub struct SolveOptions<T: Scalar> {
    pub eps: T,
    pub max_iter: usize,
    pub curvature_tol: T,
    pub max_halvings: usize,
    pub gap_tol: T,
    pub comp_tol: T,
    pub step_rule: StepRule,
    pub multiplicity_tol: Option<T>,
    /// Exact face enumeration is used when the cone has at most this many
    /// inequalities...
    pub face_enum_max_ineq: usize,
    /// ...and the dimension is at most this.
    pub face_enum_max_dim: usize,
    /// Iteration cap of the local search that seeds the active-set
    /// refinement.
    pub primal_max_iter: usize,
    pub record_trace: bool,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            eps: T::lit(1e-4),
            max_iter: 5000,
            curvature_tol: T::lit(1e-10),
            max_halvings: 30,
            gap_tol: T::lit(1e-6),
            comp_tol: T::lit(1e-6),
            step_rule: StepRule::Centered,
            multiplicity_tol: None,
            face_enum_max_ineq: 12,
            face_enum_max_dim: 400,
            primal_max_iter: 500,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry<T: Scalar> {
    pub iter: usize,
    pub theta: T,
    pub step_norm: T,
    pub step_scale: T,
    pub fallback: bool,
}

/// One inverse-BFGS update as applied by the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct BfgsRecord<T: Scalar> {
    pub iter: usize,
    pub s: DVector<T>,
    pub y: DVector<T>,
    pub applied: bool,
    pub h_inv: DMatrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSvResult<T: Scalar> {
    pub sigma_min: T,
    pub x_star: DVector<T>,
    pub u_star: DVector<T>,
    /// `1/2 |A x_star|^2 - theta(u_star)`.
    pub gap: T,
    pub iters: usize,
    /// Certified: the gap and complementarity are within tolerance at a
    /// feasible `x_star`.
    pub converged: bool,
    pub wall_time: f64,
    pub theta: T,
    pub primal_value: T,
    pub complementarity: T,
    pub stop: StopReason,
    pub primal_source: PrimalSource,
    pub trace: Vec<TraceEntry<T>>,
    pub bfgs_log: Vec<BfgsRecord<T>>,
}

/// A sphere minimizer at `u`, in original coordinates. `hint` (original
/// coordinates) chooses the point on the free sphere in the degenerate case.
pub fn supergradient<T: Scalar>(spec: &SpectralDecomposition<T>, u: &DVector<T>, hint: &DVector<T>) -> Result<DVector<T>> {
    let sol = solve_sphere_qp(spec, u)?;
    let c = solution_representative(&sol, &spec.to_basis(hint));
    Ok(spec.from_basis(&c))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QnStep<T: Scalar> {
    pub u_next: DVector<T>,
    pub coeffs: DVector<T>,
    /// False when the step QP hit its iteration cap.
    pub converged: bool,
}

/// Centered quasi-Newton step: the maximizer over `K°` of
/// `<g, u - u_l> - 1/(2 t) <u - u_l, h_inv (u - u_l)>`.
pub fn qn_step<T: Scalar>(state: &DualState<T>, polar: &ConeG<T>, step_scale: T) -> Result<QnStep<T>> {
    StepModel::new(state, polar).solve(step_scale, &state.coeffs)
}

/// Generator-space terms of the centered model that do not depend on `t`:
/// `V' h_inv V`, `V' h_inv u_l` and `V' g`.
struct StepModel<'a, T: Scalar> {
    gens: &'a DMatrix<T>,
    vhv: DMatrix<T>,
    vhu: DVector<T>,
    vg: DVector<T>,
}

impl<'a, T: Scalar> StepModel<'a, T> {
    fn new(state: &DualState<T>, polar: &'a ConeG<T>) -> Self {
        let v = &polar.gens;
        let hv = &state.h_inv * v;
        Self {
            gens: v,
            vhv: v.tr_mul(&hv),
            vhu: hv.tr_mul(&state.u),
            vg: v.tr_mul(&state.g),
        }
    }

    fn solve(&self, step_scale: T, warm: &DVector<T>) -> Result<QnStep<T>> {
        if step_scale <= T::zero() {
            return Err(Error::InvalidInput("step scale must be positive".into()));
        }
        let q = &self.vhv / step_scale;
        let b = &self.vhu / step_scale + &self.vg;
        Ok(step_qp(self.gens, &q, &b, warm))
    }
}

/// Uncentered step `argmin_{u in K°} <g, u> + 1/2 <u, h_inv u>`.
pub fn literal_step<T: Scalar>(state: &DualState<T>, polar: &ConeG<T>) -> QnStep<T> {
    let v = &polar.gens;
    let q = v.tr_mul(&(&state.h_inv * v));
    let b = -v.tr_mul(&state.g);
    step_qp(v, &q, &b, &state.coeffs)
}

fn step_qp<T: Scalar>(v: &DMatrix<T>, q: &DMatrix<T>, b: &DVector<T>, warm: &DVector<T>) -> QnStep<T> {
    let k = v.ncols();
    if k == 0 {
        return QnStep {
            u_next: DVector::zeros(v.nrows()),
            coeffs: DVector::zeros(0),
            converged: true,
        };
    }
    let tol = T::lit(1e-8) * (T::one() + b.amax());
    let warm = (warm.len() == k).then_some(warm);
    let out = solve_nnqp(q, b, warm, tol, 50 * k + 200);
    QnStep {
        u_next: v * &out.solution,
        coeffs: out.solution,
        converged: out.converged,
    }
}

const MIN_H_EIG: f64 = 1e-12;

/// Whether `h - MIN_H_EIG (1 + |h|_max) I` is positive definite.
fn keeps_definite<T: Scalar>(h: &DMatrix<T>) -> bool {
    let n = h.nrows();
    let shift = T::lit(MIN_H_EIG) * (T::one() + h.amax());
    (h - DMatrix::<T>::identity(n, n) * shift).cholesky().is_some()
}

/// Inverse BFGS update `(I - s y'/y's) H (I - y s'/y's) + s s'/y's`, skipped
/// when `y's <= curvature_tol |y| |s|`. Returns the matrix and whether the
/// update was applied.
pub fn bfgs_update_inverse<T: Scalar>(
    h_inv: &DMatrix<T>,
    s: &DVector<T>,
    y: &DVector<T>,
    curvature_tol: T,
) -> (DMatrix<T>, bool) {
    let ys = y.dot(s);
    if ys <= curvature_tol * y.norm() * s.norm() || ys <= T::zero() {
        return (h_inv.clone(), false);
    }
    let rho = T::one() / ys;
    let hy = h_inv * y;
    let yhy = y.dot(&hy);
    let mut out = h_inv.clone();
    out.ger(-rho, s, &hy, T::one());
    out.ger(-rho, &hy, s, T::one());
    out.ger(rho * rho * yhy + rho, s, s, T::one());
    let sym = (&out + out.transpose()) * T::lit(0.5);
    (sym, true)
}

/// `1/2 |A x|^2 - theta(u)` evaluated from the decomposition.
pub fn duality_gap<T: Scalar>(spec: &SpectralDecomposition<T>, x_star: &DVector<T>, u_star: &DVector<T>) -> Result<T> {
    Ok(spec.quadratic(x_star) - dual_value(spec, u_star)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredPrimal<T: Scalar> {
    pub x: DVector<T>,
    /// Normalized constraint violation of `x`.
    pub violation: T,
}

/// Picks the most feasible point of the minimizer set at `u_star`.
///
/// Nondegenerate: the unique minimizer, negated when only `-x` is feasible
/// and `<u, x> = 0` makes both minimizers. Degenerate: the free coordinates
/// on the bottom eigenspace are optimized to minimize the violation.
pub fn recover_primal<T: Scalar>(
    spec: &SpectralDecomposition<T>,
    u_star: &DVector<T>,
    cone: &ConeH<T>,
    hint: &DVector<T>,
) -> Result<RecoveredPrimal<T>> {
    let sol = solve_sphere_qp(spec, u_star)?;
    let x = if !sol.degenerate {
        let x = spec.from_basis(&sol.coeffs);
        let flip_ok = u_star.dot(&x).abs() <= T::lit(1e-12) * (T::one() + u_star.norm());
        let neg = -&x;
        if flip_ok && normalized_violation(cone, &neg) < normalized_violation(cone, &x) {
            neg
        } else {
            x
        }
    } else if sol.free_radius <= T::zero() || sol.free_indices.is_empty() {
        spec.from_basis(&sol.coeffs)
    } else {
        let offset = spec.from_basis(&sol.coeffs);
        let free = &sol.free_indices;
        let basis = DMatrix::from_fn(spec.dim(), free.len(), |r, c| spec.phi[(r, free[c])]);
        let hint_c = basis.tr_mul(hint);
        let p = free.len();
        let mut starts = Vec::new();
        if hint_c.norm() > T::zero() {
            starts.push(hint_c.clone());
        }
        for i in 0..p.min(8) {
            let mut e = DVector::zeros(p);
            e[i] = T::one();
            starts.push(e.clone());
            starts.push(-e);
        }
        sphere_feasibility(cone, &offset, &basis, sol.free_radius, &starts, 300)
    };
    let violation = normalized_violation(cone, &x);
    Ok(RecoveredPrimal { x, violation })
}

fn feasibility_tol<T: Scalar>() -> T {
    T::lit(1e-9)
}

/// Computes the smallest conic singular value of `a` over `cone`.
pub fn solve<T: Scalar>(a: &DMatrix<T>, cone: &ConeH<T>, opts: &SolveOptions<T>) -> Result<ConicSvResult<T>> {
    let started = Instant::now();
    let n = a.ncols();
    if cone.dim() != n {
        return Err(Error::Dimension {
            context: "cone dimension",
            expected: n,
            got: cone.dim(),
        });
    }
    let spec = decompose_gram(a, opts.multiplicity_tol)?;
    let polar = polar_g(cone);
    let dual = run_dual(&spec, &polar, opts)?;
    let theta = dual.state.theta;
    let u_star = dual.state.u.clone();

    let recovered = recover_primal(&spec, &u_star, cone, &dual.hint)?;
    let mut x = recovered.x;
    let mut source = PrimalSource::DualRecovery;
    let mut feasible = recovered.violation <= feasibility_tol();
    let mut value = primal_value(a, &x);
    if !(feasible && certified(value, theta, &x, &u_star, opts)) {
        let incumbent = feasible.then(|| PrimalPoint {
            x: x.clone(),
            value,
        });
        let found = if cone.n_ineq() <= opts.face_enum_max_ineq && n <= opts.face_enum_max_dim {
            face_enumeration(&a.tr_mul(a), cone, feasibility_tol(), incumbent.clone())
                .map(|p| (p, PrimalSource::FaceEnumeration))
                .ok_or(Error::EmptyCone)?
        } else {
            let mut seeds = vec![x.clone(), -&x];
            seeds.push(spec.phi.column(0).into_owned());
            seeds.push(-spec.phi.column(0));
            let mut p = projected_gradient(&spec, &polar, &seeds, opts.primal_max_iter)?;
            if let Some(r) = refine_active_set(&spec, cone, &p.x, feasibility_tol()) {
                if r.value < p.value {
                    p = r;
                }
            }
            (p, PrimalSource::ProjectedGradient)
        };
        let (p, src) = found;
        let better = match &incumbent {
            Some(inc) => p.value < inc.value,
            None => true,
        };
        if better {
            x = p.x;
            source = src;
            feasible = normalized_violation(cone, &x) <= T::lit(1e-7);
            value = primal_value(a, &x);
        }
    }
    let gap = value - theta;
    let complementarity = u_star.dot(&x).abs();
    let converged = feasible && dual.stop != StopReason::MaxIter && certified(value, theta, &x, &u_star, opts);
    Ok(ConicSvResult {
        sigma_min: (T::lit(2.0) * value.max(T::zero())).sqrt(),
        x_star: x,
        u_star,
        gap,
        iters: dual.state.iter,
        converged,
        wall_time: started.elapsed().as_secs_f64(),
        theta,
        primal_value: value,
        complementarity,
        stop: dual.stop,
        primal_source: source,
        trace: dual.trace,
        bfgs_log: dual.bfgs_log,
    })
}

fn primal_value<T: Scalar>(a: &DMatrix<T>, x: &DVector<T>) -> T {
    T::lit(0.5) * (a * x).norm_squared()
}

fn certified<T: Scalar>(value: T, theta: T, x: &DVector<T>, u: &DVector<T>, opts: &SolveOptions<T>) -> bool {
    value - theta <= opts.gap_tol * (T::one() + value.abs())
        && u.dot(x).abs() <= opts.comp_tol * (T::one() + u.norm())
}

struct DualRun<T: Scalar> {
    state: DualState<T>,
    stop: StopReason,
    hint: DVector<T>,
    trace: Vec<TraceEntry<T>>,
    bfgs_log: Vec<BfgsRecord<T>>,
}

/// The dual iteration alone; `solve` wraps it with primal recovery.
fn run_dual<T: Scalar>(spec: &SpectralDecomposition<T>, polar: &ConeG<T>, opts: &SolveOptions<T>) -> Result<DualRun<T>> {
    let n = spec.dim();
    let k = polar.n_gens();
    let mut hint = DVector::from_element(n, T::one());
    let u = DVector::zeros(n);
    let theta = dual_value(spec, &u)?;
    let g = supergradient(spec, &u, &hint)?;
    let mut state = DualState {
        u,
        coeffs: DVector::zeros(k),
        h_inv: DMatrix::identity(n, n),
        theta,
        g,
        iter: 0,
    };
    let mut trace = Vec::new();
    let mut bfgs_log = Vec::new();
    let mut best = (state.theta, state.u.clone());
    if k == 0 {
        return Ok(DualRun {
            state,
            stop: StopReason::SmallStep,
            hint,
            trace,
            bfgs_log,
        });
    }
    let mut sg_projector = CachedProjector::new(polar);
    let mut stop = StopReason::MaxIter;
    while state.iter < opts.max_iter {
        state.iter += 1;
        let l = state.iter;
        let mut chosen: Option<(DVector<T>, DVector<T>, T, T, bool)> = None;
        match opts.step_rule {
            StepRule::Centered => {
                let mut t = T::one();
                let model = StepModel::new(&state, polar);
                for _ in 0..=opts.max_halvings {
                    let step = model.solve(t, &state.coeffs)?;
                    if !step.converged {
                        break;
                    }
                    let th = dual_value(spec, &step.u_next)?;
                    if th >= state.theta - T::lit(1e-12) {
                        chosen = Some((step.u_next, step.coeffs, th, t, false));
                        break;
                    }
                    t *= T::lit(0.5);
                }
                if chosen.is_none() {
                    let inv_l = T::one() / T::from_usize(l).unwrap();
                    let trial = sg_projector.project(&(&state.u + &state.g * inv_l));
                    let th = dual_value(spec, &trial)?;
                    if th >= state.theta - T::lit(1e-12) {
                        let coeffs = state.coeffs.clone();
                        chosen = Some((trial, coeffs, th, inv_l, true));
                    }
                }
            }
            StepRule::Literal => {
                let step = literal_step(&state, polar);
                let th = dual_value(spec, &step.u_next)?;
                chosen = Some((step.u_next, step.coeffs, th, T::one(), false));
            }
        }
        let Some((u_next, coeffs, th, scale, fallback)) = chosen else {
            stop = StopReason::NoAscent;
            if opts.record_trace {
                trace.push(TraceEntry {
                    iter: l,
                    theta: state.theta,
                    step_norm: T::zero(),
                    step_scale: T::zero(),
                    fallback: true,
                });
            }
            break;
        };
        let s = &u_next - &state.u;
        let step_norm = s.norm();
        let dir = &state.h_inv * &s;
        if dir.norm() > T::zero() {
            hint = dir;
        }
        let g_next = supergradient(spec, &u_next, &hint)?;
        let y = &state.g - &g_next;
        let (mut h_next, mut applied) = bfgs_update_inverse(&state.h_inv, &s, &y, opts.curvature_tol);
        if applied && !keeps_definite(&h_next) {
            h_next = state.h_inv.clone();
            applied = false;
        }
        if cfg!(debug_assertions) && n <= 100 {
            let min_eig = h_next.clone().symmetric_eigen().eigenvalues.min();
            debug_assert!(min_eig >= T::lit(MIN_H_EIG), "h_inv lost definiteness: {min_eig}");
        }
        if opts.record_trace {
            trace.push(TraceEntry {
                iter: l,
                theta: th,
                step_norm,
                step_scale: scale,
                fallback,
            });
            bfgs_log.push(BfgsRecord {
                iter: l,
                s: s.clone(),
                y: y.clone(),
                applied,
                h_inv: h_next.clone(),
            });
        }
        state.u = u_next;
        state.coeffs = coeffs;
        state.theta = th;
        state.g = g_next;
        state.h_inv = h_next;
        if th > best.0 {
            best = (th, state.u.clone());
        }
        if step_norm < opts.eps {
            stop = StopReason::SmallStep;
            break;
        }
    }
    if opts.step_rule == StepRule::Literal && best.0 > state.theta {
        state.theta = best.0;
        state.u = best.1;
        state.g = supergradient(spec, &state.u, &hint)?;
    }
    Ok(DualRun {
        state,
        stop,
        hint,
        trace,
        bfgs_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::member_h;
    use crate::rng::Sampler;
    use approx::assert_abs_diff_eq;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn state(u: DVector<f64>, g: DVector<f64>, h_inv: DMatrix<f64>, k: usize) -> DualState<f64> {
        DualState {
            u,
            coeffs: DVector::zeros(k),
            h_inv,
            theta: 0.0,
            g,
            iter: 0,
        }
    }

    #[test]
    fn supergradient_unique_case() {
        let a = DMatrix::from_diagonal(&dv(&[1.0, 2.0]));
        let spec = decompose_gram(&a, None).unwrap();
        let u = dv(&[0.3, -0.7]);
        let sol = solve_sphere_qp(&spec, &u).unwrap();
        assert!(!sol.degenerate);
        let g = supergradient(&spec, &u, &dv(&[1.0, 1.0])).unwrap();
        assert_abs_diff_eq!(g, spec.from_basis(&sol.coeffs), epsilon = 1e-15);
    }

    #[test]
    fn supergradient_at_zero_follows_hint() {
        let a = DMatrix::from_diagonal(&dv(&[1.0, 2.0]));
        let spec = decompose_gram(&a, None).unwrap();
        let u = dv(&[0.0, 0.0]);
        assert_abs_diff_eq!(supergradient(&spec, &u, &dv(&[1.0, 0.2])).unwrap(), dv(&[1.0, 0.0]));
        assert_abs_diff_eq!(supergradient(&spec, &u, &dv(&[-1.0, 0.2])).unwrap(), dv(&[-1.0, 0.0]));
    }

    #[test]
    fn supergradient_inequality_random_pairs() {
        let mut s = Sampler::new(41);
        let a: DMatrix<f64> = s.gaussian_matrix(5, 4);
        let spec = decompose_gram(&a, None).unwrap();
        for _ in 0..200 {
            let u: DVector<f64> = s.gaussian_vector(4);
            let v: DVector<f64> = s.gaussian_vector(4);
            let g = supergradient(&spec, &u, &s.gaussian_vector(4)).unwrap();
            let tu = dual_value(&spec, &u).unwrap();
            let tv = dual_value(&spec, &v).unwrap();
            assert!(tv <= tu + g.dot(&(&v - &u)) + 1e-10);
        }
    }

    #[test]
    fn qn_step_full_polar_space() {
        // B = I gives K = {0}, K° = R^n.
        let cone = ConeH::new(DMatrix::<f64>::zeros(2, 0), DMatrix::identity(2, 2)).unwrap();
        let polar = polar_g(&cone);
        let st = state(dv(&[0.0, 0.0]), dv(&[0.4, -1.3]), DMatrix::identity(2, 2), polar.n_gens());
        let step = qn_step(&st, &polar, 1.0).unwrap();
        assert!(step.converged);
        assert_abs_diff_eq!(step.u_next, dv(&[0.4, -1.3]), epsilon = 1e-8);
    }

    #[test]
    fn qn_step_orthant_clamp() {
        let polar = polar_g(&ConeH::<f64>::nonnegative_orthant(2));
        let st = state(dv(&[0.0, 0.0]), dv(&[-1.0, 2.0]), DMatrix::identity(2, 2), 2);
        let step = qn_step(&st, &polar, 1.0).unwrap();
        assert_abs_diff_eq!(step.u_next, dv(&[-1.0, 0.0]), epsilon = 1e-10);
    }

    #[test]
    fn qn_step_rejects_nonpositive_scale() {
        let polar = polar_g(&ConeH::<f64>::nonnegative_orthant(2));
        let st = state(dv(&[0.0, 0.0]), dv(&[-1.0, 2.0]), DMatrix::identity(2, 2), 2);
        assert!(qn_step(&st, &polar, 0.0).is_err());
    }

    #[test]
    fn qn_step_matches_active_set_oracle() {
        use crate::nnqp::{kkt_residual, tests::active_set_oracle};
        let mut s = Sampler::new(8);
        for _ in 0..30 {
            let n = 4;
            let k = s.range(1, 6);
            let gens: DMatrix<f64> = s.gaussian_matrix(n, k);
            let polar = ConeG::new(gens.clone());
            let r: DMatrix<f64> = s.gaussian_matrix(n, n);
            let h = r.tr_mul(&r) + DMatrix::identity(n, n) * 0.5;
            let u0 = &gens * DVector::from_fn(k, |_, _| s.uniform());
            let st = DualState {
                u: u0.clone(),
                coeffs: DVector::zeros(k),
                h_inv: h.clone(),
                theta: 0.0,
                g: s.gaussian_vector(n),
                iter: 0,
            };
            let t = 0.7;
            let step = qn_step(&st, &polar, t).unwrap();
            let q = gens.tr_mul(&(&h * &gens)) / t;
            let b = gens.tr_mul(&(&h * &u0)) / t + gens.tr_mul(&st.g);
            assert!(kkt_residual(&q, &b, &step.coeffs) <= 1e-8 * (1.0 + b.amax()));
            let oracle = &gens * active_set_oracle(&q, &b);
            let model = |u: &DVector<f64>| {
                let d = u - &u0;
                st.g.dot(&d) - d.dot(&(&h * &d)) / (2.0 * t)
            };
            assert!((model(&step.u_next) - model(&oracle)).abs() <= 1e-8);
        }
    }

    #[test]
    fn bfgs_fixed_point_and_skip() {
        let h = DMatrix::<f64>::identity(3, 3);
        let s = dv(&[1.0, -2.0, 0.5]);
        let (h1, applied) = bfgs_update_inverse(&h, &s, &s, 1e-10);
        assert!(applied);
        assert_abs_diff_eq!(h1, h, epsilon = 1e-14);
        let y = dv(&[2.0, 1.0, 0.0]);
        let (h2, applied) = bfgs_update_inverse(&h, &s, &y, 1e-10);
        assert!(!applied);
        assert_eq!(h2, h);
    }

    #[test]
    fn bfgs_secant_equation() {
        let mut smp = Sampler::new(2);
        for _ in 0..50 {
            let r: DMatrix<f64> = smp.gaussian_matrix(5, 5);
            let h = r.tr_mul(&r) + DMatrix::identity(5, 5);
            let s: DVector<f64> = smp.gaussian_vector(5);
            let mut y: DVector<f64> = smp.gaussian_vector(5);
            if y.dot(&s) <= 0.0 {
                y = -y;
            }
            let (h1, applied) = bfgs_update_inverse(&h, &s, &y, 1e-10);
            assert!(applied);
            assert!((&h1 * &y - &s).norm() <= 1e-10 * (1.0 + s.norm()));
            assert!(h1.symmetric_eigen().eigenvalues.min() > 0.0);
        }
    }

    #[test]
    fn whole_space_reduces_to_smallest_singular_value() {
        let mut s = Sampler::new(1);
        let a: DMatrix<f64> = s.gaussian_matrix(7, 7);
        let res = solve(&a, &ConeH::whole_space(7), &SolveOptions::default()).unwrap();
        let sv = a.clone().svd(false, false).singular_values.min();
        assert!(res.converged);
        assert!((res.sigma_min - sv).abs() <= 1e-8 * (1.0 + sv));
        assert_eq!(res.u_star, DVector::zeros(7));
    }

    #[test]
    fn identity_on_orthant() {
        let res = solve(&DMatrix::<f64>::identity(4, 4), &ConeH::nonnegative_orthant(4), &SolveOptions::default())
            .unwrap();
        assert!((res.sigma_min - 1.0).abs() <= 1e-12);
        assert!(res.converged);
        assert!(member_h(&ConeH::nonnegative_orthant(4), &res.x_star, 1e-12));
    }

    #[test]
    fn wedge_instance_is_exact_but_uncertified() {
        // A = diag(1, 2), K = {|x1| <= x2}: dual stalls at lambda_1/2 = 1/2,
        // the true minimum is 5/4.
        let a = DMatrix::from_diagonal(&dv(&[1.0, 2.0]));
        let cone = ConeH::from_inequalities(DMatrix::from_column_slice(2, 2, &[1.0, -1.0, -1.0, -1.0])).unwrap();
        let res = solve(&a, &cone, &SolveOptions::default()).unwrap();
        assert_abs_diff_eq!(res.primal_value, 1.25, epsilon = 1e-12);
        assert_abs_diff_eq!(res.theta, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(res.gap, 0.75, epsilon = 1e-12);
        assert!(!res.converged);
        assert_eq!(res.primal_source, PrimalSource::FaceEnumeration);
    }

    #[test]
    fn recover_primal_examples() {
        let a = DMatrix::from_diagonal(&dv(&[1.0, 2.0]));
        let spec = decompose_gram(&a, None).unwrap();
        let r = recover_primal(&spec, &dv(&[0.0, 0.0]), &ConeH::whole_space(2), &dv(&[1.0, 1.0])).unwrap();
        assert!((r.x.abs() - dv(&[1.0, 0.0])).norm() < 1e-12);

        let spec = decompose_gram(&DMatrix::<f64>::identity(3, 3), None).unwrap();
        let orthant = ConeH::nonnegative_orthant(3);
        let r = recover_primal(&spec, &dv(&[0.0, 0.0, 0.0]), &orthant, &dv(&[-1.0, 0.5, 0.2])).unwrap();
        assert!(r.violation <= 1e-9);
        assert!((r.x.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gap_examples() {
        let mut s = Sampler::new(9);
        let a: DMatrix<f64> = s.gaussian_matrix(4, 4);
        let spec = decompose_gram(&a, None).unwrap();
        let x = s.unit_vector::<f64>(4);
        let gap = duality_gap(&spec, &x, &DVector::zeros(4)).unwrap();
        assert!((gap - (0.5 * (&a * &x).norm_squared() - 0.5 * spec.lambda_min())).abs() < 1e-10);
        assert!(gap >= 0.0);

        let cone = ConeH::from_inequalities(s.gaussian_matrix(4, 2)).unwrap();
        let polar = polar_g(&cone);
        for _ in 0..200 {
            let u = &polar.gens * DVector::from_fn(2, |_, _| s.uniform() * 3.0);
            let x = s.unit_vector::<f64>(4);
            if cone.violation(&x) <= 0.0 {
                assert!(duality_gap(&spec, &x, &u).unwrap() >= -1e-10);
            }
        }
    }

    #[test]
    fn certified_results_satisfy_invariants() {
        let mut s = Sampler::new(31);
        for _ in 0..20 {
            let a: DMatrix<f64> = s.gaussian_matrix(5, 5);
            let cone = ConeH::from_inequalities(s.gaussian_matrix(5, 2)).unwrap();
            let res = solve(&a, &cone, &SolveOptions::default()).unwrap();
            assert!((res.x_star.norm() - 1.0).abs() <= 1e-8);
            assert!(member_h(&cone, &res.x_star, 1e-6));
            assert!(res.gap >= -1e-8 * (1.0 + res.sigma_min.powi(2)));
            if res.converged {
                assert!(res.complementarity <= 1e-6 * (1.0 + res.u_star.norm()));
            }
        }
    }

    #[test]
    fn trace_is_monotone() {
        let mut s = Sampler::new(77);
        let a: DMatrix<f64> = s.gaussian_matrix(6, 6);
        let cone = ConeH::from_inequalities(s.gaussian_matrix(6, 3)).unwrap();
        let opts = SolveOptions {
            record_trace: true,
            ..Default::default()
        };
        let res = solve(&a, &cone, &opts).unwrap();
        let mut prev = 0.5 * decompose_gram(&a, None).unwrap().lambda_min();
        for e in &res.trace {
            assert!(e.theta >= prev - 1e-12);
            prev = e.theta;
        }
    }

    #[test]
    fn literal_rule_runs_and_logs_updates() {
        let mut s = Sampler::new(5);
        let a: DMatrix<f64> = s.gaussian_matrix(6, 6);
        let cone = ConeH::from_inequalities(s.gaussian_matrix(6, 3)).unwrap();
        let opts = SolveOptions {
            record_trace: true,
            step_rule: StepRule::Literal,
            max_iter: 50,
            ..Default::default()
        };
        let res = solve(&a, &cone, &opts).unwrap();
        assert!(!res.bfgs_log.is_empty());
        for rec in res.bfgs_log.iter().filter(|r| r.applied) {
            assert!((&rec.h_inv * &rec.y - &rec.s).norm() <= 1e-10 * (1.0 + rec.s.norm()));
        }
    }

    #[test]
    fn empty_cone_is_an_error() {
        let cone = ConeH::new(DMatrix::<f64>::zeros(2, 0), DMatrix::identity(2, 2)).unwrap();
        assert_eq!(
            solve(&DMatrix::<f64>::identity(2, 2), &cone, &SolveOptions::default()),
            Err(Error::EmptyCone)
        );
    }

    #[test]
    fn dimension_mismatch() {
        let r = solve(&DMatrix::<f64>::identity(2, 2), &ConeH::whole_space(3), &SolveOptions::default());
        assert!(matches!(r, Err(Error::Dimension { .. })));
    }

    #[test]
    fn single_precision_orthant() {
        let res = solve(&DMatrix::<f32>::identity(3, 3), &ConeH::nonnegative_orthant(3), &SolveOptions::default())
            .unwrap();
        assert!((res.sigma_min - 1.0).abs() < 1e-5);
    }
}
