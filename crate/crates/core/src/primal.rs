//! Feasible primal points on `K ∩ sphere`.
//!
//! Two searches back the dual solver when the point recovered from the
//! dual minimizer set is infeasible or leaves a gap:
//!
//! * [`face_enumeration`] is exact. The minimizer lies in the relative
//!   interior of some face of `K`, and on the span of that face a local
//!   minimum of a quadratic over the sphere is a bottom eigenvector. Faces
//!   are visited depth first by active-set, and a node is pruned once its
//!   face minimum cannot beat the incumbent (adding constraints shrinks the
//!   subspace, so the minimum only grows).
//! * [`projected_gradient`] is a local search for large constraint counts:
//!   Riemannian gradient steps with Barzilai-Borwein lengths, mapped back
//!   by projecting onto `K` and normalizing.
//! * [`refine_active_set`] turns an approximate local minimizer into a KKT
//!   point: it guesses the active face, solves the face eigenproblem in the
//!   eigenbasis of `A'A`, then adds violated constraints or releases
//!   constraints with negative multipliers until the guess is consistent.

use nalgebra::{DMatrix, DVector};

use crate::cones::{ConeG, ConeH};
use crate::error::{Error, Result};
use crate::linalg::{self, least_squares};
use crate::nnqp::solve_nnqp;
use crate::sphere_qp::SpectralDecomposition;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalPoint<T: Scalar> {
    pub x: DVector<T>,
    /// `1/2 x'A'Ax`.
    pub value: T,
}

/// Constraint violation with every normal scaled to unit length.
pub fn normalized_violation<T: Scalar>(cone: &ConeH<T>, x: &DVector<T>) -> T {
    let mut worst = T::zero();
    for c in cone.ineq.column_iter() {
        let nrm = c.norm();
        if nrm > T::zero() {
            worst = worst.max(c.dot(x) / nrm);
        }
    }
    for b in cone.eq.column_iter() {
        let nrm = b.norm();
        if nrm > T::zero() {
            worst = worst.max((b.dot(x) / nrm).abs());
        }
    }
    worst
}

/// Squared-violation penalty and its gradient.
fn penalty<T: Scalar>(cone: &ConeH<T>, x: &DVector<T>) -> (T, DVector<T>) {
    let mut val = T::zero();
    let mut grad = DVector::zeros(x.len());
    for c in cone.ineq.column_iter() {
        let v = c.dot(x);
        if v > T::zero() {
            val += v * v;
            grad.axpy(T::lit(2.0) * v, &c, T::one());
        }
    }
    for b in cone.eq.column_iter() {
        let v = b.dot(x);
        val += v * v;
        grad.axpy(T::lit(2.0) * v, &b, T::one());
    }
    (val, grad)
}

/// Minimizes the violation over `{offset + radius * basis z : |z| = 1}` by
/// projected gradient on the penalty, from each of `starts` (coordinates
/// in `basis`). Returns the least-violating point.
pub fn sphere_feasibility<T: Scalar>(
    cone: &ConeH<T>,
    offset: &DVector<T>,
    basis: &DMatrix<T>,
    radius: T,
    starts: &[DVector<T>],
    max_iter: usize,
) -> DVector<T> {
    let p = basis.ncols();
    let assemble = |z: &DVector<T>| offset + basis * z * radius;
    let mut best: Option<(T, DVector<T>)> = None;
    let scale = cone
        .ineq
        .column_iter()
        .chain(cone.eq.column_iter())
        .fold(T::zero(), |m, c| m.max(c.norm_squared()))
        * radius
        * radius;
    let base_step = if scale > T::zero() {
        T::one() / (T::lit(2.0) * scale * from_count::<T>(cone.n_ineq() + cone.n_eq()))
    } else {
        T::one()
    };
    for z0 in starts {
        if z0.len() != p || z0.norm() == T::zero() {
            continue;
        }
        let mut z = z0.normalize();
        let mut x = assemble(&z);
        let (mut val, mut grad) = penalty(cone, &x);
        let mut step = base_step;
        for _ in 0..max_iter {
            if val == T::zero() {
                break;
            }
            let gz = basis.tr_mul(&grad) * radius;
            let tangent = &gz - &z * z.dot(&gz);
            if tangent.norm() <= T::eps() * (T::one() + gz.norm()) {
                break;
            }
            let mut accepted = false;
            for _ in 0..40 {
                let trial = (&z - &tangent * step).normalize();
                let xt = assemble(&trial);
                let (vt, gt) = penalty(cone, &xt);
                if vt < val {
                    z = trial;
                    x = xt;
                    val = vt;
                    grad = gt;
                    accepted = true;
                    step *= T::lit(1.5);
                    break;
                }
                step *= T::lit(0.5);
            }
            if !accepted {
                break;
            }
        }
        let viol = normalized_violation(cone, &x);
        if best.as_ref().is_none_or(|(bv, _)| viol < *bv) {
            best = Some((viol, x));
        }
    }
    best.map(|(_, x)| x).unwrap_or_else(|| offset.clone())
}

fn from_count<T: Scalar>(n: usize) -> T {
    T::from_usize(n.max(1)).unwrap()
}

/// Exact minimum of `1/2 x'Mx` over unit vectors of `K` by active-face
/// enumeration. `incumbent` seeds the pruning bound. Returns `None` when
/// no face carries a feasible unit vector, i.e. `K = {0}`.
pub fn face_enumeration<T: Scalar>(
    gram: &DMatrix<T>,
    cone: &ConeH<T>,
    feas_tol: T,
    incumbent: Option<PrimalPoint<T>>,
) -> Option<PrimalPoint<T>> {
    let n = gram.nrows();
    let mut search = FaceSearch {
        gram,
        cone,
        feas_tol,
        shift: gram.amax() * from_count::<T>(n) + T::one(),
        best: incumbent,
        n,
    };
    let mut active = Vec::new();
    search.visit(&mut active, 0);
    search.best
}

struct FaceSearch<'a, T: Scalar> {
    gram: &'a DMatrix<T>,
    cone: &'a ConeH<T>,
    feas_tol: T,
    shift: T,
    best: Option<PrimalPoint<T>>,
    n: usize,
}

impl<T: Scalar> FaceSearch<'_, T> {
    fn visit(&mut self, active: &mut Vec<usize>, next: usize) {
        let normals = self.normals(active);
        let rank = numerical_rank(&normals);
        if rank < normals.ncols() || rank >= self.n {
            return;
        }
        let (values, vectors) = self.face_spectrum(&normals);
        let bound = T::lit(0.5) * values[0];
        if let Some(b) = &self.best {
            if bound >= b.value - T::eps() * (T::one() + b.value.abs()) {
                return;
            }
        }
        if let Some(x) = self.feasible_bottom(&values, &vectors) {
            let value = T::lit(0.5) * x.dot(&(self.gram * &x));
            if self.best.as_ref().is_none_or(|b| value < b.value) {
                self.best = Some(PrimalPoint { x, value });
            }
            return;
        }
        for j in next..self.cone.n_ineq() {
            active.push(j);
            self.visit(active, j + 1);
            active.pop();
        }
    }

    fn normals(&self, active: &[usize]) -> DMatrix<T> {
        let r = self.cone.n_eq();
        let mut out = DMatrix::zeros(self.n, r + active.len());
        out.columns_mut(0, r).copy_from(&self.cone.eq);
        for (k, &j) in active.iter().enumerate() {
            out.set_column(r + k, &self.cone.ineq.column(j));
        }
        out
    }

    /// Ascending eigenpairs of `M` restricted to `null(normals')`; the
    /// complement is shifted above the spectrum.
    fn face_spectrum(&self, normals: &DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
        let n = self.n;
        let proj = if normals.ncols() == 0 {
            DMatrix::identity(n, n)
        } else {
            let q = normals.clone().qr().q();
            DMatrix::identity(n, n) - &q * q.transpose()
        };
        let reduced = &proj * self.gram * &proj + (DMatrix::identity(n, n) - &proj) * self.shift;
        let sym = (&reduced + reduced.transpose()) * T::lit(0.5);
        let eig = sym.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        let dim = n - normals.ncols();
        let values = order.iter().take(dim).map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(n, dim, |r, c| eig.eigenvectors[(r, order[c])]);
        (values, vectors)
    }

    /// A feasible unit vector of the bottom eigenspace of the face, if any.
    fn feasible_bottom(&self, values: &[T], vectors: &DMatrix<T>) -> Option<DVector<T>> {
        let cluster_tol = T::lit(1e-9) * (T::one() + self.gram.amax());
        let k = values.iter().take_while(|&&v| v <= values[0] + cluster_tol).count();
        let v = vectors.column(0).into_owned();
        for cand in [v.clone(), -v] {
            if normalized_violation(self.cone, &cand) <= self.feas_tol {
                return Some(cand);
            }
        }
        if k > 1 {
            let basis = vectors.columns(0, k).into_owned();
            let mut starts = vec![DVector::from_element(k, T::one())];
            for i in 0..k.min(8) {
                let mut e = DVector::zeros(k);
                e[i] = T::one();
                starts.push(e.clone());
                starts.push(-e);
            }
            let x = sphere_feasibility(self.cone, &DVector::zeros(self.n), &basis, T::one(), &starts, 500);
            if normalized_violation(self.cone, &x) <= self.feas_tol {
                return Some(x.normalize());
            }
        }
        None
    }
}

fn numerical_rank<T: Scalar>(m: &DMatrix<T>) -> usize {
    linalg::numerical_rank(m, T::lit(1e-10))
}

/// Projection onto a generator cone with the Gram matrix cached, for
/// repeated projections onto the same cone.
pub struct CachedProjector<T: Scalar> {
    gens: DMatrix<T>,
    gram: DMatrix<T>,
    warm: DVector<T>,
}

impl<T: Scalar> CachedProjector<T> {
    pub fn new(cone: &ConeG<T>) -> Self {
        let gram = cone.gens.tr_mul(&cone.gens);
        Self {
            warm: DVector::zeros(cone.n_gens()),
            gens: cone.gens.clone(),
            gram,
        }
    }

    pub fn project(&mut self, y: &DVector<T>) -> DVector<T> {
        let k = self.gens.ncols();
        if k == 0 {
            return DVector::zeros(y.len());
        }
        let b = self.gens.tr_mul(y);
        let tol = T::lit(1e-10) * (T::one() + b.amax());
        let out = solve_nnqp(&self.gram, &b, Some(&self.warm), tol, 10 * k * y.len() + 100);
        self.warm = out.solution;
        &self.gens * &self.warm
    }

    /// Projection onto the polar of the generator cone (Moreau).
    pub fn project_polar(&mut self, y: &DVector<T>) -> DVector<T> {
        y - self.project(y)
    }
}

/// Local search on `K ∩ sphere` from the normalized projections of
/// `seeds` onto `K`; `polar` generates `K°`. Returns the best point found,
/// or `EmptyCone` when every seed and every signed coordinate axis
/// projects to the origin.
pub fn projected_gradient<T: Scalar>(
    spec: &SpectralDecomposition<T>,
    polar: &ConeG<T>,
    seeds: &[DVector<T>],
    max_iter: usize,
) -> Result<PrimalPoint<T>> {
    let n = spec.dim();
    let mut proj = CachedProjector::new(polar);
    let tiny = T::lit(1e-12);
    let mut starts: Vec<DVector<T>> = seeds
        .iter()
        .filter_map(|s| {
            let p = proj.project_polar(s);
            (p.norm() > tiny * (T::one() + s.norm())).then(|| p.normalize())
        })
        .fold(Vec::new(), |mut acc: Vec<DVector<T>>, x| {
            if !acc.iter().any(|y| y.dot(&x) > T::one() - T::lit(1e-12)) {
                acc.push(x);
            }
            acc
        });
    if starts.is_empty() {
        for i in 0..n {
            for sign in [T::one(), -T::one()] {
                let mut e = DVector::zeros(n);
                e[i] = sign;
                let p = proj.project_polar(&e);
                if p.norm() > tiny {
                    starts.push(p.normalize());
                    break;
                }
            }
            if !starts.is_empty() {
                break;
            }
        }
    }
    if starts.is_empty() {
        return Err(Error::EmptyCone);
    }
    let mut best: Option<PrimalPoint<T>> = None;
    for x0 in starts {
        let p = descend(spec, &mut proj, x0, max_iter);
        if best.as_ref().is_none_or(|b| p.value < b.value) {
            best = Some(p);
        }
    }
    Ok(best.expect("at least one start"))
}

/// The local search stops when the best objective improves by less than
/// `STALL_TOL` (relative) over `STALL_WINDOW` iterations.
const STALL_WINDOW: usize = 50;
const STALL_TOL: f64 = 1e-11;
/// Length of the nonmonotone line-search memory.
const MEMORY: usize = 10;

/// Orthonormal basis of `range(m)`.
fn range_basis<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    linalg::range_basis(m, T::lit(1e-10))
}

/// Bottom eigenpair of `diag(lambdas)` restricted to the orthogonal
/// complement of the orthonormal columns `q`, started from `c0`.
///
/// Inverse iteration shifted below the spectrum runs until the Rayleigh
/// quotient settles, which pulls the iterate towards the smallest face
/// eigenvalue; Rayleigh quotient iteration then polishes, and its result
/// is kept only if it does not raise the value. Each step solves the
/// bordered system `(L - s) z + q v = y`, `q' z = 0`.
fn face_rqi<T: Scalar>(lambdas: &DVector<T>, q: &DMatrix<T>, c0: &DVector<T>) -> Option<(DVector<T>, T)> {
    let n = lambdas.len();
    let s = q.ncols();
    if s >= n {
        return None;
    }
    let project = |y: &DVector<T>| {
        if s == 0 {
            y.clone()
        } else {
            y - q * q.tr_mul(y)
        }
    };
    let scale = lambdas.amax().max(T::one());
    let tiny = T::eps() * scale;
    let step = |y: &DVector<T>, sigma: T| -> Option<DVector<T>> {
        let w = lambdas.map(|l| {
            let d = l - sigma;
            if d.abs() < tiny {
                T::one() / tiny
            } else {
                T::one() / d
            }
        });
        let wy = y.component_mul(&w);
        let z = if s == 0 {
            wy
        } else {
            let wq = DMatrix::from_fn(n, s, |r, c| w[r] * q[(r, c)]);
            let nu = q.tr_mul(&wq).lu().solve(&q.tr_mul(&wy))?;
            project(&(wy - wq * nu))
        };
        let nrm = z.norm();
        (nrm.is_finite() && nrm > T::zero()).then(|| z / nrm)
    };
    let rq = |y: &DVector<T>| y.iter().zip(lambdas.iter()).fold(T::zero(), |a, (&v, &l)| a + l * v * v);

    let mut y = project(c0);
    if y.norm() <= T::lit(1e-8) {
        return None;
    }
    y.normalize_mut();
    let floor = lambdas.min() - T::lit(1e-6) * scale;
    let mut value = rq(&y);
    for _ in 0..INVERSE_STEPS {
        let Some(next) = step(&y, floor) else { break };
        let v = rq(&next);
        y = next;
        let settled = (value - v).abs() <= T::lit(1e-13) * scale;
        value = v;
        if settled {
            break;
        }
    }
    let mut polished = y.clone();
    let mut sigma = value;
    for _ in 0..30 {
        let Some(next) = step(&polished, sigma) else { break };
        polished = next;
        let v = rq(&polished);
        let residual = project(&(polished.component_mul(lambdas) - &polished * v)).norm();
        let settled = (v - sigma).abs() <= T::lit(1e-15) * scale;
        sigma = v;
        if residual <= T::lit(1e-12) * scale || settled {
            break;
        }
    }
    if sigma <= value + T::lit(1e-12) * scale {
        Some((polished, sigma))
    } else {
        Some((y, value))
    }
}

const INVERSE_STEPS: usize = 500;

/// Active-set refinement of an approximate minimizer `x0` of
/// `1/2 x'A'Ax` on `K ∩ sphere`. Returns the best feasible point met, if
/// any; when the active set settles, that point satisfies the first-order
/// conditions with nonnegative multipliers.
pub fn refine_active_set<T: Scalar>(
    spec: &SpectralDecomposition<T>,
    cone: &ConeH<T>,
    x0: &DVector<T>,
    feas_tol: T,
) -> Option<PrimalPoint<T>> {
    let n = spec.dim();
    let m = cone.n_ineq();
    let unit = |mat: &DMatrix<T>| {
        let mut out = spec.phi.tr_mul(mat);
        for mut col in out.column_iter_mut() {
            let nrm = col.norm();
            if nrm > T::zero() {
                col /= nrm;
            }
        }
        out
    };
    let d_ineq = unit(&cone.ineq);
    let d_eq = unit(&cone.eq);
    let mut c = spec.to_basis(x0);
    let act_tol = T::lit(1e-6);
    let values = d_ineq.tr_mul(&c);
    let mut active: Vec<bool> = values.iter().map(|&v| v >= -act_tol).collect();
    let mut best: Option<PrimalPoint<T>> = None;
    let mut seen: Vec<Vec<bool>> = Vec::new();
    for _ in 0..(2 * m + 10) {
        if seen.contains(&active) {
            break;
        }
        seen.push(active.clone());
        let idx: Vec<usize> = (0..m).filter(|&i| active[i]).collect();
        let mut ds = DMatrix::zeros(n, idx.len() + d_eq.ncols());
        for (k, &i) in idx.iter().enumerate() {
            ds.set_column(k, &d_ineq.column(i));
        }
        for k in 0..d_eq.ncols() {
            ds.set_column(idx.len() + k, &d_eq.column(k));
        }
        let q = range_basis(&ds);
        let Some((face_c, mu)) = face_rqi(&spec.lambdas, &q, &c) else {
            break;
        };
        let v = d_ineq.tr_mul(&face_c);
        let worst = |sign: T| v.iter().fold(T::zero(), |a, &x| a.max(sign * x));
        let (face_c, v) = if worst(-T::one()) < worst(T::one()) {
            (-face_c, -v)
        } else {
            (face_c, v)
        };
        let eq_viol = d_eq.tr_mul(&face_c).iter().fold(T::zero(), |a, &x| a.max(x.abs()));
        let violated = (0..m)
            .filter(|&i| !active[i] && v[i] > feas_tol)
            .max_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(std::cmp::Ordering::Equal));
        if let Some(i) = violated {
            active[i] = true;
            continue;
        }
        if v.iter().any(|&x| x > feas_tol) || eq_viol > feas_tol {
            break;
        }
        let point = PrimalPoint {
            x: spec.from_basis(&face_c),
            value: T::lit(0.5) * mu,
        };
        if best.as_ref().is_none_or(|b| point.value < b.value) {
            best = Some(point);
        }
        c = face_c.clone();
        if ds.ncols() == 0 {
            break;
        }
        // Multipliers from  L c - mu c + D nu = 0.
        let r = face_c.component_mul(&spec.lambdas) - &face_c * mu;
        let nu = least_squares(&ds, &(-r), T::lit(1e-12));
        let scale = T::one() + spec.lambda_max().abs();
        let release = (0..idx.len())
            .filter(|&k| nu[k] < -T::lit(1e-9) * scale)
            .min_by(|&a, &b| nu[a].partial_cmp(&nu[b]).unwrap_or(std::cmp::Ordering::Equal));
        match release {
            Some(k) => active[idx[k]] = false,
            None => break,
        }
    }
    best
}

/// Spectral projected gradient on `K ∩ sphere` with a nonmonotone
/// sufficient-decrease test against the largest of the last `MEMORY`
/// objective values.
fn descend<T: Scalar>(
    spec: &SpectralDecomposition<T>,
    proj: &mut CachedProjector<T>,
    mut x: DVector<T>,
    max_iter: usize,
) -> PrimalPoint<T> {
    let lmax = spec.lambda_max().max(T::eps());
    let mut mx = spec.apply(&x);
    let mut f = T::lit(0.5) * x.dot(&mx);
    let mut best = PrimalPoint { x: x.clone(), value: f };
    let mut history = std::collections::VecDeque::from([f]);
    let mut step = T::one() / lmax;
    let mut prev: Option<(DVector<T>, DVector<T>)> = None;
    let mut checkpoint = f;
    let sufficient = T::lit(1e-4);
    for it in 1..=max_iter {
        let rq = x.dot(&mx);
        let grad = &mx - &x * rq;
        if let Some((px, pg)) = &prev {
            let s = &x - px;
            let y = &grad - pg;
            let sy = s.dot(&y);
            if sy > T::zero() {
                step = (s.norm_squared() / sy).min(T::lit(1e3) / lmax).max(T::lit(1e-3) / lmax);
            }
        }
        let reference = history.iter().copied().fold(f, |a, b| a.max(b));
        let mut accepted = None;
        let mut trial = step;
        for _ in 0..30 {
            let cand = proj.project_polar(&(&x - &grad * trial));
            let nrm = cand.norm();
            if nrm <= T::eps() {
                trial *= T::lit(0.5);
                continue;
            }
            let cand = cand / nrm;
            let mc = spec.apply(&cand);
            let fc = T::lit(0.5) * cand.dot(&mc);
            let moved = (&cand - &x).norm_squared();
            if fc <= reference - sufficient * moved / trial {
                accepted = Some((cand, mc, fc, moved));
                break;
            }
            trial *= T::lit(0.5);
        }
        let Some((cand, mc, fc, moved)) = accepted else {
            break;
        };
        prev = Some((x, grad));
        x = cand;
        mx = mc;
        f = fc;
        history.push_back(f);
        if history.len() > MEMORY {
            history.pop_front();
        }
        if f < best.value {
            best = PrimalPoint { x: x.clone(), value: f };
        }
        if moved <= T::lit(1e-24) {
            break;
        }
        if it % STALL_WINDOW == 0 {
            if checkpoint - best.value <= T::lit(STALL_TOL) * (T::one() + best.value.abs()) {
                break;
            }
            checkpoint = best.value;
        }
    }
    best
}
