//! Nonnegative quadratic programs `min 1/2 l'Ql - b'l` subject to `l >= 0`.
//!
//! Up to [`ACTIVE_SET_MAX`] variables the problem is solved by a
//! Lawson-Hanson active-set iteration, which is exact up to roundoff when
//! `b` lies in the range of `Q` (always the case for projections and for
//! quadratic models built from generator matrices). Larger problems use
//! projected gradient with Barzilai-Borwein step lengths and an exact line
//! search along the projected direction, so the objective never increases.
//! Every few iterations the free set is solved directly; when that
//! subspace solution stays nonnegative it usually lands on the exact
//! optimum and ends the iteration.

use nalgebra::{DMatrix, DVector};

use crate::linalg::least_squares;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct NnqpOutcome<T: Scalar> {
    pub solution: DVector<T>,
    pub kkt_residual: T,
    pub iterations: usize,
    pub converged: bool,
}

const POLISH_EVERY: usize = 25;

/// Largest problem handed to the active-set method.
pub const ACTIVE_SET_MAX: usize = 400;

/// Infinity norm of the projected gradient `l - max(l - grad, 0)`.
pub fn kkt_residual<T: Scalar>(q: &DMatrix<T>, b: &DVector<T>, l: &DVector<T>) -> T {
    let grad = q * l - b;
    projected_gradient_norm(l, &grad)
}

fn projected_gradient_norm<T: Scalar>(l: &DVector<T>, grad: &DVector<T>) -> T {
    l.iter().zip(grad.iter()).fold(T::zero(), |m, (&li, &gi)| {
        let p = li - (li - gi).max(T::zero());
        m.max(p.abs())
    })
}

fn objective<T: Scalar>(q: &DMatrix<T>, b: &DVector<T>, l: &DVector<T>) -> T {
    T::lit(0.5) * l.dot(&(q * l)) - b.dot(l)
}

/// Solves the NNQP to `kkt_residual <= tol` or `max_iter` iterations,
/// returning the best iterate either way.
pub fn solve_nnqp<T: Scalar>(
    q: &DMatrix<T>,
    b: &DVector<T>,
    start: Option<&DVector<T>>,
    tol: T,
    max_iter: usize,
) -> NnqpOutcome<T> {
    let k = b.len();
    if k == 0 {
        return NnqpOutcome {
            solution: DVector::zeros(0),
            kkt_residual: T::zero(),
            iterations: 0,
            converged: true,
        };
    }
    let mut l = match start {
        Some(s) => s.map(|v| v.max(T::zero())),
        None => DVector::zeros(k),
    };
    if k <= ACTIVE_SET_MAX {
        if let Some(out) = active_set(q, b, &l, tol, max_iter) {
            return out;
        }
    }
    let mut grad = q * &l - b;
    let fro = q.norm();
    let base_step = if fro > T::zero() { T::one() / fro } else { T::one() };
    let mut step = base_step;
    let mut res = projected_gradient_norm(&l, &grad);
    let mut it = 0;
    while res > tol && it < max_iter {
        it += 1;
        let trial = (&l - &grad * step).map(|v| v.max(T::zero()));
        let dir = &trial - &l;
        let qd = q * &dir;
        let curv = dir.dot(&qd);
        let slope = grad.dot(&dir);
        if slope >= T::zero() {
            // projected direction is not a descent direction: stationary up to roundoff
            break;
        }
        let tau = if curv > T::zero() {
            (-slope / curv).min(T::one())
        } else {
            T::one()
        };
        let s = &dir * tau;
        let y = &qd * tau;
        l += &s;
        grad += &y;
        let sy = s.dot(&y);
        step = if sy > T::zero() {
            (s.norm_squared() / sy).max(base_step * T::lit(1e-6)).min(base_step * T::lit(1e12))
        } else {
            base_step
        };
        res = projected_gradient_norm(&l, &grad);
        if res > tol && it % POLISH_EVERY == 0 {
            if let Some(p) = polish(q, b, &l, &grad) {
                let pg = q * &p - b;
                let pres = projected_gradient_norm(&p, &pg);
                if objective(q, b, &p) <= objective(q, b, &l) + T::eps() * (T::one() + b.norm()) && pres <= res {
                    l = p;
                    grad = pg;
                    res = pres;
                }
            }
        }
    }
    if res > tol {
        if let Some(p) = polish(q, b, &l, &grad) {
            let pg = q * &p - b;
            let pres = projected_gradient_norm(&p, &pg);
            if pres < res {
                l = p;
                res = pres;
            }
        }
    }
    NnqpOutcome {
        solution: l,
        kkt_residual: res,
        iterations: it,
        converged: res <= tol,
    }
}

/// Solves `Q_PP z = b_P` on the index set `p`, least squares when `Q_PP`
/// is singular.
fn subspace_solve<T: Scalar>(q: &DMatrix<T>, b: &DVector<T>, p: &[usize]) -> Option<DVector<T>> {
    let qp = DMatrix::from_fn(p.len(), p.len(), |i, j| q[(p[i], p[j])]);
    let bp = DVector::from_fn(p.len(), |i, _| b[p[i]]);
    let scale = qp.amax();
    let sol = match qp.clone().cholesky() {
        Some(ch) if ch.l_dirty().diagonal().min() > scale.sqrt() * T::lit(1e-7) => ch.solve(&bp),
        _ => {
            least_squares(&qp, &bp, T::lit(1e-12))
        }
    };
    sol.iter().all(|v| v.is_finite()).then_some(sol)
}

/// Lawson-Hanson iteration. Returns `None` when it stalls so the caller
/// can fall back to projected gradient.
fn active_set<T: Scalar>(
    q: &DMatrix<T>,
    b: &DVector<T>,
    start: &DVector<T>,
    tol: T,
    max_iter: usize,
) -> Option<NnqpOutcome<T>> {
    let k = b.len();
    let mut passive: Vec<bool> = start.iter().map(|&v| v > T::zero()).collect();
    let mut l = start.clone();
    let mut it = 0;
    let limit = max_iter.max(3 * k + 10);
    let mut just_added: Option<usize> = None;
    loop {
        // Inner loop: make the subspace solution on the passive set feasible.
        loop {
            it += 1;
            if it > limit {
                return None;
            }
            let p: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            if p.is_empty() {
                break;
            }
            let z = subspace_solve(q, b, &p)?;
            if z.iter().all(|&v| v > T::zero()) {
                l.fill(T::zero());
                for (i, &idx) in p.iter().enumerate() {
                    l[idx] = z[i];
                }
                break;
            }
            if let Some(j) = just_added {
                if let Some(pos) = p.iter().position(|&i| i == j) {
                    if z[pos] <= T::zero() && l[j] == T::zero() {
                        // The entering variable cannot move: numerically optimal.
                        passive[j] = false;
                        let grad = q * &l - b;
                        let res = projected_gradient_norm(&l, &grad);
                        return (res <= tol).then(|| NnqpOutcome {
                            solution: l.clone(),
                            kkt_residual: res,
                            iterations: it,
                            converged: true,
                        });
                    }
                }
            }
            let mut alpha = T::one();
            for (i, &idx) in p.iter().enumerate() {
                if z[i] <= T::zero() {
                    let d = l[idx] - z[i];
                    if d > T::zero() {
                        alpha = alpha.min(l[idx] / d);
                    }
                }
            }
            for (i, &idx) in p.iter().enumerate() {
                let cur = l[idx];
                l[idx] = cur + alpha * (z[i] - cur);
                if l[idx] <= T::eps() * (T::one() + z[i].abs()) || (z[i] <= T::zero() && l[idx] <= T::zero()) {
                    l[idx] = T::zero();
                    passive[idx] = false;
                }
            }
            just_added = None;
        }
        let grad = q * &l - b;
        let res = projected_gradient_norm(&l, &grad);
        let entering = (0..k)
            .filter(|&i| !passive[i])
            .min_by(|&i, &j| grad[i].partial_cmp(&grad[j]).unwrap_or(std::cmp::Ordering::Equal));
        match entering {
            Some(j) if grad[j] < T::zero() && res > tol => {
                passive[j] = true;
                just_added = Some(j);
            }
            _ => {
                return Some(NnqpOutcome {
                    solution: l,
                    kkt_residual: res,
                    iterations: it,
                    converged: res <= tol,
                })
                .filter(|o| o.converged);
            }
        }
    }
}

/// Solves the equality-constrained problem on the current free set and
/// returns it when it remains nonnegative.
fn polish<T: Scalar>(q: &DMatrix<T>, b: &DVector<T>, l: &DVector<T>, grad: &DVector<T>) -> Option<DVector<T>> {
    let free: Vec<usize> = (0..l.len())
        .filter(|&i| l[i] > T::zero() || grad[i] < T::zero())
        .collect();
    if free.is_empty() {
        return None;
    }
    let qf = DMatrix::from_fn(free.len(), free.len(), |i, j| q[(free[i], free[j])]);
    let bf = DVector::from_fn(free.len(), |i, _| b[free[i]]);
    let sol = match qf.clone().cholesky() {
        Some(ch) => ch.solve(&bf),
        None => {
            least_squares(&qf, &bf, T::lit(1e-12))
        }
    };
    if sol.iter().any(|v| !v.is_finite() || *v < T::zero()) {
        return None;
    }
    let mut out = DVector::zeros(l.len());
    for (i, &idx) in free.iter().enumerate() {
        out[idx] = sol[i];
    }
    Some(out)
}
