//! Closed-form minimization of `1/2 x'A'Ax + <u, x>` over the unit sphere.
//!
//! Everything is expressed in the eigenbasis `phi` of the Gram matrix
//! `A'A`. With `gamma = phi' u` the problem separates into
//! `min 1/2 sum lambda_i c_i^2 + sum gamma_i c_i` subject to `|c| = 1`.
//! Stationarity gives `c_i = -gamma_i / (lambda_i - mu)` for the sphere
//! multiplier `mu`, and the global minimizer is the branch with
//! `mu <= lambda_1`. When `gamma` vanishes on the bottom eigenspace and the
//! remaining coefficients fit inside the sphere, `mu = lambda_1` and the
//! leftover radius is spread freely over the bottom eigenspace.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::Scalar;

/// Eigen-decomposition `A'A = phi diag(lambdas) phi'` with ascending
/// eigenvalues and a deterministic eigenvector sign.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition<T: Scalar> {
    pub lambdas: DVector<T>,
    pub phi: DMatrix<T>,
    pub multiplicity_tol: T,
}

/// Split of the eigen-indices into the bottom eigenspace and the rest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EigsplitIndex {
    pub e1: Vec<usize>,
    pub e_plus: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpCase {
    Degenerate,
    Nondegenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification<T: Scalar> {
    pub case: QpCase,
    pub gammas: DVector<T>,
}

/// Description of the minimizer set of the sphere subproblem.
///
/// `coeffs` are coordinates in the eigenbasis. In the degenerate case the
/// entries on `free_indices` are zero and the minimizers are exactly the
/// points that put `free_radius` worth of norm on those coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereQpSolution<T: Scalar> {
    pub coeffs: DVector<T>,
    pub multiplier: T,
    pub degenerate: bool,
    pub free_radius: T,
    pub free_indices: Vec<usize>,
    pub value: T,
}

/// Default grouping threshold `1e-8 (1 + lambda_max)`.
pub fn default_multiplicity_tol<T: Scalar>(lambda_max: T) -> T {
    T::lit(1e-8) * (T::one() + lambda_max.abs())
}

/// Eigen-decomposes `A'A`. `multiplicity_tol = None` selects the default.
pub fn decompose_gram<T: Scalar>(
    a: &DMatrix<T>,
    multiplicity_tol: Option<T>,
) -> Result<SpectralDecomposition<T>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::InvalidInput("matrix must be nonempty".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let gram = a.tr_mul(a);
    SpectralDecomposition::from_symmetric(&gram, multiplicity_tol)
}

impl<T: Scalar> SpectralDecomposition<T> {
    /// Decomposes an arbitrary symmetric PSD matrix (used for Gram
    /// matrices that are formed elsewhere).
    pub fn from_symmetric(gram: &DMatrix<T>, multiplicity_tol: Option<T>) -> Result<Self> {
        let n = gram.nrows();
        if n == 0 || gram.ncols() != n {
            return Err(Error::InvalidInput("gram matrix must be square and nonempty".into()));
        }
        if gram.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let sym = (gram + gram.transpose()) * T::lit(0.5);
        let eig = sym.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            eig.eigenvalues[i]
                .partial_cmp(&eig.eigenvalues[j])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(i.cmp(&j))
        });
        let lambdas = DVector::from_fn(n, |k, _| eig.eigenvalues[order[k]]);
        let mut phi = DMatrix::zeros(n, n);
        for (k, &src) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(src).into_owned();
            fix_sign(&mut col);
            phi.set_column(k, &col);
        }
        if lambdas.iter().chain(phi.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("eigendecomposition failed".into()));
        }
        let tol = multiplicity_tol.unwrap_or_else(|| default_multiplicity_tol(lambdas[n - 1]));
        Ok(Self {
            lambdas,
            phi,
            multiplicity_tol: tol,
        })
    }

    /// Spectral data with `phi = I`, i.e. a diagonal Gram matrix.
    pub fn from_diagonal(lambdas: &[T]) -> Self {
        let n = lambdas.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| lambdas[i].partial_cmp(&lambdas[j]).unwrap());
        let sorted = DVector::from_fn(n, |k, _| lambdas[idx[k]]);
        let phi = DMatrix::from_fn(n, n, |r, k| if r == idx[k] { T::one() } else { T::zero() });
        let tol = default_multiplicity_tol(sorted[n - 1]);
        Self {
            lambdas: sorted,
            phi,
            multiplicity_tol: tol,
        }
    }

    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambda_min(&self) -> T {
        self.lambdas[0]
    }

    pub fn lambda_max(&self) -> T {
        self.lambdas[self.dim() - 1]
    }

    pub fn split(&self) -> EigsplitIndex {
        let cut = self.lambdas[0] + self.multiplicity_tol;
        let (e1, e_plus) = (0..self.dim()).partition(|&i| self.lambdas[i] <= cut);
        EigsplitIndex { e1, e_plus }
    }

    /// Coordinates of `x` in the eigenbasis.
    pub fn to_basis(&self, x: &DVector<T>) -> DVector<T> {
        self.phi.tr_mul(x)
    }

    pub fn from_basis(&self, c: &DVector<T>) -> DVector<T> {
        &self.phi * c
    }

    /// `A'A x` computed from the decomposition.
    pub fn apply(&self, x: &DVector<T>) -> DVector<T> {
        let c = self.to_basis(x).component_mul(&self.lambdas);
        self.from_basis(&c)
    }

    /// `1/2 x'A'Ax`.
    pub fn quadratic(&self, x: &DVector<T>) -> T {
        let c = self.to_basis(x);
        half::<T>() * c.iter().zip(self.lambdas.iter()).fold(T::zero(), |s, (&ci, &li)| s + li * ci * ci)
    }

    /// Lagrangian `1/2 x'A'Ax + <u, x>`.
    pub fn lagrangian(&self, x: &DVector<T>, u: &DVector<T>) -> T {
        self.quadratic(x) + u.dot(x)
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        &self.phi * DMatrix::from_diagonal(&self.lambdas) * self.phi.transpose()
    }
}

fn half<T: Scalar>() -> T {
    T::lit(0.5)
}

fn fix_sign<T: Scalar>(col: &mut DVector<T>) {
    let thresh = T::lit(1e-8);
    let pivot = col
        .iter()
        .position(|v| v.abs() > thresh)
        .unwrap_or_else(|| col.iamax());
    if col[pivot] < T::zero() {
        col.neg_mut();
    }
}

/// Computes `gamma = phi' u` and labels the instance.
pub fn classify<T: Scalar>(spec: &SpectralDecomposition<T>, u: &DVector<T>) -> Result<Classification<T>> {
    check_len(spec, u)?;
    let gammas = spec.to_basis(u);
    let case = classify_gammas(spec, &gammas, u.norm());
    Ok(Classification { case, gammas })
}

fn classify_gammas<T: Scalar>(spec: &SpectralDecomposition<T>, gammas: &DVector<T>, u_norm: T) -> QpCase {
    let split = spec.split();
    let zero_tol = spec.multiplicity_tol * u_norm;
    if split.e1.iter().any(|&i| gammas[i].abs() > zero_tol) {
        return QpCase::Nondegenerate;
    }
    let l1 = spec.lambda_min();
    let sum = split.e_plus.iter().fold(T::zero(), |s, &i| {
        let r = gammas[i] / (spec.lambdas[i] - l1);
        s + r * r
    });
    if sum <= T::one() + T::lit(8.0) * T::eps() {
        QpCase::Degenerate
    } else {
        QpCase::Nondegenerate
    }
}

fn check_len<T: Scalar>(spec: &SpectralDecomposition<T>, u: &DVector<T>) -> Result<()> {
    if u.len() != spec.dim() {
        return Err(Error::Dimension {
            context: "dual vector length",
            expected: spec.dim(),
            got: u.len(),
        });
    }
    Ok(())
}

/// Unique root `mu < lambda_1` of `sum gamma_i^2 / (lambda_i - mu)^2 = 1`.
///
/// Bisection runs on the offset `t = lambda_1 - mu` inside
/// `(0, |gamma|]`: at `t = |gamma|` every term is dominated by
/// `gamma_i^2 / |gamma|^2`, so the left end has `f <= 1`.
pub fn secular_root<T: Scalar>(lambdas: &DVector<T>, gammas: &DVector<T>, multiplicity_tol: T, root_tol: T) -> Result<T> {
    let l1 = lambdas.iter().copied().fold(T::max_value().unwrap(), |a, b| if b < a { b } else { a });
    Ok(l1 - secular_offset(lambdas, gammas, multiplicity_tol, root_tol)?)
}

/// Root of the secular equation as the offset `t = lambda_1 - mu > 0`.
fn secular_offset<T: Scalar>(lambdas: &DVector<T>, gammas: &DVector<T>, multiplicity_tol: T, root_tol: T) -> Result<T> {
    let n = lambdas.len();
    if gammas.len() != n || n == 0 {
        return Err(Error::Dimension {
            context: "secular equation",
            expected: n,
            got: gammas.len(),
        });
    }
    let l1 = lambdas.iter().copied().fold(lambdas[0], |a, b| if b < a { b } else { a });
    let gnorm = gammas.norm();
    if gnorm == T::zero() {
        return Err(Error::Bracket { mu: l1.as_f64(), value: 0.0 });
    }
    // Offsets lambda_i - lambda_1, with the bottom cluster pinned to 0.
    let offsets: Vec<T> = lambdas
        .iter()
        .map(|&l| {
            let d = l - l1;
            if d <= multiplicity_tol {
                T::zero()
            } else {
                d
            }
        })
        .collect();
    let f = |t: T| -> T {
        let mut s = T::zero();
        for (d, &g) in offsets.iter().zip(gammas.iter()) {
            if g == T::zero() {
                continue;
            }
            let den = *d + t;
            if den == T::zero() {
                return T::max_value().unwrap();
            }
            let r = g / den;
            s += r * r;
        }
        s
    };

    let mut lo = T::zero();
    let mut hi = gnorm;
    let f_lo = if offsets.iter().zip(gammas.iter()).any(|(d, g)| *d == T::zero() && *g != T::zero()) {
        T::max_value().unwrap()
    } else {
        f(lo)
    };
    if f_lo <= T::one() {
        return Err(Error::Bracket {
            mu: l1.as_f64(),
            value: f_lo.as_f64(),
        });
    }
    let f_hi = f(hi);
    if (f_hi - T::one()).abs() <= root_tol {
        return Ok(hi);
    }
    let mut best = (hi, (f_hi - T::one()).abs());
    for _ in 0..200 {
        let mid = (lo + hi) * half::<T>();
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        let res = (fm - T::one()).abs();
        if res < best.1 {
            best = (mid, res);
        }
        if res <= root_tol {
            break;
        }
        if fm > T::one() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.0)
}

/// Global minimizer description of `min_{|x|=1} L(x, u)`.
pub fn solve_sphere_qp<T: Scalar>(spec: &SpectralDecomposition<T>, u: &DVector<T>) -> Result<SphereQpSolution<T>> {
    let cls = classify(spec, u)?;
    solve_classified(spec, &cls)
}

pub(crate) fn solve_classified<T: Scalar>(
    spec: &SpectralDecomposition<T>,
    cls: &Classification<T>,
) -> Result<SphereQpSolution<T>> {
    let n = spec.dim();
    let gammas = &cls.gammas;
    let l1 = spec.lambda_min();
    match cls.case {
        QpCase::Nondegenerate => {
            let t = secular_offset(&spec.lambdas, gammas, spec.multiplicity_tol, T::lit(1e-12))?;
            let mu = l1 - t;
            let mut c = DVector::from_fn(n, |i, _| {
                let d = spec.lambdas[i] - l1;
                let d = if d <= spec.multiplicity_tol { T::zero() } else { d };
                -gammas[i] / (d + t)
            });
            let norm = c.norm();
            if norm > T::zero() {
                c /= norm;
            }
            let value = separable_value(&spec.lambdas, gammas, &c);
            Ok(SphereQpSolution {
                coeffs: c,
                multiplier: mu,
                degenerate: false,
                free_radius: T::zero(),
                free_indices: Vec::new(),
                value,
            })
        }
        QpCase::Degenerate => {
            let split = spec.split();
            let mut c = DVector::zeros(n);
            for &i in &split.e_plus {
                c[i] = -gammas[i] / (spec.lambdas[i] - l1);
            }
            let used = c.norm_squared();
            let free_radius = if used >= T::one() {
                T::zero()
            } else {
                (T::one() - used).sqrt()
            };
            let mut value = half::<T>() * l1 * free_radius * free_radius;
            for &i in &split.e_plus {
                value += half::<T>() * spec.lambdas[i] * c[i] * c[i] + gammas[i] * c[i];
            }
            Ok(SphereQpSolution {
                coeffs: c,
                multiplier: l1,
                degenerate: true,
                free_radius,
                free_indices: split.e1,
                value,
            })
        }
    }
}

fn separable_value<T: Scalar>(lambdas: &DVector<T>, gammas: &DVector<T>, c: &DVector<T>) -> T {
    let mut v = T::zero();
    for i in 0..c.len() {
        v += half::<T>() * lambdas[i] * c[i] * c[i] + gammas[i] * c[i];
    }
    v
}

/// Dual function `theta(u) = min_{|x|=1} L(x, u)`.
pub fn dual_value<T: Scalar>(spec: &SpectralDecomposition<T>, u: &DVector<T>) -> Result<T> {
    Ok(solve_sphere_qp(spec, u)?.value)
}

/// Picks one minimizer (eigenbasis coordinates). In the degenerate case the
/// free radius goes in the direction of `hint` restricted to the bottom
/// eigenspace, or onto its first coordinate when that restriction vanishes.
pub fn solution_representative<T: Scalar>(sol: &SphereQpSolution<T>, hint: &DVector<T>) -> DVector<T> {
    let mut c = sol.coeffs.clone();
    if !sol.degenerate || sol.free_indices.is_empty() {
        return c;
    }
    let norm = sol
        .free_indices
        .iter()
        .fold(T::zero(), |s, &i| s + hint[i] * hint[i])
        .sqrt();
    if norm > T::zero() && norm.is_finite() {
        for &i in &sol.free_indices {
            c[i] = sol.free_radius * hint[i] / norm;
        }
    } else {
        c[sol.free_indices[0]] = sol.free_radius;
    }
    c
}
