//! Polyhedral cones in half-space form `{x : C'x <= 0, B'x = 0}` and
//! generator form `{V l : l >= 0}`, with polar cones in both forms.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, left_pinv, range_basis};
use crate::nnqp::solve_nnqp;
use crate::Scalar;

/// `{x : ineq' x <= 0, eq' x = 0}`; normals are stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeH<T: Scalar> {
    pub ineq: DMatrix<T>,
    pub eq: DMatrix<T>,
}

/// `{gens * l : l >= 0}`. No generators means the cone `{0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeG<T: Scalar> {
    pub gens: DMatrix<T>,
}

/// Left inverses with `g_c C = I`, `g_b B = I`, `g_c B = 0` and `g_b C = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeftInverses<T: Scalar> {
    pub g_c: DMatrix<T>,
    pub g_b: DMatrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection<T: Scalar> {
    pub point: DVector<T>,
    pub coeffs: DVector<T>,
    /// False when the NNLS iteration cap was hit; `point` is then the best
    /// iterate.
    pub converged: bool,
}

const RANK_TOL: f64 = 1e-10;

impl<T: Scalar> ConeH<T> {
    pub fn new(ineq: DMatrix<T>, eq: DMatrix<T>) -> Result<Self> {
        if ineq.nrows() != eq.nrows() {
            return Err(Error::Dimension {
                context: "equality normals",
                expected: ineq.nrows(),
                got: eq.nrows(),
            });
        }
        if ineq.iter().chain(eq.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("cone normals must be finite".into()));
        }
        Ok(Self { ineq, eq })
    }

    pub fn whole_space(n: usize) -> Self {
        Self {
            ineq: DMatrix::zeros(n, 0),
            eq: DMatrix::zeros(n, 0),
        }
    }

    pub fn from_inequalities(ineq: DMatrix<T>) -> Result<Self> {
        let n = ineq.nrows();
        Self::new(ineq, DMatrix::zeros(n, 0))
    }

    /// `{x >= 0}`, written as `-I x <= 0`.
    pub fn nonnegative_orthant(n: usize) -> Self {
        Self {
            ineq: -DMatrix::identity(n, n),
            eq: DMatrix::zeros(n, 0),
        }
    }

    pub fn dim(&self) -> usize {
        self.ineq.nrows()
    }

    pub fn n_ineq(&self) -> usize {
        self.ineq.ncols()
    }

    pub fn n_eq(&self) -> usize {
        self.eq.ncols()
    }

    pub fn is_whole_space(&self) -> bool {
        self.n_ineq() == 0 && self.n_eq() == 0
    }

    /// Largest constraint violation `max(max C'x, |B'x|_inf, 0)`.
    pub fn violation(&self, x: &DVector<T>) -> T {
        let ineq = self.ineq.tr_mul(x).iter().fold(T::zero(), |m, &v| m.max(v));
        let eq = self.eq.tr_mul(x).iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        ineq.max(eq)
    }

    /// Default boundary tolerance `1e-9 (1 + |x|)`.
    pub fn default_tol(x: &DVector<T>) -> T {
        T::lit(1e-9) * (T::one() + x.norm())
    }
}

impl<T: Scalar> ConeG<T> {
    pub fn new(gens: DMatrix<T>) -> Self {
        Self { gens }
    }

    pub fn dim(&self) -> usize {
        self.gens.nrows()
    }

    pub fn n_gens(&self) -> usize {
        self.gens.ncols()
    }
}

fn full_column_rank<T: Scalar>(m: &DMatrix<T>) -> bool {
    linalg::full_column_rank(m, T::lit(RANK_TOL))
}

/// Orthogonal projector onto the complement of `range(M)`.
fn complement_projector<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let n = m.nrows();
    if m.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    DMatrix::identity(n, n) - m * left_pinv(m)
}

/// Builds left inverses of the normals. The inequality block uses
/// `g_c = (C'DC)^-1 C'D` with `D` the projector onto `range(B)^perp`, and
/// the equality block is built symmetrically against `range(C)^perp`.
pub fn left_inverses<T: Scalar>(cone: &ConeH<T>) -> Result<LeftInverses<T>> {
    let c = &cone.ineq;
    let b = &cone.eq;
    if !full_column_rank(c) || !full_column_rank(b) {
        return Err(Error::Representation(
            "cone representation not reducible; remove redundant constraints",
        ));
    }
    let (g_c, g_b) = if b.ncols() == 0 {
        (left_pinv(c), DMatrix::zeros(0, c.nrows()))
    } else if c.ncols() == 0 {
        (DMatrix::zeros(0, b.nrows()), left_pinv(b))
    } else {
        let dc = complement_projector(b) * c;
        let eb = complement_projector(c) * b;
        if !full_column_rank(&dc) || !full_column_rank(&eb) {
            return Err(Error::Representation(
                "inequality normals not independent modulo equalities",
            ));
        }
        (left_pinv(&dc), left_pinv(&eb))
    };
    Ok(LeftInverses { g_c, g_b })
}

impl<T: Scalar> LeftInverses<T> {
    /// Max-norm residuals of `g_c C - I`, `g_b B - I`, `g_c B`, `g_b C`.
    pub fn residuals(&self, cone: &ConeH<T>) -> [T; 4] {
        let amax = |m: DMatrix<T>| if m.is_empty() { T::zero() } else { m.amax() };
        let m = cone.n_ineq();
        let r = cone.n_eq();
        [
            amax(&self.g_c * &cone.ineq - DMatrix::identity(m, m)),
            amax(&self.g_b * &cone.eq - DMatrix::identity(r, r)),
            amax(&self.g_c * &cone.eq),
            amax(&self.g_b * &cone.ineq),
        ]
    }
}

/// Polar cone in half-space form, `{y : -g_c y <= 0, (I - C g_c - B g_b) y = 0}`.
/// The equality block is returned as an orthonormal basis of the row space
/// of `I - C g_c - B g_b`, so the result is again a valid input here.
pub fn polar_h<T: Scalar>(cone: &ConeH<T>) -> Result<ConeH<T>> {
    let n = cone.dim();
    let li = left_inverses(cone)?;
    let ineq = -li.g_c.transpose();
    let residual = DMatrix::identity(n, n) - &cone.ineq * &li.g_c - &cone.eq * &li.g_b;
    let eq = row_space_basis(&residual);
    ConeH::new(ineq, eq)
}

fn row_space_basis<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    range_basis(&m.transpose(), T::lit(1e-9))
}

/// Polar cone as generators `[C, B, -B]`.
pub fn polar_g<T: Scalar>(cone: &ConeH<T>) -> ConeG<T> {
    let n = cone.dim();
    let m = cone.n_ineq();
    let r = cone.n_eq();
    let mut gens = DMatrix::zeros(n, m + 2 * r);
    gens.columns_mut(0, m).copy_from(&cone.ineq);
    gens.columns_mut(m, r).copy_from(&cone.eq);
    gens.columns_mut(m + r, r).copy_from(&(-&cone.eq));
    ConeG { gens }
}

pub fn member_h<T: Scalar>(cone: &ConeH<T>, x: &DVector<T>, tol: T) -> bool {
    cone.violation(x) <= tol
}

/// Accepts `y` when the NNLS fit by the generators has residual at most
/// `tol (1 + |y|)`.
pub fn member_g<T: Scalar>(cone: &ConeG<T>, y: &DVector<T>, tol: T) -> bool {
    let p = project_g(cone, y);
    (y - &p.point).norm() <= tol * (T::one() + y.norm())
}

/// Euclidean projection onto a generator cone via NNLS.
pub fn project_g<T: Scalar>(cone: &ConeG<T>, y: &DVector<T>) -> Projection<T> {
    let k = cone.n_gens();
    let n = cone.dim();
    if k == 0 {
        return Projection {
            point: DVector::zeros(n),
            coeffs: DVector::zeros(0),
            converged: true,
        };
    }
    let q = cone.gens.tr_mul(&cone.gens);
    let b = cone.gens.tr_mul(y);
    let tol = T::lit(1e-10) * (T::one() + b.amax());
    let out = solve_nnqp(&q, &b, None, tol, 10 * k * n.max(1) + 100);
    Projection {
        point: &cone.gens * &out.solution,
        coeffs: out.solution,
        converged: out.converged,
    }
}

/// Projection onto `K` itself through the Moreau decomposition
/// `y = P_K(y) + P_{K°}(y)`, using the generators of the polar.
pub fn project_h<T: Scalar>(polar: &ConeG<T>, y: &DVector<T>) -> DVector<T> {
    y - project_g(polar, y).point
}
