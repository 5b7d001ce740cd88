//! Rank decisions, bases and least squares on column-pivoted QR.

use nalgebra::{DMatrix, DVector};

use crate::Scalar;

/// `A P = Q R` with the permutation as an explicit matrix and the numerical
/// rank: diagonal entries of `R` above `tol * max(|R_00|, floor)`.
struct PivotedQr<T: Scalar> {
    q: DMatrix<T>,
    r: DMatrix<T>,
    p: DMatrix<T>,
    rank: usize,
}

fn pivoted_qr<T: Scalar>(m: &DMatrix<T>, tol: T, floor: T) -> PivotedQr<T> {
    let qr = m.clone().col_piv_qr();
    let mut p = DMatrix::identity(m.ncols(), m.ncols());
    qr.p().permute_columns(&mut p);
    let (q, r) = (qr.q(), qr.r());
    let k = r.nrows().min(r.ncols());
    let lead = if k > 0 { r[(0, 0)].abs() } else { T::zero() };
    let rank = if lead > T::zero() {
        let cutoff = lead.max(floor) * tol;
        (0..k).take_while(|&i| r[(i, i)].abs() > cutoff).count()
    } else {
        0
    };
    PivotedQr { q, r, p, rank }
}

pub(crate) fn numerical_rank<T: Scalar>(m: &DMatrix<T>, tol: T) -> usize {
    if m.is_empty() {
        return 0;
    }
    pivoted_qr(m, tol, T::zero()).rank
}

pub(crate) fn full_column_rank<T: Scalar>(m: &DMatrix<T>, tol: T) -> bool {
    m.ncols() <= m.nrows() && numerical_rank(m, tol) == m.ncols()
}

/// Orthonormal basis of `range(m)`, cutting at `tol * max(|m|, 1)` so a
/// matrix of roundoff-sized entries has an empty range.
pub(crate) fn range_basis<T: Scalar>(m: &DMatrix<T>, tol: T) -> DMatrix<T> {
    if m.is_empty() {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let f = pivoted_qr(m, tol, T::one());
    f.q.columns(0, f.rank).into_owned()
}

/// Basic least-squares solution of `m x = b` on the leading `rank` pivot
/// columns; other entries are zero.
pub(crate) fn least_squares<T: Scalar>(m: &DMatrix<T>, b: &DVector<T>, tol: T) -> DVector<T> {
    let n = m.ncols();
    if m.is_empty() {
        return DVector::zeros(n);
    }
    let f = pivoted_qr(m, tol, T::zero());
    let mut z = DVector::zeros(n);
    if f.rank > 0 {
        let r11 = f.r.view((0, 0), (f.rank, f.rank)).into_owned();
        let rhs = f.q.columns(0, f.rank).tr_mul(b);
        if let Some(sol) = r11.solve_upper_triangular(&rhs) {
            z.rows_mut(0, f.rank).copy_from(&sol);
        }
    }
    f.p * z
}

/// `(M'M)^-1 M'` for a matrix of full column rank.
pub(crate) fn left_pinv<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    if m.ncols() == 0 {
        return DMatrix::zeros(0, m.nrows());
    }
    let qr = m.clone().qr();
    let r = qr.r();
    let qt = qr.q().transpose();
    r.solve_upper_triangular(&qt)
        .expect("left_pinv requires full column rank")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Sampler;

    #[test]
    fn rank_of_products() {
        let mut s = Sampler::new(1);
        let a: DMatrix<f64> = s.gaussian_matrix::<f64>(6, 2) * s.gaussian_matrix::<f64>(2, 5);
        assert_eq!(numerical_rank(&a, 1e-10), 2);
        assert!(!full_column_rank(&a, 1e-10));
        assert!(full_column_rank(&s.gaussian_matrix::<f64>(6, 3), 1e-10));
        assert!(!full_column_rank(&s.gaussian_matrix::<f64>(2, 3), 1e-10));
    }

    #[test]
    fn basis_spans_range() {
        let mut s = Sampler::new(2);
        let a: DMatrix<f64> = s.gaussian_matrix::<f64>(5, 2) * s.gaussian_matrix::<f64>(2, 4);
        let q = range_basis(&a, 1e-10);
        assert_eq!(q.ncols(), 2);
        assert!((q.tr_mul(&q) - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!((&q * q.tr_mul(&a) - &a).amax() < 1e-12);
    }

    #[test]
    fn projector_row_space() {
        let mut s = Sampler::new(3);
        let c: DMatrix<f64> = s.gaussian_matrix(5, 4);
        let r = DMatrix::identity(5, 5) - &c * left_pinv(&c);
        let q = range_basis(&r.transpose(), 1e-9);
        assert_eq!(q.ncols(), 1);
        assert!(q.tr_mul(&c).amax() < 1e-12);
    }

    #[test]
    fn roundoff_matrix_has_empty_range() {
        let m = DMatrix::from_element(4, 4, 1e-15);
        assert_eq!(range_basis(&m, 1e-9).ncols(), 0);
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let mut s = Sampler::new(4);
        let a: DMatrix<f64> = s.gaussian_matrix(7, 3);
        let b = s.gaussian_vector::<f64>(7);
        let x = least_squares(&a, &b, 1e-12);
        let expected = (a.tr_mul(&a)).cholesky().unwrap().solve(&a.tr_mul(&b));
        assert!((x - expected).amax() < 1e-10);
    }

    #[test]
    fn least_squares_on_singular_system_is_consistent() {
        let mut s = Sampler::new(5);
        let g: DMatrix<f64> = s.gaussian_matrix(4, 2);
        let q = &g * g.transpose();
        let b = &q * s.gaussian_vector::<f64>(4);
        let x = least_squares(&q, &b, 1e-12);
        assert!((&q * x - b).amax() < 1e-10);
    }

    #[test]
    fn left_pinv_is_left_inverse() {
        let mut s = Sampler::new(6);
        let a: DMatrix<f64> = s.gaussian_matrix(6, 3);
        assert!((left_pinv(&a) * &a - DMatrix::identity(3, 3)).amax() < 1e-12);
    }
}
