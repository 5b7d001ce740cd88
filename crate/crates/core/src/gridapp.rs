//! Sensor-placement demo on quadratic complex measurements.
//!
//! A Hermitian operator `H = H_R + i H_I` is carried to the real block
//! matrix `[[H_R, H_I], [-H_I, H_R]]`. Such blocks form the space `M` of
//! `[[S, K], [-K, S]]` with `S` symmetric and `K` antisymmetric, which has
//! `N^2` independent entries. The coordinate map [`TMap`] lists them with
//! off-diagonal entries scaled by `sqrt(2)`, so that
//! `<T(X), T(Y)> = <X, Y>_F / 2` on `M`.
//!
//! For `v = (Re V; -Im V)` the real form satisfies `Re(V* H V) = v' Hr v`.

use nalgebra::{Complex, DMatrix, DVector};

use crate::cones::ConeH;
use crate::dual::{solve, SolveOptions};
use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel<T: Scalar> {
    pub h_list: Vec<DMatrix<Complex<T>>>,
    pub z: Vec<T>,
    pub noise_sigma: T,
}

impl<T: Scalar> MeasurementModel<T> {
    /// Operators only, with zero measurements and unit noise.
    pub fn from_operators(h_list: Vec<DMatrix<Complex<T>>>) -> Self {
        let z = vec![T::zero(); h_list.len()];
        Self {
            h_list,
            z,
            noise_sigma: T::one(),
        }
    }

    pub fn size(&self) -> usize {
        self.h_list.first().map_or(0, |h| h.nrows())
    }

    pub fn n_measurements(&self) -> usize {
        self.h_list.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.size();
        if self.h_list.is_empty() || n == 0 {
            return Err(Error::InvalidModel("model needs at least one nonempty operator".into()));
        }
        if self.z.len() != self.h_list.len() {
            return Err(Error::InvalidModel("one measurement per operator expected".into()));
        }
        let tol = T::lit(1e-10);
        for (l, h) in self.h_list.iter().enumerate() {
            if h.nrows() != n || h.ncols() != n {
                return Err(Error::InvalidModel(format!("operator {l} is not {n}x{n}")));
            }
            for i in 0..n {
                for j in 0..n {
                    let d = h[(i, j)] - h[(j, i)].conj();
                    let size = h[(i, j)].re.abs() + h[(i, j)].im.abs();
                    if d.re.abs() + d.im.abs() > tol * (T::one() + size) {
                        return Err(Error::InvalidModel(format!("operator {l} is not Hermitian at ({i}, {j})")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    /// Entry `(i, j)`, `i <= j`, of the symmetric block.
    Sym,
    /// Entry `(i, j)`, `i < j`, of the antisymmetric block.
    Anti,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TEntry {
    pub kind: EntryKind,
    pub i: usize,
    pub j: usize,
}

/// Coordinates of `M`: symmetric entries row by row over the upper
/// triangle, then antisymmetric entries likewise.
#[derive(Debug, Clone, PartialEq)]
pub struct TMap {
    pub n: usize,
    pub entries: Vec<TEntry>,
}

impl TMap {
    pub fn new(n: usize) -> Self {
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in i..n {
                entries.push(TEntry { kind: EntryKind::Sym, i, j });
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                entries.push(TEntry { kind: EntryKind::Anti, i, j });
            }
        }
        Self { n, entries }
    }

    pub fn vec_dim(&self) -> usize {
        self.entries.len()
    }

    /// `T(P_M(X))` for any real `2N x 2N` matrix `X`; on `M` this is `T(X)`.
    pub fn apply<T: Scalar>(&self, x: &DMatrix<T>) -> DVector<T> {
        let n = self.n;
        let half = T::lit(0.5);
        let r2 = T::lit(std::f64::consts::SQRT_2);
        let s = |i: usize, j: usize| (x[(i, j)] + x[(n + i, n + j)]) * half;
        let k = |i: usize, j: usize| (x[(i, n + j)] - x[(n + i, j)]) * half;
        DVector::from_iterator(
            self.vec_dim(),
            self.entries.iter().map(|e| match e.kind {
                EntryKind::Sym if e.i == e.j => s(e.i, e.i),
                EntryKind::Sym => (s(e.i, e.j) + s(e.j, e.i)) * half * r2,
                EntryKind::Anti => (k(e.i, e.j) - k(e.j, e.i)) * half * r2,
            }),
        )
    }

    /// The element of `M` with coordinates `w`.
    pub fn inverse<T: Scalar>(&self, w: &DVector<T>) -> DMatrix<T> {
        let n = self.n;
        let inv_r2 = T::one() / T::lit(std::f64::consts::SQRT_2);
        let mut x = DMatrix::zeros(2 * n, 2 * n);
        for (e, &v) in self.entries.iter().zip(w.iter()) {
            let (i, j) = (e.i, e.j);
            match e.kind {
                EntryKind::Sym => {
                    let v = if i == j { v } else { v * inv_r2 };
                    for (a, b) in [(i, j), (j, i)] {
                        x[(a, b)] = v;
                        x[(n + a, n + b)] = v;
                    }
                }
                EntryKind::Anti => {
                    let v = v * inv_r2;
                    x[(i, n + j)] = v;
                    x[(j, n + i)] = -v;
                    x[(n + i, j)] = -v;
                    x[(n + j, i)] = v;
                }
            }
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealifiedModel<T: Scalar> {
    pub hh_list: Vec<DMatrix<T>>,
    /// `T(Hr_l)` for each operator.
    pub h_vecs: Vec<DVector<T>>,
    pub t_map: TMap,
}

impl<T: Scalar> RealifiedModel<T> {
    pub fn size(&self) -> usize {
        self.t_map.n
    }

    pub fn vec_dim(&self) -> usize {
        self.t_map.vec_dim()
    }

    pub fn n_measurements(&self) -> usize {
        self.hh_list.len()
    }
}

/// Real block form `[[Re H, Im H], [-Im H, Re H]]` of a complex matrix.
pub fn realify_matrix<T: Scalar>(h: &DMatrix<Complex<T>>) -> DMatrix<T> {
    let n = h.nrows();
    DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let z = h[(r % n, c % n)];
        match (r < n, c < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => z.im,
            (false, true) => -z.im,
        }
    })
}

pub fn realify<T: Scalar>(model: &MeasurementModel<T>) -> Result<RealifiedModel<T>> {
    model.validate()?;
    let t_map = TMap::new(model.size());
    let hh_list: Vec<DMatrix<T>> = model.h_list.iter().map(realify_matrix).collect();
    let h_vecs = hh_list.iter().map(|h| t_map.apply(h)).collect();
    Ok(RealifiedModel { hh_list, h_vecs, t_map })
}

fn check_delta<T: Scalar>(realified: &RealifiedModel<T>, delta: &[T]) -> Result<()> {
    if delta.len() != realified.n_measurements() {
        return Err(Error::Dimension {
            context: "selection vector",
            expected: realified.n_measurements(),
            got: delta.len(),
        });
    }
    if delta.iter().any(|&d| !(d >= T::zero() && d <= T::one())) {
        return Err(Error::InvalidInput("selection weights must lie in [0, 1]".into()));
    }
    Ok(())
}

/// `2 sum_l delta_l h_l h_l'`.
pub fn information_matrix<T: Scalar>(realified: &RealifiedModel<T>, delta: &[T]) -> Result<DMatrix<T>> {
    check_delta(realified, delta)?;
    let d = realified.vec_dim();
    let mut info = DMatrix::zeros(d, d);
    for (h, &w) in realified.h_vecs.iter().zip(delta) {
        if w != T::zero() {
            info.ger(T::lit(2.0) * w, h, h, T::one());
        }
    }
    Ok(info)
}

/// Default kernel threshold `1e-9 (1 + |W|_2)`.
pub fn default_kernel_tol<T: Scalar>(w0_matrix: &DMatrix<T>) -> T {
    let scale = w0_matrix.clone().symmetric_eigen().eigenvalues.amax();
    T::lit(1e-9) * (T::one() + scale)
}

/// `{tau : T(P_M(u_j u_j'))' tau >= 0}` over an orthonormal kernel basis
/// `u_j` of `T^-1(w0)`. Normals that coincide up to positive scaling are
/// kept once; the kernel vectors `u` and `J u` always produce the same one.
pub fn tangent_cone<T: Scalar>(realified: &RealifiedModel<T>, w0: &DVector<T>, kernel_tol: T) -> Result<ConeH<T>> {
    let d = realified.vec_dim();
    if w0.len() != d {
        return Err(Error::Dimension {
            context: "reference point",
            expected: d,
            got: w0.len(),
        });
    }
    let w = realified.t_map.inverse(w0);
    let eig = w.symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -kernel_tol {
        return Err(Error::NotPsd(min.as_f64()));
    }
    let mut normals: Vec<DVector<T>> = Vec::new();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > kernel_tol {
            continue;
        }
        let u = eig.eigenvectors.column(k);
        let a = realified.t_map.apply(&(u * u.transpose()));
        let a = a.normalize();
        if normals.iter().any(|b| b.dot(&a) > T::one() - T::lit(1e-9)) {
            continue;
        }
        normals.push(a);
    }
    let ineq = DMatrix::from_fn(d, normals.len(), |r, c| -normals[c][r]);
    ConeH::from_inequalities(ineq)
}

/// Symmetric square root `R` with `R' R = M`, negative eigenvalues clamped.
pub fn psd_sqrt<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let eig = m.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|v| v.max(T::zero()).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignValue<T: Scalar> {
    /// `min tau' I tau` over unit `tau` in the tangent cone.
    pub value: T,
    pub certified: bool,
}

/// The design objective on a precomputed tangent cone.
pub fn objective_on_cone<T: Scalar>(
    realified: &RealifiedModel<T>,
    delta: &[T],
    cone: &ConeH<T>,
    opts: &SolveOptions<T>,
) -> Result<DesignValue<T>> {
    let info = information_matrix(realified, delta)?;
    let r = psd_sqrt(&info);
    let res = solve(&r, cone, opts)?;
    Ok(DesignValue {
        value: res.sigma_min * res.sigma_min,
        certified: res.converged,
    })
}

pub fn design_objective<T: Scalar>(
    realified: &RealifiedModel<T>,
    delta: &[T],
    w0: &DVector<T>,
) -> Result<DesignValue<T>> {
    let w = realified.t_map.inverse(w0);
    let cone = tangent_cone(realified, w0, default_kernel_tol(&w))?;
    objective_on_cone(realified, delta, &cone, &SolveOptions::default())
}

/// Forward greedy selection of `budget` measurements; ties go to the lowest
/// index.
pub fn greedy_design<T: Scalar>(realified: &RealifiedModel<T>, w0: &DVector<T>, budget: usize) -> Result<Vec<T>> {
    let l = realified.n_measurements();
    if budget == 0 || budget > l {
        return Err(Error::InvalidInput(format!("budget must lie in 1..={l}")));
    }
    if w0.len() != realified.vec_dim() {
        return Err(Error::Dimension {
            context: "reference point",
            expected: realified.vec_dim(),
            got: w0.len(),
        });
    }
    let w = realified.t_map.inverse(w0);
    let cone = tangent_cone(realified, w0, default_kernel_tol(&w))?;
    let opts = SolveOptions::default();
    let mut delta = vec![T::zero(); l];
    for _ in 0..budget {
        let mut best: Option<(usize, T)> = None;
        for idx in 0..l {
            if delta[idx] == T::one() {
                continue;
            }
            delta[idx] = T::one();
            let v = objective_on_cone(realified, &delta, &cone, &opts)?.value;
            delta[idx] = T::zero();
            let tie = T::lit(1e-12) * (T::one() + v.abs());
            if best.is_none_or(|(_, b)| v > b + tie) {
                best = Some((idx, v));
            }
        }
        let (idx, _) = best.expect("budget does not exceed the number of measurements");
        delta[idx] = T::one();
    }
    Ok(delta)
}
