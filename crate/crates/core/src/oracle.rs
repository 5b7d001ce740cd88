//! Brute-force and first-order reference solvers for small instances.

use nalgebra::{DMatrix, DVector};

use crate::cones::{member_h, polar_g, ConeH};
use crate::error::{Error, Result};
use crate::primal::CachedProjector;
use crate::rng::Sampler;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleMethod {
    /// Spherical-angle grid with the given angular step.
    Grid { resolution: f64 },
    /// Projected gradient from seeded random starts.
    ProjectedGradient { restarts: usize, max_iter: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult<T: Scalar> {
    /// Best `1/2 |A x|^2` found.
    pub value: T,
    pub x_best: DVector<T>,
    pub method: OracleMethod,
    /// For the grid, `|value - true min| <= bound`; `None` for projected
    /// gradient, which only gives an upper bound.
    pub bound: Option<T>,
}

/// Exhaustive search over the unit circle (`n = 2`) or sphere (`n = 3`).
///
/// Polar angles are stepped by `resolution`, azimuths by
/// `resolution / sin(polar)`, so every point of the sphere lies within
/// `resolution` of a grid point. Only inequality cones are supported: a
/// grid never hits a proper subspace.
pub fn grid_oracle<T: Scalar>(a: &DMatrix<T>, cone: &ConeH<T>, resolution: f64) -> Result<OracleResult<T>> {
    let n = a.ncols();
    if n != 2 && n != 3 {
        return Err(Error::UnsupportedDimension(n));
    }
    if cone.dim() != n {
        return Err(Error::Dimension {
            context: "cone dimension",
            expected: n,
            got: cone.dim(),
        });
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::InvalidInput("grid resolution must be positive".into()));
    }
    if cone.n_eq() > 0 {
        return Err(Error::InvalidInput("grid oracle supports inequality cones only".into()));
    }
    let gram = a.tr_mul(a).map(|v| v.as_f64());
    let normals: Vec<Vec<f64>> = cone
        .ineq
        .column_iter()
        .map(|c| c.iter().map(|v| v.as_f64()).collect())
        .collect();
    let mut best: Option<(f64, [f64; 3])> = None;
    let mut visit = |x: [f64; 3]| {
        let feasible = normals
            .iter()
            .all(|c| c.iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>() <= 0.0);
        if !feasible {
            return;
        }
        let mut v = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += gram[(i, j)] * x[j];
            }
            v += x[i] * row;
        }
        v *= 0.5;
        if best.is_none_or(|(b, _)| v < b) {
            best = Some((v, x));
        }
    };
    let tau = std::f64::consts::TAU;
    if n == 2 {
        let steps = (tau / resolution).ceil() as usize;
        for k in 0..steps {
            let t = tau * k as f64 / steps as f64;
            visit([t.cos(), t.sin(), 0.0]);
        }
    } else {
        let pi = std::f64::consts::PI;
        let rings = (pi / resolution).ceil() as usize;
        for i in 0..=rings {
            let polar = pi * i as f64 / rings as f64;
            let (sp, cp) = polar.sin_cos();
            let count = ((tau * sp / resolution).ceil() as usize).max(1);
            for k in 0..count {
                let az = tau * k as f64 / count as f64;
                let (sa, ca) = az.sin_cos();
                visit([sp * ca, sp * sa, cp]);
            }
        }
    }
    let (value, x) = best.ok_or(Error::EmptyCone)?;
    let lip = gram.clone().symmetric_eigen().eigenvalues.amax();
    Ok(OracleResult {
        value: T::lit(value),
        x_best: DVector::from_fn(n, |i, _| T::lit(x[i])),
        method: OracleMethod::Grid { resolution },
        bound: Some(T::lit(lip * resolution)),
    })
}

/// Projected gradient on `K ∩ sphere`: `x <- normalize(P_K(x - eta A'A x))`
/// with `eta_t = eta_0 / (1 + t/100)` and `eta_0 = 1 / |A'A|_2`. Keeps the
/// best point over all restarts (lowest restart index on ties).
pub fn pg_oracle<T: Scalar>(
    a: &DMatrix<T>,
    cone: &ConeH<T>,
    restarts: usize,
    max_iter: usize,
    seed: u64,
) -> Result<OracleResult<T>> {
    let n = a.ncols();
    if cone.dim() != n {
        return Err(Error::Dimension {
            context: "cone dimension",
            expected: n,
            got: cone.dim(),
        });
    }
    let gram = a.tr_mul(a);
    let lmax = gram.clone().symmetric_eigen().eigenvalues.amax();
    let eta0 = if lmax > T::zero() { T::one() / lmax } else { T::one() };
    let mut proj = CachedProjector::new(&polar_g(cone));
    let mut sampler = Sampler::new(seed);
    let tiny = T::lit(1e-12);
    let value_of = |x: &DVector<T>| T::lit(0.5) * x.dot(&(&gram * x));
    let mut best: Option<(T, DVector<T>)> = None;
    for _ in 0..restarts.max(1) {
        let start: DVector<T> = sampler.gaussian_vector(n);
        let p = proj.project_polar(&start);
        if p.norm() <= tiny * (T::one() + start.norm()) {
            continue;
        }
        let mut x = p.normalize();
        let mut local = (value_of(&x), x.clone());
        for t in 0..max_iter {
            let eta = eta0 / (T::one() + crate::scalar::from_usize::<T>(t) / T::lit(100.0));
            let y = &x - &gram * &x * eta;
            let p = proj.project_polar(&y);
            let norm = p.norm();
            if norm <= tiny {
                break;
            }
            let next = p / norm;
            let step = (&next - &x).norm();
            x = next;
            let v = value_of(&x);
            if v < local.0 {
                local = (v, x.clone());
            }
            if step <= T::lit(1e-14) {
                break;
            }
        }
        if best.as_ref().is_none_or(|(b, _)| local.0 < *b) {
            best = Some(local);
        }
    }
    let (value, x_best) = best.ok_or(Error::EmptyCone)?;
    debug_assert!(member_h(cone, &x_best, T::lit(1e-6)));
    Ok(OracleResult {
        value,
        x_best,
        method: OracleMethod::ProjectedGradient {
            restarts,
            max_iter,
            seed,
        },
        bound: None,
    })
}

/// Minimum of `1/2 sum lambda_i c_i^2 + sum gamma_i c_i` over the unit
/// sphere in dimension 1, 2 or 3 by enumeration (the two signs for `n = 1`).
pub fn sphere_qp_scan(lambdas: &[f64], gammas: &[f64], resolution: f64) -> f64 {
    let n = lambdas.len();
    assert_eq!(n, gammas.len(), "lambdas and gammas must have equal length");
    assert!((1..=3).contains(&n), "scan supports n in 1..=3");
    let f = |c: &[f64]| {
        c.iter()
            .zip(lambdas.iter().zip(gammas))
            .map(|(&ci, (&l, &g))| 0.5 * l * ci * ci + g * ci)
            .sum::<f64>()
    };
    let tau = std::f64::consts::TAU;
    match n {
        1 => f(&[1.0]).min(f(&[-1.0])),
        2 => {
            let steps = (tau / resolution).ceil() as usize;
            (0..steps)
                .map(|k| {
                    let t = tau * k as f64 / steps as f64;
                    f(&[t.cos(), t.sin()])
                })
                .fold(f64::INFINITY, f64::min)
        }
        _ => {
            let pi = std::f64::consts::PI;
            let rings = (pi / resolution).ceil() as usize;
            let mut best = f64::INFINITY;
            for i in 0..=rings {
                let polar = pi * i as f64 / rings as f64;
                let (sp, cp) = polar.sin_cos();
                let count = ((tau * sp / resolution).ceil() as usize).max(1);
                for k in 0..count {
                    let (sa, ca) = (tau * k as f64 / count as f64).sin_cos();
                    best = best.min(f(&[sp * ca, sp * sa, cp]));
                }
            }
            best
        }
    }
}
