use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::model::{Discretization, FEField, BlockTridiagonal};
use crate::model::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonOptions {
    pub max_iters: usize,
    /// Success when `‖F(u, λ)‖_∞ < tol · max(1, scale)`, `scale` the largest
    /// of `‖A u‖_∞`, `‖f-load‖_∞`, `|λ| ‖g-load‖_∞`.
    pub tol: f64,
    /// Iterates with `‖u‖_∞` below this are reported as collapsing to `u = 0`.
    pub min_amplitude: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iters: 100,
            tol: 1e-11,
            min_amplitude: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonResult {
    pub u: FEField,
    pub iterations: usize,
    pub residual: f64,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn residual_and_scale(d: &Discretization, u: &FEField, lambda: f64) -> Result<(Vec<f64>, f64), ModelError> {
    let loads = d.eval_residual_terms(u)?;
    let au = d.stiffness_apply(u);
    let r: Vec<f64> = (0..d.dim())
        .map(|i| au.as_slice()[i] - loads.f.as_slice()[i] - lambda * loads.g.as_slice()[i])
        .collect();
    let scale = sup(au.as_slice())
        .max(sup(loads.f.as_slice()))
        .max(lambda.abs() * sup(loads.g.as_slice()));
    Ok((r, scale))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dense_solve(j: &BlockTridiagonal, rhs: &[f64]) -> Option<Vec<f64>> {
    let a: DMatrix<f64> = j.to_dense();
    let b = DVector::from_column_slice(rhs);
    let x = a.lu().solve(&b)?;
    x.iter().all(|v| v.is_finite()).then(|| x.iter().cloned().collect())
}

/// Damped Newton for `F(·, λ) = 0` on the open cone. Steps are limited so
/// that no coefficient loses more than 80% of its value, then clamped to the
/// cone floor.
pub fn newton_solve(
    d: &Discretization,
    lambda: f64,
    u0: &FEField,
    opts: &NewtonOptions,
) -> Result<NewtonResult, SolverError> {
    d.check_open_cone(u0)?;
    let mut u = u0.clone();
    let (mut r, mut scale) = residual_and_scale(d, &u, lambda)?;
    for it in 0..=opts.max_iters {
        let res = sup(&r);
        if res < opts.tol * scale.max(1.0) {
            if u.sup_norm() < opts.min_amplitude {
                return Err(SolverError::TrivialCollapse);
            }
            return Ok(NewtonResult {
                u,
                iterations: it,
                residual: res,
            });
        }
        if it == opts.max_iters {
            break;
        }
        if u.sup_norm() < opts.min_amplitude {
            return Err(SolverError::TrivialCollapse);
        }
        let j = d.eval_jacobian(&u, lambda)?;
        let neg: Vec<f64> = r.iter().map(|x| -x).collect();
        let du = dense_solve(&j, &neg).ok_or(SolverError::JacobianSingular)?;
        let mut alpha = u
            .as_slice()
            .iter()
            .zip(&du)
            .filter(|(_, &s)| s < 0.0)
            .map(|(&x, &s)| 0.8 * x / -s)
            .fold(1.0, f64::min);
        let m0 = norm2(&r);
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial: Vec<f64> = u.as_slice().iter().zip(&du).map(|(a, b)| a + alpha * b).collect();
            let floor = crate::model::CONE_FLOOR * sup(&trial);
            for x in &mut trial {
                *x = x.max(floor);
            }
            let ut = d.field(trial)?;
            if let Ok((rt, st)) = residual_and_scale(d, &ut, lambda) {
                if norm2(&rt) <= (1.0 - 1e-4 * alpha) * m0 {
                    u = ut;
                    r = rt;
                    scale = st;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(SolverError::NoConvergence {
                iterations: it,
                residual: res,
            });
        }
    }
    Err(SolverError::NoConvergence {
        iterations: opts.max_iters,
        residual: sup(&r),
    })
}

/// Starts for [`newton_multistart`]: amplitudes `10^{-3}..10^{2.5}` (10
/// log-spaced values) times two shapes, the normalized torsion vector
/// `A_k⁻¹ 1̄` and `sin(πx)`. Returns `2 · ⌈n_starts / 2⌉` fields.
pub fn newton_start_family(d: &Discretization, n_starts: usize) -> Result<Vec<FEField>, SolverError> {
    let per_shape = n_starts.div_ceil(2).max(1);
    let mut omega = d.zero_field();
    for k in 0..d.m() {
        let w = d.stiffness(k).solve(&vec![1.0; d.n()])?;
        omega.component_mut(k).copy_from_slice(&w);
    }
    let omega = omega.scaled(1.0 / omega.sup_norm());
    let sine = FEField::from_fn(d.mesh(), d.m(), |_, x| (std::f64::consts::PI * x).sin());
    let mut out = Vec::with_capacity(2 * per_shape);
    for i in 0..per_shape {
        let e = if per_shape == 1 {
            0.0
        } else {
            -3.0 + 5.5 * i as f64 / (per_shape - 1) as f64
        };
        let a = 10f64.powf(e);
        out.push(omega.scaled(a));
        out.push(sine.scaled(a));
    }
    Ok(out)
}

/// Runs Newton from every start of the family; returns the first success in
/// start order.
pub fn newton_multistart(
    d: &Discretization,
    lambda: f64,
    n_starts: usize,
    opts: &NewtonOptions,
) -> Result<Option<(usize, NewtonResult)>, SolverError> {
    let starts = newton_start_family(d, n_starts)?;
    let results: Vec<Option<NewtonResult>> = starts
        .par_iter()
        .map(|s| newton_solve(d, lambda, s, opts).ok())
        .collect();
    Ok(results.into_iter().enumerate().find_map(|(i, r)| r.map(|r| (i, r))))
}
