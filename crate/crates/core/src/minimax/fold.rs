//! Newton's method on the fold system
//! `F(u, λ) = 0`, `J(u, λ)ᵀ v = 0`, `c·v = 1`.

use nalgebra::{DMatrix, DVector};

use super::SolverError;
use crate::model::{Discretization, FEField};

const MAX_ITERS: usize = 60;
/// Success threshold on the scaled merit.
const MERIT_TOL: f64 = 1e-11;

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

struct Eval {
    r1: Vec<f64>,
    r2: Vec<f64>,
    r3: f64,
    merit: f64,
}

fn evaluate(d: &Discretization, u: &FEField, v: &FEField, lambda: f64, c: &[f64]) -> Option<Eval> {
    let loads = d.eval_residual_terms(u).ok()?;
    let au = d.stiffness_apply(u);
    let r1: Vec<f64> = (0..d.dim())
        .map(|i| au.as_slice()[i] - loads.f.as_slice()[i] - lambda * loads.g.as_slice()[i])
        .collect();
    let s1 = sup(au.as_slice())
        .max(sup(loads.f.as_slice()))
        .max(lambda.abs() * sup(loads.g.as_slice()));
    let j = d.eval_jacobian(u, lambda).ok()?;
    let r2 = j.tr_mul_vec(v.as_slice());
    let s2 = sup(&j.abs_tr_mul_vec(v.as_slice()));
    let r3 = v.as_slice().iter().zip(c).map(|(a, b)| a * b).sum::<f64>() - 1.0;
    let merit = (sup(&r1) / s1.max(f64::MIN_POSITIVE))
        .max(sup(&r2) / s2.max(f64::MIN_POSITIVE))
        .max(r3.abs());
    merit.is_finite().then_some(Eval { r1, r2, r3, merit })
}

/// Largest `α ≤ 1` keeping `u + α du ≥ 0.2 u`.
fn cone_step(u: &[f64], du: &[f64]) -> f64 {
    u.iter()
        .zip(du)
        .filter(|(_, &s)| s < 0.0)
        .map(|(&x, &s)| 0.8 * x / -s)
        .fold(1.0, f64::min)
}

/// Refines `(u0, v0, λ0)` to a nondegenerate solution of the fold system.
/// Returns `(u, v, λ, iterations)`; `v` is normalized by `c·v = 1` with
/// `c = v0 / |v0|²`.
pub fn polish_fold(
    d: &Discretization,
    u0: &FEField,
    v0: &FEField,
    lambda0: f64,
) -> Result<(FEField, FEField, f64, usize), SolverError> {
    let n = d.dim();
    let vv = v0.dot(v0);
    if !(vv > 0.0) {
        return Err(SolverError::AllZeroMultipliers);
    }
    let c: Vec<f64> = v0.as_slice().iter().map(|x| x / vv).collect();
    let mut u = u0.clone();
    let mut v = v0.clone();
    let mut lambda = lambda0;
    let mut cur = evaluate(d, &u, &v, lambda, &c).ok_or(SolverError::JacobianSingular)?;
    let mut it = 0;
    while it < MAX_ITERS && cur.merit > 1e-15 {
        it += 1;
        let (fu, gu) = d.jacobian_parts(&u)?;
        let j = d.combine_jacobian(&fu, &gu, lambda).to_dense();
        let h = d.adjoint_hessian(&u, &v, lambda)?.to_dense();
        let g = d.eval_residual_terms(&u)?.g;
        let guv = gu.mul_vec(v.as_slice());
        let dim = 2 * n + 1;
        let mut k = DMatrix::zeros(dim, dim);
        k.view_mut((0, 0), (n, n)).copy_from(&j);
        k.view_mut((n, 0), (n, n)).copy_from(&h);
        k.view_mut((n, n), (n, n)).copy_from(&j.transpose());
        for i in 0..n {
            k[(i, 2 * n)] = -g.as_slice()[i];
            k[(n + i, 2 * n)] = -guv[i];
            k[(2 * n, n + i)] = c[i];
        }
        let mut rhs = DVector::zeros(dim);
        for i in 0..n {
            rhs[i] = -cur.r1[i];
            rhs[n + i] = -cur.r2[i];
        }
        rhs[2 * n] = -cur.r3;
        let step = k.lu().solve(&rhs).ok_or(SolverError::JacobianSingular)?;
        let du: Vec<f64> = step.rows(0, n).iter().cloned().collect();
        let mut alpha = cone_step(u.as_slice(), &du);
        let mut accepted = None;
        for _ in 0..30 {
            let ut = d.field(u.as_slice().iter().zip(&du).map(|(a, b)| a + alpha * b).collect())?;
            let vt = d.field((0..n).map(|i| v.as_slice()[i] + alpha * step[n + i]).collect())?;
            let lt = lambda + alpha * step[2 * n];
            if let Some(e) = evaluate(d, &ut, &vt, lt, &c) {
                if e.merit < cur.merit {
                    accepted = Some((ut, vt, lt, e));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((ut, vt, lt, e)) => {
                u = ut;
                v = vt;
                lambda = lt;
                cur = e;
            }
            None => break,
        }
    }
    if cur.merit < MERIT_TOL {
        Ok((u, v, lambda, it))
    } else {
        Err(SolverError::NoConvergence {
            iterations: it,
            residual: cur.merit,
        })
    }
}

/// Linear case `f ≡ 0`, `g = a t`: Newton on `(A - λM) u = 0`, `c·u = 1`,
/// then the left null vector from a bordered solve.
pub fn polish_linear(
    d: &Discretization,
    u0: &FEField,
    lambda0: f64,
) -> Result<(FEField, FEField, f64, usize), SolverError> {
    let n = d.dim();
    let uu = u0.dot(u0);
    if !(uu > 0.0) {
        return Err(SolverError::TrivialCollapse);
    }
    let c: Vec<f64> = u0.as_slice().iter().map(|x| x / uu).collect();
    let (fu, gu) = d.jacobian_parts(u0)?;
    let mut u = u0.clone();
    let mut lambda = lambda0;
    let mut it = 0;
    let scale_of = |u: &FEField, lambda: f64| {
        let au = d.stiffness_apply(u);
        let mu = gu.mul_vec(u.as_slice());
        sup(au.as_slice()).max(lambda.abs() * sup(&mu))
    };
    loop {
        let j = d.combine_jacobian(&fu, &gu, lambda);
        let r1 = j.mul_vec(u.as_slice());
        let r2 = u.as_slice().iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() - 1.0;
        let merit = (sup(&r1) / scale_of(&u, lambda)).max(r2.abs());
        if merit < 1e-15 || it >= MAX_ITERS {
            if merit >= MERIT_TOL {
                return Err(SolverError::NoConvergence {
                    iterations: it,
                    residual: merit,
                });
            }
            break;
        }
        it += 1;
        let jd = j.to_dense();
        let mu = gu.mul_vec(u.as_slice());
        let mut k = DMatrix::zeros(n + 1, n + 1);
        k.view_mut((0, 0), (n, n)).copy_from(&jd);
        for i in 0..n {
            k[(i, n)] = -mu[i];
            k[(n, i)] = c[i];
        }
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            rhs[i] = -r1[i];
        }
        rhs[n] = -r2;
        let step = k.lu().solve(&rhs).ok_or(SolverError::JacobianSingular)?;
        let new_u = d.field((0..n).map(|i| u.as_slice()[i] + step[i]).collect())?;
        let new_lambda = lambda + step[n];
        let nj = d.combine_jacobian(&fu, &gu, new_lambda);
        let nr1 = nj.mul_vec(new_u.as_slice());
        let nr2 = new_u.as_slice().iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() - 1.0;
        let nmerit = (sup(&nr1) / scale_of(&new_u, new_lambda)).max(nr2.abs());
        if !(nmerit < merit) {
            if merit < MERIT_TOL {
                break;
            }
            return Err(SolverError::NoConvergence {
                iterations: it,
                residual: merit,
            });
        }
        u = new_u;
        lambda = new_lambda;
    }
    // left null vector: [Jᵀ c; cᵀ 0] [v; s] = [0; 1]
    let jt = d.combine_jacobian(&fu, &gu, lambda).to_dense().transpose();
    let mut k = DMatrix::zeros(n + 1, n + 1);
    k.view_mut((0, 0), (n, n)).copy_from(&jt);
    for i in 0..n {
        k[(i, n)] = c[i];
        k[(n, i)] = c[i];
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let sol = k.lu().solve(&rhs).ok_or(SolverError::JacobianSingular)?;
    let v = d.field((0..n).map(|i| sol[i]).collect())?;
    Ok((u, v, lambda, it))
}
