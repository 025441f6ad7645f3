//! Pseudo-arclength continuation of the positive branch in `λ`, used as an
//! independent estimate of the fold.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{newton_solve, newton_start_family, NewtonOptions, SolverError};
use crate::model::{Discretization, FEField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub lambda: f64,
    pub u: FEField,
    /// Sign of the smallest eigenvalue of `(J + Jᵀ)/2`.
    pub stability_indicator: i8,
    pub arclength: f64,
}

/// Step sizes are fractions of `lambda_max_guess`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContinuationOptions {
    pub ds_init: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_points: usize,
    pub max_corrector_iters: usize,
    /// Points kept past the fold.
    pub points_after_fold: usize,
    /// Corrector tolerance, relative like [`NewtonOptions::tol`].
    pub tol: f64,
    /// Bisection steps refining the fold.
    pub bisection_steps: usize,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            ds_init: 0.02,
            ds_min: 1e-9,
            ds_max: 0.25,
            max_points: 2000,
            max_corrector_iters: 12,
            points_after_fold: 5,
            tol: 1e-11,
            bisection_steps: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    FoldFound,
    /// Linear problems and branches that never turn.
    NoTurningPoint,
    StepCollapse,
    MaxPoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationResult {
    pub points: Vec<BranchPoint>,
    pub lambda_fold: Option<f64>,
    pub u_fold: Option<FEField>,
    pub termination: Termination,
    pub message: String,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

struct Ctx<'a> {
    d: &'a Discretization,
    w: f64,
    opts: &'a ContinuationOptions,
}

#[derive(Clone)]
struct State {
    u: Vec<f64>,
    lambda: f64,
    /// Unit tangent in the weighted norm, `τ_λ` last.
    tangent: Vec<f64>,
}

impl Ctx<'_> {
    fn bordered(&self, u: &[f64], lambda: f64, t: &[f64]) -> Option<(DMatrix<f64>, Vec<f64>, f64)> {
        let d = self.d;
        let n = d.dim();
        let uf = d.field(u.to_vec()).ok()?;
        let loads = d.eval_residual_terms(&uf).ok()?;
        let au = d.stiffness_apply(&uf);
        let r: Vec<f64> = (0..n)
            .map(|i| au.as_slice()[i] - loads.f.as_slice()[i] - lambda * loads.g.as_slice()[i])
            .collect();
        let scale = sup(au.as_slice()).max(sup(loads.f.as_slice())).max(lambda.abs() * sup(loads.g.as_slice()));
        let j = d.eval_jacobian(&uf, lambda).ok()?.to_dense();
        let mut k = DMatrix::zeros(n + 1, n + 1);
        k.view_mut((0, 0), (n, n)).copy_from(&j);
        for i in 0..n {
            k[(i, n)] = -loads.g.as_slice()[i];
            k[(n, i)] = self.w * t[i];
        }
        k[(n, n)] = t[n];
        Some((k, r, scale))
    }

    fn normalize(&self, t: &mut [f64]) {
        let n = t.len() - 1;
        let s = (self.w * t[..n].iter().map(|x| x * x).sum::<f64>() + t[n] * t[n]).sqrt();
        for x in t.iter_mut() {
            *x /= s;
        }
    }

    /// Tangent at `(u, λ)` oriented along `t_old`.
    fn tangent(&self, u: &[f64], lambda: f64, t_old: &[f64]) -> Option<Vec<f64>> {
        let (k, _, _) = self.bordered(u, lambda, t_old)?;
        let n = u.len();
        let mut rhs = DVector::zeros(n + 1);
        rhs[n] = 1.0;
        let t = k.lu().solve(&rhs)?;
        let mut t: Vec<f64> = t.iter().cloned().collect();
        if !t.iter().all(|x| x.is_finite()) {
            return None;
        }
        self.normalize(&mut t);
        Some(t)
    }

    /// Predictor `ds` along the tangent of `s`, then Newton on the
    /// hyperplane through the predicted point.
    fn step(&self, s: &State, ds: f64) -> Option<(State, usize)> {
        let n = s.u.len();
        let mut u: Vec<f64> = (0..n).map(|i| s.u[i] + ds * s.tangent[i]).collect();
        let mut lambda = s.lambda + ds * s.tangent[n];
        let up = u.clone();
        let lp = lambda;
        for it in 0..=self.opts.max_corrector_iters {
            if u.iter().any(|&x| !(x > 0.0)) {
                return None;
            }
            let (k, r, scale) = self.bordered(&u, lambda, &s.tangent)?;
            let hyper: f64 = self.w * (0..n).map(|i| s.tangent[i] * (u[i] - up[i])).sum::<f64>()
                + s.tangent[n] * (lambda - lp);
            if sup(&r) < self.opts.tol * scale.max(1.0) && hyper.abs() < 1e-12 * (1.0 + ds.abs()) {
                let tangent = self.tangent(&u, lambda, &s.tangent)?;
                return Some((State { u, lambda, tangent }, it));
            }
            if it == self.opts.max_corrector_iters {
                break;
            }
            let mut rhs = DVector::zeros(n + 1);
            for i in 0..n {
                rhs[i] = -r[i];
            }
            rhs[n] = -hyper;
            let dx = k.lu().solve(&rhs)?;
            for i in 0..n {
                u[i] += dx[i];
            }
            lambda += dx[n];
        }
        None
    }

    fn point(&self, s: &State, arclength: f64) -> BranchPoint {
        let d = self.d;
        let uf = d.field(s.u.clone()).expect("shape");
        let stability_indicator = d
            .eval_jacobian(&uf, s.lambda)
            .ok()
            .map(|j| {
                let j = j.to_dense();
                let sym = (&j + j.transpose()) * 0.5;
                let e = SymmetricEigen::new(sym).eigenvalues.min();
                if e > 0.0 {
                    1
                } else if e < 0.0 {
                    -1
                } else {
                    0
                }
            })
            .unwrap_or(0);
        BranchPoint {
            lambda: s.lambda,
            u: uf,
            stability_indicator,
            arclength,
        }
    }
}

/// Continues the lower branch from `λ = 0.1 · lambda_max_guess` until `dλ/ds`
/// changes sign, then bisects on the step length to locate the fold.
pub fn continuation_sweep(
    d: &Discretization,
    lambda_max_guess: f64,
    opts: &ContinuationOptions,
) -> Result<ContinuationResult, SolverError> {
    if d.spec().is_linear_diagnostic() {
        return Ok(ContinuationResult {
            points: Vec::new(),
            lambda_fold: None,
            u_fold: None,
            termination: Termination::NoTurningPoint,
            message: "no turning point: the problem is linear, its positive solutions form a ray at the eigenvalue"
                .into(),
        });
    }
    if !(lambda_max_guess > 0.0) {
        return Err(SolverError::Unsupported("lambda_max_guess must be positive".into()));
    }
    let scale = lambda_max_guess;
    let lambda0 = 0.1 * scale;
    let nopts = NewtonOptions::default();
    let start = newton_start_family(d, 20)?
        .iter()
        .filter_map(|s| newton_solve(d, lambda0, s, &nopts).ok())
        .min_by(|a, b| a.u.sup_norm().total_cmp(&b.u.sup_norm()))
        .ok_or(SolverError::NoConvergence {
            iterations: nopts.max_iters,
            residual: f64::NAN,
        })?;

    let n = d.dim();
    let ctx = Ctx {
        d,
        w: 1.0 / n as f64,
        opts,
    };
    let mut t0 = vec![0.0; n + 1];
    t0[n] = 1.0;
    let u0 = start.u.into_vec();
    let tangent = ctx.tangent(&u0, lambda0, &t0).ok_or(SolverError::JacobianSingular)?;
    let mut cur = State {
        u: u0,
        lambda: lambda0,
        tangent,
    };
    let mut arclength = 0.0;
    let mut points = vec![ctx.point(&cur, 0.0)];
    let mut ds = opts.ds_init * scale;
    let ds_min = opts.ds_min * scale;
    let ds_max = opts.ds_max * scale;
    let mut fold: Option<(f64, FEField)> = None;
    let mut after = 0usize;

    while points.len() < opts.max_points {
        let Some((next, iters)) = ctx.step(&cur, ds) else {
            ds *= 0.5;
            if ds < ds_min {
                let message = format!("step size collapsed below {ds_min:e} after {} points", points.len());
                return Ok(ContinuationResult {
                    points,
                    lambda_fold: fold.as_ref().map(|f| f.0),
                    u_fold: fold.map(|f| f.1),
                    termination: if after > 0 { Termination::FoldFound } else { Termination::StepCollapse },
                    message,
                });
            }
            continue;
        };
        if fold.is_none() && cur.tangent[n] > 0.0 && next.tangent[n] <= 0.0 {
            // bisection on the step length from `cur`
            let (mut lo, mut hi) = (0.0, ds);
            let mut best = next.clone();
            for _ in 0..opts.bisection_steps {
                let mid = 0.5 * (lo + hi);
                match ctx.step(&cur, mid) {
                    Some((s, _)) => {
                        if s.tangent[n] > 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                        if s.tangent[n].abs() < best.tangent[n].abs() {
                            best = s;
                        }
                    }
                    None => break,
                }
                if hi - lo < 1e-14 * scale {
                    break;
                }
            }
            fold = Some((best.lambda, d.field(best.u.clone())?));
        }
        arclength += ds;
        points.push(ctx.point(&next, arclength));
        cur = next;
        if fold.is_some() {
            after += 1;
            if after >= opts.points_after_fold {
                break;
            }
        }
        if iters <= 4 {
            ds = (1.5 * ds).min(ds_max);
        }
        if cur.lambda > 100.0 * scale {
            break;
        }
    }
    let (termination, message) = match (&fold, points.len() >= opts.max_points) {
        (Some(_), _) => (Termination::FoldFound, "fold located by a sign change of dλ/ds".to_string()),
        (None, true) => (Termination::MaxPoints, "point limit reached before a turning point".to_string()),
        (None, false) => (Termination::NoTurningPoint, "branch left the search range without turning".to_string()),
    };
    Ok(ContinuationResult {
        points,
        lambda_fold: fold.as_ref().map(|f| f.0),
        u_fold: fold.map(|f| f.1),
        termination,
        message,
    })
}
