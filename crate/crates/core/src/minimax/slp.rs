//! Trust-region sequential linear programming for `max_u min_i R(u, η_i)`.
//!
//! Steps are multiplicative, `δu_j = u_j (p_j - q_j)` with
//! `0 ≤ p_j ≤ Δ` and `0 ≤ q_j ≤ min(Δ, 0.9)`, which keeps every iterate
//! strictly inside the cone. The LP at `u` with value `λ = λ_r(u)` reads
//!
//! ```text
//! max δ  s.t.  δ - Σ_j ∂_j R_i u_j (p_j - q_j) ≤ R_i - λ   for all i
//! ```

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    build_certificate, polish_fold, polish_linear, BoundedLp, LpStatus, MinimaxCertificate, SolverError,
    SolverOptions,
};
use crate::model::{Discretization, FEField, CONE_FLOOR};
use crate::rayleigh::{inner_min, linearize};

const RADIUS_MAX: f64 = 2.0;
const RADIUS_MIN: f64 = 1e-10;
/// Iterations without relative improvement above `1e-15` before stopping.
const STAGNATION: usize = 40;
/// Amplitude beyond which continued ascent is reported as unbounded.
const AMPLITUDE_MAX: f64 = 1e12;

/// Per-iteration history of one SLP run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlpTrace {
    pub lambda: Vec<f64>,
    pub radius: Vec<f64>,
    pub predicted: Vec<f64>,
    pub actual: Vec<f64>,
    pub accepted: Vec<bool>,
    pub termination: String,
}

fn torsion_shape(d: &Discretization) -> Result<FEField, SolverError> {
    let mut omega = d.zero_field();
    for k in 0..d.m() {
        let w = d.stiffness(k).solve(&vec![1.0; d.n()])?;
        omega.component_mut(k).copy_from_slice(&w);
    }
    let s = omega.sup_norm();
    Ok(omega.scaled(1.0 / s))
}

/// `t₀ ω` with `A_k ω^k = 1̄` (scaled to `‖ω‖_∞ = 1`) and `t₀` the best point
/// of `t ↦ λ_r(t ω)` on a log grid over `[1e-4, 1e4]`.
pub fn default_start(d: &Discretization, opts: &SolverOptions) -> Result<FEField, SolverError> {
    let omega = torsion_shape(d)?;
    let g = opts.start_grid.max(2);
    let mut best: Option<(f64, f64)> = None;
    for i in 0..g {
        let t = 10f64.powf(-4.0 + 8.0 * i as f64 / (g - 1) as f64);
        if let Ok(r) = inner_min(d, &omega.scaled(t)) {
            if r.value.is_finite() && best.is_none_or(|(_, b)| r.value > b) {
                best = Some((t, r.value));
            }
        }
    }
    let (t, _) = best.ok_or_else(|| SolverError::Unsupported("no admissible amplitude on the start grid".into()))?;
    Ok(omega.scaled(t))
}

/// The default start with each coefficient multiplied by `e^{0.7 ξ}`,
/// `ξ ~ U[-1, 1]`, drawn from a ChaCha8 stream seeded with `seed + index`.
pub fn random_start(d: &Discretization, opts: &SolverOptions, index: u64) -> Result<FEField, SolverError> {
    let base = default_start(d, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(index));
    let data = base
        .as_slice()
        .iter()
        .map(|&x| x * (0.7 * rng.gen_range(-1.0..=1.0f64)).exp())
        .collect();
    Ok(d.field(data)?)
}

/// Lowest index wins among the smallest singular values.
fn svd_left_null(d: &Discretization, u: &FEField, lambda: f64) -> Option<FEField> {
    let j: DMatrix<f64> = d.eval_jacobian(u, lambda).ok()?.to_dense();
    let svd = j.svd(true, false);
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let col = svd.u.as_ref()?.column(imin);
    let sign = if col.sum() < 0.0 { -1.0 } else { 1.0 };
    d.field(col.iter().map(|x| (sign * x).max(0.0)).collect()).ok()
}

struct LpStep {
    du: Vec<f64>,
    predicted: f64,
    duals: Vec<f64>,
    at_bound: bool,
}

fn solve_subproblem(
    d: &Discretization,
    u: &FEField,
    lin: &crate::rayleigh::Linearization,
    radius: f64,
    lp_max_iters: usize,
) -> Option<LpStep> {
    let n = d.dim();
    let lambda = lin.inner.value;
    let cols = 2 * n + 1;
    let mut a = vec![0.0; n * cols];
    let us = u.as_slice();
    for (i, grad) in lin.gradients.iter().enumerate() {
        let row = &mut a[i * cols..(i + 1) * cols];
        for &(j, g) in grad {
            row[j] = -g * us[j];
            row[n + j] = g * us[j];
        }
        row[2 * n] = 1.0;
    }
    let b: Vec<f64> = lin.inner.quotients.iter().map(|r| (r - lambda).max(0.0)).collect();
    let mut c = vec![0.0; cols];
    c[2 * n] = 1.0;
    let mut upper = vec![radius; 2 * n];
    for q in &mut upper[n..] {
        *q = radius.min(0.9);
    }
    upper.push(f64::INFINITY);
    let lp = BoundedLp { rows: n, cols, a, b, c, upper };
    let sol = lp.solve(lp_max_iters);
    if sol.status != LpStatus::Optimal {
        return None;
    }
    let du: Vec<f64> = (0..n).map(|j| us[j] * (sol.x[j] - sol.x[n + j])).collect();
    let at_bound = (0..n).any(|j| sol.x[j] >= radius * (1.0 - 1e-9) || sol.x[n + j] >= radius.min(0.9) * (1.0 - 1e-9));
    Some(LpStep {
        du,
        predicted: sol.x[2 * n],
        duals: sol.duals,
        at_bound,
    })
}

fn clamp_to_floor(mut v: Vec<f64>) -> Vec<f64> {
    let floor = CONE_FLOOR * v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    for x in &mut v {
        *x = x.max(floor);
    }
    v
}

/// Maximizes `λ_r(u) = min_i R(u, η_i)` from `u0` (or [`default_start`]),
/// then refines the result by Newton's method on the fold system and
/// returns a verified certificate.
pub fn maximize(d: &Discretization, u0: Option<&FEField>, opts: &SolverOptions) -> Result<MinimaxCertificate, SolverError> {
    maximize_with_trace(d, u0, opts).map(|(c, _)| c)
}

/// [`maximize`] together with the iteration history.
pub fn maximize_with_trace(
    d: &Discretization,
    u0: Option<&FEField>,
    opts: &SolverOptions,
) -> Result<(MinimaxCertificate, SlpTrace), SolverError> {
    let spec = d.spec();
    let linear = spec.is_linear_diagnostic();
    let q = spec.q();
    if !linear && !(q > 0.0 && q < 1.0) {
        return Err(SolverError::Unsupported(format!(
            "sublinear exponent q = {q} outside (0, 1) and not the linear diagnostic"
        )));
    }
    let mut u = match u0 {
        Some(u) => u.clone(),
        None => default_start(d, opts)?,
    };
    d.check_open_cone(&u)?;

    let mut trace = SlpTrace::default();
    let mut radius = opts.trust_radius_init.clamp(RADIUS_MIN, RADIUS_MAX);
    let mut lin = linearize(d, &u)?;
    let mut duals: Option<Vec<f64>> = None;
    let mut converged = false;
    let mut best = lin.inner.value;
    let mut since_improvement = 0usize;
    let mut iterations = 0;
    let mut termination = "iteration limit";

    while iterations < opts.max_iters {
        iterations += 1;
        let lambda = lin.inner.value;
        let Some(step) = solve_subproblem(d, &u, &lin, radius, opts.lp_max_iters) else {
            termination = "subproblem failed";
            break;
        };
        duals = Some(step.duals.clone());
        let pred = step.predicted;
        let chi = pred / radius.min(1.0);
        if chi <= opts.tol_kkt * (1.0 + lambda.abs()) {
            converged = true;
            termination = "criticality";
            trace.lambda.push(lambda);
            trace.radius.push(radius);
            trace.predicted.push(pred);
            trace.actual.push(0.0);
            trace.accepted.push(false);
            break;
        }
        let trial: Vec<f64> = u.as_slice().iter().zip(&step.du).map(|(a, b)| a + b).collect();
        let trial = d.field(clamp_to_floor(trial))?;
        let trial_lin = linearize(d, &trial).ok();
        let actual = trial_lin.as_ref().map_or(f64::NEG_INFINITY, |l| l.inner.value - lambda);
        let rho = actual / pred;
        let accepted = rho > 0.1;
        trace.lambda.push(lambda);
        trace.radius.push(radius);
        trace.predicted.push(pred);
        trace.actual.push(actual);
        trace.accepted.push(accepted);
        if accepted {
            u = trial;
            lin = trial_lin.expect("accepted steps are evaluable");
            if rho > 0.75 && step.at_bound {
                radius = (2.0 * radius).min(RADIUS_MAX);
            } else if rho < 0.25 {
                radius *= 0.5;
            }
        } else {
            radius *= 0.25;
        }
        if u.sup_norm() > AMPLITUDE_MAX {
            return Err(SolverError::UnboundedAscent {
                lambda: lin.inner.value,
                amplitude: u.sup_norm(),
            });
        }
        if lin.inner.value > best + 1e-15 * best.abs().max(1e-300) {
            best = lin.inner.value;
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        if radius < RADIUS_MIN {
            converged = true;
            termination = "trust radius below minimum";
            break;
        }
        if since_improvement >= STAGNATION {
            converged = true;
            termination = "stagnation";
            break;
        }
    }
    trace.termination = termination.to_string();

    let lambda_slp = lin.inner.value;
    if u.min_coeff() / u.sup_norm() < 1e-10 && lambda_slp <= 0.0 {
        return Err(SolverError::ConeCollapse { lambda: lambda_slp });
    }

    // adjoint guess from the multipliers of the last subproblem
    let lp_guess = duals.and_then(|y| {
        let v: Vec<f64> = y.iter().zip(&lin.inner.denominators).map(|(y, g)| y / g).collect();
        (v.iter().any(|&x| x > 0.0)).then(|| d.field(v).ok()).flatten()
    });

    let mut polished = None;
    if opts.polish {
        if linear {
            polished = polish_linear(d, &u, lambda_slp).ok();
        } else {
            let svd_guess = || svd_left_null(d, &u, lambda_slp);
            for guess in [lp_guess.clone(), svd_guess()].into_iter().flatten() {
                if let Ok(p) = polish_fold(d, &u, &guess, lambda_slp) {
                    if p.0.is_open_cone() && p.2 >= lambda_slp - 1e-6 * lambda_slp.abs().max(1.0) {
                        polished = Some(p);
                        break;
                    }
                }
            }
        }
    }
    let (u_final, v_guess, is_polished, extra) = match polished {
        Some((pu, pv, _, it)) => (pu, pv, true, it),
        None => {
            let v = match lp_guess {
                Some(v) => v,
                None => svd_left_null(d, &u, lambda_slp).ok_or(SolverError::AllZeroMultipliers)?,
            };
            (u, v, false, 0)
        }
    };
    let cert = build_certificate(d, &u_final, &v_guess, iterations + extra, converged, is_polished, opts.cert_tol)?;
    if !converged && !cert.valid {
        return Err(SolverError::MaxIters { best: Box::new(cert) });
    }
    Ok((cert, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStartReport {
    pub best: MinimaxCertificate,
    pub best_index: usize,
    /// `λ_r*` per start; `None` where the run failed.
    pub lambdas: Vec<Option<f64>>,
    pub errors: Vec<Option<String>>,
    /// `(max - min) / |max|` over successful runs.
    pub spread: f64,
    /// `spread > 1e-6`.
    pub disagree: bool,
}

/// Runs [`maximize`] from the default start (index 0) and `n_starts - 1`
/// randomized starts in parallel. The largest value wins, ties to the lowest
/// index.
pub fn maximize_multistart(d: &Discretization, opts: &SolverOptions) -> Result<MultiStartReport, SolverError> {
    let n = opts.n_starts.max(1);
    let runs: Vec<Result<MinimaxCertificate, SolverError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let start = if i == 0 {
                default_start(d, opts)?
            } else {
                random_start(d, opts, i as u64)?
            };
            maximize(d, Some(&start), opts)
        })
        .collect();
    let lambdas: Vec<Option<f64>> = runs.iter().map(|r| r.as_ref().ok().map(|c| c.lambda_star)).collect();
    let errors = runs.iter().map(|r| r.as_ref().err().map(|e| e.to_string())).collect();
    let mut best_index = None;
    for (i, l) in lambdas.iter().enumerate() {
        if let Some(l) = l {
            if best_index.is_none_or(|b: usize| *l > lambdas[b].expect("set")) {
                best_index = Some(i);
            }
        }
    }
    let Some(best_index) = best_index else {
        return Err(runs.into_iter().next().expect("n >= 1").expect_err("no success"));
    };
    let ok: Vec<f64> = lambdas.iter().flatten().cloned().collect();
    let hi = ok.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = ok.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = (hi - lo) / hi.abs().max(f64::MIN_POSITIVE);
    let best = runs.into_iter().nth(best_index).expect("index").expect("ok");
    Ok(MultiStartReport {
        best,
        best_index,
        lambdas,
        errors,
        spread,
        disagree: spread > 1e-6,
    })
}
