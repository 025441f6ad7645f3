//! The finite-dimensional max-min problem `λ_r* = max_u min_i R(u, η_i)`:
//! sequential linear programming, multiplier and adjoint recovery,
//! certificate verification, and Newton/continuation oracles.

mod certificate;
mod continuation;
mod fold;
mod lp;
mod newton;
mod slp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh_fem::FemError;
use crate::model::{FEField, ModelError};

pub use certificate::{build_certificate, recover_adjoint, verify_certificate, ValidityReport};
pub use continuation::{continuation_sweep, BranchPoint, ContinuationOptions, ContinuationResult, Termination};
pub use fold::{polish_fold, polish_linear};
pub use lp::{BoundedLp, LpSolution, LpStatus};
pub use newton::{newton_multistart, newton_solve, newton_start_family, NewtonOptions, NewtonResult};
pub use slp::{
    default_start, maximize, maximize_multistart, maximize_with_trace, random_start, MultiStartReport, SlpTrace,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub tol_kkt: f64,
    pub trust_radius_init: f64,
    pub n_starts: usize,
    pub seed: u64,
    /// Certificate tolerance on the four relative residuals.
    pub cert_tol: f64,
    /// Refine the SLP iterate by Newton's method on the fold system.
    pub polish: bool,
    pub lp_max_iters: usize,
    /// Points on the log amplitude grid `10^{-4..4}` for start selection.
    pub start_grid: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 300,
            tol_kkt: 1e-9,
            trust_radius_init: 0.1,
            n_starts: 8,
            seed: 0,
            cert_tol: 1e-8,
            polish: true,
            lp_max_iters: 50_000,
            start_grid: 81,
        }
    }
}

/// `σ_min(J) < TOL_SING · ‖J‖₂` is required for validity.
pub const TOL_SING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxCertificate {
    #[serde(with = "nan_null")]
    pub lambda_star: f64,
    pub u_star: FEField,
    /// Normalized to `a_m(v, v) = 1`.
    pub v_star: FEField,
    pub mu: Vec<f64>,
    pub kappa: Vec<f64>,
    pub active_set: Vec<usize>,
    #[serde(with = "nan_null")]
    pub primal_residual: f64,
    #[serde(with = "nan_null")]
    pub adjoint_residual: f64,
    #[serde(with = "nan_null")]
    pub stationarity_residual: f64,
    #[serde(with = "nan_null")]
    pub complementarity_residual: f64,
    #[serde(with = "nan_null")]
    pub primal_residual_abs: f64,
    #[serde(with = "nan_null")]
    pub adjoint_residual_abs: f64,
    #[serde(with = "nan_null")]
    pub sigma_min: f64,
    #[serde(with = "nan_null")]
    pub j_norm: f64,
    /// `min_i u_i / ‖u‖_∞`.
    #[serde(with = "nan_null")]
    pub cone_distance: f64,
    pub iterations: usize,
    pub slp_converged: bool,
    pub polished: bool,
    pub valid: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("iteration limit reached; best value {}", best.lambda_star)]
    MaxIters { best: Box<MinimaxCertificate> },
    #[error("iterates collapsed to the cone boundary (best value {lambda})")]
    ConeCollapse { lambda: f64 },
    #[error("ascent is unbounded: value {lambda} at amplitude {amplitude}")]
    UnboundedAscent { lambda: f64, amplitude: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("Jacobian is singular")]
    JacobianSingular,
    #[error("iterate collapsed to the trivial solution")]
    TrivialCollapse,
    #[error("all multipliers are zero")]
    AllZeroMultipliers,
    #[error("continuation step size collapsed after {points} points")]
    StepCollapse { points: usize },
    #[error("unsupported problem: {0}")]
    Unsupported(String),
}

/// JSON has no NaN: non-finite values are written as `null` and read back
/// as NaN.
pub(crate) mod nan_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}
