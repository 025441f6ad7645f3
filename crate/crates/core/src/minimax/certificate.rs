use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{nan_null, MinimaxCertificate, SolverError, TOL_SING};
use crate::model::{Discretization, FEField};
use crate::rayleigh::inner_min;

/// `v* = Σ_i μ_i / ⟨G(u*), η_i⟩ η_i`, normalized to `a_m(v*, v*) = 1`.
pub fn recover_adjoint(d: &Discretization, u_star: &FEField, mu: &[f64]) -> Result<FEField, SolverError> {
    let inner = inner_min(d, u_star)?;
    if mu.len() != d.dim() || mu.iter().any(|&m| !(m >= 0.0)) {
        return Err(SolverError::Unsupported("multipliers must be nonnegative, one per direction".into()));
    }
    if mu.iter().all(|&m| m == 0.0) {
        return Err(SolverError::AllZeroMultipliers);
    }
    let kappa: Vec<f64> = mu.iter().zip(&inner.denominators).map(|(m, g)| m / g).collect();
    let v = d.field(kappa)?;
    let e = d.energy(&v, &v);
    if !(e > 0.0) {
        return Err(SolverError::AllZeroMultipliers);
    }
    Ok(v.scaled(1.0 / e.sqrt()))
}

/// Assembles a certificate at `u` from an (unnormalized) adjoint guess `v`,
/// then fills the residuals with [`verify_certificate`].
pub fn build_certificate(
    d: &Discretization,
    u: &FEField,
    v: &FEField,
    iterations: usize,
    slp_converged: bool,
    polished: bool,
    tol: f64,
) -> Result<MinimaxCertificate, SolverError> {
    let inner = inner_min(d, u)?;
    let weights: Vec<f64> = v
        .as_slice()
        .iter()
        .zip(&inner.denominators)
        .map(|(vi, g)| vi.max(0.0) * g)
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(SolverError::AllZeroMultipliers);
    }
    let mu: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let kappa: Vec<f64> = mu.iter().zip(&inner.denominators).map(|(m, g)| m / g).collect();
    let v_star = recover_adjoint(d, u, &mu)?;
    let sup = u.sup_norm();
    let mut cert = MinimaxCertificate {
        lambda_star: inner.value,
        u_star: u.clone(),
        v_star,
        mu,
        kappa,
        active_set: inner.active_set,
        primal_residual: f64::NAN,
        adjoint_residual: f64::NAN,
        stationarity_residual: f64::NAN,
        complementarity_residual: f64::NAN,
        primal_residual_abs: f64::NAN,
        adjoint_residual_abs: f64::NAN,
        sigma_min: f64::NAN,
        j_norm: f64::NAN,
        cone_distance: u.min_coeff() / sup,
        iterations,
        slp_converged,
        polished,
        valid: false,
    };
    let rep = verify_certificate(d, &cert, tol);
    rep.apply_to(&mut cert);
    Ok(cert)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    /// `min_i R(u*, η_i)` recomputed from the stored `u*`.
    #[serde(with = "nan_null")]
    pub lambda_recomputed: f64,
    #[serde(with = "nan_null")]
    pub primal: f64,
    #[serde(with = "nan_null")]
    pub adjoint: f64,
    #[serde(with = "nan_null")]
    pub stationarity: f64,
    #[serde(with = "nan_null")]
    pub complementarity: f64,
    #[serde(with = "nan_null")]
    pub primal_abs: f64,
    #[serde(with = "nan_null")]
    pub adjoint_abs: f64,
    #[serde(with = "nan_null")]
    pub sigma_min: f64,
    #[serde(with = "nan_null")]
    pub j_norm: f64,
    /// Angle in radians between `v*` and the left singular vector of `σ_min`.
    #[serde(with = "nan_null")]
    pub null_angle: f64,
    pub tol: f64,
    pub valid: bool,
    pub reasons: Vec<String>,
}

impl ValidityReport {
    pub fn apply_to(&self, cert: &mut MinimaxCertificate) {
        cert.primal_residual = self.primal;
        cert.adjoint_residual = self.adjoint;
        cert.stationarity_residual = self.stationarity;
        cert.complementarity_residual = self.complementarity;
        cert.primal_residual_abs = self.primal_abs;
        cert.adjoint_residual_abs = self.adjoint_abs;
        cert.sigma_min = self.sigma_min;
        cert.j_norm = self.j_norm;
        cert.valid = self.valid;
    }

    fn failed(reason: String, tol: f64) -> Self {
        ValidityReport {
            lambda_recomputed: f64::NAN,
            primal: f64::NAN,
            adjoint: f64::NAN,
            stationarity: f64::NAN,
            complementarity: f64::NAN,
            primal_abs: f64::NAN,
            adjoint_abs: f64::NAN,
            sigma_min: f64::NAN,
            j_norm: f64::NAN,
            null_angle: f64::NAN,
            tol,
            valid: false,
            reasons: vec![reason],
        }
    }
}

fn sup(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Recomputes every residual of `cert` from the stored fields using dense
/// matrices. Residuals are relative:
///
/// - primal: `‖F(u*, λ*)‖_∞ / max(‖A u*‖_∞, ‖f-load‖_∞, |λ*| ‖g-load‖_∞)`
/// - adjoint: `‖Jᵀ v*‖_∞ / ‖|J|ᵀ |v*|‖_∞`
/// - stationarity: `‖Σ μ_i ∇R_i‖_∞ / ‖Σ μ_i |∇R_i|‖_∞`
/// - complementarity: `max_i μ_i |λ* - R_i| / max(1, |λ*|)`
pub fn verify_certificate(d: &Discretization, cert: &MinimaxCertificate, tol: f64) -> ValidityReport {
    let u = &cert.u_star;
    let v = &cert.v_star;
    let lambda = cert.lambda_star;
    let n = d.dim();
    if u.check_shape(d.m(), d.n()).is_err() || v.check_shape(d.m(), d.n()).is_err() || cert.mu.len() != n {
        return ValidityReport::failed("field shapes do not match the discretization".into(), tol);
    }
    let inner = match inner_min(d, u) {
        Ok(r) => r,
        Err(e) => return ValidityReport::failed(format!("quotients: {e}"), tol),
    };
    let (fu, gu) = match d.jacobian_parts(u) {
        Ok(p) => p,
        Err(e) => return ValidityReport::failed(format!("jacobian: {e}"), tol),
    };
    let loads = match d.eval_residual_terms(u) {
        Ok(l) => l,
        Err(e) => return ValidityReport::failed(format!("loads: {e}"), tol),
    };
    let mut reasons = Vec::new();

    let mut a = DMatrix::zeros(n, n);
    let nn = d.n();
    for k in 0..d.m() {
        a.view_mut((k * nn, k * nn), (nn, nn)).copy_from(&d.stiffness(k).to_dense());
    }
    let fu = fu.to_dense();
    let gu = gu.to_dense();
    let j = &a - &fu - &gu * lambda;
    let uvec = DVector::from_column_slice(u.as_slice());
    let vvec = DVector::from_column_slice(v.as_slice());

    let au = &a * &uvec;
    let r: Vec<f64> = (0..n)
        .map(|i| au[i] - loads.f.as_slice()[i] - lambda * loads.g.as_slice()[i])
        .collect();
    let primal_abs = sup(r.iter().cloned());
    let primal_scale = sup(au.iter().cloned())
        .max(sup(loads.f.as_slice().iter().cloned()))
        .max(lambda.abs() * sup(loads.g.as_slice().iter().cloned()));
    let primal = primal_abs / primal_scale.max(f64::MIN_POSITIVE);

    let jtv = j.transpose() * &vvec;
    let adjoint_abs = sup(jtv.iter().cloned());
    let abs_scale = j.abs().transpose() * vvec.abs();
    let adjoint = adjoint_abs / sup(abs_scale.iter().cloned()).max(f64::MIN_POSITIVE);

    let mut stat = DVector::zeros(n);
    let mut stat_scale = DVector::zeros(n);
    let j0 = &a - &fu;
    for i in 0..n {
        let mu = cert.mu[i];
        if mu == 0.0 {
            continue;
        }
        let grad = (j0.row(i) - gu.row(i) * inner.quotients[i]) / inner.denominators[i];
        stat += grad.transpose() * mu;
        stat_scale += grad.abs().transpose() * mu;
    }
    let stationarity = sup(stat.iter().cloned()) / sup(stat_scale.iter().cloned()).max(f64::MIN_POSITIVE);

    let complementarity = (0..n)
        .map(|i| cert.mu[i] * (lambda - inner.quotients[i]).abs())
        .fold(0.0, f64::max)
        / lambda.abs().max(1.0);

    let svd = j.clone().svd(true, false);
    let (imin, &sigma_min) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let j_norm = svd.singular_values.max();
    let left = svd.u.as_ref().expect("requested").column(imin).into_owned();
    let vnorm = vvec.norm();
    let null_angle = if vnorm > 0.0 {
        (left.dot(&vvec).abs() / vnorm).min(1.0).acos()
    } else {
        f64::NAN
    };

    let mu_sum: f64 = cert.mu.iter().sum();
    if cert.mu.iter().any(|&m| !(m >= 0.0)) || (mu_sum - 1.0).abs() > 1e-12 * n as f64 {
        reasons.push(format!("multipliers not a probability vector (sum {mu_sum})"));
    }
    if v.as_slice().iter().any(|&x| !(x >= 0.0)) || v.sup_norm() == 0.0 {
        reasons.push("adjoint field not in the closed cone or zero".into());
    }
    for (name, val) in [
        ("primal", primal),
        ("adjoint", adjoint),
        ("stationarity", stationarity),
        ("complementarity", complementarity),
    ] {
        if !(val < tol) {
            reasons.push(format!("{name} residual {val:e} >= {tol:e}"));
        }
    }
    if !(sigma_min < TOL_SING * j_norm) {
        reasons.push(format!("sigma_min {sigma_min:e} not below {TOL_SING:e}·‖J‖ = {:e}", TOL_SING * j_norm));
    }
    ValidityReport {
        lambda_recomputed: inner.value,
        primal,
        adjoint,
        stationarity,
        complementarity,
        primal_abs,
        adjoint_abs,
        sigma_min,
        j_norm,
        null_angle,
        tol,
        valid: reasons.is_empty(),
        reasons,
    }
}
