//! The extended Rayleigh quotient, its minimum over nodal directions, the
//! Galerkin residual and analytic gradients of the per-direction quotients.

use serde::{Deserialize, Serialize};

use crate::model::{Discretization, FEField, ModelError};

/// Denominators `⟨g(u), v⟩` at or below this are rejected.
pub const TOL_DENOM: f64 = 1e-14;

/// Active-set band `1e-8 · (1 + |value|)`.
pub fn tol_active(value: f64) -> f64 {
    1e-8 * (1.0 + value.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerMinResult {
    /// `λ_r(u) = min_i R(u, η_i)`.
    pub value: f64,
    /// `R(u, η_i)` for all `m · n` directions (component-major).
    pub quotients: Vec<f64>,
    /// `⟨g(u), η_i⟩`.
    pub denominators: Vec<f64>,
    /// Directions within [`tol_active`] of the minimum, sorted.
    pub active_set: Vec<usize>,
}

/// `R(u, v) = [a_m(u, v) - ⟨f(u), v⟩] / ⟨g(u), v⟩`.
pub fn rayleigh_quotient(d: &Discretization, u: &FEField, v: &FEField) -> Result<f64, ModelError> {
    v.check_shape(d.m(), d.n())?;
    if let Some((i, &w)) = v.as_slice().iter().enumerate().find(|(_, &w)| !(w >= 0.0)) {
        return Err(ModelError::NegativeCoefficient {
            component: i / d.n(),
            node: i % d.n(),
            value: w,
        });
    }
    let loads = d.eval_residual_terms(u)?;
    let au = d.stiffness_apply(u);
    let num: f64 = au
        .as_slice()
        .iter()
        .zip(loads.f.as_slice())
        .zip(v.as_slice())
        .map(|((a, f), w)| (a - f) * w)
        .sum();
    let den = loads.g.dot(v);
    if !(den > TOL_DENOM) {
        return Err(ModelError::DegenerateDenominator { index: usize::MAX, value: den });
    }
    Ok(num / den)
}

fn quotients_from(
    d: &Discretization,
    u: &FEField,
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let loads = d.eval_residual_terms(u)?;
    let au = d.stiffness_apply(u);
    let mut q = Vec::with_capacity(d.dim());
    for (i, ((a, f), g)) in au
        .as_slice()
        .iter()
        .zip(loads.f.as_slice())
        .zip(loads.g.as_slice())
        .enumerate()
    {
        if !(*g > TOL_DENOM) {
            return Err(ModelError::DegenerateDenominator { index: i, value: *g });
        }
        q.push((a - f) / g);
    }
    Ok((q, loads.g.into_vec()))
}

fn summarize(quotients: Vec<f64>, denominators: Vec<f64>) -> InnerMinResult {
    let value = quotients.iter().cloned().fold(f64::INFINITY, f64::min);
    let band = tol_active(value);
    let active_set = quotients
        .iter()
        .enumerate()
        .filter(|(_, &q)| q <= value + band)
        .map(|(i, _)| i)
        .collect();
    InnerMinResult {
        value,
        quotients,
        denominators,
        active_set,
    }
}

/// `min_i R(u, η_i)` over all nodal directions of all components.
pub fn inner_min(d: &Discretization, u: &FEField) -> Result<InnerMinResult, ModelError> {
    let (q, g) = quotients_from(d, u)?;
    Ok(summarize(q, g))
}

/// Entry `(k, i)` is `a^k(u^k, ψ_i) - ⟨f^k(u), ψ_i⟩ - λ⟨g^k(u), ψ_i⟩`.
pub fn residual(d: &Discretization, u: &FEField, lambda: f64) -> Result<FEField, ModelError> {
    d.residual(u, lambda)
}

/// Per-direction quotients together with their gradients, sharing one
/// Jacobian assembly.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub inner: InnerMinResult,
    /// Sparse `∇_u R(u, η_i)` as `(column, value)` pairs.
    pub gradients: Vec<Vec<(usize, f64)>>,
}

/// `∇_u R(u, η_i) = [row_i(A - F_u) - R_i row_i(G_u)] / ⟨g(u), η_i⟩`.
pub fn linearize(d: &Discretization, u: &FEField) -> Result<Linearization, ModelError> {
    let inner = inner_min(d, u)?;
    let (fu, gu) = d.jacobian_parts(u)?;
    let j0 = d.combine_jacobian(&fu, &gu, 0.0);
    let gradients = (0..d.dim())
        .map(|i| {
            let r = inner.quotients[i];
            let den = inner.denominators[i];
            let grow = gu.row_entries(i);
            j0.row_entries(i)
                .into_iter()
                .zip(grow)
                .map(|((c, a), (c2, g))| {
                    debug_assert_eq!(c, c2);
                    (c, (a - r * g) / den)
                })
                .collect()
        })
        .collect();
    Ok(Linearization { inner, gradients })
}

/// Dense gradient of `u ↦ R(u, η_i)`.
pub fn grad_u_inner_quotient(d: &Discretization, u: &FEField, i: usize) -> Result<FEField, ModelError> {
    let inner = inner_min(d, u)?;
    let j = d.eval_jacobian(u, inner.quotients[i])?;
    let mut out = vec![0.0; d.dim()];
    for (c, v) in j.row_entries(i) {
        out[c] = v / inner.denominators[i];
    }
    d.field(out)
}
