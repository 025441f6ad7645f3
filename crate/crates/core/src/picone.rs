//! Discrete Picone inequality `uᵀAu ≥ (Av)·(u²/v)` for symmetric matrices
//! with nonpositive off-diagonal, and the energy diagnostics at a
//! certificate built from it. Quotients `u²/v`, `v²/u` are nodal.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::minimax::MinimaxCertificate;
use crate::model::{Discretization, FEField};

/// Symmetry tolerance, absolute.
pub const TOL_SYM: f64 = 1e-12;
/// Largest admissible off-diagonal entry.
pub const TOL_OFFDIAG: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PiconeError {
    #[error("matrix is {rows}x{cols}, vectors have lengths {u} and {v}")]
    Dimension { rows: usize, cols: usize, u: usize, v: usize },
    #[error("A is not symmetric at ({i}, {j}): difference {diff:e}")]
    Asymmetric { i: usize, j: usize, diff: f64 },
    #[error("positive off-diagonal entry A[{i}][{j}] = {value:e}")]
    PositiveOffDiagonal { i: usize, j: usize, value: f64 },
    #[error("v[{index}] = {value:e} is not strictly positive")]
    NonPositiveV { index: usize, value: f64 },
    #[error("u[{index}] = {value:e} is negative")]
    NegativeU { index: usize, value: f64 },
    #[error("component {component}: {source}")]
    Component {
        component: usize,
        #[source]
        source: Box<PiconeError>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiconeGap {
    /// `uᵀAu - (Av)·(u²/v)`.
    pub gap: f64,
    /// `-½ Σ_{ij} a_ij v_i v_j (z_i - z_j)²` with `z = u/v`.
    pub decomposition_sum: f64,
    pub quadratic_form: f64,
    pub cross_term: f64,
    /// `‖A‖_∞ |u|²`, the reference for absolute tolerances.
    pub scale: f64,
}

fn check_inputs(a: &DMatrix<f64>, u: &[f64], v: &[f64]) -> Result<(), PiconeError> {
    let n = a.nrows();
    if a.ncols() != n || u.len() != n || v.len() != n {
        return Err(PiconeError::Dimension { rows: a.nrows(), cols: a.ncols(), u: u.len(), v: v.len() });
    }
    for i in 0..n {
        for j in i + 1..n {
            let diff = (a[(i, j)] - a[(j, i)]).abs();
            if !(diff <= TOL_SYM) {
                return Err(PiconeError::Asymmetric { i, j, diff });
            }
            for (r, c) in [(i, j), (j, i)] {
                if !(a[(r, c)] <= TOL_OFFDIAG) {
                    return Err(PiconeError::PositiveOffDiagonal { i: r, j: c, value: a[(r, c)] });
                }
            }
        }
    }
    if let Some((index, &value)) = v.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
        return Err(PiconeError::NonPositiveV { index, value });
    }
    if let Some((index, &value)) = u.iter().enumerate().find(|(_, &x)| !(x >= 0.0)) {
        return Err(PiconeError::NegativeU { index, value });
    }
    Ok(())
}

pub fn discrete_picone_gap(a: &DMatrix<f64>, u: &[f64], v: &[f64]) -> Result<PiconeGap, PiconeError> {
    check_inputs(a, u, v)?;
    let n = u.len();
    let mut quadratic_form = 0.0;
    let mut cross_term = 0.0;
    let mut decomposition_sum = 0.0;
    let z: Vec<f64> = u.iter().zip(v).map(|(a, b)| a / b).collect();
    for i in 0..n {
        let mut au = 0.0;
        let mut av = 0.0;
        for j in 0..n {
            let aij = a[(i, j)];
            au += aij * u[j];
            av += aij * v[j];
            if i != j {
                decomposition_sum -= 0.5 * aij * v[i] * v[j] * (z[i] - z[j]).powi(2);
            }
        }
        quadratic_form += u[i] * au;
        cross_term += av * u[i] * z[i];
    }
    let norm = (0..n).map(|i| a.row(i).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let scale = norm * u.iter().map(|x| x * x).sum::<f64>();
    Ok(PiconeGap {
        gap: quadratic_form - cross_term,
        decomposition_sum,
        quadratic_form,
        cross_term,
        scale,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentwiseGap {
    pub total: f64,
    pub per_component: Vec<PiconeGap>,
}

/// Sum over components of [`discrete_picone_gap`]`(A_k, u^k, v^k)`.
pub fn componentwise_picone(blocks: &[DMatrix<f64>], u: &FEField, v: &FEField) -> Result<ComponentwiseGap, PiconeError> {
    let m = blocks.len();
    if u.components() != m || v.components() != m {
        return Err(PiconeError::Dimension { rows: m, cols: m, u: u.components(), v: v.components() });
    }
    let per_component = blocks
        .iter()
        .enumerate()
        .map(|(k, a)| {
            discrete_picone_gap(a, u.component(k), v.component(k))
                .map_err(|e| PiconeError::Component { component: k, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ComponentwiseGap {
        total: per_component.iter().map(|g| g.gap).sum(),
        per_component,
    })
}

/// Dense stiffness blocks of a discretization.
pub fn stiffness_blocks(d: &Discretization) -> Vec<DMatrix<f64>> {
    (0..d.m()).map(|k| d.stiffness(k).to_dense()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// False when `f ≡ 0`: the θ-term is vacuous.
    pub applicable: bool,
    pub theta: f64,
    pub q: f64,
    pub lambda: f64,
    /// `(θ - 1) a_m(u, u)`.
    pub energy_lhs: f64,
    /// `(θ - q) λ ⟨g(u), u⟩`.
    pub energy_rhs: f64,
    pub energy_margin: f64,
    pub energy_holds: bool,
    /// `(1 + q) / 2`.
    pub chi: f64,
    /// `⟨f_u(u) v, v⟩ - χ ⟨f(u), v²/u⟩` with `a_m(v, v) = 1`.
    pub nondegeneracy_value: f64,
    /// `nondegeneracy_value - (1 - χ)`.
    pub nondegeneracy_margin: f64,
    pub nondegeneracy_holds: bool,
    /// Relative residual of `F(u, λ)`; large values mean the input is not a
    /// solution and the inequalities need not hold.
    pub primal_residual: f64,
    pub is_solution: bool,
    pub notes: Vec<String>,
}

/// Relative residual above which the input is not treated as a solution.
const SOLUTION_TOL: f64 = 1e-6;

/// Evaluates the energy inequality and the nondegeneracy functional at
/// `(u*, λ*, v*)`. `v*` is rescaled to `a_m(v, v) = 1` first.
pub fn ps_energy_diagnostic(d: &Discretization, cert: &MinimaxCertificate) -> Result<EnergyReport, crate::model::ModelError> {
    let spec = d.spec();
    let c = spec.constants;
    let q = c.q;
    let theta = c.theta;
    let lambda = cert.lambda_star;
    let u = &cert.u_star;
    let loads = d.eval_residual_terms(u)?;
    let au = d.stiffness_apply(u);
    let r: f64 = (0..d.dim())
        .map(|i| (au.as_slice()[i] - loads.f.as_slice()[i] - lambda * loads.g.as_slice()[i]).abs())
        .fold(0.0, f64::max);
    let scale = au.sup_norm().max(loads.f.sup_norm()).max(lambda.abs() * loads.g.sup_norm());
    let primal_residual = r / scale.max(f64::MIN_POSITIVE);
    let is_solution = primal_residual < SOLUTION_TOL;
    let mut notes = Vec::new();
    if !is_solution {
        notes.push(format!("input is not a solution (relative residual {primal_residual:e})"));
    }

    let energy_lhs = (theta - 1.0) * u.dot(&au);
    let energy_rhs = (theta - q) * lambda * loads.g.dot(u);
    let energy_margin = energy_rhs - energy_lhs;
    let applicable = !spec.reaction.is_zero();
    if !applicable {
        notes.push("f vanishes identically; the energy inequality is not applicable".into());
    }

    let chi = 0.5 * (1.0 + q);
    let ev = d.energy(&cert.v_star, &cert.v_star);
    let v = cert.v_star.scaled(1.0 / ev.sqrt());
    if (ev - 1.0).abs() > 1e-12 {
        notes.push(format!("adjoint renormalized from a(v, v) = {ev:e}"));
    }
    let (fu, _) = d.jacobian_parts(u)?;
    let fuv = fu.mul_vec(v.as_slice());
    let quad: f64 = fuv.iter().zip(v.as_slice()).map(|(a, b)| a * b).sum();
    let cross: f64 = (0..d.dim())
        .map(|i| loads.f.as_slice()[i] * v.as_slice()[i].powi(2) / u.as_slice()[i])
        .sum();
    let nondegeneracy_value = quad - chi * cross;
    let nondegeneracy_margin = nondegeneracy_value - (1.0 - chi);
    Ok(EnergyReport {
        applicable,
        theta,
        q,
        lambda,
        energy_lhs,
        energy_rhs,
        energy_margin,
        energy_holds: applicable && energy_margin >= 0.0,
        chi,
        nondegeneracy_value,
        nondegeneracy_margin,
        nondegeneracy_holds: nondegeneracy_margin >= 0.0,
        primal_residual,
        is_solution,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_fem::{assemble_stiffness, build_mesh, Grading};
    use crate::minimax::{maximize, SolverOptions};
    use crate::model::builtin_problem;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use serde_json::json;

    fn two_by_two() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0])
    }

    #[test]
    fn small_examples() {
        let a = two_by_two();
        let g = discrete_picone_gap(&a, &[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(g.gap, 0.0);
        let g = discrete_picone_gap(&a, &[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(g.quadratic_form, 2.0);
        assert_eq!(g.cross_term, 1.0);
        assert_eq!(g.gap, 1.0);
        assert_eq!(g.decomposition_sum, 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = two_by_two();
        let asym = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -0.5, 2.0]);
        let pos = DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 2.0]);
        assert!(matches!(discrete_picone_gap(&asym, &[1.0, 1.0], &[1.0, 1.0]), Err(PiconeError::Asymmetric { .. })));
        assert!(matches!(discrete_picone_gap(&pos, &[1.0, 1.0], &[1.0, 1.0]), Err(PiconeError::PositiveOffDiagonal { .. })));
        assert!(matches!(discrete_picone_gap(&a, &[1.0, 1.0], &[1.0, 0.0]), Err(PiconeError::NonPositiveV { index: 1, .. })));
        assert!(matches!(discrete_picone_gap(&a, &[-1.0, 1.0], &[1.0, 1.0]), Err(PiconeError::NegativeU { index: 0, .. })));
    }

    fn random_stiffness(rng: &mut ChaCha8Rng, n_el: usize) -> DMatrix<f64> {
        let ratio = rng.gen_range(0.9..1.1);
        let mesh = build_mesh(n_el, Grading::Geometric(ratio)).unwrap();
        let (s0, s1, c0) = (rng.gen_range(0.1..3.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..5.0));
        let sigma = move |x: f64| s0 + s1 * x * x;
        let c = move |x: f64| c0 * x;
        assemble_stiffness(&mesh, &sigma, &c).unwrap().to_dense()
    }

    /// Random admissible pairs including zero coefficients in `u` and
    /// widely varying magnitudes.
    fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
        let u = (0..n)
            .map(|_| if rng.gen_bool(0.1) { 0.0 } else { 10f64.powf(rng.gen_range(-2.0..2.0)) })
            .collect();
        let v = (0..n).map(|_| 10f64.powf(rng.gen_range(-2.0..2.0))).collect();
        (u, v)
    }

    #[test]
    fn thousand_random_trials() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let a = random_stiffness(&mut rng, 51);
            let (u, v) = random_pair(&mut rng, 50);
            let g = discrete_picone_gap(&a, &u, &v).unwrap();
            assert!(g.gap >= -1e-12 * g.scale, "{g:?}");
            let rel = (g.gap - g.decomposition_sum).abs() / g.gap.abs().max(1e-300);
            assert!(rel <= 1e-10 || (g.gap - g.decomposition_sum).abs() <= 1e-12 * g.scale, "{g:?}");
            let c = rng.gen_range(0.01..100.0);
            let uc: Vec<f64> = v.iter().map(|x| c * x).collect();
            let e = discrete_picone_gap(&a, &uc, &v).unwrap();
            assert!(e.gap.abs() <= 1e-12 * e.scale, "{e:?}");
        }
    }

    #[test]
    fn componentwise_additivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_stiffness(&mut rng, 9);
        let blocks = vec![a.clone(), a.clone()];
        let mesh = build_mesh(9, Grading::Uniform).unwrap();
        let v = FEField::from_fn(&mesh, 2, |k, x| (1.0 + k as f64) * x * (1.0 - x));
        let z = componentwise_picone(&blocks, &v, &v).unwrap();
        assert!(z.total.abs() <= 1e-12 * z.per_component[0].scale);
        let mut u = v.clone();
        u.component_mut(1)[3] *= 4.0;
        let g = componentwise_picone(&blocks, &u, &v).unwrap();
        let strict = discrete_picone_gap(&a, u.component(1), v.component(1)).unwrap();
        assert!(g.per_component[0].gap.abs() <= 1e-12 * g.per_component[0].scale);
        assert!((g.total - g.per_component[0].gap - strict.gap).abs() <= 1e-14 * strict.scale);
        assert!(strict.gap > 0.0);
        let mut bad = v.clone();
        bad.component_mut(1)[0] = 0.0;
        assert!(matches!(componentwise_picone(&blocks, &u, &bad), Err(PiconeError::Component { component: 1, .. })));
    }

    fn scalar_disc(n: usize) -> Discretization {
        let spec = builtin_problem("scalar_power", &json!({"q": 0.5, "gamma": 2.0})).unwrap();
        Discretization::new(spec, build_mesh(n, Grading::Uniform).unwrap()).unwrap()
    }

    #[test]
    fn certificate_fields_give_nonnegative_gap_and_energy_margin() {
        let d = scalar_disc(32);
        let cert = maximize(&d, None, &SolverOptions::default()).unwrap();
        let g = componentwise_picone(&stiffness_blocks(&d), &cert.u_star, &cert.v_star).unwrap();
        assert!(g.total >= -1e-12 * g.per_component[0].scale);
        let rep = ps_energy_diagnostic(&d, &cert).unwrap();
        assert!(rep.applicable && rep.is_solution);
        assert!(rep.energy_holds && rep.energy_margin > 0.0, "{rep:?}");
        assert_eq!(rep.chi, 0.75);

        let mut scaled = cert.clone();
        scaled.u_star = cert.u_star.scaled(10.0);
        let bad = ps_energy_diagnostic(&d, &scaled).unwrap();
        assert!(!bad.is_solution);
        assert!(!bad.energy_holds, "{bad:?}");
    }

    #[test]
    fn linear_diagnostic_is_not_applicable() {
        let spec = builtin_problem("linear_diagnostic", &json!({})).unwrap();
        let d = Discretization::new(spec, build_mesh(16, Grading::Uniform).unwrap()).unwrap();
        let cert = maximize(&d, None, &SolverOptions::default()).unwrap();
        let rep = ps_energy_diagnostic(&d, &cert).unwrap();
        assert!(!rep.applicable);
        assert!(!rep.energy_holds);
    }

    proptest! {
        #[test]
        fn gap_is_two_homogeneous(seed in 0u64..10_000, t in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_stiffness(&mut rng, 12);
            let (u, v) = random_pair(&mut rng, 11);
            let g = discrete_picone_gap(&a, &u, &v).unwrap();
            let ut: Vec<f64> = u.iter().map(|x| t * x).collect();
            let gt = discrete_picone_gap(&a, &ut, &v).unwrap();
            prop_assert!((gt.gap - t * t * g.gap).abs() <= 1e-12 * gt.scale);
        }
    }
}
