use crate::mesh_fem::{assemble_stiffness, Mesh1D, OperatorMatrix, QuadPoint};

use super::{BlockTridiagonal, FEField, ModelError, ProblemSpec};

/// Cone floor relative to `‖u‖_∞` for operations that need `g_u`.
pub const CONE_FLOOR: f64 = 1e-12;

/// Assembled load vectors `⟨f^k(u), ψ_i⟩` and `⟨g^k(u), ψ_i⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct Loads {
    pub f: FEField,
    pub g: FEField,
}

/// A problem on a fixed mesh with its stiffness matrices assembled once.
#[derive(Clone)]
pub struct Discretization {
    spec: ProblemSpec,
    mesh: Mesh1D,
    stiffness: Vec<OperatorMatrix>,
    quad: Vec<[QuadPoint; 2]>,
}

impl std::fmt::Debug for Discretization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Discretization")
            .field("spec", &self.spec)
            .field("n_elements", &self.mesh.n_elements())
            .finish()
    }
}

impl Discretization {
    pub fn new(spec: ProblemSpec, mesh: Mesh1D) -> Result<Self, ModelError> {
        spec.validate()?;
        let stiffness = (0..spec.m())
            .map(|k| {
                let s = spec.sigma[k].clone();
                let c = spec.c[k].clone();
                assemble_stiffness(&mesh, &*s, &*c).map(|a| a.with_component(k))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let quad = (0..mesh.n_elements()).map(|e| mesh.quadrature(e)).collect();
        Ok(Discretization {
            spec,
            mesh,
            stiffness,
            quad,
        })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    pub fn m(&self) -> usize {
        self.spec.m()
    }

    pub fn n(&self) -> usize {
        self.mesh.n_interior()
    }

    /// Number of scalar unknowns `m · n`.
    pub fn dim(&self) -> usize {
        self.m() * self.n()
    }

    pub fn stiffness(&self, k: usize) -> &OperatorMatrix {
        &self.stiffness[k]
    }

    pub fn zero_field(&self) -> FEField {
        FEField::zeros(self.m(), self.n())
    }

    pub fn field(&self, data: Vec<f64>) -> Result<FEField, ModelError> {
        FEField::from_vec(self.m(), self.n(), data)
    }

    /// `A u`, blockwise.
    pub fn stiffness_apply(&self, u: &FEField) -> FEField {
        let n = self.n();
        let mut out = self.zero_field();
        for k in 0..self.m() {
            self.stiffness[k].mul_vec_into(u.component(k), &mut out.as_mut_slice()[k * n..(k + 1) * n]);
        }
        out
    }

    /// `a_m(u, v) = Σ_k a^k(u^k, v^k)`.
    pub fn energy(&self, u: &FEField, v: &FEField) -> f64 {
        (0..self.m())
            .map(|k| self.stiffness[k].bilinear(u.component(k), v.component(k)))
            .sum()
    }

    fn check_closed(&self, u: &FEField) -> Result<(), ModelError> {
        u.check_shape(self.m(), self.n())?;
        for k in 0..self.m() {
            for (i, &v) in u.component(k).iter().enumerate() {
                if !(v >= 0.0) {
                    return Err(ModelError::NegativeCoefficient {
                        component: k,
                        node: i,
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }

    /// Rejects coefficients at or below `CONE_FLOOR · ‖u‖_∞`.
    pub fn check_open_cone(&self, u: &FEField) -> Result<(), ModelError> {
        u.check_shape(self.m(), self.n())?;
        let floor = CONE_FLOOR * u.sup_norm();
        for k in 0..self.m() {
            for (i, &v) in u.component(k).iter().enumerate() {
                if !(v > floor) || v == 0.0 {
                    return Err(ModelError::NotInOpenCone {
                        component: k,
                        node: i,
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }

    fn needs_open_cone(&self) -> bool {
        self.spec.constants.q < 1.0
    }

    /// Visits every quadrature point with the element's dofs and `u_h(x)`.
    fn for_each_qp(
        &self,
        u: &FEField,
        mut visit: impl FnMut(&QuadPoint, [Option<usize>; 2], &[f64]) -> Result<(), ModelError>,
    ) -> Result<(), ModelError> {
        let m = self.m();
        let mut t = vec![0.0; m];
        for (e, qps) in self.quad.iter().enumerate() {
            let dofs = self.mesh.element_dofs(e);
            for qp in qps {
                for (k, tk) in t.iter_mut().enumerate() {
                    let c = u.component(k);
                    let l = dofs[0].map_or(0.0, |i| c[i]);
                    let r = dofs[1].map_or(0.0, |i| c[i]);
                    *tk = qp.phi_left * l + qp.phi_right * r;
                }
                visit(qp, dofs, &t)?;
            }
        }
        Ok(())
    }

    pub fn eval_residual_terms(&self, u: &FEField) -> Result<Loads, ModelError> {
        self.check_closed(u)?;
        let (m, n) = (self.m(), self.n());
        let mut f = self.zero_field();
        let mut g = self.zero_field();
        let mut fx = vec![0.0; m];
        let reaction = &self.spec.reaction;
        let source = &self.spec.source;
        self.for_each_qp(u, |qp, dofs, t| {
            reaction.value(qp.x, t, &mut fx);
            for k in 0..m {
                let gx = source.value(k, qp.x, t[k]);
                if !fx[k].is_finite() || !gx.is_finite() {
                    return Err(ModelError::NonFinite { x: qp.x });
                }
                for (dof, phi) in dofs.iter().zip([qp.phi_left, qp.phi_right]) {
                    if let Some(i) = dof {
                        f.as_mut_slice()[k * n + i] += qp.weight * fx[k] * phi;
                        g.as_mut_slice()[k * n + i] += qp.weight * gx * phi;
                    }
                }
            }
            Ok(())
        })?;
        Ok(Loads { f, g })
    }

    /// Galerkin residual `A u - F(u) - λ G(u)`.
    pub fn residual(&self, u: &FEField, lambda: f64) -> Result<FEField, ModelError> {
        let loads = self.eval_residual_terms(u)?;
        let mut r = self.stiffness_apply(u);
        for ((ri, fi), gi) in r
            .as_mut_slice()
            .iter_mut()
            .zip(loads.f.as_slice())
            .zip(loads.g.as_slice())
        {
            *ri -= fi + lambda * gi;
        }
        Ok(r)
    }

    /// Galerkin matrices of `f_u(u)` and `g_u(u)`.
    pub fn jacobian_parts(&self, u: &FEField) -> Result<(BlockTridiagonal, BlockTridiagonal), ModelError> {
        if self.needs_open_cone() {
            self.check_open_cone(u)?;
        } else {
            self.check_closed(u)?;
        }
        let (m, n) = (self.m(), self.n());
        let mut fu = BlockTridiagonal::zeros(m, n);
        let mut gu = BlockTridiagonal::zeros(m, n);
        let mut jac = vec![0.0; m * m];
        let reaction = &self.spec.reaction;
        let source = &self.spec.source;
        self.for_each_qp(u, |qp, dofs, t| {
            reaction.jacobian(qp.x, t, &mut jac);
            if jac.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite { x: qp.x });
            }
            let phis = [qp.phi_left, qp.phi_right];
            for k in 0..m {
                let dg = source.derivative(k, qp.x, t[k]);
                if !dg.is_finite() {
                    return Err(ModelError::NonFinite { x: qp.x });
                }
                for (a, b) in [(0, 0), (1, 1), (0, 1)] {
                    if let (Some(i), Some(j)) = (dofs[a], dofs[b]) {
                        let pp = qp.weight * phis[a] * phis[b];
                        gu.add_sym(k, k, i, j, pp * dg);
                        for l in 0..m {
                            fu.add_sym(k, l, i, j, pp * jac[k * m + l]);
                        }
                    }
                }
            }
            Ok(())
        })?;
        Ok((fu, gu))
    }

    /// Galerkin matrix of `L - f_u(u) - λ g_u(u)`.
    pub fn eval_jacobian(&self, u: &FEField, lambda: f64) -> Result<BlockTridiagonal, ModelError> {
        let (fu, gu) = self.jacobian_parts(u)?;
        Ok(self.combine_jacobian(&fu, &gu, lambda))
    }

    pub fn combine_jacobian(&self, fu: &BlockTridiagonal, gu: &BlockTridiagonal, lambda: f64) -> BlockTridiagonal {
        let (m, n) = (self.m(), self.n());
        let mut j = BlockTridiagonal::zeros(m, n);
        for k in 0..m {
            let a = &self.stiffness[k];
            j.add_block_bands(k, k, a.diag(), a.off(), 1.0);
            j.add_block_bands(k, k, gu.block_diag(k, k), gu.block_off(k, k), -lambda);
            for l in 0..m {
                j.add_block_bands(k, l, fu.block_diag(k, l), fu.block_off(k, l), -1.0);
            }
        }
        j
    }

    /// `∂/∂u [J(u, λ)ᵀ v]`: row `(l, j)`, column `(p, s)`.
    pub fn adjoint_hessian(&self, u: &FEField, v: &FEField, lambda: f64) -> Result<BlockTridiagonal, ModelError> {
        if self.needs_open_cone() {
            self.check_open_cone(u)?;
        }
        v.check_shape(self.m(), self.n())?;
        let (m, n) = (self.m(), self.n());
        let mut h = BlockTridiagonal::zeros(m, n);
        let mut hc = vec![0.0; m * m];
        let mut w = vec![0.0; m];
        let reaction = &self.spec.reaction;
        let source = &self.spec.source;
        self.for_each_qp(u, |qp, dofs, t| {
            for (k, wk) in w.iter_mut().enumerate() {
                let c = v.component(k);
                let l = dofs[0].map_or(0.0, |i| c[i]);
                let r = dofs[1].map_or(0.0, |i| c[i]);
                *wk = qp.phi_left * l + qp.phi_right * r;
            }
            reaction.hessian_contract(qp.x, t, &w, &mut hc);
            let phis = [qp.phi_left, qp.phi_right];
            for (a, b) in [(0, 0), (1, 1), (0, 1)] {
                if let (Some(i), Some(j)) = (dofs[a], dofs[b]) {
                    let pp = qp.weight * phis[a] * phis[b];
                    for l in 0..m {
                        for p in 0..m {
                            let mut val = -hc[p * m + l];
                            if p == l {
                                val -= lambda * source.second_derivative(l, qp.x, t[l]) * w[l];
                            }
                            h.add_sym(l, p, i, j, pp * val);
                        }
                    }
                }
            }
            Ok(())
        })?;
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_fem::{build_mesh, Grading};
    use crate::model::builtin_problem;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use serde_json::json;

    fn disc(name: &str, params: serde_json::Value, n: usize) -> Discretization {
        let spec = builtin_problem(name, &params).unwrap();
        Discretization::new(spec, build_mesh(n, Grading::Uniform).unwrap()).unwrap()
    }

    fn random_field(d: &Discretization, rng: &mut ChaCha8Rng) -> FEField {
        let data = (0..d.dim()).map(|_| rng.gen_range(0.05..2.0)).collect();
        d.field(data).unwrap()
    }

    /// Composite Gauss–Legendre with 10 sub-intervals per element.
    fn refined_load(d: &Discretization, u: &FEField, f: impl Fn(f64, &[f64]) -> f64) -> Vec<f64> {
        let mesh = d.mesh();
        let n = d.n();
        let mut out = vec![0.0; n];
        let m = d.m();
        for e in 0..mesh.n_elements() {
            let (a, b) = mesh.element(e);
            let dofs = mesh.element_dofs(e);
            for s in 0..10 {
                let sa = a + (b - a) * s as f64 / 10.0;
                let sb = a + (b - a) * (s + 1) as f64 / 10.0;
                for xi in [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6] {
                    let wts = if (xi as f64).abs() > 0.5 { 0.347_854_845_137_453_9 } else { 0.652_145_154_862_546_1 };
                    let x = 0.5 * (sa + sb) + 0.5 * (sb - sa) * xi;
                    let w = 0.5 * (sb - sa) * wts;
                    let t: Vec<f64> = (0..m).map(|c| mesh.eval_p1(u.component(c), x)).collect();
                    let pr = (x - a) / (b - a);
                    let val = f(x, &t);
                    if let Some(i) = dofs[0] {
                        out[i] += w * val * (1.0 - pr);
                    }
                    if let Some(i) = dofs[1] {
                        out[i] += w * val * pr;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn g_load_positive_for_parabola() {
        let d = disc("scalar_power", json!({"q": 0.5, "gamma": 2.0}), 4);
        let u = FEField::from_fn(d.mesh(), 1, |_, x| x * (1.0 - x));
        let loads = d.eval_residual_terms(&u).unwrap();
        assert!(loads.g.as_slice().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn zero_field_gives_zero_reaction_for_product() {
        let d = disc("degenerate_product", json!({}), 8);
        let loads = d.eval_residual_terms(&d.zero_field()).unwrap();
        assert!(loads.f.as_slice().iter().all(|&v| v == 0.0));
        let r = d.residual(&d.zero_field(), 3.7).unwrap();
        assert!(r.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn f_load_matches_refined_quadrature_for_unit_coefficients() {
        let d = disc("scalar_power", json!({"q": 0.5, "gamma": 2.0}), 4);
        let u = d.field(vec![1.0; 3]).unwrap();
        let loads = d.eval_residual_terms(&u).unwrap();
        let oracle = refined_load(&d, &u, |_, t| t[0] * t[0]);
        for (a, b) in loads.f.as_slice().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn negative_coefficient_rejected() {
        let d = disc("scalar_power", json!({"q": 0.5, "gamma": 2.0}), 4);
        let u = d.field(vec![0.1, -0.2, 0.1]).unwrap();
        assert!(matches!(
            d.eval_residual_terms(&u),
            Err(ModelError::NegativeCoefficient { node: 1, .. })
        ));
        let z = d.field(vec![0.1, 0.0, 0.1]).unwrap();
        assert!(matches!(d.eval_jacobian(&z, 1.0), Err(ModelError::NotInOpenCone { .. })));
    }

    #[test]
    fn linear_jacobian_is_stiffness() {
        let d = disc("linear_diagnostic", json!({}), 6);
        let u = d.field(vec![0.3; 5]).unwrap();
        let j = d.eval_jacobian(&u, 0.0).unwrap();
        let a = d.stiffness(0).to_dense();
        assert_eq!(j.to_dense(), a);
    }

    #[test]
    fn cooperative_off_diagonal_blocks_nonpositive() {
        let d = disc("cooperative_product", json!({}), 8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_field(&d, &mut rng);
        let j = d.eval_jacobian(&u, 1.0).unwrap();
        let n = d.n();
        for r in 0..n {
            for c in n..2 * n {
                assert!(j.get(r, c) <= 0.0);
                assert!(j.get(c, r) <= 0.0);
            }
        }
    }

    fn fd_check(d: &Discretization, seed: u64, lambda: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let u = random_field(d, &mut rng);
            let dir: Vec<f64> = (0..d.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h = 1e-5;
            let up = d.field(u.as_slice().iter().zip(&dir).map(|(a, b)| a + h * b).collect()).unwrap();
            let um = d.field(u.as_slice().iter().zip(&dir).map(|(a, b)| a - h * b).collect()).unwrap();
            let rp = d.residual(&up, lambda).unwrap();
            let rm = d.residual(&um, lambda).unwrap();
            let fd: Vec<f64> = rp.as_slice().iter().zip(rm.as_slice()).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let jd = d.eval_jacobian(&u, lambda).unwrap().mul_vec(&dir);
            let scale = fd.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (a, b) in jd.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-6 * scale, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        fd_check(&disc("scalar_power", json!({"q": 0.5, "gamma": 2.0}), 16), 1, 2.0);
        fd_check(&disc("cooperative_product", json!({}), 12), 2, 1.5);
        fd_check(&disc("degenerate_product", json!({}), 12), 4, 0.7);
    }

    #[test]
    fn adjoint_hessian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for d in [
            disc("scalar_power", json!({"q": 0.5, "gamma": 2.5}), 10),
            disc("cooperative_product", json!({}), 10),
        ] {
            let lambda = 1.3;
            let u = random_field(&d, &mut rng);
            let v = random_field(&d, &mut rng);
            let dir: Vec<f64> = (0..d.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h = 1e-6;
            let up = d.field(u.as_slice().iter().zip(&dir).map(|(a, b)| a + h * b).collect()).unwrap();
            let um = d.field(u.as_slice().iter().zip(&dir).map(|(a, b)| a - h * b).collect()).unwrap();
            let jp = d.eval_jacobian(&up, lambda).unwrap().tr_mul_vec(v.as_slice());
            let jm = d.eval_jacobian(&um, lambda).unwrap().tr_mul_vec(v.as_slice());
            let hd = d.adjoint_hessian(&u, &v, lambda).unwrap().mul_vec(&dir);
            let scale = hd.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            for i in 0..d.dim() {
                let fd = (jp[i] - jm[i]) / (2.0 * h);
                assert!((fd - hd[i]).abs() <= 1e-5 * scale, "{fd} vs {}", hd[i]);
            }
        }
    }

    #[test]
    fn f_block_matches_pointwise_jacobian_quadrature() {
        let d = disc("cooperative_product", json!({}), 6);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_field(&d, &mut rng);
        let (fu, _) = d.jacobian_parts(&u).unwrap();
        let n = d.n();
        let mut jac = vec![0.0; 4];
        // entry ((0,i),(1,i)) = ∫ ∂f^0/∂t^1 ψ_i², with ψ_i² integrated on both neighbours
        for i in 0..n {
            let mut s = 0.0;
            for e in [i, i + 1] {
                for qp in d.mesh().quadrature(e) {
                    let t: Vec<f64> = (0..2).map(|k| d.mesh().eval_p1(u.component(k), qp.x)).collect();
                    d.spec().reaction.jacobian(qp.x, &t, &mut jac);
                    let phi = if e == i { qp.phi_right } else { qp.phi_left };
                    s += qp.weight * jac[1] * phi * phi;
                }
            }
            assert!((fu.get(i, n + i) - s).abs() < 1e-13);
        }
    }

    proptest! {
        #[test]
        fn condition_d_and_euler_identity(
            coeffs in proptest::collection::vec(1e-3f64..5.0, 14),
            w in proptest::collection::vec(0.0f64..1.0, 14),
            v in proptest::collection::vec(0.0f64..1.0, 14),
        ) {
            let d = disc("cooperative_product", json!({"q": 0.3}), 8);
            let u = d.field(coeffs.clone()).unwrap();
            let loads = d.eval_residual_terms(&u).unwrap();
            prop_assert!(loads.g.as_slice().iter().all(|&g| g > 0.0));
            let (_, gu) = d.jacobian_parts(&u).unwrap();
            let guw = gu.mul_vec(&w);
            let pair: f64 = guw.iter().zip(&v).map(|(a, b)| a * b).sum();
            prop_assert!(pair >= 0.0);
            let guu = gu.mul_vec(u.as_slice());
            let lhs: f64 = guu.iter().zip(&v).map(|(a, b)| a * b).sum();
            let rhs: f64 = 0.3 * loads.g.as_slice().iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
            prop_assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1e-300));
        }
    }
}
