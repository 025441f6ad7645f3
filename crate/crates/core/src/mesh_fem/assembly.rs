use std::io::{self, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{FemError, Mesh1D};

/// Symmetric tridiagonal matrix over interior nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorMatrix {
    diag: Vec<f64>,
    off: Vec<f64>,
    component: usize,
    coercive: bool,
}

impl OperatorMatrix {
    /// Builds a matrix from its diagonal and its (sub = super) off-diagonal.
    pub fn from_bands(diag: Vec<f64>, off: Vec<f64>) -> Result<Self, FemError> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(FemError::BandShape {
                diag: diag.len(),
                off: off.len(),
            });
        }
        let mut m = OperatorMatrix {
            diag,
            off,
            component: 0,
            coercive: true,
        };
        m.coercive = m.is_positive_definite();
        Ok(m)
    }

    pub fn with_component(mut self, k: usize) -> Self {
        self.component = k;
        self
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off(&self) -> &[f64] {
        &self.off
    }

    pub fn component(&self) -> usize {
        self.component
    }

    /// False when the smallest eigenvalue is not positive.
    pub fn is_coercive(&self) -> bool {
        self.coercive
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if i + 1 == j {
            self.off[i]
        } else if j + 1 == i {
            self.off[j]
        } else {
            0.0
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            s += x[i] * self.diag[i] * y[i];
            if i + 1 < n {
                s += self.off[i] * (x[i] * y[i + 1] + x[i + 1] * y[i]);
            }
        }
        s
    }

    /// Tridiagonal LU (Thomas) solve without pivoting.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, FemError> {
        let n = self.dim();
        let scale = self
            .diag
            .iter()
            .chain(self.off.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = 1e-14 * scale.max(f64::MIN_POSITIVE);
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut pivot = self.diag[0];
        if pivot.abs() <= tiny {
            return Err(FemError::Singular);
        }
        if n > 1 {
            c[0] = self.off[0] / pivot;
        }
        d[0] = rhs[0] / pivot;
        for i in 1..n {
            pivot = self.diag[i] - self.off[i - 1] * c[i - 1];
            if pivot.abs() <= tiny || !pivot.is_finite() {
                return Err(FemError::Singular);
            }
            if i + 1 < n {
                c[i] = self.off[i] / pivot;
            }
            d[i] = (rhs[i] - self.off[i - 1] * d[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Ok(d)
    }

    /// All LDL^T pivots positive, i.e. the smallest eigenvalue is positive.
    fn is_positive_definite(&self) -> bool {
        let mut pivot = self.diag[0];
        if !(pivot > 0.0) {
            return false;
        }
        for i in 1..self.dim() {
            pivot = self.diag[i] - self.off[i - 1] * self.off[i - 1] / pivot;
            if !(pivot > 0.0) {
                return false;
            }
        }
        true
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// Writes `row col value` lines (0-based, full symmetric pattern).
    pub fn write_triplets<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.dim();
        for i in 0..n {
            if i > 0 {
                writeln!(out, "{} {} {:.17e}", i, i - 1, self.off[i - 1])?;
            }
            writeln!(out, "{} {} {:.17e}", i, i, self.diag[i])?;
            if i + 1 < n {
                writeln!(out, "{} {} {:.17e}", i, i + 1, self.off[i])?;
            }
        }
        Ok(())
    }
}

/// Galerkin matrix of `-(σ u')' + c u` on the P1 space with homogeneous
/// Dirichlet conditions, 2-point Gauss per element.
pub fn assemble_stiffness(
    mesh: &Mesh1D,
    sigma: &dyn Fn(f64) -> f64,
    c: &dyn Fn(f64) -> f64,
) -> Result<OperatorMatrix, FemError> {
    let n = mesh.n_interior();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    for e in 0..mesh.n_elements() {
        let (a, b) = mesh.element(e);
        let h = b - a;
        let mut local = [[0.0; 2]; 2];
        for qp in mesh.quadrature(e) {
            let s = sigma(qp.x);
            if !(s > 0.0) || !s.is_finite() {
                return Err(FemError::NonPositiveSigma { x: qp.x, value: s });
            }
            let cv = c(qp.x);
            if !cv.is_finite() {
                return Err(FemError::NonFinite { x: qp.x });
            }
            let dphi = [-1.0 / h, 1.0 / h];
            let phi = [qp.phi_left, qp.phi_right];
            for p in 0..2 {
                for r in 0..2 {
                    local[p][r] += qp.weight * (s * dphi[p] * dphi[r] + cv * phi[p] * phi[r]);
                }
            }
        }
        let dofs = mesh.element_dofs(e);
        for p in 0..2 {
            if let Some(i) = dofs[p] {
                diag[i] += local[p][p];
            }
        }
        if let (Some(i), Some(_)) = (dofs[0], dofs[1]) {
            off[i] += 0.5 * (local[0][1] + local[1][0]);
        }
    }
    OperatorMatrix::from_bands(diag, off)
}

/// Entries `∫ w ψ_i dx` by 2-point Gauss per element.
pub fn assemble_load(mesh: &Mesh1D, w: &dyn Fn(f64) -> f64) -> Result<Vec<f64>, FemError> {
    let mut load = vec![0.0; mesh.n_interior()];
    for e in 0..mesh.n_elements() {
        let dofs = mesh.element_dofs(e);
        for qp in mesh.quadrature(e) {
            let wv = w(qp.x);
            if !wv.is_finite() {
                return Err(FemError::NonFinite { x: qp.x });
            }
            if let Some(i) = dofs[0] {
                load[i] += qp.weight * wv * qp.phi_left;
            }
            if let Some(i) = dofs[1] {
                load[i] += qp.weight * wv * qp.phi_right;
            }
        }
    }
    Ok(load)
}

/// Outcome of the sign-pattern and `A ω = 1̄` test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MMatrixReport {
    pub is_diag_positive: bool,
    pub is_offdiag_nonpositive: bool,
    pub omega: Vec<f64>,
    pub is_omega_positive: bool,
    pub omega_sup_norm: f64,
}

impl MMatrixReport {
    /// Whether the discrete maximum-principle implication is certified.
    pub fn holds(&self) -> bool {
        self.is_diag_positive && self.is_offdiag_nonpositive && self.is_omega_positive
    }
}

pub fn check_m_matrix(a: &OperatorMatrix) -> Result<MMatrixReport, FemError> {
    let ones = vec![1.0; a.dim()];
    let omega = a.solve(&ones)?;
    Ok(MMatrixReport {
        is_diag_positive: a.diag().iter().all(|&d| d > 0.0),
        is_offdiag_nonpositive: a.off().iter().all(|&o| o <= 0.0),
        is_omega_positive: omega.iter().all(|&w| w > 0.0),
        omega_sup_norm: omega.iter().fold(0.0, |m, w| m.max(w.abs())),
        omega,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_fem::{build_mesh, Grading};

    fn one(_: f64) -> f64 {
        1.0
    }
    fn zero(_: f64) -> f64 {
        0.0
    }

    #[test]
    fn laplacian_on_four_elements() {
        let mesh = build_mesh(4, Grading::Uniform).unwrap();
        let a = assemble_stiffness(&mesh, &one, &zero).unwrap();
        for &d in a.diag() {
            assert!((d - 8.0).abs() < 1e-12);
        }
        for &o in a.off() {
            assert!((o + 4.0).abs() < 1e-12);
        }
        assert!(a.is_coercive());
    }

    #[test]
    fn laplacian_on_two_elements() {
        let mesh = build_mesh(2, Grading::Uniform).unwrap();
        let a = assemble_stiffness(&mesh, &one, &zero).unwrap();
        assert_eq!(a.dim(), 1);
        assert!((a.diag()[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn reaction_term_matches_exact_mass_matrix() {
        let mesh = build_mesh(4, Grading::Uniform).unwrap();
        let h = 0.25;
        let a = assemble_stiffness(&mesh, &one, &one).unwrap();
        // exact P1 mass: h/6 [4, 1]
        for &d in a.diag() {
            assert!((d - (2.0 / h + 4.0 * h / 6.0)).abs() < 1e-12);
            assert!((d - (8.0 + 1.0 / 6.0)).abs() < 1e-12);
        }
        for &o in a.off() {
            assert!((o - (-1.0 / h + h / 6.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_nonpositive_sigma() {
        let mesh = build_mesh(4, Grading::Uniform).unwrap();
        let bad = |x: f64| x - 0.5;
        assert!(matches!(
            assemble_stiffness(&mesh, &bad, &zero),
            Err(FemError::NonPositiveSigma { .. })
        ));
    }

    #[test]
    fn flags_non_coercive_matrix() {
        let mesh = build_mesh(8, Grading::Uniform).unwrap();
        let c = |_: f64| -200.0;
        let a = assemble_stiffness(&mesh, &one, &c).unwrap();
        assert!(!a.is_coercive());
    }

    #[test]
    fn load_of_constant_is_hat_integral() {
        let mesh = build_mesh(4, Grading::Uniform).unwrap();
        let l = assemble_load(&mesh, &one).unwrap();
        for v in l {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let z = assemble_load(&mesh, &zero).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn load_of_sine_matches_closed_form() {
        use std::f64::consts::PI;
        let mesh = build_mesh(64, Grading::Uniform).unwrap();
        let l = assemble_load(&mesh, &|x: f64| (PI * x).sin()).unwrap();
        let h = 1.0 / 64.0;
        // ∫ sin(πx) ψ_i = (2 - 2 cos(πh)) sin(π x_i) / (π² h)
        for (i, &x) in mesh.interior_nodes().iter().enumerate() {
            let exact = (2.0 - 2.0 * (PI * h).cos()) * (PI * x).sin() / (PI * PI * h);
            assert!((l[i] - exact).abs() < 1e-6);
        }
    }

    #[test]
    fn load_signals_non_finite() {
        let mesh = build_mesh(4, Grading::Uniform).unwrap();
        let w = |x: f64| 1.0 / (x - mesh.quadrature(0)[0].x);
        assert!(matches!(
            assemble_load(&mesh, &w),
            Err(FemError::NonFinite { .. })
        ));
    }

    #[test]
    fn torsion_function_from_m_matrix_check() {
        let mesh = build_mesh(4, Grading::Uniform).unwrap();
        let a = assemble_stiffness(&mesh, &one, &zero).unwrap();
        let rep = check_m_matrix(&a).unwrap();
        assert!(rep.holds());
        // A ω = 1̄ with A = h⁻¹ tridiag(-1,2,-1) gives x(1-x)/(2h) at nodes.
        let h = 0.25;
        for (i, &x) in mesh.interior_nodes().iter().enumerate() {
            assert!((rep.omega[i] - x * (1.0 - x) / (2.0 * h)).abs() < 1e-14);
        }
        // with the consistent load of 1 the torsion function itself appears
        let load = assemble_load(&mesh, &one).unwrap();
        let w = a.solve(&load).unwrap();
        for (i, &x) in mesh.interior_nodes().iter().enumerate() {
            assert!((w[i] - x * (1.0 - x) / 2.0).abs() < 1e-14, "{} vs {}", w[i], x * (1.0 - x) / 2.0);
        }
    }

    #[test]
    fn identity_and_bad_sign() {
        let id = OperatorMatrix::from_bands(vec![1.0; 3], vec![0.0; 2]).unwrap();
        let rep = check_m_matrix(&id).unwrap();
        assert!(rep.holds());
        assert_eq!(rep.omega, vec![1.0; 3]);

        let bad = OperatorMatrix::from_bands(vec![2.0; 3], vec![-1.0, 0.5]).unwrap();
        let rep = check_m_matrix(&bad).unwrap();
        assert!(!rep.is_offdiag_nonpositive);
        assert!(!rep.holds());
    }

    #[test]
    fn singular_matrix_is_signalled() {
        let a = OperatorMatrix::from_bands(vec![1.0, 1.0], vec![-1.0]).unwrap();
        assert!(matches!(check_m_matrix(&a), Err(FemError::Singular)));
    }

    #[test]
    fn tridiagonal_solve_matches_dense() {
        let a = OperatorMatrix::from_bands(vec![3.0, 4.0, 5.0, 2.5], vec![-1.0, 0.7, -0.3]).unwrap();
        let b = [1.0, -2.0, 0.5, 3.0];
        let x = a.solve(&b).unwrap();
        let dense = a.to_dense();
        let xd = dense.lu().solve(&nalgebra::DVector::from_column_slice(&b)).unwrap();
        for i in 0..4 {
            assert!((x[i] - xd[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn triplet_export() {
        let a = OperatorMatrix::from_bands(vec![2.0, 2.0], vec![-1.0]).unwrap();
        let mut buf = Vec::new();
        a.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("0 0 2.00000000000000000e0"));
    }
}
