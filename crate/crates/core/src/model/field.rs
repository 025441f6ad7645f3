use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::mesh_fem::Mesh1D;

/// Nodal coefficients of an `m`-component P1 field, component-major:
/// entry `(k, i)` lives at `k * n + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FEField {
    m: usize,
    n: usize,
    data: Vec<f64>,
}

impl FEField {
    pub fn zeros(m: usize, n: usize) -> Self {
        FEField {
            m,
            n,
            data: vec![0.0; m * n],
        }
    }

    pub fn from_vec(m: usize, n: usize, data: Vec<f64>) -> Result<Self, ModelError> {
        if data.len() != m * n {
            return Err(ModelError::ShapeMismatch {
                m,
                n,
                got_m: m,
                got_n: data.len() / m.max(1),
            });
        }
        Ok(FEField { m, n, data })
    }

    /// Interpolates `u(k, x)` at the interior nodes.
    pub fn from_fn(mesh: &Mesh1D, m: usize, u: impl Fn(usize, f64) -> f64) -> Self {
        let xs = mesh.interior_nodes();
        let n = xs.len();
        let mut data = Vec::with_capacity(m * n);
        for k in 0..m {
            data.extend(xs.iter().map(|&x| u(k, x)));
        }
        FEField { m, n, data }
    }

    /// Unit nodal direction `η_i` for global index `i`.
    pub fn basis(m: usize, n: usize, index: usize) -> Self {
        let mut f = Self::zeros(m, n);
        f.data[index] = 1.0;
        f
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn nodes_per_component(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn component(&self, k: usize) -> &[f64] {
        &self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn component_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.data[k * self.n + i]
    }

    pub fn check_shape(&self, m: usize, n: usize) -> Result<(), ModelError> {
        if self.m != m || self.n != n {
            return Err(ModelError::ShapeMismatch {
                m,
                n,
                got_m: self.m,
                got_n: self.n,
            });
        }
        Ok(())
    }

    /// All coefficients strictly positive.
    pub fn is_open_cone(&self) -> bool {
        self.data.iter().all(|&v| v > 0.0)
    }

    pub fn is_closed_cone(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn min_coeff(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, t: f64) -> Self {
        FEField {
            m: self.m,
            n: self.n,
            data: self.data.iter().map(|v| v * t).collect(),
        }
    }

    pub fn dot(&self, other: &FEField) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_fem::{build_mesh, Grading};

    #[test]
    fn layout_and_cone_flags() {
        let mesh = build_mesh(4, Grading::Uniform).unwrap();
        let f = FEField::from_fn(&mesh, 2, |k, x| (k as f64 + 1.0) * x);
        assert_eq!(f.component(0), &[0.25, 0.5, 0.75]);
        assert_eq!(f.component(1), &[0.5, 1.0, 1.5]);
        assert_eq!(f.get(1, 2), 1.5);
        assert!(f.is_open_cone());
        let b = FEField::basis(2, 3, 4);
        assert!(!b.is_open_cone() && b.is_closed_cone());
        assert_eq!(b.get(1, 1), 1.0);
        assert!(FEField::from_vec(2, 3, vec![0.0; 5]).is_err());
        assert!(f.check_shape(2, 4).is_err());
    }
}
