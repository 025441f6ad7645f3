use serde::{Deserialize, Serialize};

use super::FemError;

/// Node spacing rule for [`build_mesh`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "ratio", rename_all = "snake_case")]
pub enum Grading {
    Uniform,
    /// Consecutive element sizes grow by this factor from left to right.
    Geometric(f64),
}

impl Default for Grading {
    fn default() -> Self {
        Grading::Uniform
    }
}

/// Abscissae of the 2-point Gauss rule on the reference interval [-1, 1].
pub const GAUSS_POINTS: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

/// A partition `0 = x_0 < x_1 < ... < x_{n+1} = 1` of the unit interval.
///
/// Unknowns live on interior nodes only: interior node `j` (1-based in the
/// node list) carries unknown index `j - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh1D {
    nodes: Vec<f64>,
    element_sizes: Vec<f64>,
    h_max: f64,
    quasi_uniformity: f64,
}

/// One 2-point Gauss sample on an element, with the values of the two local
/// hat functions there.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub x: f64,
    pub weight: f64,
    /// Value of the hat function attached to the element's left node.
    pub phi_left: f64,
    /// Value of the hat function attached to the element's right node.
    pub phi_right: f64,
}

pub fn build_mesh(n_elements: usize, grading: Grading) -> Result<Mesh1D, FemError> {
    if n_elements < 2 {
        return Err(FemError::TooFewElements(n_elements));
    }
    let nodes = match grading {
        Grading::Uniform => (0..=n_elements)
            .map(|i| i as f64 / n_elements as f64)
            .collect::<Vec<_>>(),
        Grading::Geometric(ratio) => {
            if !(ratio > 0.5 && ratio < 2.0) {
                return Err(FemError::BadGradingRatio(ratio));
            }
            let sizes: Vec<f64> = (0..n_elements).map(|i| ratio.powi(i as i32)).collect();
            let total: f64 = sizes.iter().sum();
            let mut nodes = Vec::with_capacity(n_elements + 1);
            let mut acc = 0.0;
            nodes.push(0.0);
            for s in &sizes[..n_elements - 1] {
                acc += s / total;
                nodes.push(acc);
            }
            nodes.push(1.0);
            nodes
        }
    };
    Mesh1D::from_nodes(nodes)
}

impl Mesh1D {
    /// Validates and wraps an explicit node list.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self, FemError> {
        if nodes.len() < 3 {
            return Err(FemError::TooFewElements(nodes.len().saturating_sub(1)));
        }
        if nodes[0] != 0.0 || *nodes.last().unwrap() != 1.0 {
            return Err(FemError::BadEndpoints);
        }
        let element_sizes: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        if element_sizes.iter().any(|&h| !(h > 0.0)) {
            return Err(FemError::NotIncreasing);
        }
        let h_max = element_sizes.iter().cloned().fold(0.0, f64::max);
        let h_min = element_sizes.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Mesh1D {
            nodes,
            element_sizes,
            h_max,
            quasi_uniformity: h_max / h_min,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn element_sizes(&self) -> &[f64] {
        &self.element_sizes
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    /// The constant `κ ≥ 1` with `h_max / κ ≤ h_i ≤ h_max`.
    pub fn quasi_uniformity(&self) -> f64 {
        self.quasi_uniformity
    }

    pub fn n_elements(&self) -> usize {
        self.element_sizes.len()
    }

    pub fn n_interior(&self) -> usize {
        self.nodes.len() - 2
    }

    pub fn interior_nodes(&self) -> &[f64] {
        &self.nodes[1..self.nodes.len() - 1]
    }

    /// Endpoints of element `e`.
    pub fn element(&self, e: usize) -> (f64, f64) {
        (self.nodes[e], self.nodes[e + 1])
    }

    /// Unknown indices of the left and right node of element `e`
    /// (`None` for a boundary node).
    pub fn element_dofs(&self, e: usize) -> [Option<usize>; 2] {
        let n = self.n_interior();
        let left = if e >= 1 { Some(e - 1) } else { None };
        let right = if e < n { Some(e) } else { None };
        [left, right]
    }

    pub fn quadrature(&self, e: usize) -> [QuadPoint; 2] {
        let (a, b) = self.element(e);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        GAUSS_POINTS.map(|xi| {
            let phi_right = 0.5 * (1.0 + xi);
            QuadPoint {
                x: mid + half * xi,
                weight: half,
                phi_left: 1.0 - phi_right,
                phi_right,
            }
        })
    }

    /// Locates the element containing `x` (clamped to `[0, 1]`).
    pub fn locate(&self, x: f64) -> usize {
        let x = x.clamp(0.0, 1.0);
        match self
            .nodes
            .binary_search_by(|node| node.partial_cmp(&x).unwrap())
        {
            Ok(i) => i.min(self.n_elements() - 1),
            Err(i) => (i - 1).min(self.n_elements() - 1),
        }
    }

    /// Evaluates the P1 function with interior coefficients `coeffs` at `x`.
    pub fn eval_p1(&self, coeffs: &[f64], x: f64) -> f64 {
        let e = self.locate(x);
        let (a, b) = self.element(e);
        let s = ((x - a) / (b - a)).clamp(0.0, 1.0);
        let [l, r] = self.element_dofs(e);
        let ul = l.map_or(0.0, |i| coeffs[i]);
        let ur = r.map_or(0.0, |i| coeffs[i]);
        ul * (1.0 - s) + ur * s
    }
}

/// Distance to the boundary of (0, 1).
pub fn distance_to_boundary(x: f64) -> f64 {
    x.min(1.0 - x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_four() {
        let mesh = build_mesh(4, Grading::Uniform).unwrap();
        assert_eq!(mesh.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(mesh.h_max(), 0.25);
        assert_eq!(mesh.quasi_uniformity(), 1.0);
        assert_eq!(mesh.n_interior(), 3);
    }

    #[test]
    fn two_elements_one_interior_node() {
        let mesh = build_mesh(2, Grading::Uniform).unwrap();
        assert_eq!(mesh.nodes(), &[0.0, 0.5, 1.0]);
        assert_eq!(mesh.n_interior(), 1);
    }

    #[test]
    fn geometric_quasi_uniformity() {
        let mesh = build_mesh(8, Grading::Geometric(1.2)).unwrap();
        let h = mesh.element_sizes();
        let recomputed = h[7] / h[0];
        assert!((mesh.quasi_uniformity() - recomputed).abs() < 1e-12);
        assert!((mesh.quasi_uniformity() - 1.2f64.powi(7)).abs() < 1e-12);
        for &hi in h {
            assert!(hi <= mesh.h_max() && hi >= mesh.h_max() / mesh.quasi_uniformity() - 1e-15);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            build_mesh(1, Grading::Uniform),
            Err(FemError::TooFewElements(1))
        ));
        assert!(build_mesh(4, Grading::Geometric(2.5)).is_err());
        assert!(Mesh1D::from_nodes(vec![0.0, 0.6, 0.4, 1.0]).is_err());
        assert!(Mesh1D::from_nodes(vec![0.1, 0.5, 1.0]).is_err());
    }

    #[test]
    fn quadrature_integrates_quadratics() {
        let mesh = build_mesh(3, Grading::Geometric(1.3)).unwrap();
        let mut integral = 0.0;
        for e in 0..mesh.n_elements() {
            for qp in mesh.quadrature(e) {
                integral += qp.weight * qp.x * qp.x;
            }
        }
        assert!((integral - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn p1_evaluation_hits_nodes() {
        let mesh = build_mesh(5, Grading::Uniform).unwrap();
        let c = [1.0, 2.0, 3.0, 4.0];
        for (i, &x) in mesh.interior_nodes().iter().enumerate() {
            assert!((mesh.eval_p1(&c, x) - c[i]).abs() < 1e-14);
        }
        assert_eq!(mesh.eval_p1(&c, 0.0), 0.0);
        assert!((mesh.eval_p1(&c, 0.1) - 0.5).abs() < 1e-14);
    }
}
