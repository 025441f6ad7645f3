//! One-dimensional meshes and P1 finite-element operators.
//!
//! Unknowns are the nodal coefficients at interior nodes; boundary nodes are
//! eliminated. Every integral is evaluated with the 2-point Gauss rule per
//! element.

mod assembly;
mod interp;
mod mesh;

use thiserror::Error;

pub use assembly::{assemble_load, assemble_stiffness, check_m_matrix, MMatrixReport, OperatorMatrix};
pub use interp::{
    loglog_slope, nodal_interpolate, relative_interp_error, torsion_power_profile,
    SAMPLES_PER_ELEMENT,
};
pub use mesh::{build_mesh, distance_to_boundary, Grading, Mesh1D, QuadPoint, GAUSS_POINTS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("mesh needs at least 2 elements, got {0}")]
    TooFewElements(usize),
    #[error("geometric grading ratio {0} outside (0.5, 2)")]
    BadGradingRatio(f64),
    #[error("mesh endpoints must be exactly 0 and 1")]
    BadEndpoints,
    #[error("mesh nodes must be strictly increasing")]
    NotIncreasing,
    #[error("diffusion coefficient {value} is not positive at x = {x}")]
    NonPositiveSigma { x: f64, value: f64 },
    #[error("non-finite quadrature sample at x = {x}")]
    NonFinite { x: f64 },
    #[error("band lengths do not form a square tridiagonal matrix (diag {diag}, off {off})")]
    BandShape { diag: usize, off: usize },
    #[error("matrix is singular")]
    Singular,
    #[error("negative nodal value {value} at x = {x}")]
    NegativeNodal { x: f64, value: f64 },
    #[error("function value {value} at x = {x} is not positive")]
    NonPositiveSample { x: f64, value: f64 },
    #[error("exponent {0} outside (0, 1)")]
    BadExponent(f64),
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn stiffness_is_symmetric_m_matrix(
            n in 2usize..40,
            ratio in 0.8f64..1.25,
            s0 in 0.2f64..3.0,
            s1 in -0.15f64..0.15,
            c0 in 0.0f64..5.0,
        ) {
            let mesh = build_mesh(n, Grading::Geometric(ratio)).unwrap();
            let sigma = move |x: f64| s0 * (1.0 + s1 * (7.0 * x).sin());
            let c = move |x: f64| c0 * x * x;
            let a = assemble_stiffness(&mesh, &sigma, &c).unwrap();
            let dense = a.to_dense();
            let scale = dense.amax();
            prop_assert!((&dense - dense.transpose()).amax() <= 1e-13 * scale);
            let rep = check_m_matrix(&a).unwrap();
            prop_assert!(rep.holds());
            prop_assert!(a.is_coercive());
        }
    }

    #[test]
    fn uniform_laplacian_is_scaled_second_difference() {
        for n in [3usize, 10, 33] {
            let mesh = build_mesh(n, Grading::Uniform).unwrap();
            let a = assemble_stiffness(&mesh, &|_| 1.0, &|_| 0.0).unwrap();
            let h = 1.0 / n as f64;
            for &d in a.diag() {
                assert!((d - 2.0 / h).abs() <= 1e-12 * (2.0 / h));
            }
            for &o in a.off() {
                assert!((o + 1.0 / h).abs() <= 1e-12 * (1.0 / h));
            }
        }
    }
}
