use super::{FemError, Mesh1D};

/// Samples per element used by [`relative_interp_error`].
pub const SAMPLES_PER_ELEMENT: usize = 32;

/// Nodal interpolant `I_r u`: the coefficients `u(x_i)` at interior nodes.
///
/// With `require_cone`, negative nodal values are rejected.
pub fn nodal_interpolate(
    mesh: &Mesh1D,
    u: &dyn Fn(f64) -> f64,
    require_cone: bool,
) -> Result<Vec<f64>, FemError> {
    mesh.interior_nodes()
        .iter()
        .map(|&x| {
            let v = u(x);
            if !v.is_finite() {
                Err(FemError::NonFinite { x })
            } else if require_cone && v < 0.0 {
                Err(FemError::NegativeNodal { x, value: v })
            } else {
                Ok(v)
            }
        })
        .collect()
}

/// `sup |I_r u - u| / u` over a dense sample grid (midpoint-shifted, so the
/// endpoints themselves are never sampled).
pub fn relative_interp_error(
    mesh: &Mesh1D,
    u: &dyn Fn(f64) -> f64,
    q: f64,
) -> Result<f64, FemError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(FemError::BadExponent(q));
    }
    let coeffs = nodal_interpolate(mesh, u, true)?;
    let mut worst: f64 = 0.0;
    for e in 0..mesh.n_elements() {
        let (a, b) = mesh.element(e);
        for j in 0..SAMPLES_PER_ELEMENT {
            let x = a + (b - a) * (j as f64 + 0.5) / SAMPLES_PER_ELEMENT as f64;
            let ux = u(x);
            if !(ux > 0.0) {
                return Err(FemError::NonPositiveSample { x, value: ux });
            }
            let err = (mesh.eval_p1(&coeffs, x) - ux).abs() / ux;
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `u` with `-u'' = d(x)^q`, `u(0) = u(1) = 0`, obtained by integrating twice.
pub fn torsion_power_profile(q: f64) -> impl Fn(f64) -> f64 + Send + Sync + Clone {
    let c = 0.5f64.powf(q + 1.0) / (q + 1.0);
    let k = (q + 1.0) * (q + 2.0);
    move |x: f64| {
        let s = x.min(1.0 - x);
        if s <= 0.0 {
            0.0
        } else {
            c * s - s.powf(q + 2.0) / k
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_fem::{build_mesh, Grading};
    use std::f64::consts::PI;

    #[test]
    fn interpolate_examples() {
        let mesh = build_mesh(4, Grading::Uniform).unwrap();
        let u = nodal_interpolate(&mesh, &|x| x * (1.0 - x), true).unwrap();
        assert_eq!(u, vec![0.1875, 0.25, 0.1875]);
        let z = nodal_interpolate(&mesh, &|_| 0.0, true).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        let s = nodal_interpolate(&mesh, &|x| (PI * x).sin(), true).unwrap();
        assert!((s[0] - (PI / 4.0).sin()).abs() < 1e-15);
        assert!((s[1] - 1.0).abs() < 1e-15);
        assert!((s[2] - (3.0 * PI / 4.0).sin()).abs() < 1e-15);
    }

    #[test]
    fn interpolate_rejects_negative_for_cone() {
        let mesh = build_mesh(4, Grading::Uniform).unwrap();
        let r = nodal_interpolate(&mesh, &|x| x - 0.5, true);
        assert!(matches!(r, Err(FemError::NegativeNodal { .. })));
        assert!(nodal_interpolate(&mesh, &|x| x - 0.5, false).is_ok());
    }

    #[test]
    fn interpolation_is_a_projection() {
        let mesh = build_mesh(7, Grading::Geometric(1.1)).unwrap();
        let c = vec![0.3, 1.2, 0.7, 2.0, 0.1, 0.9];
        let again = nodal_interpolate(&mesh, &|x| mesh.eval_p1(&c, x), false).unwrap();
        for (a, b) in c.iter().zip(&again) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn relative_error_of_parabola() {
        let mesh = build_mesh(4, Grading::Uniform).unwrap();
        let e = relative_interp_error(&mesh, &|x| x * (1.0 - x), 0.5).unwrap();
        assert!(e > 0.0 && e <= 1.0);
    }

    #[test]
    fn relative_error_of_piecewise_linear_is_zero() {
        let coarse = build_mesh(4, Grading::Uniform).unwrap();
        let c = vec![0.5, 0.8, 0.25];
        let f = |x: f64| coarse.eval_p1(&c, x);
        let fine = build_mesh(16, Grading::Uniform).unwrap();
        let e = relative_interp_error(&fine, &f, 0.5).unwrap();
        assert!(e < 1e-13);
    }

    #[test]
    fn relative_error_rejects_nonpositive() {
        let mesh = build_mesh(4, Grading::Uniform).unwrap();
        let r = relative_interp_error(&mesh, &|x| (x - 0.3) * (1.0 - x), 0.5);
        assert!(r.is_err());
        assert!(relative_interp_error(&mesh, &|x| x * (1.0 - x), 1.0).is_err());
    }

    #[test]
    fn torsion_profile_solves_its_ode() {
        let q = 0.5;
        let u = torsion_power_profile(q);
        let h = 1e-4;
        for &x in &[0.1, 0.3, 0.45, 0.7] {
            let upp = (u(x + h) - 2.0 * u(x) + u(x - h)) / (h * h);
            let d: f64 = x.min(1.0 - x);
            assert!((-upp - d.powf(q)).abs() < 1e-5);
        }
        assert_eq!(u(0.0), 0.0);
        assert_eq!(u(1.0), 0.0);
    }

    #[test]
    fn refinement_rate_for_torsion_probe() {
        let q = 0.5;
        let u = torsion_power_profile(q);
        let sizes = [8usize, 16, 32, 64, 128];
        let mut hs = Vec::new();
        let mut errs = Vec::new();
        for &n in &sizes {
            let mesh = build_mesh(n, Grading::Uniform).unwrap();
            hs.push(mesh.h_max());
            errs.push(relative_interp_error(&mesh, &u, q).unwrap());
        }
        for w in errs.windows(2) {
            assert!(w[1] <= 1.05 * w[0]);
        }
        assert!(loglog_slope(&hs, &errs) >= 1.4);
    }
}
