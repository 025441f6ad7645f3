use serde::{Deserialize, Serialize};

use super::{HypothesisClass, ProblemSpec};

const NONNEG_TOL: f64 = 1e-12;
const THETA_TOL: f64 = 1e-10;
const BOUNDARY_TOL: f64 = 1e-12;

/// Coordinate values used by [`default_samples`].
pub const T_LEVELS: [f64; 7] = [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0];

/// `x ∈ {0, 0.1, ..., 1}` and the tensor grid of [`T_LEVELS`] (for `m > 3`,
/// the diagonal plus every single-coordinate variation about it).
pub fn default_samples(m: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let xs = (0..=10).map(|i| i as f64 / 10.0).collect();
    let mut ts = Vec::new();
    if m <= 3 {
        let total = T_LEVELS.len().pow(m as u32);
        for mut idx in 0..total {
            let mut t = Vec::with_capacity(m);
            for _ in 0..m {
                t.push(T_LEVELS[idx % T_LEVELS.len()]);
                idx /= T_LEVELS.len();
            }
            ts.push(t);
        }
    } else {
        for &base in &T_LEVELS {
            ts.push(vec![base; m]);
            for j in 0..m {
                for &other in &T_LEVELS {
                    if other != base {
                        let mut t = vec![base; m];
                        t[j] = other;
                        ts.push(t);
                    }
                }
            }
        }
    }
    (xs, ts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisVerdict {
    pub id: String,
    pub passed: bool,
    /// Smallest slack found (negative means violated).
    pub margin: f64,
    pub worst_x: Option<f64>,
    pub worst_t: Option<Vec<f64>>,
    /// Constant fitted on the grid, where the hypothesis has one.
    pub fitted_constant: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub problem: String,
    pub class: String,
    pub n_x: usize,
    pub n_t: usize,
    pub verdicts: Vec<HypothesisVerdict>,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn get(&self, id: &str) -> Option<&HypothesisVerdict> {
        self.verdicts.iter().find(|v| v.id == id)
    }
}

struct Worst {
    margin: f64,
    x: Option<f64>,
    t: Option<Vec<f64>>,
    ok: bool,
}

impl Worst {
    fn new() -> Self {
        Worst {
            margin: f64::INFINITY,
            x: None,
            t: None,
            ok: true,
        }
    }

    fn see(&mut self, margin: f64, x: f64, t: &[f64]) {
        if margin.is_nan() {
            self.ok = false;
            self.margin = f64::NAN;
            self.x = Some(x);
            self.t = Some(t.to_vec());
        } else if margin < self.margin {
            self.margin = margin;
            self.x = Some(x);
            self.t = Some(t.to_vec());
        }
    }

    fn fail(&mut self) {
        self.ok = false;
    }

    fn verdict(self, id: &str, passed: bool, fitted: Option<f64>, detail: String) -> HypothesisVerdict {
        HypothesisVerdict {
            id: id.into(),
            passed: passed && self.ok,
            margin: self.margin,
            worst_x: self.x,
            worst_t: self.t,
            fitted_constant: fitted,
            detail,
        }
    }
}

fn norm(t: &[f64]) -> f64 {
    t.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Samples (h1)–(h5) on `x_samples × t_samples` plus boundary slices (each
/// sample with one coordinate set to zero). Never fails: violations are
/// reported as verdicts.
pub fn check_hypotheses(spec: &ProblemSpec, x_samples: &[f64], t_samples: &[Vec<f64>]) -> HypothesisReport {
    let m = spec.m();
    let interior: Vec<Vec<f64>> = t_samples
        .iter()
        .filter(|t| t.len() == m && t.iter().all(|&v| v > 0.0))
        .cloned()
        .collect();
    let mut boundary = Vec::new();
    for t in &interior {
        for j in 0..m {
            let mut b = t.clone();
            b[j] = 0.0;
            boundary.push(b);
        }
    }
    let mut fx = vec![0.0; m];
    let mut jac = vec![0.0; m * m];
    let r = &spec.reaction;
    let c = spec.constants;

    // (h1)
    let mut w1 = Worst::new();
    let (a0, a1) = spec.a_bounds;
    for &x in x_samples {
        for k in 0..m {
            let a = (spec.source.coeffs[k])(x);
            w1.see((a - a0).min(a1 - a), x, &[]);
            if a < a0 - NONNEG_TOL * a1 || a > a1 * (1.0 + NONNEG_TOL) {
                w1.fail();
            }
        }
    }
    let q_ok = spec.source.q == c.q && c.q > 0.0 && c.q < 1.0;
    let h1 = w1.verdict(
        "h1",
        q_ok,
        None,
        if q_ok {
            format!("g^k = a_k(x) t_k^q with q = {}, a in [{a0}, {a1}]", c.q)
        } else {
            format!("exponent q = {} outside (0, 1)", spec.source.q)
        },
    );

    let theta_ok = 1.0 < c.theta && c.theta < c.gamma0 && c.gamma0 <= c.gamma;

    // (h4) is common to both classes
    let mut w4 = Worst::new();
    for &x in x_samples {
        for t in &interior {
            r.value(x, t, &mut fx);
            r.jacobian(x, t, &mut jac);
            for k in 0..m {
                let slack = t[k] * jac[k * m + k] - c.theta * fx[k];
                w4.see(slack, x, t);
                if !(slack >= -THETA_TOL * (1.0 + fx[k].abs())) {
                    w4.fail();
                }
            }
        }
    }
    let h4 = w4.verdict(
        "h4",
        theta_ok,
        None,
        if theta_ok {
            format!("t_k f^k_t_k >= theta f^k with theta = {}", c.theta)
        } else {
            format!("theta = {} not in (1, gamma0 = {})", c.theta, c.gamma0)
        },
    );

    let (class, h2, h3, h5) = match &spec.class {
        HypothesisClass::Standard => {
            // (h2) nonnegativity, positivity on the open cone, fitted growth constants
            let mut w2 = Worst::new();
            let mut cf: f64 = 0.0;
            for &x in x_samples {
                for t in &interior {
                    r.value(x, t, &mut fx);
                    r.jacobian(x, t, &mut jac);
                    let n = norm(t);
                    let growth = n.powf(c.gamma0) + n.powf(c.gamma);
                    let dgrowth = n.powf(c.gamma0 - 1.0) + n.powf(c.gamma - 1.0);
                    for k in 0..m {
                        w2.see(fx[k], x, t);
                        if !(fx[k] > 0.0) {
                            w2.fail();
                        }
                        cf = cf.max(fx[k].abs() / growth);
                        for l in 0..m {
                            cf = cf.max(jac[k * m + l].abs() / dgrowth);
                        }
                    }
                }
                for t in &boundary {
                    r.value(x, t, &mut fx);
                    for k in 0..m {
                        w2.see(fx[k], x, t);
                        if !(fx[k] >= -NONNEG_TOL) {
                            w2.fail();
                        }
                    }
                }
            }
            let h2 = w2.verdict(
                "h2",
                cf.is_finite(),
                Some(cf),
                format!(
                    "0 <= f <= C(|t|^{g0} + |t|^{g}), |f_t| <= C(|t|^({g0}-1) + |t|^({g}-1)); fitted C",
                    g0 = c.gamma0,
                    g = c.gamma
                ),
            );

            let mut w3 = Worst::new();
            for &x in x_samples {
                for t in &interior {
                    r.jacobian(x, t, &mut jac);
                    for &d in &jac {
                        w3.see(d, x, t);
                        if !(d >= -NONNEG_TOL) {
                            w3.fail();
                        }
                    }
                }
            }
            let h3 = w3.verdict("h3", true, None, "cooperative: all f^k_t_l >= 0".into());

            let mut w5 = Worst::new();
            for &x in x_samples {
                for t in &boundary {
                    r.value(x, t, &mut fx);
                    r.jacobian(x, t, &mut jac);
                    let worst = fx.iter().chain(&jac).fold(0.0f64, |a, v| a.max(v.abs()));
                    let worst = if fx.iter().chain(&jac).any(|v| !v.is_finite()) {
                        f64::INFINITY
                    } else {
                        worst
                    };
                    w5.see(-worst, x, t);
                    if !(worst <= BOUNDARY_TOL) {
                        w5.fail();
                    }
                }
            }
            let h5 = w5.verdict(
                "h5",
                !boundary.is_empty(),
                None,
                "f and f_t vanish when some t_j = 0".into(),
            );
            ("standard", h2, h3, h5)
        }
        HypothesisClass::PerComponent { gamma_k } => {
            // (h2) nonnegativity and cooperativity everywhere on the closed cone
            let mut w2 = Worst::new();
            for &x in x_samples {
                for t in interior.iter().chain(&boundary) {
                    r.value(x, t, &mut fx);
                    r.jacobian(x, t, &mut jac);
                    for v in fx.iter().chain(&jac) {
                        w2.see(*v, x, t);
                        if !(*v >= -NONNEG_TOL) {
                            w2.fail();
                        }
                    }
                }
            }
            let h2 = w2.verdict("h2", true, None, "f >= 0 and f^k_t_j >= 0".into());

            // (h3) two-sided growth with fitted c0, C0
            let mut w3 = Worst::new();
            let mut c0 = f64::INFINITY;
            let mut cc0: f64 = 0.0;
            for &x in x_samples {
                for t in &interior {
                    r.value(x, t, &mut fx);
                    let n1 = 1.0 + norm(t);
                    for k in 0..m {
                        let lo = fx[k] / t[k].powf(gamma_k[k]);
                        let hi = fx[k] / (t[k].powf(gamma_k[k]) * n1.powf(c.gamma - gamma_k[k]));
                        w3.see(lo, x, t);
                        c0 = c0.min(lo);
                        cc0 = cc0.max(hi);
                    }
                }
            }
            let h3 = w3.verdict(
                "h3",
                c0 > 0.0 && cc0.is_finite() && gamma_k.iter().all(|&g| g > 1.0 && g <= c.gamma),
                Some(cc0),
                format!("c0 t_k^gamma_k <= f^k <= C0 t_k^gamma_k (1+|t|)^(gamma-gamma_k); fitted c0 = {c0:e}, C0 = {cc0:e}"),
            );

            // (h5) derivative growth with fitted C1
            let mut w5 = Worst::new();
            let mut c1: f64 = 0.0;
            for &x in x_samples {
                for t in &interior {
                    r.jacobian(x, t, &mut jac);
                    let n1 = 1.0 + norm(t);
                    for k in 0..m {
                        let spread = n1.powf(c.gamma - gamma_k[k]);
                        for l in 0..m {
                            let d = jac[k * m + l];
                            w5.see(d, x, t);
                            if !(d >= -NONNEG_TOL) {
                                w5.fail();
                            }
                            let bound = if l == k {
                                t[k].powf(gamma_k[k] - 1.0) * spread
                            } else {
                                t[k].powf(gamma_k[k]) * spread
                            };
                            c1 = c1.max(d / bound);
                        }
                    }
                }
            }
            let h5 = w5.verdict(
                "h5",
                c1.is_finite(),
                Some(c1),
                "0 <= f_t bounded by C1 times the per-component growth; fitted C1".into(),
            );
            ("per_component", h2, h3, h5)
        }
    };

    HypothesisReport {
        problem: spec.name.clone(),
        class: class.into(),
        n_x: x_samples.len(),
        n_t: interior.len(),
        verdicts: vec![h1, h2, h3, h4, h5],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_problem, PowerSource, Reaction, StructuralConstants};
    use serde_json::json;
    use std::sync::Arc;

    #[test]
    fn degenerate_product_passes_all() {
        let s = builtin_problem(
            "degenerate_product",
            &json!({"alpha": [[2.0, 1.5], [1.2, 2.5]], "b": [1.0, 0.5]}),
        )
        .unwrap();
        assert!((s.constants.theta - 1.8).abs() < 1e-15);
        let (xs, ts) = default_samples(2);
        let rep = check_hypotheses(&s, &xs, &ts);
        assert!(rep.all_pass(), "{rep:#?}");
        assert_eq!(rep.class, "standard");
    }

    #[derive(Debug)]
    struct NegSquare;
    impl Reaction for NegSquare {
        fn components(&self) -> usize {
            1
        }
        fn value(&self, _x: f64, t: &[f64], out: &mut [f64]) {
            out[0] = -t[0] * t[0];
        }
        fn jacobian(&self, _x: f64, t: &[f64], out: &mut [f64]) {
            out[0] = -2.0 * t[0];
        }
        fn describe(&self) -> String {
            "-t^2".into()
        }
    }

    #[test]
    fn negative_reaction_fails_h2() {
        let s = ProblemSpec::new(
            "neg",
            Arc::new(NegSquare),
            PowerSource::uniform(1, 0.5),
            (1.0, 1.0),
            StructuralConstants {
                q: 0.5,
                gamma0: 2.0,
                gamma: 2.0,
                theta: 1.5,
            },
            HypothesisClass::Standard,
        )
        .unwrap();
        let (xs, ts) = default_samples(1);
        let rep = check_hypotheses(&s, &xs, &ts);
        assert!(!rep.get("h2").unwrap().passed);
        assert!(rep.get("h2").unwrap().margin < 0.0);
    }

    #[test]
    fn scalar_power_h4_margin() {
        let s = builtin_problem("scalar_power", &json!({"q": 0.5, "gamma": 2.0, "theta": 1.5})).unwrap();
        let (xs, ts) = default_samples(1);
        let rep = check_hypotheses(&s, &xs, &ts);
        assert!(rep.all_pass(), "{rep:#?}");
        let h4 = rep.get("h4").unwrap();
        // min of 0.5 t^2 over the grid is at t = 0.01
        assert!((h4.margin - 0.5 * 1e-4).abs() < 1e-15);
        assert_eq!(h4.worst_t.as_deref(), Some(&[0.01][..]));
    }

    #[test]
    fn linear_diagnostic_fails_h1() {
        let s = builtin_problem("linear_diagnostic", &json!({})).unwrap();
        let (xs, ts) = default_samples(1);
        let rep = check_hypotheses(&s, &xs, &ts);
        assert!(!rep.get("h1").unwrap().passed);
    }

    #[test]
    fn report_is_reproducible() {
        let s = builtin_problem("cooperative_product", &json!({})).unwrap();
        let (xs, ts) = default_samples(2);
        assert_eq!(check_hypotheses(&s, &xs, &ts), check_hypotheses(&s, &xs, &ts));
    }
}
