use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    constant, CooperativeProduct, DegenerateProduct, HypothesisClass, ModelError, PowerSource,
    ProblemSpec, Reaction, ScalarPower, StructuralConstants, Sum, ZeroReaction,
};

pub fn catalog_names() -> &'static [&'static str] {
    &[
        "scalar_power",
        "cooperative_product",
        "perturbed_scalar",
        "degenerate_product",
        "linear_diagnostic",
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    Vec(Vec<f64>),
}

impl ScalarOrVec {
    fn expand(&self, m: usize, what: &str) -> Result<Vec<f64>, ModelError> {
        match self {
            ScalarOrVec::Scalar(v) => Ok(vec![*v; m]),
            ScalarOrVec::Vec(v) if v.len() == m => Ok(v.clone()),
            ScalarOrVec::Vec(v) => Err(ModelError::BadParameters(format!(
                "{what} has {} entries, expected {m}",
                v.len()
            ))),
        }
    }
}

/// Coupling exponents: one number for every off-diagonal entry, or a full
/// `m × m` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaParam {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl AlphaParam {
    fn expand(&self, m: usize, diagonal: f64) -> Result<Vec<f64>, ModelError> {
        match self {
            AlphaParam::Scalar(a) => Ok((0..m * m)
                .map(|i| if i / m == i % m { diagonal } else { *a })
                .collect()),
            AlphaParam::Matrix(rows) => {
                if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                    return Err(ModelError::BadParameters(format!("alpha must be {m}×{m}")));
                }
                Ok(rows.iter().flatten().cloned().collect())
            }
        }
    }
}

fn default_q() -> f64 {
    0.5
}
fn default_gamma() -> f64 {
    2.0
}
fn default_gamma1() -> f64 {
    3.0
}
fn default_m() -> usize {
    2
}
fn one() -> ScalarOrVec {
    ScalarOrVec::Scalar(1.0)
}
fn two() -> ScalarOrVec {
    ScalarOrVec::Scalar(2.0)
}
fn half_alpha() -> AlphaParam {
    AlphaParam::Scalar(0.5)
}
fn default_degenerate_alpha() -> AlphaParam {
    AlphaParam::Matrix(vec![vec![2.0, 1.5], vec![1.5, 2.0]])
}
fn one_f() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorParams {
    #[serde(default = "one_f")]
    sigma: f64,
    #[serde(default)]
    c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScalarPowerParams {
    #[serde(default = "default_q")]
    q: f64,
    #[serde(default = "default_gamma")]
    gamma: f64,
    #[serde(default)]
    theta: Option<f64>,
    #[serde(default = "one_f")]
    sigma: f64,
    #[serde(default)]
    c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PerturbedScalarParams {
    #[serde(default = "default_q")]
    q: f64,
    #[serde(default = "default_gamma")]
    gamma: f64,
    #[serde(default = "default_gamma1")]
    gamma1: f64,
    /// Constant `κ ≥ 0`.
    #[serde(default)]
    kappa: f64,
    #[serde(default)]
    theta: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CooperativeParams {
    #[serde(default = "default_m")]
    m: usize,
    #[serde(default = "default_q")]
    q: f64,
    #[serde(default = "two")]
    beta: ScalarOrVec,
    #[serde(default = "half_alpha")]
    alpha: AlphaParam,
    #[serde(default = "one")]
    a: ScalarOrVec,
    #[serde(default = "one")]
    b: ScalarOrVec,
    #[serde(default)]
    theta: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DegenerateParams {
    #[serde(default = "default_m")]
    m: usize,
    #[serde(default = "default_q")]
    q: f64,
    #[serde(default = "default_degenerate_alpha")]
    alpha: AlphaParam,
    #[serde(default = "one")]
    a: ScalarOrVec,
    #[serde(default = "one")]
    b: ScalarOrVec,
    #[serde(default)]
    theta: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearParams {
    #[serde(default = "one_f")]
    a: f64,
    #[serde(default = "one_f")]
    sigma: f64,
    #[serde(default)]
    c: f64,
}

fn parse<T: for<'de> Deserialize<'de>>(params: &Value) -> Result<T, ModelError> {
    let v = if params.is_null() {
        Value::Object(Default::default())
    } else {
        params.clone()
    };
    serde_json::from_value(v).map_err(|e| ModelError::BadParameters(e.to_string()))
}

fn check_q(q: f64) -> Result<(), ModelError> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(ModelError::BadParameters(format!("q = {q} must lie in (0, 1)")))
    }
}

fn check_gt1(name: &str, g: f64) -> Result<(), ModelError> {
    if g > 1.0 && g.is_finite() {
        Ok(())
    } else {
        Err(ModelError::BadParameters(format!("{name} = {g} must exceed 1")))
    }
}

fn source(m: usize, q: f64, a: &[f64]) -> Result<(PowerSource, (f64, f64)), ModelError> {
    if a.iter().any(|&v| !(v > 0.0)) {
        return Err(ModelError::BadParameters("a_k must be positive".into()));
    }
    let lo = a.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = a.iter().cloned().fold(0.0, f64::max);
    Ok((
        PowerSource {
            q,
            coeffs: (0..m).map(|k| constant(a[k])).collect(),
        },
        (lo, hi),
    ))
}

fn finish<T: Serialize>(
    mut spec: ProblemSpec,
    params: &T,
    op: Option<OperatorParams>,
) -> Result<ProblemSpec, ModelError> {
    if let Some(op) = op {
        if !(op.sigma > 0.0) || op.c < 0.0 {
            return Err(ModelError::BadParameters("need sigma > 0 and c >= 0".into()));
        }
        for k in 0..spec.m() {
            spec = spec.with_operator(k, constant(op.sigma), constant(op.c));
        }
    }
    spec.params = serde_json::to_value(params).expect("parameters serialize");
    Ok(spec)
}

/// Looks up a catalog problem. `params` is a JSON object; missing keys take
/// defaults and unknown keys are rejected.
pub fn builtin_problem(name: &str, params: &Value) -> Result<ProblemSpec, ModelError> {
    match name {
        "scalar_power" => {
            let mut p: ScalarPowerParams = parse(params)?;
            check_q(p.q)?;
            check_gt1("gamma", p.gamma)?;
            let theta = *p.theta.get_or_insert((1.0 + p.gamma) / 2.0);
            let (g, bounds) = source(1, p.q, &[1.0])?;
            let spec = ProblemSpec::new(
                name,
                Arc::new(ScalarPower::new(p.gamma)),
                g,
                bounds,
                StructuralConstants {
                    q: p.q,
                    gamma0: p.gamma,
                    gamma: p.gamma,
                    theta,
                },
                HypothesisClass::Standard,
            )?;
            let op = OperatorParams { sigma: p.sigma, c: p.c };
            finish(spec, &p, Some(op))
        }
        "perturbed_scalar" => {
            let mut p: PerturbedScalarParams = parse(params)?;
            check_q(p.q)?;
            check_gt1("gamma", p.gamma)?;
            check_gt1("gamma1", p.gamma1)?;
            if !(p.kappa >= 0.0) {
                return Err(ModelError::BadParameters("kappa must be nonnegative".into()));
            }
            let (gamma0, gamma) = if p.kappa > 0.0 {
                (p.gamma.min(p.gamma1), p.gamma.max(p.gamma1))
            } else {
                (p.gamma, p.gamma)
            };
            let theta = *p.theta.get_or_insert((1.0 + gamma0) / 2.0);
            let base: Arc<dyn Reaction> = Arc::new(ScalarPower::new(p.gamma));
            let reaction: Arc<dyn Reaction> = if p.kappa > 0.0 {
                Arc::new(Sum {
                    first: base,
                    second: Arc::new(ScalarPower::with_kappa(p.gamma1, constant(p.kappa))),
                })
            } else {
                base
            };
            let (g, bounds) = source(1, p.q, &[1.0])?;
            let spec = ProblemSpec::new(
                name,
                reaction,
                g,
                bounds,
                StructuralConstants {
                    q: p.q,
                    gamma0,
                    gamma,
                    theta,
                },
                HypothesisClass::Standard,
            )?;
            finish(spec, &p, None)
        }
        "cooperative_product" => {
            let mut p: CooperativeParams = parse(params)?;
            let m = p.m;
            if m == 0 {
                return Err(ModelError::BadParameters("m must be positive".into()));
            }
            check_q(p.q)?;
            let beta = p.beta.expand(m, "beta")?;
            for &b in &beta {
                check_gt1("beta_k", b)?;
            }
            let alpha = p.alpha.expand(m, 0.0)?;
            if alpha.iter().any(|&a| !(a >= 0.0)) {
                return Err(ModelError::BadParameters("alpha_kj must be nonnegative".into()));
            }
            let a = p.a.expand(m, "a")?;
            let b = p.b.expand(m, "b")?;
            if b.iter().any(|&v| !(v > 0.0)) {
                return Err(ModelError::BadParameters("b_k must be positive".into()));
            }
            let gamma0 = beta.iter().cloned().fold(f64::INFINITY, f64::min);
            let gamma = (0..m)
                .map(|k| beta[k] + (0..m).filter(|&j| j != k).map(|j| alpha[k * m + j]).sum::<f64>())
                .fold(0.0, f64::max);
            let theta = *p.theta.get_or_insert((1.0 + gamma0) / 2.0);
            let (g, bounds) = source(m, p.q, &a)?;
            let spec = ProblemSpec::new(
                name,
                Arc::new(CooperativeProduct {
                    beta: beta.clone(),
                    alpha,
                    b,
                }),
                g,
                bounds,
                StructuralConstants {
                    q: p.q,
                    gamma0,
                    gamma,
                    theta,
                },
                HypothesisClass::PerComponent { gamma_k: beta },
            )?;
            finish(spec, &p, None)
        }
        "degenerate_product" => {
            let mut p: DegenerateParams = parse(params)?;
            let m = p.m;
            if m == 0 {
                return Err(ModelError::BadParameters("m must be positive".into()));
            }
            check_q(p.q)?;
            let alpha = p.alpha.expand(m, 2.0)?;
            if alpha.iter().any(|&a| !(a > 1.0)) {
                return Err(ModelError::BadParameters("alpha_kj must exceed 1".into()));
            }
            let a = p.a.expand(m, "a")?;
            let b = p.b.expand(m, "b")?;
            if b.iter().any(|&v| !(v > 0.0)) {
                return Err(ModelError::BadParameters("b_k must be positive".into()));
            }
            let row_sums: Vec<f64> = (0..m).map(|k| alpha[k * m..(k + 1) * m].iter().sum()).collect();
            let gamma0 = row_sums.iter().cloned().fold(f64::INFINITY, f64::min);
            let gamma = row_sums.iter().cloned().fold(0.0, f64::max);
            let min_diag = (0..m).map(|k| alpha[k * m + k]).fold(f64::INFINITY, f64::min);
            let theta = *p.theta.get_or_insert(0.9 * min_diag);
            let (g, bounds) = source(m, p.q, &a)?;
            let spec = ProblemSpec::new(
                name,
                Arc::new(DegenerateProduct { alpha, b }),
                g,
                bounds,
                StructuralConstants {
                    q: p.q,
                    gamma0,
                    gamma,
                    theta,
                },
                HypothesisClass::Standard,
            )?;
            finish(spec, &p, None)
        }
        "linear_diagnostic" => {
            let p: LinearParams = parse(params)?;
            let (g, bounds) = source(1, 1.0, &[p.a])?;
            let spec = ProblemSpec::new(
                name,
                Arc::new(ZeroReaction { m: 1 }),
                g,
                bounds,
                StructuralConstants {
                    q: 1.0,
                    gamma0: 2.0,
                    gamma: 2.0,
                    theta: 1.5,
                },
                HypothesisClass::Standard,
            )?;
            let op = OperatorParams { sigma: p.sigma, c: p.c };
            finish(spec, &p, Some(op))
        }
        other => Err(ModelError::UnknownProblem(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_fem::{build_mesh, Grading};
    use crate::model::{check_hypotheses, default_samples, Discretization, FEField};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use serde_json::json;

    #[test]
    fn scalar_power_defaults() {
        let s = builtin_problem("scalar_power", &json!({"q": 0.5, "gamma": 2.0})).unwrap();
        assert_eq!(s.m(), 1);
        assert_eq!(s.constants.theta, 1.5);
        assert_eq!(s.params["theta"], json!(1.5));
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(builtin_problem("scalar_power", &json!({"q": 1.0})).is_err());
        assert!(builtin_problem("scalar_power", &json!({"gamma": 1.0})).is_err());
        assert!(builtin_problem("scalar_power", &json!({"gamma": 0.5})).is_err());
        assert!(builtin_problem("scalar_power", &json!({"bogus": 1})).is_err());
        assert!(builtin_problem("perturbed_scalar", &json!({"q": 0.0})).is_err());
        assert!(builtin_problem("nope", &json!({})).is_err());
    }

    #[test]
    fn cooperative_product_passes_checker() {
        let s = builtin_problem("cooperative_product", &json!({"beta": 2.0, "alpha": 0.5})).unwrap();
        let (xs, ts) = default_samples(s.m());
        let rep = check_hypotheses(&s, &xs, &ts);
        assert!(rep.all_pass(), "{rep:#?}");
    }

    #[test]
    fn zero_perturbation_matches_base() {
        let a = builtin_problem("scalar_power", &json!({"q": 0.5, "gamma": 2.0})).unwrap();
        let b = builtin_problem("perturbed_scalar", &json!({"q": 0.5, "gamma": 2.0, "gamma1": 3.0, "kappa": 0.0}))
            .unwrap();
        let mesh = build_mesh(16, Grading::Uniform).unwrap();
        let da = Discretization::new(a, mesh.clone()).unwrap();
        let db = Discretization::new(b, mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let u = FEField::from_vec(1, 15, (0..15).map(|_| rng.gen_range(0.0..3.0)).collect()).unwrap();
            let ra = da.residual(&u, 1.7).unwrap();
            let rb = db.residual(&u, 1.7).unwrap();
            for (x, y) in ra.as_slice().iter().zip(rb.as_slice()) {
                assert!((x - y).abs() <= 1e-14 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn params_round_trip() {
        for name in catalog_names() {
            let s = builtin_problem(name, &json!({})).unwrap();
            let again = builtin_problem(name, &s.params).unwrap();
            assert_eq!(s.params, again.params);
            assert_eq!(s.constants, again.constants);
        }
    }
}
