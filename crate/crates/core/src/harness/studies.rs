//! Mesh refinement, condition-(U) and oracle studies.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mesh_fem::{build_mesh, loglog_slope, relative_interp_error, torsion_power_profile, Grading, Mesh1D};
use crate::minimax::{
    continuation_sweep, default_start, maximize, BranchPoint, ContinuationOptions, MinimaxCertificate, SolverError,
    SolverOptions, Termination,
};
use crate::model::{Discretization, FEField, ModelError, ProblemSpec};
use crate::rayleigh::inner_min;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementRow {
    pub n: usize,
    pub h: f64,
    pub lambda: Option<f64>,
    /// `|λ_r* - λ*_next|` against the next finer size.
    pub diff_next: Option<f64>,
    /// `max_i |u_r(x_i) - u_next(x_i)|` over the coarse nodes.
    pub transfer_diff: Option<f64>,
    pub sigma_min_rel: Option<f64>,
    pub valid: bool,
    pub runtime_s: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTable {
    pub problem: String,
    pub rows: Vec<RefinementRow>,
    /// `log(d_k / d_{k+1}) / log(h_k / h_{k+1})` for consecutive differences.
    pub orders: Vec<f64>,
    /// Aitken extrapolation from the last three values.
    pub aitken_limit: Option<f64>,
    /// Smallest and largest computed value.
    pub range: Option<(f64, f64)>,
    /// Set when an interval is supplied and some value falls outside it.
    pub outside_interval: Option<bool>,
    #[serde(skip)]
    pub certificates: Vec<Option<MinimaxCertificate>>,
}

/// Nodal interpolation of a P1 field onto another mesh.
pub fn transfer(from: &Mesh1D, u: &FEField, to: &Mesh1D) -> FEField {
    FEField::from_fn(to, u.components(), |k, x| from.eval_p1(u.component(k), x))
}

/// Runs [`maximize`] per size in increasing order, warm-starting each size
/// from the previous solution. Failures are recorded and the study goes on.
pub fn refinement_study(
    spec: &ProblemSpec,
    sizes: &[usize],
    grading: Grading,
    opts: &SolverOptions,
    interval: Option<(f64, f64)>,
) -> Result<RefinementTable, SolverError> {
    if sizes.len() < 3 {
        return Err(SolverError::Unsupported(format!("refinement needs at least 3 sizes, got {}", sizes.len())));
    }
    let mut rows = Vec::new();
    let mut certs: Vec<Option<MinimaxCertificate>> = Vec::new();
    let mut meshes = Vec::new();
    let mut prev: Option<(Mesh1D, FEField)> = None;
    for &n in sizes {
        let mesh = build_mesh(n, grading)?;
        let d = Discretization::new(spec.clone(), mesh.clone())?;
        let t = Instant::now();
        let start = prev.as_ref().map(|(m, u)| transfer(m, u, &mesh));
        let res = maximize(&d, start.as_ref(), opts);
        let runtime_s = t.elapsed().as_secs_f64();
        let (row, cert) = match res {
            Ok(c) => {
                prev = Some((mesh.clone(), c.u_star.clone()));
                (
                    RefinementRow {
                        n,
                        h: mesh.h_max(),
                        lambda: Some(c.lambda_star),
                        diff_next: None,
                        transfer_diff: None,
                        sigma_min_rel: Some(c.sigma_min / c.j_norm),
                        valid: c.valid,
                        runtime_s,
                        error: None,
                    },
                    Some(c),
                )
            }
            Err(e) => (
                RefinementRow {
                    n,
                    h: mesh.h_max(),
                    lambda: None,
                    diff_next: None,
                    transfer_diff: None,
                    sigma_min_rel: None,
                    valid: false,
                    runtime_s,
                    error: Some(e.to_string()),
                },
                None,
            ),
        };
        rows.push(row);
        certs.push(cert);
        meshes.push(mesh);
    }
    for i in 0..rows.len() - 1 {
        if let (Some(a), Some(b)) = (&certs[i], &certs[i + 1]) {
            rows[i].diff_next = Some((a.lambda_star - b.lambda_star).abs());
            let fine_on_coarse = transfer(&meshes[i + 1], &b.u_star, &meshes[i]);
            let diff = a
                .u_star
                .as_slice()
                .iter()
                .zip(fine_on_coarse.as_slice())
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            rows[i].transfer_diff = Some(diff);
        }
    }
    let mut orders = Vec::new();
    for i in 0..rows.len().saturating_sub(2) {
        if let (Some(d1), Some(d2)) = (rows[i].diff_next, rows[i + 1].diff_next) {
            if d1 > 0.0 && d2 > 0.0 {
                orders.push((d1 / d2).ln() / (rows[i].h / rows[i + 1].h).ln());
            }
        }
    }
    let lambdas: Vec<f64> = rows.iter().filter_map(|r| r.lambda).collect();
    let aitken_limit = (lambdas.len() >= 3).then(|| {
        let k = lambdas.len();
        let (l1, l2, l3) = (lambdas[k - 3], lambdas[k - 2], lambdas[k - 1]);
        let den = (l3 - l2) - (l2 - l1);
        if den != 0.0 {
            l3 - (l3 - l2).powi(2) / den
        } else {
            l3
        }
    });
    let range = (!lambdas.is_empty()).then(|| {
        (
            lambdas.iter().cloned().fold(f64::INFINITY, f64::min),
            lambdas.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        )
    });
    let outside_interval = interval.map(|(a, b)| lambdas.iter().any(|&l| !(l > a && l < b)));
    Ok(RefinementTable {
        problem: spec.name.clone(),
        rows,
        orders,
        aitken_limit,
        range,
        outside_interval,
        certificates: certs,
    })
}

pub type ProbeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A probe field per component together with `L u^k = -(σ u^k)' + c u^k`.
#[derive(Clone)]
pub struct Probe {
    pub name: String,
    pub u: Vec<ProbeFn>,
    pub lu: Vec<ProbeFn>,
}

impl std::fmt::Debug for Probe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Probe").field("name", &self.name).finish()
    }
}

/// `-u'' = d^q` and `u = sin(πx)` in every component; valid for `σ ≡ 1`,
/// `c ≡ 0`.
pub fn default_probes(spec: &ProblemSpec) -> Result<Vec<Probe>, SolverError> {
    let samples = (0..=20).map(|i| i as f64 / 20.0);
    for x in samples {
        for k in 0..spec.m() {
            if (spec.sigma[k])(x) != 1.0 || (spec.c[k])(x) != 0.0 {
                return Err(SolverError::Unsupported("default probes assume the operator -u''".into()));
            }
        }
    }
    let q = spec.q();
    let m = spec.m();
    let tp = torsion_power_profile(q);
    let torsion: ProbeFn = Arc::new(tp);
    let torsion_l: ProbeFn = Arc::new(move |x: f64| x.min(1.0 - x).max(0.0).powf(q));
    let sine: ProbeFn = Arc::new(|x: f64| (std::f64::consts::PI * x).sin());
    let sine_l: ProbeFn = Arc::new(|x: f64| std::f64::consts::PI.powi(2) * (std::f64::consts::PI * x).sin());
    Ok(vec![
        Probe {
            name: "torsion_power".into(),
            u: vec![torsion; m],
            lu: vec![torsion_l; m],
        },
        Probe {
            name: "sine".into(),
            u: vec![sine; m],
            lu: vec![sine_l; m],
        },
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub name: String,
    pub admissible: bool,
    pub reason: Option<String>,
    pub sizes: Vec<usize>,
    pub h: Vec<f64>,
    /// `max_k ‖(I_r u^k - u^k)/u^k‖_∞`.
    pub rel_interp_error: Vec<f64>,
    /// `sup_v |R(u, v) - R(I_r u, v)|` over the direction sample.
    pub r_sup_diff: Vec<f64>,
    pub interp_slope: f64,
    pub r_slope: f64,
    /// Each value at most 1.1 times its predecessor.
    pub r_monotone: bool,
    /// Fitted `sup L u / d^q`.
    pub class_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionUReport {
    pub problem: String,
    pub q: f64,
    pub probes: Vec<ProbeResult>,
}

/// Composite rule: each element split in 8 pieces with 2 Gauss points.
fn fine_points(mesh: &Mesh1D, e: usize) -> Vec<(f64, f64, f64, f64)> {
    let (a, b) = mesh.element(e);
    let g = 0.5 / 3f64.sqrt();
    let pieces = 8;
    let hs = (b - a) / pieces as f64;
    let mut out = Vec::with_capacity(2 * pieces);
    for p in 0..pieces {
        let c = a + (p as f64 + 0.5) * hs;
        for s in [-g, g] {
            let x = c + s * hs;
            let t = (x - a) / (b - a);
            out.push((x, 0.5 * hs, 1.0 - t, t));
        }
    }
    out
}

/// Numerators `∫ (L u - f(u)) ψ_i` or `a(u, ψ_i) - ∫ f(u) ψ_i` and
/// denominators `∫ g(u) ψ_i`.
fn quotient_parts(
    d: &Discretization,
    eval_u: &dyn Fn(usize, f64) -> f64,
    eval_lu: Option<&dyn Fn(usize, f64) -> f64>,
    nodal: Option<&FEField>,
) -> (Vec<f64>, Vec<f64>) {
    let spec = d.spec();
    let m = d.m();
    let n = d.n();
    let mut num = vec![0.0; d.dim()];
    let mut den = vec![0.0; d.dim()];
    if let Some(u) = nodal {
        num.copy_from_slice(d.stiffness_apply(u).as_slice());
    }
    let mut t = vec![0.0; m];
    let mut fv = vec![0.0; m];
    for e in 0..d.mesh().n_elements() {
        let dofs = d.mesh().element_dofs(e);
        for (x, w, pl, pr) in fine_points(d.mesh(), e) {
            for (k, tk) in t.iter_mut().enumerate() {
                *tk = eval_u(k, x);
            }
            spec.reaction.value(x, &t, &mut fv);
            for k in 0..m {
                let lu = eval_lu.map_or(0.0, |l| l(k, x));
                let gk = spec.source.value(k, x, t[k]);
                for (dof, phi) in [(dofs[0], pl), (dofs[1], pr)] {
                    if let Some(i) = dof {
                        num[k * n + i] += w * phi * (lu - fv[k]);
                        den[k * n + i] += w * phi * gk;
                    }
                }
            }
        }
    }
    (num, den)
}

/// Interpolation rates and `sup_v |R(u, v) - R(I_r u, v)|` per probe and
/// mesh size. Directions: all nodal hats plus 8 random positive
/// combinations.
pub fn condition_u_check(spec: &ProblemSpec, sizes: &[usize], probes: &[Probe]) -> Result<ConditionUReport, SolverError> {
    let q = spec.q();
    let mut out = Vec::new();
    for probe in probes {
        let mut res = ProbeResult {
            name: probe.name.clone(),
            admissible: true,
            reason: None,
            sizes: sizes.to_vec(),
            h: Vec::new(),
            rel_interp_error: Vec::new(),
            r_sup_diff: Vec::new(),
            interp_slope: f64::NAN,
            r_slope: f64::NAN,
            r_monotone: false,
            class_constant: 0.0,
        };
        // admissibility on a dense sample
        let mut c_fit: f64 = 0.0;
        'adm: for k in 0..spec.m() {
            for (f, at) in [(&probe.u[k], 0.0), (&probe.u[k], 1.0)] {
                if f(at).abs() > 1e-12 {
                    res.admissible = false;
                    res.reason = Some(format!("component {k} does not vanish at x = {at}"));
                    break 'adm;
                }
            }
            for i in 1..2000 {
                let x = i as f64 / 2000.0;
                let dq = x.min(1.0 - x).powf(q);
                let (u, lu) = ((probe.u[k])(x), (probe.lu[k])(x));
                if !(u > 0.0) {
                    res.admissible = false;
                    res.reason = Some(format!("component {k} not positive at x = {x}"));
                    break 'adm;
                }
                if lu < -1e-12 {
                    res.admissible = false;
                    res.reason = Some(format!("component {k}: L u = {lu:e} < 0 at x = {x}"));
                    break 'adm;
                }
                c_fit = c_fit.max(lu / dq);
            }
        }
        res.class_constant = c_fit;
        if !res.admissible {
            out.push(res);
            continue;
        }
        for &n in sizes {
            let mesh = build_mesh(n, Grading::Uniform)?;
            let d = Discretization::new(spec.clone(), mesh.clone())?;
            let mut rel: f64 = 0.0;
            for k in 0..spec.m() {
                let uk = probe.u[k].clone();
                rel = rel.max(relative_interp_error(&mesh, &move |x| uk(x), q)?);
            }
            let iu = FEField::from_fn(&mesh, spec.m(), |k, x| (probe.u[k])(x));
            let exact_u = |k: usize, x: f64| (probe.u[k])(x);
            let exact_lu = |k: usize, x: f64| (probe.lu[k])(x);
            let (n1, d1) = quotient_parts(&d, &exact_u, Some(&exact_lu), None);
            let interp_u = |k: usize, x: f64| mesh.eval_p1(iu.component(k), x);
            let (n2, d2) = quotient_parts(&d, &interp_u, None, Some(&iu));
            let mut worst: f64 = 0.0;
            for i in 0..d.dim() {
                worst = worst.max((n1[i] / d1[i] - n2[i] / d2[i]).abs());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
            for _ in 0..8 {
                let c: Vec<f64> = (0..d.dim()).map(|_| rng.gen_range(0.0..1.0)).collect();
                let dot = |a: &[f64]| a.iter().zip(&c).map(|(x, y)| x * y).sum::<f64>();
                worst = worst.max((dot(&n1) / dot(&d1) - dot(&n2) / dot(&d2)).abs());
            }
            res.h.push(mesh.h_max());
            res.rel_interp_error.push(rel);
            res.r_sup_diff.push(worst);
        }
        if res.h.len() >= 2 {
            res.interp_slope = loglog_slope(&res.h, &res.rel_interp_error);
            res.r_slope = loglog_slope(&res.h, &res.r_sup_diff);
        }
        res.r_monotone = res.r_sup_diff.windows(2).all(|w| w[1] <= 1.1 * w[0]);
        out.push(res);
    }
    Ok(ConditionUReport {
        problem: spec.name.clone(),
        q,
        probes: out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub problem: String,
    pub n: usize,
    pub lambda_minimax: Option<f64>,
    pub minimax_valid: bool,
    pub lambda_fold: Option<f64>,
    pub rel_gap: Option<f64>,
    pub termination: Option<Termination>,
    /// Set for the linear diagnostic, where no fold exists.
    pub expected_divergence: bool,
    pub message: String,
    pub minimax_runtime_s: f64,
    pub continuation_runtime_s: f64,
    #[serde(skip)]
    pub branch: Vec<BranchPoint>,
    #[serde(skip)]
    pub certificate: Option<MinimaxCertificate>,
}

/// Minimax value against the pseudo-arclength fold; the continuation is
/// seeded only from the start-profile value, not from the minimax result.
pub fn oracle_compare(
    d: &Discretization,
    opts: &SolverOptions,
    cont: &ContinuationOptions,
) -> Result<OracleReport, ModelError> {
    let t = Instant::now();
    let mm = maximize(d, None, opts);
    let minimax_runtime_s = t.elapsed().as_secs_f64();
    let mut messages = Vec::new();
    let (lambda_minimax, minimax_valid) = match &mm {
        Ok(c) => (Some(c.lambda_star), c.valid),
        Err(e) => {
            messages.push(format!("minimax failed: {e}"));
            (None, false)
        }
    };
    let guess = default_start(d, opts)
        .ok()
        .and_then(|u| inner_min(d, &u).ok())
        .map(|r| r.value)
        .filter(|v| *v > 0.0)
        .unwrap_or(1.0);
    let t = Instant::now();
    let cr = continuation_sweep(d, guess, cont);
    let continuation_runtime_s = t.elapsed().as_secs_f64();
    let (lambda_fold, termination, branch) = match cr {
        Ok(r) => {
            messages.push(r.message.clone());
            (r.lambda_fold, Some(r.termination), r.points)
        }
        Err(e) => {
            messages.push(format!("continuation failed: {e}"));
            (None, None, Vec::new())
        }
    };
    let linear = d.spec().is_linear_diagnostic();
    if linear {
        messages.push("no fold: linear problem, minimax value is the principal eigenvalue (expected divergence)".into());
    }
    let rel_gap = match (lambda_minimax, lambda_fold) {
        (Some(a), Some(b)) => Some((a - b).abs() / b.abs()),
        _ => None,
    };
    Ok(OracleReport {
        problem: d.spec().name.clone(),
        n: d.mesh().n_elements(),
        lambda_minimax,
        minimax_valid,
        lambda_fold,
        rel_gap,
        termination,
        expected_divergence: linear,
        message: messages.join("; "),
        minimax_runtime_s,
        continuation_runtime_s,
        branch,
        certificate: mm.ok(),
    })
}
