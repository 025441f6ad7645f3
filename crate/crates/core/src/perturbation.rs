//! Shift of the maximal value under a reaction perturbation `Ψ`: the
//! perturbed quotient is `R_A(u, v) + ⟨Ψ(u), v⟩ / ⟨g(u), v⟩`, i.e. the
//! reaction becomes `f - Ψ`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mesh_fem::Mesh1D;
use crate::minimax::{maximize, MinimaxCertificate, SolverError, SolverOptions};
use crate::model::{
    builtin_problem, Coefficient, Difference, Discretization, FEField, ModelError, ProblemSpec, Reaction,
    ScalarPower, ZeroReaction,
};
use crate::rayleigh::TOL_DENOM;

#[derive(Clone)]
pub struct PerturbationSpec {
    pub psi: Arc<dyn Reaction>,
    pub description: String,
}

impl fmt::Debug for PerturbationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PerturbationSpec")
            .field("psi", &self.psi.describe())
            .field("description", &self.description)
            .finish()
    }
}

impl PerturbationSpec {
    /// `Ψ(u) = -κ u^{γ₁}`, the extra reaction `κ u^{γ₁}`.
    pub fn negative_power(gamma1: f64, kappa: Coefficient) -> Self {
        PerturbationSpec {
            psi: Arc::new(Difference {
                base: Arc::new(ZeroReaction { m: 1 }),
                minus: Arc::new(ScalarPower::with_kappa(gamma1, kappa)),
            }),
            description: format!("-kappa*u^{gamma1}"),
        }
    }

    /// The same problem with reaction `f - Ψ`.
    pub fn apply(&self, spec: &ProblemSpec) -> ProblemSpec {
        spec.with_reaction(
            format!("{}+perturbation", spec.name),
            Arc::new(Difference {
                base: spec.reaction.clone(),
                minus: self.psi.clone(),
            }),
        )
    }

    fn discretization(&self, d: &Discretization) -> Result<Discretization, ModelError> {
        Discretization::new(d.spec().with_reaction("psi", self.psi.clone()), d.mesh().clone())
    }
}

/// Galerkin vector `⟨Ψ(u), ψ_i⟩`.
pub fn psi_load(d: &Discretization, psi: &PerturbationSpec, u: &FEField) -> Result<Vec<f64>, ModelError> {
    Ok(psi.discretization(d)?.eval_residual_terms(u)?.f.into_vec())
}

/// `⟨Ψ(u), η_i⟩ / ⟨g(u), η_i⟩` for every nodal direction.
pub fn direction_quotients(d: &Discretization, u: &FEField, psi: &PerturbationSpec) -> Result<Vec<f64>, ModelError> {
    let p = psi_load(d, psi, u)?;
    let g = d.eval_residual_terms(u)?.g;
    p.iter()
        .zip(g.as_slice())
        .enumerate()
        .map(|(i, (pi, gi))| {
            if *gi > TOL_DENOM {
                Ok(pi / gi)
            } else {
                Err(ModelError::DegenerateDenominator { index: i, value: *gi })
            }
        })
        .collect()
}

/// `min_i ⟨Ψ(u*), η_i⟩ / ⟨g(u*), η_i⟩`.
pub fn lower_shift(d: &Discretization, base: &MinimaxCertificate, psi: &PerturbationSpec) -> Result<f64, ModelError> {
    Ok(direction_quotients(d, &base.u_star, psi)?.into_iter().fold(f64::INFINITY, f64::min))
}

/// `|R_{A+Ψ}(u, v) - R_A(u, v) - ⟨Ψ(u), v⟩/⟨g(u), v⟩|`, relative to `|R_{A+Ψ}|`.
pub fn additivity_defect(d: &Discretization, psi: &PerturbationSpec, u: &FEField, v: &FEField) -> Result<f64, ModelError> {
    let dp = Discretization::new(psi.apply(d.spec()), d.mesh().clone())?;
    let rp = crate::rayleigh::rayleigh_quotient(&dp, u, v)?;
    let ra = crate::rayleigh::rayleigh_quotient(d, u, v)?;
    let p = psi_load(d, psi, u)?;
    let g = d.eval_residual_terms(u)?.g;
    let qv = p.iter().zip(v.as_slice()).map(|(a, b)| a * b).sum::<f64>() / g.dot(v);
    Ok((rp - ra - qv).abs() / rp.abs().max(f64::MIN_POSITIVE))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpperShiftOptions {
    pub n_starts: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Points of the amplitude probe over `[1e-4, 1e4]`.
    pub probe_points: usize,
}

impl Default for UpperShiftOptions {
    fn default() -> Self {
        UpperShiftOptions {
            n_starts: 8,
            max_iters: 200,
            seed: 0,
            probe_points: 81,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperShiftResult {
    /// Best value found; a lower bound of the supremum.
    pub value: f64,
    pub argmax: FEField,
    /// Always true: the search cannot certify the supremum.
    pub lower_bound_of_sup: bool,
    /// The probe profile is constant or monotone towards an end of the
    /// amplitude range, so the supremum is its limit there.
    pub caveat_resolved: bool,
    pub unbounded_above: bool,
    /// `(t, Q(t u_best))` over the probe grid.
    pub probe: Vec<(f64, f64)>,
    pub notes: Vec<String>,
}

struct UpperCtx<'a> {
    d: &'a Discretization,
    dpsi: Discretization,
    v: &'a FEField,
}

impl UpperCtx<'_> {
    fn value(&self, u: &FEField) -> Option<f64> {
        let p = self.dpsi.eval_residual_terms(u).ok()?.f;
        let g = self.d.eval_residual_terms(u).ok()?.g;
        let den = g.dot(self.v);
        (den > TOL_DENOM).then(|| p.dot(self.v) / den).filter(|x| x.is_finite())
    }

    /// `u ∘ ∇Q`, the gradient in logarithmic coordinates.
    fn log_gradient(&self, u: &FEField, q: f64) -> Option<Vec<f64>> {
        let (pu, _) = self.dpsi.jacobian_parts(u).ok()?;
        let (_, gu) = self.d.jacobian_parts(u).ok()?;
        let g = self.d.eval_residual_terms(u).ok()?.g;
        let den = g.dot(self.v);
        let a = pu.tr_mul_vec(self.v.as_slice());
        let b = gu.tr_mul_vec(self.v.as_slice());
        Some((0..u.len()).map(|j| u.as_slice()[j] * (a[j] - q * b[j]) / den).collect())
    }

    fn ascend(&self, mut u: FEField, max_iters: usize) -> Option<(FEField, f64)> {
        let mut q = self.value(&u)?;
        let mut alpha = 0.5;
        for _ in 0..max_iters {
            let Some(s) = self.log_gradient(&u, q) else { break };
            let smax = s.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if !(smax > 0.0) {
                break;
            }
            let mut moved = false;
            for _ in 0..30 {
                let trial = self
                    .d
                    .field(u.as_slice().iter().zip(&s).map(|(x, g)| x * (alpha * g / smax).exp()).collect())
                    .ok()?;
                if let Some(qt) = self.value(&trial) {
                    if qt > q {
                        u = trial;
                        moved = qt - q > 1e-14 * q.abs().max(1e-300);
                        q = qt;
                        alpha = (2.0 * alpha).min(2.0);
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        Some((u, q))
    }
}

/// Multi-start logarithmic gradient ascent of `u ↦ ⟨Ψ(u), v⟩ / ⟨g(u), v⟩`
/// followed by an amplitude probe `t ↦ Q(t u_best)`.
pub fn upper_shift(
    d: &Discretization,
    v_star: &FEField,
    psi: &PerturbationSpec,
    opts: &UpperShiftOptions,
) -> Result<UpperShiftResult, SolverError> {
    let ctx = UpperCtx {
        d,
        dpsi: psi.discretization(d)?,
        v: v_star,
    };
    let sine = FEField::from_fn(d.mesh(), d.m(), |_, x| (std::f64::consts::PI * x).sin());
    let mut omega = d.zero_field();
    for k in 0..d.m() {
        let w = d.stiffness(k).solve(&vec![1.0; d.n()])?;
        omega.component_mut(k).copy_from_slice(&w);
    }
    let omega = omega.scaled(1.0 / omega.sup_norm());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![omega.clone(), sine];
    while starts.len() < opts.n_starts.max(2) {
        let amp = 10f64.powf(rng.gen_range(-2.0..2.0));
        let data = omega.as_slice().iter().map(|x| amp * x * (0.7 * rng.gen_range(-1.0..=1.0f64)).exp()).collect();
        starts.push(d.field(data)?);
    }
    let mut best: Option<(FEField, f64)> = None;
    for s in starts {
        if let Some((u, q)) = ctx.ascend(s, opts.max_iters) {
            if best.as_ref().is_none_or(|(_, b)| q > *b) {
                best = Some((u, q));
            }
        }
    }
    let (mut argmax, mut value) =
        best.ok_or_else(|| SolverError::Unsupported("perturbation quotient not evaluable at any start".into()))?;

    let shape = argmax.scaled(1.0 / argmax.sup_norm());
    let np = opts.probe_points.max(3);
    let mut probe = Vec::with_capacity(np);
    for i in 0..np {
        let t = 10f64.powf(-4.0 + 8.0 * i as f64 / (np - 1) as f64);
        if let Some(q) = ctx.value(&shape.scaled(t)) {
            probe.push((t, q));
        }
    }
    let mut notes = Vec::new();
    for &(t, q) in &probe {
        if q > value {
            value = q;
            argmax = shape.scaled(t);
        }
    }
    let qs: Vec<f64> = probe.iter().map(|p| p.1).collect();
    let qmax = qs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let qmin = qs.iter().cloned().fold(f64::INFINITY, f64::min);
    let constant = qmax - qmin <= 1e-12 * qmax.abs().max(qmin.abs()).max(f64::MIN_POSITIVE);
    let increasing = qs.windows(2).all(|w| w[1] >= w[0]);
    let decreasing = qs.windows(2).all(|w| w[1] <= w[0]);
    let tail = &qs[qs.len().saturating_sub(10)..];
    let unbounded_above = !constant
        && tail.windows(2).all(|w| w[1] > w[0])
        && tail.last().copied().unwrap_or(0.0) > 10.0 * tail[0].abs().max(f64::MIN_POSITIVE);
    if constant {
        notes.push("quotient is constant along the amplitude probe".into());
    } else if decreasing {
        notes.push(format!(
            "quotient decreases in amplitude; supremum approached as t -> 0 (probe value {:e} at t = 1e-4)",
            qs[0]
        ));
    } else if increasing {
        notes.push("quotient increases in amplitude".into());
    }
    if unbounded_above {
        notes.push("scaling probe indicates the quotient is unbounded above".into());
    }
    Ok(UpperShiftResult {
        value,
        argmax,
        lower_bound_of_sup: true,
        caveat_resolved: (constant || decreasing || increasing) && !probe.is_empty(),
        unbounded_above,
        probe,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub lambda_base: f64,
    pub lambda_pert: f64,
    /// `λ*_pert - λ*_base`.
    pub shift: f64,
    pub lower_shift: f64,
    pub upper_shift: f64,
    /// `max_i ⟨Ψ(u*_pert), η_i⟩/⟨g(u*_pert), η_i⟩`, the lower bound applied
    /// from the perturbed problem back to the base; `shift ≤` this.
    pub reverse_upper_shift: f64,
    pub bounds_hold: bool,
    /// False when the upper bound rests on an unresolved search.
    pub sandwich_fully_verified: bool,
    pub kappa_norm: f64,
    pub u_star_sup: f64,
    /// `‖κ‖_∞ ‖u*_base‖_∞^{γ₁ - q}`.
    pub example_bound: f64,
    /// `0 ≤ λ*_base - λ*_pert ≤ example_bound + tol`.
    pub example_holds: bool,
    pub base_valid: bool,
    pub pert_valid: bool,
    pub tol: f64,
    pub notes: Vec<String>,
}

/// Solves base and perturbed problems and evaluates every bound.
pub fn compare(
    d_base: &Discretization,
    psi: &PerturbationSpec,
    opts: &SolverOptions,
) -> Result<(PerturbationReport, MinimaxCertificate, MinimaxCertificate), SolverError> {
    let d_pert = Discretization::new(psi.apply(d_base.spec()), d_base.mesh().clone())?;
    let (base, pert) = rayon::join(|| maximize(d_base, None, opts), || maximize(&d_pert, None, opts));
    let (base, pert) = (base?, pert?);
    let lower = lower_shift(d_base, &base, psi)?;
    let reverse = direction_quotients(&d_pert, &pert.u_star, psi)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let upper = upper_shift(d_base, &base.v_star, psi, &UpperShiftOptions { seed: opts.seed, ..Default::default() })?;
    let shift = pert.lambda_star - base.lambda_star;
    let tol = 1e-8 * base.lambda_star.abs().max(1.0);
    let bounds_hold = lower <= shift + tol && shift <= upper.value + tol && shift <= reverse + tol;
    let mut notes = vec![
        "upper bound from the sup-quotient assumes inf-sup = sup-inf and uses the discrete adjoint as the dual minimizer"
            .to_string(),
    ];
    let r_check = crate::rayleigh::rayleigh_quotient(d_base, &base.u_star, &base.v_star)?;
    notes.push(format!(
        "testable consequence sup_u R(u, v*) >= lambda*: R(u*, v*) - lambda* = {:e}",
        r_check - base.lambda_star
    ));
    notes.extend(upper.notes.iter().cloned());
    let report = PerturbationReport {
        lambda_base: base.lambda_star,
        lambda_pert: pert.lambda_star,
        shift,
        lower_shift: lower,
        upper_shift: upper.value,
        reverse_upper_shift: reverse,
        bounds_hold,
        sandwich_fully_verified: upper.caveat_resolved,
        kappa_norm: f64::NAN,
        u_star_sup: base.u_star.sup_norm(),
        example_bound: f64::NAN,
        example_holds: false,
        base_valid: base.valid,
        pert_valid: pert.valid,
        tol,
        notes,
    };
    Ok((report, base, pert))
}

/// `sup |κ|` over nodes and a fine sampling of `[0, 1]`.
fn sup_norm(kappa: &Coefficient, mesh: &Mesh1D) -> f64 {
    let fine = (0..=10_000).map(|i| i as f64 / 10_000.0);
    mesh.nodes()
        .iter()
        .cloned()
        .chain(fine)
        .map(|x| kappa(x).abs())
        .fold(0.0, f64::max)
}

/// `-u'' - u^γ - κ u^{γ₁} = λ u^q` against the unperturbed problem.
pub fn two_sided_example(
    q: f64,
    gamma: f64,
    gamma1: f64,
    kappa: Coefficient,
    mesh: &Mesh1D,
    opts: &SolverOptions,
) -> Result<PerturbationReport, SolverError> {
    if !(q > 0.0 && q < 1.0 && gamma > 1.0 && gamma1 > 1.0) {
        return Err(SolverError::Unsupported(format!(
            "need 0 < q < 1 < gamma and gamma1 > 1, got q = {q}, gamma = {gamma}, gamma1 = {gamma1}"
        )));
    }
    let kappa_norm = sup_norm(&kappa, mesh);
    if mesh.nodes().iter().any(|&x| !(kappa(x) >= 0.0)) {
        return Err(SolverError::Unsupported("kappa must be nonnegative".into()));
    }
    let base = builtin_problem("scalar_power", &serde_json::json!({"q": q, "gamma": gamma}))?;
    let d = Discretization::new(base, mesh.clone())?;
    let psi = PerturbationSpec::negative_power(gamma1, kappa);
    let (mut rep, _, _) = compare(&d, &psi, opts)?;
    rep.kappa_norm = kappa_norm;
    rep.example_bound = kappa_norm * rep.u_star_sup.powf(gamma1 - q);
    let drop = -rep.shift;
    rep.example_holds = drop >= 0.0 && drop <= rep.example_bound + 1e-8;
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSweep {
    pub kappas: Vec<f64>,
    pub reports: Vec<PerturbationReport>,
    /// `|shift|` strictly decreasing with `κ`.
    pub monotone: bool,
}

/// [`two_sided_example`] for constant `κ` values, listed in decreasing order.
pub fn kappa_sweep(
    q: f64,
    gamma: f64,
    gamma1: f64,
    kappas: &[f64],
    mesh: &Mesh1D,
    opts: &SolverOptions,
) -> Result<KappaSweep, SolverError> {
    let reports = kappas
        .iter()
        .map(|&k| two_sided_example(q, gamma, gamma1, crate::model::constant(k), mesh, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let monotone = reports.windows(2).all(|w| w[1].shift.abs() < w[0].shift.abs());
    Ok(KappaSweep {
        kappas: kappas.to_vec(),
        reports,
        monotone,
    })
}
