//! Run configuration, studies and artifact emission for the command-line
//! driver.

mod output;
mod studies;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use output::{
    fmt_f64, fmt_opt, load_certificate, solution_csv, svg_line_chart, CertificateFile, Csv, Series, Writer,
    CERT_SCHEMA,
};
pub use studies::{
    condition_u_check, default_probes, oracle_compare, refinement_study, transfer, ConditionUReport, OracleReport,
    Probe, ProbeFn, ProbeResult, RefinementRow, RefinementTable,
};

use crate::mesh_fem::{build_mesh, Grading};
use crate::minimax::{maximize, maximize_multistart, verify_certificate, ContinuationOptions, MinimaxCertificate, SolverError, SolverOptions};
use crate::model::{check_hypotheses, default_samples, HypothesisReport};
use crate::model::{builtin_problem, catalog_names, Discretization, ProblemSpec};
use crate::perturbation::kappa_sweep;
use crate::rayleigh::inner_min;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_HYPOTHESIS: i32 = 4;

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => EXIT_CONFIG,
            HarnessError::Io(_) => EXIT_IO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    #[default]
    Solve,
    Refine,
    Perturb,
    Check,
    Oracle,
}

impl Study {
    pub fn parse(s: &str) -> Option<Study> {
        serde_json::from_value(Value::String(s.into())).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    pub gamma1: f64,
    /// Constant `κ` values, decreasing.
    pub kappas: Vec<f64>,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            gamma1: 3.0,
            kappas: vec![0.1, 0.01, 0.001],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub study: Study,
    pub problem: String,
    pub params: Value,
    /// Element counts, strictly increasing.
    pub sizes: Vec<usize>,
    pub grading: Grading,
    pub solver: SolverOptions,
    /// Overrides `solver.seed` when set.
    pub seed: Option<u64>,
    pub out: PathBuf,
    /// Fail with exit code 4 when a sampled hypothesis is violated.
    pub strict: bool,
    /// Interval expected to contain every computed value; drift is flagged.
    pub interval: Option<(f64, f64)>,
    /// Use the multi-start driver for `solve`.
    pub multistart: bool,
    pub perturbation: PerturbationConfig,
    pub continuation: ContinuationOptions,
    pub svg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            study: Study::Solve,
            problem: "scalar_power".into(),
            params: Value::Object(Default::default()),
            sizes: vec![64],
            grading: Grading::Uniform,
            solver: SolverOptions::default(),
            seed: None,
            out: PathBuf::from("out"),
            strict: false,
            interval: None,
            multistart: false,
            perturbation: PerturbationConfig::default(),
            continuation: ContinuationOptions::default(),
            svg: true,
        }
    }
}

/// Command-line values that replace config keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub study: Option<Study>,
    pub problem: Option<String>,
    pub q: Option<f64>,
    pub gamma: Option<f64>,
    pub n: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub strict: bool,
}

impl RunConfig {
    /// Parses a JSON document, applies `ov`, then validates.
    pub fn from_json(text: Option<&str>, ov: &Overrides) -> Result<RunConfig, HarnessError> {
        let mut v: Value = match text {
            Some(t) => serde_json::from_str(t).map_err(|e| HarnessError::Config(format!("malformed config: {e}")))?,
            None => Value::Object(Default::default()),
        };
        let obj = v
            .as_object_mut()
            .ok_or_else(|| HarnessError::Config("config must be a JSON object".into()))?;
        if let Some(s) = ov.study {
            obj.insert("study".into(), serde_json::to_value(s).expect("study serializes"));
        }
        if let Some(p) = &ov.problem {
            obj.insert("problem".into(), Value::String(p.clone()));
        }
        if ov.q.is_some() || ov.gamma.is_some() {
            let params = obj.entry("params").or_insert_with(|| Value::Object(Default::default()));
            let params = params
                .as_object_mut()
                .ok_or_else(|| HarnessError::Config("params must be a JSON object".into()))?;
            if let Some(q) = ov.q {
                params.insert("q".into(), q.into());
            }
            if let Some(g) = ov.gamma {
                params.insert("gamma".into(), g.into());
            }
        }
        if let Some(n) = &ov.n {
            obj.insert("sizes".into(), serde_json::to_value(n).expect("sizes serialize"));
        }
        if let Some(s) = ov.seed {
            obj.insert("seed".into(), s.into());
        }
        if let Some(o) = &ov.out {
            obj.insert("out".into(), Value::String(o.to_string_lossy().into_owned()));
        }
        if ov.strict {
            obj.insert("strict".into(), true.into());
        }
        let cfg: RunConfig = serde_json::from_value(v).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, ov: &Overrides) -> Result<RunConfig, HarnessError> {
        let text = match path {
            Some(p) => Some(
                std::fs::read_to_string(p).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?,
            ),
            None => None,
        };
        Self::from_json(text.as_deref(), ov)
    }

    pub fn solver_options(&self) -> SolverOptions {
        let mut s = self.solver.clone();
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        s
    }

    pub fn spec(&self) -> Result<ProblemSpec, HarnessError> {
        builtin_problem(&self.problem, &self.params).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !catalog_names().contains(&self.problem.as_str()) {
            return bad(format!("unknown problem `{}`; known: {}", self.problem, catalog_names().join(", ")));
        }
        let spec = self.spec()?;
        if self.sizes.is_empty() {
            return bad("sizes is empty".into());
        }
        if self.sizes[0] < 2 {
            return bad("mesh sizes must be at least 2".into());
        }
        if self.sizes.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("mesh sizes must be strictly increasing, got {:?}", self.sizes));
        }
        if self.study == Study::Refine && self.sizes.len() < 3 {
            return bad(format!("refine needs at least 3 mesh sizes, got {}", self.sizes.len()));
        }
        if self.study == Study::Perturb {
            if self.problem != "scalar_power" {
                return bad("perturb is defined for scalar_power only".into());
            }
            let p = &self.perturbation;
            if p.kappas.is_empty() || p.kappas.iter().any(|k| !(*k > 0.0)) {
                return bad("perturbation.kappas must be positive".into());
            }
            if p.kappas.windows(2).any(|w| w[1] >= w[0]) {
                return bad("perturbation.kappas must be decreasing".into());
            }
            if !(p.gamma1 > 1.0) {
                return bad("perturbation.gamma1 must exceed 1".into());
            }
        }
        if let Some((a, b)) = self.interval {
            if !(0.0 < a && a < b) {
                return bad(format!("interval needs 0 < a < b, got ({a}, {b})"));
            }
        }
        if self.solver.n_starts == 0 || self.solver.max_iters == 0 {
            return bad("solver.n_starts and solver.max_iters must be positive".into());
        }
        if let Err(e) = Discretization::new(spec, build_mesh(self.sizes[0], self.grading).map_err(|e| HarnessError::Config(e.to_string()))?) {
            return bad(e.to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

fn hypotheses(spec: &ProblemSpec) -> HypothesisReport {
    let (xs, ts) = default_samples(spec.m());
    check_hypotheses(spec, &xs, &ts)
}

fn certificate_file(cfg: &RunConfig, n: usize, d: &Discretization, cert: &MinimaxCertificate) -> CertificateFile {
    CertificateFile {
        schema: CERT_SCHEMA.into(),
        problem: cfg.problem.clone(),
        params: cfg.params.clone(),
        n,
        grading: cfg.grading,
        solver: cfg.solver_options(),
        certificate: cert.clone(),
        validity: verify_certificate(d, cert, cfg.solver_options().cert_tol),
    }
}

fn disc(cfg: &RunConfig, n: usize) -> Result<Discretization, HarnessError> {
    let mesh = build_mesh(n, cfg.grading).map_err(|e| HarnessError::Config(e.to_string()))?;
    Discretization::new(cfg.spec()?, mesh).map_err(|e| HarnessError::Config(e.to_string()))
}

/// `min_i R(u*, η_i)` recomputed from the stored field.
fn recomputed(d: &Discretization, cert: &MinimaxCertificate) -> Option<f64> {
    inner_min(d, &cert.u_star).ok().map(|r| r.value)
}

/// Executes one study and writes its artifacts under `cfg.out`.
///
/// Configuration errors are detected before anything is written. Solver
/// failures return exit code 3 with whatever was produced so far.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, HarnessError> {
    cfg.validate()?;
    let mut w = Writer::new(&cfg.out)?;
    if cfg.strict || cfg.study == Study::Check {
        let rep = hypotheses(&cfg.spec()?);
        w.json("hypotheses.json", &rep)?;
        if cfg.study != Study::Check && cfg.strict && !rep.all_pass() {
            let failed: Vec<&str> = rep.verdicts.iter().filter(|v| !v.passed).map(|v| v.id.as_str()).collect();
            return Ok(RunOutcome {
                exit_code: EXIT_HYPOTHESIS,
                files: w.files,
                summary: format!("hypothesis check failed: {}", failed.join(", ")),
            });
        }
    }
    let (code, summary) = match cfg.study {
        Study::Solve => run_solve(cfg, &mut w)?,
        Study::Refine => run_refine(cfg, &mut w)?,
        Study::Perturb => run_perturb(cfg, &mut w)?,
        Study::Check => run_check(cfg, &mut w)?,
        Study::Oracle => run_oracle(cfg, &mut w)?,
    };
    Ok(RunOutcome {
        exit_code: code,
        files: w.files,
        summary,
    })
}

const SOLVE_HEADER: [&str; 14] = [
    "problem",
    "n",
    "h",
    "lambda",
    "lambda_recomputed",
    "primal",
    "adjoint",
    "stationarity",
    "complementarity",
    "sigma_min_rel",
    "cone_distance",
    "iterations",
    "valid",
    "error",
];

fn solve_row(cfg: &RunConfig, d: &Discretization, res: &Result<MinimaxCertificate, SolverError>) -> Vec<String> {
    let n = d.mesh().n_elements();
    let head = vec![cfg.problem.clone(), n.to_string(), fmt_f64(d.mesh().h_max())];
    let body = match res {
        Ok(c) => vec![
            fmt_f64(c.lambda_star),
            fmt_opt(recomputed(d, c)),
            fmt_f64(c.primal_residual),
            fmt_f64(c.adjoint_residual),
            fmt_f64(c.stationarity_residual),
            fmt_f64(c.complementarity_residual),
            fmt_f64(c.sigma_min / c.j_norm),
            fmt_f64(c.cone_distance),
            c.iterations.to_string(),
            c.valid.to_string(),
            String::new(),
        ],
        Err(e) => {
            let mut v = vec!["nan".to_string(); 8];
            v.push("0".into());
            v.push("false".into());
            v.push(format!("\"{}\"", e.to_string().replace('"', "'")));
            v
        }
    };
    head.into_iter().chain(body).collect()
}

fn write_solution(cfg: &RunConfig, w: &mut Writer, d: &Discretization, cert: &MinimaxCertificate) -> Result<(), HarnessError> {
    let n = d.mesh().n_elements();
    let csv = solution_csv(d, cert);
    w.csv(&format!("plotdata/solution_n{n}.csv"), &csv)?;
    if cfg.svg {
        let mut series = Vec::new();
        let nodes = d.mesh().nodes();
        for (f, tag) in [(&cert.u_star, "u"), (&cert.v_star, "v")] {
            for k in 0..d.m() {
                let mut pts = vec![(0.0, 0.0)];
                pts.extend((0..d.n()).map(|i| (nodes[i + 1], f.get(k, i) / f.sup_norm())));
                pts.push((1.0, 0.0));
                series.push(Series {
                    name: format!("{tag}{k} (scaled)"),
                    points: pts,
                });
            }
        }
        let title = format!("{} n={n} lambda={:.10}", cfg.problem, cert.lambda_star);
        w.text(&format!("solution_n{n}.svg"), &svg_line_chart(&title, "x", "normalized value", &series, false, false))?;
    }
    Ok(())
}

/// Certificate of the last failure-carrying best iterate, if any.
fn best_of(res: &Result<MinimaxCertificate, SolverError>) -> Option<&MinimaxCertificate> {
    match res {
        Ok(c) => Some(c),
        Err(SolverError::MaxIters { best }) => Some(best),
        Err(_) => None,
    }
}

fn run_solve(cfg: &RunConfig, w: &mut Writer) -> Result<(i32, String), HarnessError> {
    let opts = cfg.solver_options();
    let mut table = Csv::new(&SOLVE_HEADER);
    let mut timings = Csv::new(&["n", "runtime_s"]);
    let mut failures = Vec::new();
    let mut last: Option<(usize, Discretization, MinimaxCertificate)> = None;
    for &n in &cfg.sizes {
        let d = disc(cfg, n)?;
        let t = Instant::now();
        let res = if cfg.multistart {
            maximize_multistart(&d, &opts).map(|r| r.best)
        } else {
            maximize(&d, None, &opts)
        };
        timings.row(vec![n.to_string(), format!("{:.6}", t.elapsed().as_secs_f64())]);
        table.row(solve_row(cfg, &d, &res));
        match &res {
            Ok(c) if c.valid => {}
            Ok(_) => failures.push(format!("n={n}: certificate INVALID")),
            Err(e) => failures.push(format!("n={n}: {e}")),
        }
        if let Some(c) = best_of(&res) {
            write_solution(cfg, w, &d, c)?;
            last = Some((n, d, c.clone()));
        }
    }
    if let Some((n, d, c)) = &last {
        w.json("certificate.json", &certificate_file(cfg, *n, d, c))?;
    }
    w.csv("table.csv", &table)?;
    w.csv("timings.csv", &timings)?;
    let summary = match &last {
        Some((n, _, c)) => format!(
            "{} n={n}: lambda* = {} [{}]",
            cfg.problem,
            fmt_f64(c.lambda_star),
            if c.valid { "VALID" } else { "INVALID" }
        ),
        None => format!("{}: no certificate", cfg.problem),
    };
    if failures.is_empty() {
        Ok((EXIT_OK, summary))
    } else {
        Ok((EXIT_SOLVER, format!("{summary}; failures: {}", failures.join("; "))))
    }
}

fn run_refine(cfg: &RunConfig, w: &mut Writer) -> Result<(i32, String), HarnessError> {
    let opts = cfg.solver_options();
    let spec = cfg.spec()?;
    let tab = refinement_study(&spec, &cfg.sizes, cfg.grading, &opts, cfg.interval)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut table = Csv::new(&[
        "n",
        "h",
        "lambda",
        "lambda_recomputed",
        "abs_diff_next",
        "transfer_diff_next",
        "sigma_min_rel",
        "valid",
        "error",
    ]);
    let mut timings = Csv::new(&["n", "runtime_s"]);
    let mut conv = Csv::new(&["h", "lambda", "abs_diff_next"]);
    for (row, cert) in tab.rows.iter().zip(&tab.certificates) {
        let d = disc(cfg, row.n)?;
        let rec = cert.as_ref().and_then(|c| recomputed(&d, c));
        table.row(vec![
            row.n.to_string(),
            fmt_f64(row.h),
            fmt_opt(row.lambda),
            fmt_opt(rec),
            fmt_opt(row.diff_next),
            fmt_opt(row.transfer_diff),
            fmt_opt(row.sigma_min_rel),
            row.valid.to_string(),
            row.error.as_ref().map_or(String::new(), |e| format!("\"{}\"", e.replace('"', "'"))),
        ]);
        timings.row(vec![row.n.to_string(), format!("{:.6}", row.runtime_s)]);
        conv.row(vec![fmt_f64(row.h), fmt_opt(row.lambda), fmt_opt(row.diff_next)]);
    }
    w.csv("table.csv", &table)?;
    w.csv("timings.csv", &timings)?;
    w.csv("plotdata/convergence.csv", &conv)?;
    let mut summary_csv = Csv::new(&["quantity", "value"]);
    summary_csv.row(vec!["aitken_limit".into(), fmt_opt(tab.aitken_limit)]);
    for (i, o) in tab.orders.iter().enumerate() {
        summary_csv.row(vec![format!("order_{i}"), fmt_f64(*o)]);
    }
    if let Some((lo, hi)) = tab.range {
        summary_csv.row(vec!["range_min".into(), fmt_f64(lo)]);
        summary_csv.row(vec!["range_max".into(), fmt_f64(hi)]);
    }
    if let Some(out) = tab.outside_interval {
        summary_csv.row(vec!["outside_interval".into(), out.to_string()]);
    }
    w.csv("plotdata/refinement_summary.csv", &summary_csv)?;
    if cfg.svg {
        let pts: Vec<(f64, f64)> = tab.rows.iter().filter_map(|r| r.diff_next.map(|d| (r.h, d))).collect();
        let chart = svg_line_chart(
            &format!("{}: successive differences", cfg.problem),
            "h",
            "|lambda_r - lambda_next|",
            &[Series {
                name: "difference".into(),
                points: pts,
            }],
            true,
            true,
        );
        w.text("convergence.svg", &chart)?;
    }
    let finest = tab
        .rows
        .iter()
        .zip(&tab.certificates)
        .rev()
        .find_map(|(r, c)| c.as_ref().map(|c| (r.n, c)));
    if let Some((n, c)) = finest {
        let d = disc(cfg, n)?;
        w.json("certificate.json", &certificate_file(cfg, n, &d, c))?;
        write_solution(cfg, w, &d, c)?;
    }
    let failed: Vec<String> = tab
        .rows
        .iter()
        .filter(|r| !r.valid)
        .map(|r| format!("n={}: {}", r.n, r.error.clone().unwrap_or_else(|| "INVALID".into())))
        .collect();
    let mut summary = format!(
        "{}: lambda at n={} is {}, Aitken limit {}",
        cfg.problem,
        tab.rows.last().map_or(0, |r| r.n),
        fmt_opt(tab.rows.last().and_then(|r| r.lambda)),
        fmt_opt(tab.aitken_limit)
    );
    if tab.outside_interval == Some(true) {
        summary.push_str("; some values fall outside the supplied interval");
    }
    if failed.is_empty() {
        Ok((EXIT_OK, summary))
    } else {
        Ok((EXIT_SOLVER, format!("{summary}; failures: {}", failed.join("; "))))
    }
}

fn run_perturb(cfg: &RunConfig, w: &mut Writer) -> Result<(i32, String), HarnessError> {
    let opts = cfg.solver_options();
    let spec = cfg.spec()?;
    let (q, gamma) = (spec.constants.q, spec.constants.gamma);
    let n = *cfg.sizes.last().expect("validated");
    let d = disc(cfg, n)?;
    let p = &cfg.perturbation;
    let sweep = match kappa_sweep(q, gamma, p.gamma1, &p.kappas, d.mesh(), &opts) {
        Ok(s) => s,
        Err(e) => return Ok((EXIT_SOLVER, format!("perturbation study failed: {e}"))),
    };
    let mut table = Csv::new(&[
        "kappa",
        "lambda_base",
        "lambda_pert",
        "shift",
        "lower_shift",
        "upper_shift",
        "reverse_upper_shift",
        "example_bound",
        "bounds_hold",
        "example_holds",
        "sandwich_fully_verified",
        "base_valid",
        "pert_valid",
    ]);
    for (k, r) in sweep.kappas.iter().zip(&sweep.reports) {
        table.row(vec![
            fmt_f64(*k),
            fmt_f64(r.lambda_base),
            fmt_f64(r.lambda_pert),
            fmt_f64(r.shift),
            fmt_f64(r.lower_shift),
            fmt_f64(r.upper_shift),
            fmt_f64(r.reverse_upper_shift),
            fmt_f64(r.example_bound),
            r.bounds_hold.to_string(),
            r.example_holds.to_string(),
            r.sandwich_fully_verified.to_string(),
            r.base_valid.to_string(),
            r.pert_valid.to_string(),
        ]);
    }
    w.csv("table.csv", &table)?;
    w.json("perturbation.json", &sweep)?;
    let mut plot = Csv::new(&["kappa", "abs_shift", "example_bound"]);
    for (k, r) in sweep.kappas.iter().zip(&sweep.reports) {
        plot.row(vec![fmt_f64(*k), fmt_f64(r.shift.abs()), fmt_f64(r.example_bound)]);
    }
    w.csv("plotdata/shift_vs_kappa.csv", &plot)?;
    if cfg.svg {
        let s = |f: &dyn Fn(&crate::perturbation::PerturbationReport) -> f64, name: &str| Series {
            name: name.into(),
            points: sweep.kappas.iter().zip(&sweep.reports).map(|(k, r)| (*k, f(r))).collect(),
        };
        let chart = svg_line_chart(
            "shift against kappa",
            "kappa",
            "value",
            &[s(&|r| r.shift.abs(), "|shift|"), s(&|r| r.example_bound, "bound")],
            true,
            true,
        );
        w.text("shift_vs_kappa.svg", &chart)?;
    }
    let base = maximize(&d, None, &opts);
    if let Some(c) = best_of(&base) {
        w.json("certificate.json", &certificate_file(cfg, n, &d, c))?;
    }
    let ok = sweep.monotone && sweep.reports.iter().all(|r| r.example_holds && r.base_valid && r.pert_valid);
    let summary = format!(
        "perturbation sweep over {} kappa values: monotone = {}, all bounds hold = {}",
        sweep.kappas.len(),
        sweep.monotone,
        sweep.reports.iter().all(|r| r.example_holds && r.bounds_hold)
    );
    Ok((if ok { EXIT_OK } else { EXIT_SOLVER }, summary))
}

fn run_check(cfg: &RunConfig, w: &mut Writer) -> Result<(i32, String), HarnessError> {
    let spec = cfg.spec()?;
    let rep = hypotheses(&spec);
    let mut table = Csv::new(&["hypothesis", "passed", "margin", "fitted_constant", "worst_x"]);
    for v in &rep.verdicts {
        table.row(vec![
            v.id.clone(),
            v.passed.to_string(),
            fmt_f64(v.margin),
            fmt_opt(v.fitted_constant),
            fmt_opt(v.worst_x),
        ]);
    }
    w.csv("table.csv", &table)?;
    let mut notes = Vec::new();
    if cfg.sizes.len() >= 2 && !spec.is_linear_diagnostic() {
        match default_probes(&spec) {
            Ok(probes) => {
                let cu = condition_u_check(&spec, &cfg.sizes, &probes).map_err(|e| HarnessError::Config(e.to_string()))?;
                let mut csv = Csv::new(&["probe", "n", "h", "rel_interp_error", "r_sup_diff"]);
                for p in &cu.probes {
                    for i in 0..p.h.len() {
                        csv.row(vec![
                            p.name.clone(),
                            p.sizes[i].to_string(),
                            fmt_f64(p.h[i]),
                            fmt_f64(p.rel_interp_error[i]),
                            fmt_f64(p.r_sup_diff[i]),
                        ]);
                    }
                }
                w.csv("plotdata/condition_u.csv", &csv)?;
                w.json("condition_u.json", &cu)?;
                for p in &cu.probes {
                    notes.push(format!(
                        "probe {}: interpolation slope {:.3}, quotient slope {:.3}",
                        p.name, p.interp_slope, p.r_slope
                    ));
                }
            }
            Err(e) => notes.push(format!("condition (U) skipped: {e}")),
        }
    }
    let failed: Vec<&str> = rep.verdicts.iter().filter(|v| !v.passed).map(|v| v.id.as_str()).collect();
    let mut summary = if failed.is_empty() {
        format!("{}: all sampled hypotheses hold", cfg.problem)
    } else {
        format!("{}: violated: {}", cfg.problem, failed.join(", "))
    };
    for n in notes {
        summary.push_str("; ");
        summary.push_str(&n);
    }
    let code = if cfg.strict && !failed.is_empty() { EXIT_HYPOTHESIS } else { EXIT_OK };
    Ok((code, summary))
}

fn run_oracle(cfg: &RunConfig, w: &mut Writer) -> Result<(i32, String), HarnessError> {
    let opts = cfg.solver_options();
    let mut table = Csv::new(&[
        "problem",
        "n",
        "lambda_minimax",
        "minimax_valid",
        "lambda_fold",
        "rel_gap",
        "termination",
        "expected_divergence",
    ]);
    let mut timings = Csv::new(&["n", "minimax_s", "continuation_s"]);
    let mut failures = Vec::new();
    let mut summary = String::new();
    for &n in &cfg.sizes {
        let d = disc(cfg, n)?;
        let rep = oracle_compare(&d, &opts, &cfg.continuation).map_err(|e| HarnessError::Config(e.to_string()))?;
        table.row(vec![
            cfg.problem.clone(),
            n.to_string(),
            fmt_opt(rep.lambda_minimax),
            rep.minimax_valid.to_string(),
            fmt_opt(rep.lambda_fold),
            fmt_opt(rep.rel_gap),
            rep.termination.map_or("error".into(), |t| format!("{t:?}")),
            rep.expected_divergence.to_string(),
        ]);
        timings.row(vec![
            n.to_string(),
            format!("{:.6}", rep.minimax_runtime_s),
            format!("{:.6}", rep.continuation_runtime_s),
        ]);
        let mut branch = Csv::new(&["arclength", "lambda", "u_sup", "stability"]);
        for p in &rep.branch {
            branch.row(vec![
                fmt_f64(p.arclength),
                fmt_f64(p.lambda),
                fmt_f64(p.u.sup_norm()),
                p.stability_indicator.to_string(),
            ]);
        }
        w.csv(&format!("plotdata/branch_n{n}.csv"), &branch)?;
        if cfg.svg && !rep.branch.is_empty() {
            let pts = rep.branch.iter().map(|p| (p.lambda, p.u.sup_norm())).collect();
            let chart = svg_line_chart(
                &format!("{} n={n}: solution branch", cfg.problem),
                "lambda",
                "sup u",
                &[Series {
                    name: "branch".into(),
                    points: pts,
                }],
                false,
                false,
            );
            w.text(&format!("branch_n{n}.svg"), &chart)?;
        }
        if let Some(c) = &rep.certificate {
            w.json("certificate.json", &certificate_file(cfg, n, &d, c))?;
        }
        if rep.lambda_minimax.is_none() || (rep.lambda_fold.is_none() && !rep.expected_divergence) {
            failures.push(format!("n={n}: {}", rep.message));
        }
        summary = format!(
            "{} n={n}: minimax {} fold {} gap {}{}",
            cfg.problem,
            fmt_opt(rep.lambda_minimax),
            fmt_opt(rep.lambda_fold),
            fmt_opt(rep.rel_gap),
            if rep.expected_divergence { " (no fold expected)" } else { "" }
        );
    }
    w.csv("table.csv", &table)?;
    w.csv("timings.csv", &timings)?;
    if failures.is_empty() {
        Ok((EXIT_OK, summary))
    } else {
        Ok((EXIT_SOLVER, format!("{summary}; failures: {}", failures.join("; "))))
    }
}

#[cfg(test)]
mod tests;
