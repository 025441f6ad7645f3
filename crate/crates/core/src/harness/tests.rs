use std::fs;

use super::*;

fn cfg(study: Study, problem: &str, sizes: Vec<usize>, out: &Path) -> RunConfig {
    RunConfig {
        study,
        problem: problem.into(),
        sizes,
        out: out.to_path_buf(),
        svg: false,
        ..Default::default()
    }
}

#[test]
fn overrides_replace_config_keys() {
    let ov = Overrides {
        problem: Some("scalar_power".into()),
        q: Some(0.3),
        gamma: Some(3.0),
        n: Some(vec![16]),
        seed: Some(7),
        ..Default::default()
    };
    let c = RunConfig::from_json(Some(r#"{"problem": "cooperative_product", "sizes": [8, 16]}"#), &ov).unwrap();
    assert_eq!(c.problem, "scalar_power");
    assert_eq!(c.sizes, vec![16]);
    assert_eq!(c.params["q"], 0.3);
    assert_eq!(c.solver_options().seed, 7);
}

#[test]
fn invalid_configs_are_rejected() {
    let ov = Overrides::default();
    for bad in [
        "{not json",
        "[]",
        r#"{"problem": "nope"}"#,
        r#"{"sizes": [16, 8]}"#,
        r#"{"sizes": [1]}"#,
        r#"{"study": "refine", "sizes": [16]}"#,
        r#"{"study": "perturb", "problem": "cooperative_product"}"#,
        r#"{"interval": [3.0, 1.0]}"#,
        r#"{"unknown_key": 1}"#,
        r#"{"params": {"q": 2.0}}"#,
    ] {
        let e = RunConfig::from_json(Some(bad), &ov).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_CONFIG, "{bad}");
    }
}

#[test]
fn solve_writes_certificate_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg(Study::Solve, "scalar_power", vec![16], dir.path());
    let out = run(&c).unwrap();
    assert_eq!(out.exit_code, EXIT_OK, "{}", out.summary);
    let cert = load_certificate(&dir.path().join("certificate.json")).unwrap();
    assert!(cert.certificate.valid);
    let table = fs::read_to_string(dir.path().join("table.csv")).unwrap();
    assert!(table.starts_with("problem,n,h,lambda"));
    assert!(dir.path().join("plotdata/solution_n16.csv").exists());
}

#[test]
fn refinement_of_linear_problem_is_second_order() {
    let spec = builtin_problem("linear_diagnostic", &serde_json::json!({})).unwrap();
    let tab = refinement_study(&spec, &[8, 16, 32, 64], Grading::Uniform, &SolverOptions::default(), Some((1.0, 20.0))).unwrap();
    assert!(tab.rows.iter().all(|r| r.valid));
    for o in &tab.orders {
        assert!((o - 2.0).abs() < 0.1, "{o}");
    }
    assert_eq!(tab.outside_interval, Some(false));
    let l = tab.aitken_limit.unwrap();
    assert!((l - std::f64::consts::PI.powi(2)).abs() < 1e-3, "{l}");
}

#[test]
fn refinement_needs_three_sizes() {
    let spec = builtin_problem("scalar_power", &serde_json::json!({})).unwrap();
    assert!(refinement_study(&spec, &[8, 16], Grading::Uniform, &SolverOptions::default(), None).is_err());
}

#[test]
fn piecewise_linear_probe_is_reproduced() {
    let spec = builtin_problem("scalar_power", &serde_json::json!({})).unwrap();
    // hat on the coarsest mesh: L u is a point mass, so only the
    // interpolation part of the report is meaningful
    let hat: ProbeFn = std::sync::Arc::new(|x: f64| x.min(1.0 - x));
    let zero: ProbeFn = std::sync::Arc::new(|_| 0.0);
    let probe = Probe {
        name: "hat".into(),
        u: vec![hat],
        lu: vec![zero],
    };
    let rep = condition_u_check(&spec, &[8, 16, 32], &[probe]).unwrap();
    assert!(rep.probes[0].admissible);
    assert!(rep.probes[0].rel_interp_error.iter().all(|&e| e < 1e-14));
}

#[test]
fn inadmissible_probe_is_reported() {
    let spec = builtin_problem("scalar_power", &serde_json::json!({})).unwrap();
    let f: ProbeFn = std::sync::Arc::new(|x: f64| x * (1.0 - x) + 0.1);
    let probe = Probe {
        name: "offset".into(),
        u: vec![f.clone()],
        lu: vec![std::sync::Arc::new(|_| 2.0)],
    };
    let rep = condition_u_check(&spec, &[8, 16], &[probe]).unwrap();
    assert!(!rep.probes[0].admissible);
    assert!(rep.probes[0].reason.as_ref().unwrap().contains("vanish"));
}

#[test]
fn oracle_flags_linear_divergence() {
    let mesh = build_mesh(16, Grading::Uniform).unwrap();
    let spec = builtin_problem("linear_diagnostic", &serde_json::json!({})).unwrap();
    let d = Discretization::new(spec, mesh).unwrap();
    let r = oracle_compare(&d, &SolverOptions::default(), &ContinuationOptions::default()).unwrap();
    assert!(r.expected_divergence);
    assert!(r.lambda_fold.is_none());
    assert!(r.message.contains("no fold"));
    assert!(r.lambda_minimax.is_some());
}

#[test]
fn svg_chart_is_well_formed() {
    let s = svg_line_chart(
        "t<1>",
        "x",
        "y",
        &[Series {
            name: "a".into(),
            points: vec![(1.0, 2.0), (2.0, f64::NAN), (3.0, 1.0)],
        }],
        true,
        false,
    );
    assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
    assert!(s.contains("t&lt;1&gt;"));
}
