use std::fs;

use sgcol_core::experiment::{compare_report, FinalSet, TraceFile};
use sgcol_core::{
    Error, ExperimentConfig, ProblemSpec, RunOptions, SparseInterpolant, Status, Strategy,
};

fn small_config(dir: &std::path::Path) -> ExperimentConfig {
    let text = format!(
        r#"{{"problem": {{"family": "cosine", "dim": 2}}, "mesh_elements": 32, "tolerance": 1e-5,
            "strategies": ["GN_envelope", "GG"], "reference_order": 8, "outdir": {:?}}}"#,
        dir.display().to_string()
    );
    ExperimentConfig::from_json(&text, "inline").unwrap()
}

#[test]
fn run_writes_traces_final_sets_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let summary = sgcol_core::experiment::run_experiment(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(summary.exit_code(), 0);
    assert_eq!(summary.problem_hash, cfg.problem.hash());

    let mut paths = Vec::new();
    for s in &summary.strategies {
        assert_eq!(s.status, Status::Converged);
        assert!(s.terminal_error.unwrap() < 1e-4);

        let trace_path = dir.path().join(format!("{}-trace.csv", s.strategy));
        let trace = TraceFile::read(&trace_path).unwrap();
        assert_eq!(trace.problem_hash, summary.problem_hash);
        assert_eq!(trace.rows.len(), s.iterations);
        assert!(trace.rows.windows(2).all(|w| w[0].solves <= w[1].solves));
        assert!(trace.rows.iter().all(|r| r.reference_error.is_some()));
        if s.strategy == Strategy::GnEnvelope {
            assert!(trace.rows.iter().all(|r| r.effectivity.unwrap() >= 1.0));
        }
        paths.push(trace_path);

        let text =
            fs::read_to_string(dir.path().join(format!("{}-final-set.json", s.strategy))).unwrap();
        let fin: FinalSet = serde_json::from_str(&text).unwrap();
        let interp = SparseInterpolant::from_snapshot(&fin.interpolant).unwrap();
        assert_eq!(interp.index_set().len(), s.lambda_size);
    }
    let text = fs::read_to_string(dir.path().join("summary.json")).unwrap();
    let back: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(back["problem_hash"], summary.problem_hash.as_str());

    let table = compare_report(&paths).unwrap();
    assert_eq!(table.labels, ["GN_envelope", "GG"]);
    assert!(table.rows.windows(2).all(|w| w[0].0 < w[1].0));
    let rendered = table.to_string();
    assert!(rendered.lines().count() > table.rows.len());
}

#[test]
fn compare_rejects_mixed_problems() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let header = "n,strategy,lambda_size,grid_size,solves,total_estimator,max_estimator,reference_error,effectivity,wall_ms";
    fs::write(
        &a,
        format!("# problem_hash=aaa strategy=GG\n{header}\n0,GG,1,1,1,1e-1,1e-1,,,0.1\n"),
    )
    .unwrap();
    fs::write(
        &b,
        format!("# problem_hash=bbb strategy=GG\n{header}\n0,GG,1,1,1,1e-1,1e-1,,,0.1\n"),
    )
    .unwrap();
    assert!(matches!(
        compare_report(&[a.clone(), b]),
        Err(Error::ProblemMismatch(..))
    ));
    assert!(matches!(compare_report(&[]), Err(Error::Usage(_))));
    let single = compare_report(&[a]).unwrap();
    assert_eq!(single.rows, vec![(1, vec![None])]);
}

#[test]
fn configuration_errors_carry_locations() {
    let err =
        ExperimentConfig::from_json("{\n  \"mesh_elements\": \"x\"\n}", "cfg.json").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("cfg.json:2:"), "{msg}");
    assert!(ExperimentConfig::from_json(r#"{"unknown": 1}"#, "cfg").is_err());
    assert!(ExperimentConfig::from_json(r#"{"p": 0.5}"#, "cfg").is_err());
    let sup = ExperimentConfig::from_json(r#"{"p": "inf"}"#, "cfg").unwrap();
    assert!(sup.p.is_infinite());
}

#[test]
fn problem_hash_ignores_run_settings() {
    let a = ExperimentConfig::from_json(r#"{"mesh_elements": 64}"#, "a").unwrap();
    let b =
        ExperimentConfig::from_json(r#"{"mesh_elements": 128, "tolerance": 1e-3}"#, "b").unwrap();
    assert_eq!(a.problem.hash(), b.problem.hash());
    let c = ProblemSpec::Cosine {
        dim: 3,
        a0: 1.0,
        gamma: 0.5,
        sigma: 2.0,
        rhs: 1.0,
    };
    assert_ne!(a.problem.hash(), c.hash());
}
