use std::process::Command as Proc;

use pnf_cli::config::ConfigError;
use pnf_cli::{builtin, builtin_examples, run_command, Command, Report, RunConfig};

const PNF: &str = env!("CARGO_BIN_EXE_pnf");

fn with_bivector(slots: &str, samples: &str) -> String {
    format!(
        r#"{{
  "manifold": {{ "dim": 3, "bounds": [[-1, 1], [-1, 1], [-1, 1]], "bivector": {slots} }},
  "samples": {samples}
}}"#
    )
}

#[test]
fn so3star_fixture_contents() {
    let cfg = builtin("so3star.json").unwrap();
    assert_eq!(cfg.manifold.dim, 3);
    let slots: Vec<(&str, &str)> = cfg.manifold.bivector.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    assert_eq!(slots, vec![("1,2", "x3"), ("1,3", "-x2"), ("2,3", "x1")]);
    assert!(cfg.transversal.is_some());
}

#[test]
fn every_example_has_a_transversal() {
    let all = builtin_examples();
    assert_eq!(all.len(), 8);
    for (name, cfg) in &all {
        assert!(cfg.transversal.is_some(), "{name}");
        assert_eq!(cfg.name.as_deref(), Some(name.as_str()));
    }
}

#[test]
fn diagonal_slot_is_rejected() {
    let text = with_bivector(r#"{ "1,1": "x2", "1,2": "x3" }"#, r#"{ "count": 0 }"#);
    let err = RunConfig::from_json(&text, "t").unwrap_err();
    assert!(matches!(&err, ConfigError::Field { field, .. } if field.contains("1,1")), "{err}");
}

#[test]
fn lower_triangular_slot_is_rejected() {
    let text = with_bivector(r#"{ "2,1": "x3" }"#, r#"{ "count": 0 }"#);
    assert!(matches!(RunConfig::from_json(&text, "t"), Err(ConfigError::Field { .. })));
}

#[test]
fn missing_seed_is_rejected() {
    let text = with_bivector(r#"{ "1,2": "x3" }"#, r#"{ "count": 5 }"#);
    let err = RunConfig::from_json(&text, "t").unwrap_err();
    assert!(matches!(&err, ConfigError::Field { field, .. } if field == "samples.seed"), "{err}");
    let ok = with_bivector(r#"{ "1,2": "x3" }"#, r#"{ "count": 0 }"#);
    assert!(RunConfig::from_json(&ok, "t").is_ok());
}

#[test]
fn unknown_key_reports_its_line() {
    let text = "{\n  \"manifold\": { \"dim\": 1, \"bounds\": [[0, 1]], \"bivector\": {} },\n  \"stepz\": 3\n}";
    match RunConfig::from_json(text, "t.json") {
        Err(ConfigError::Syntax { line, message, .. }) => {
            assert_eq!(line, 3);
            assert!(message.contains("stepz"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn bad_expression_names_the_slot() {
    let text = with_bivector(r#"{ "1,2": "x3 +" }"#, r#"{ "count": 0 }"#);
    let err = RunConfig::from_json(&text, "t").unwrap_err().to_string();
    assert!(err.contains("\"1,2\""), "{err}");
    let text = with_bivector(r#"{ "1,2": "x4" }"#, r#"{ "count": 0 }"#);
    assert!(RunConfig::from_json(&text, "t").is_err());
}

#[test]
fn nonpoisson_residual_is_one() {
    let cfg = builtin("nonpoisson_x2").unwrap();
    let r = run_command(Command::CheckJacobi, &cfg).unwrap();
    assert!(!r.passed);
    let j = r.records.iter().find(|x| x.name == "jacobiator").unwrap();
    assert!((j.residual.unwrap() - 1.0).abs() <= 1e-9);
    assert_eq!(j.samples, 100);
}

#[test]
fn report_round_trips() {
    let cfg = builtin("so3star").unwrap();
    let r = run_command(Command::DualPair, &cfg).unwrap();
    let text = r.to_json();
    let back: Report = serde_json::from_str(&text).unwrap();
    assert_eq!(back.to_json(), text);
    assert_eq!(back.records, r.records);
}

#[test]
fn reports_are_deterministic() {
    let cfg = builtin("so3star").unwrap();
    let mut a = run_command(Command::NormalForm, &cfg).unwrap();
    let mut b = run_command(Command::NormalForm, &cfg).unwrap();
    a.timing.wall_clock_s = 0.0;
    b.timing.wall_clock_s = 0.0;
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn digest_ignores_output_paths() {
    let a = builtin("so3star").unwrap();
    let mut b = a.clone();
    b.output.report = Some("elsewhere.json".into());
    assert_eq!(pnf_cli::report::config_digest(&a), pnf_cli::report::config_digest(&b));
    b.samples.seed = Some(99);
    assert_ne!(pnf_cli::report::config_digest(&a), pnf_cli::report::config_digest(&b));
}

#[test]
fn command_names_parse() {
    for c in Command::ALL {
        assert_eq!(c.as_str().parse::<Command>().unwrap(), c);
    }
    assert!("realise".parse::<Command>().is_err());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let st = Proc::new(PNF)
        .args(["check-jacobi", "builtin:so3star", "--out"])
        .arg(&out)
        .arg("--csv")
        .arg(&csv)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let report: Report = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(report.passed && report.command == "check-jacobi");
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().next(), Some("suite,check,sample,value,point"));
    assert_eq!(rows.lines().count(), 51);

    let st = Proc::new(PNF).args(["check-jacobi", "builtin:nonpoisson_x2", "--out"]).arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(1));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, with_bivector(r#"{ "1,1": "1" }"#, r#"{ "count": 0 }"#)).unwrap();
    let st = Proc::new(PNF).arg("check-jacobi").arg(&bad).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let st = Proc::new(PNF).args(["check-jacobi", "/nonexistent/cfg.json"]).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let st = Proc::new(PNF).args(["frobnicate", "builtin:so3star"]).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let st = Proc::new(PNF).args(["split", "builtin:nonpoisson_x2"]).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let st = Proc::new(PNF)
        .args(["check-jacobi", "builtin:so3star", "--out"])
        .arg(&out)
        .env("PNF_THREADS", "zero")
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
    let st = Proc::new(PNF)
        .args(["check-jacobi", "builtin:so3star", "--out"])
        .arg(&out)
        .env("PNF_THREADS", "1")
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let st = Proc::new(PNF)
        .args(["check-jacobi", "builtin:nonpoisson_x2", "--tol", "2", "--seed", "42", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let report: Report = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report.records[0].tolerance, 2.0);
    let mut cfg = builtin("nonpoisson_x2").unwrap();
    cfg.samples.seed = Some(42);
    cfg.tolerances.insert("jacobiator".into(), 2.0);
    assert_eq!(report.config_digest, pnf_cli::report::config_digest(&cfg));
}
