use pdbsde_cli::config::{parse_config, ConfigError, Exercise, GeneratorConfig, PayoffConfig};
use pdbsde_core::{FitMode, Flavor};

const MINIMAL: &str = r#"{
  "model": { "drift": 0.05, "vol": 0.2 },
  "grid": { "horizon": 0.25, "steps": 40 },
  "generator": { "kind": "funding", "lending": 0.01, "borrowing": 0.06 },
  "payoff": { "kind": "call_spread_max", "k1": 95, "k2": 115 },
  "basis": "eu7",
  "samples": { "reg": 1000, "outer": 10000, "inner": 100 }
}"#;

fn invalid_fields(text: &str) -> Vec<String> {
    match parse_config(text) {
        Err(ConfigError::Invalid(errs)) => errs.into_iter().map(|e| e.field).collect(),
        other => panic!("expected field errors, got {other:?}"),
    }
}

#[test]
fn defaults_fill_the_minimal_document() {
    let cfg = parse_config(MINIMAL).unwrap();
    assert_eq!(cfg.version, 1);
    assert_eq!(cfg.mode, FitMode::Lgw);
    assert!(cfg.cv.inner && cfg.cv.lower);
    assert_eq!(cfg.flavor(), Flavor::Convex);
    assert_eq!(cfg.model.dim, 5);
    assert_eq!(cfg.model.x0, 100.0);
    assert_eq!(cfg.payoff.exercise(), Exercise::European);
    assert_eq!(cfg.quadrature_nodes, 21);
    assert!(cfg.problem().is_ok());
}

#[test]
fn round_trips_through_json() {
    let cfg = parse_config(MINIMAL).unwrap();
    assert_eq!(parse_config(&cfg.to_json()).unwrap(), cfg);
}

#[test]
fn zero_outer_samples_are_rejected() {
    let text = MINIMAL.replace("\"outer\": 10000", "\"outer\": 0");
    assert_eq!(invalid_fields(&text), ["samples.outer"]);
}

#[test]
fn bermudan_needs_steps_divisible_by_four() {
    let text = MINIMAL
        .replace("\"steps\": 40", "\"steps\": 42")
        .replace("\"k2\": 115 }", "\"k2\": 115, \"exercise\": \"bermudan\" }")
        .replace("\"eu7\"", "\"bermudan6\"");
    assert_eq!(invalid_fields(&text), ["grid.steps"]);
    let ok = text.replace("\"steps\": 42", "\"steps\": 44");
    assert!(parse_config(&ok).is_ok());
}

#[test]
fn unknown_fields_report_their_position() {
    let text = MINIMAL.replace(
        "\"basis\": \"eu7\",",
        "\"basis\": \"eu7\",\n  \"bogus\": 1,",
    );
    match parse_config(&text) {
        Err(ConfigError::Parse {
            line,
            column,
            message,
        }) => {
            assert_eq!(line, 7, "{message}");
            assert!(column > 0);
            assert!(message.contains("bogus"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    let nested = MINIMAL.replace("\"vol\": 0.2", "\"vol\": 0.2, \"sigma\": 1");
    assert!(matches!(
        parse_config(&nested),
        Err(ConfigError::Parse { line: 2, .. })
    ));
}

#[test]
fn malformed_json_reports_line() {
    let text = MINIMAL.replace("\"inner\": 100", "\"inner\": ");
    match parse_config(&text) {
        Err(e @ ConfigError::Parse { .. }) => assert!(e.to_string().contains("line 7"), "{e}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn every_violation_is_listed() {
    let text = MINIMAL
        .replace("\"outer\": 10000", "\"outer\": 0")
        .replace("\"inner\": 100", "\"inner\": 0")
        .replace("\"borrowing\": 0.06", "\"borrowing\": 0.0")
        .replace("\"horizon\": 0.25", "\"horizon\": -1");
    let fields = invalid_fields(&text);
    for f in [
        "samples.outer",
        "samples.inner",
        "generator.borrowing",
        "grid.horizon",
    ] {
        assert!(fields.iter().any(|g| g == f), "{f} missing from {fields:?}");
    }
}

#[test]
fn wrong_version_and_incompatible_flavor_are_rejected() {
    let v2 = MINIMAL.replacen('{', "{ \"version\": 2,", 1);
    assert_eq!(invalid_fields(&v2), ["version"]);
    let concave = MINIMAL.replacen('{', "{ \"flavor\": \"concave\",", 1);
    assert_eq!(invalid_fields(&concave), ["flavor"]);
}

#[test]
fn credit_generator_parses_with_rate_default() {
    let text = r#"{
      "model": { "drift": 0.02, "vol": 0.2 },
      "grid": { "horizon": 1, "steps": 40 },
      "generator": { "kind": "credit", "recovery": 0.0, "v_high": 54, "v_low": 90,
                     "gamma_high": 0.2, "gamma_low": 0.02 },
      "payoff": { "kind": "min_asset" },
      "basis": "eu2",
      "samples": { "reg": 100, "outer": 10, "inner": 10 }
    }"#;
    let cfg = parse_config(text).unwrap();
    assert!(matches!(
        cfg.generator,
        GeneratorConfig::Credit { rate: None, .. }
    ));
    assert!(matches!(cfg.payoff, PayoffConfig::MinAsset { .. }));
    assert_eq!(cfg.flavor(), Flavor::Generic);
    let d = cfg.driver().unwrap();
    assert!((d.alpha_y() - 0.41).abs() < 1e-12);
}
