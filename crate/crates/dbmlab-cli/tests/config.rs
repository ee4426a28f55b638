use dbmlab_cli::{io_roundtrip, CliError, ExperimentConfig, Kind};

const MINIMAL: &str = r#"
version = 1
kind = "freeconv"
n = 100
replicas = 1
seed = 1

[potential]
type = "quantiles"

[potential.density]
law = "uniform"
a = -1.0
b = 1.0

[times]
t = 0.25
"#;

#[test]
fn every_example_roundtrips_and_validates() {
    for kind in Kind::ALL {
        let cfg = ExperimentConfig::example(kind);
        assert_eq!(io_roundtrip(&cfg).unwrap(), cfg, "{}", kind.name());
        assert!(cfg.validate().is_empty(), "{}: {:?}", kind.name(), cfg.validate());
    }
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for kind in Kind::ALL {
        let text = std::fs::read_to_string(dir.join(format!("{}.toml", kind.name()))).unwrap();
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.kind, kind);
        assert!(cfg.validate().is_empty());
    }
}

#[test]
fn minimal_config_parses() {
    let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
    assert_eq!(cfg.n, 100);
    assert_eq!(cfg.times.t, Some(0.25));
}

#[test]
fn unknown_fields_are_rejected() {
    let text = MINIMAL.replace("seed = 1", "seed = 1\ncolour = \"red\"");
    assert!(matches!(ExperimentConfig::from_toml(&text), Err(CliError::Parse(_))));
    let text = MINIMAL.replace("t = 0.25", "t = 0.25\ntee = 1.0");
    assert!(matches!(ExperimentConfig::from_toml(&text), Err(CliError::Parse(_))));
}

#[test]
fn all_missing_fields_are_listed() {
    let text = MINIMAL.replace("n = 100\n", "").replace("seed = 1\n", "");
    match ExperimentConfig::from_toml(&text) {
        Err(CliError::Missing(m)) => assert_eq!(m, vec!["n".to_string(), "seed".to_string()]),
        other => panic!("expected missing-field error, got {other:?}"),
    }
}

#[test]
fn malformed_numbers_are_rejected() {
    for bad in ["n = -5", "n = 1.5", "n = \"many\"", "seed = 1e400"] {
        let field = if bad.starts_with("seed") { "seed = 1" } else { "n = 100" };
        let text = MINIMAL.replace(field, bad);
        assert!(ExperimentConfig::from_toml(&text).is_err(), "{bad}");
    }
}

#[test]
fn wrong_version_is_rejected() {
    let text = MINIMAL.replace("version = 1", "version = 7");
    assert!(ExperimentConfig::from_toml(&text).is_err());
}

#[test]
fn homogenization_exponents_are_checked() {
    let mut cfg = ExperimentConfig::example(Kind::Homog);
    cfg.times.omega1 = Some(0.4);
    let bad = cfg.validate();
    assert!(bad.iter().any(|v| v.field == "times" && v.message.contains("omega0/2")), "{bad:?}");
    cfg.times.omega1 = None;
    assert!(!cfg.validate().is_empty());
}

#[test]
fn other_violations_are_reported_together() {
    let mut cfg = ExperimentConfig::example(Kind::Meso);
    cfg.n = 1;
    cfg.replicas = 10;
    cfg.times.t = Some(-1.0);
    let fields: Vec<&str> = cfg.validate().iter().map(|v| v.field).collect();
    for f in ["n", "replicas", "times.t"] {
        assert!(fields.contains(&f), "{f} missing from {fields:?}");
    }
    let mut beta = ExperimentConfig::example(Kind::Beta);
    beta.stats.beta = Some(0.5);
    assert!(beta.validate().iter().any(|v| v.field == "stats.beta"));
}

#[test]
fn hash_ignores_output_directory_only() {
    let a = ExperimentConfig::example(Kind::Simulate);
    let mut b = a.clone();
    b.out = Some("elsewhere".into());
    assert_eq!(a.hash(), b.hash());
    b.seed += 1;
    assert_ne!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
}
