use std::path::Path;

use safeshield::config::EnvId;
use safeshield::{BenchError, ExperimentConfig};
use safeshield_core::safeguard::{CenterSource, MapKind, SafeguardKind};

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

const BASE: &str = r#"
seeds = [0, 1]

[env]
id = "pendulum"

[safe_set]
file = "pendulum_safe_set.json"

[train]
total_steps = 4096

[[variants]]
name = "unsafe"
safeguard = "none"
"#;

fn resolve(text: &str) -> Result<safeshield::Experiment, BenchError> {
    ExperimentConfig::parse(text, false)?.resolve(configs())
}

fn config_error(text: &str) -> String {
    match resolve(text) {
        Err(BenchError::Config(m)) => m,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn shipped_configs_load() {
    for name in ["pendulum.toml", "quadrotor.toml", "acceptance_pendulum.toml"] {
        let exp = ExperimentConfig::load(&configs().join(name)).unwrap();
        assert!(!exp.variants.is_empty(), "{name}");
        assert!(
            exp.out_dir.is_absolute() || exp.out_dir.starts_with(configs()),
            "{name}"
        );
    }
    let exp = ExperimentConfig::load(&configs().join("pendulum.toml")).unwrap();
    assert_eq!(exp.env_id, EnvId::Pendulum);
    assert_eq!(exp.seeds, vec![0, 1, 2, 3, 4]);
    assert_eq!(exp.train_config(4).seed, 4);
    assert_eq!(exp.train_config(4).total_steps, 100_000);
    assert_eq!(
        exp.variant("bp+reg").unwrap().kind,
        SafeguardKind::BoundaryProjection { regularization: 0.1 }
    );
    match exp.variant("rm-hyperbolic").unwrap().kind {
        SafeguardKind::RayMask(c) => {
            assert_eq!(c.map_kind, MapKind::Hyperbolic);
            assert_eq!(c.center_source, CenterSource::Zonotopic { n_dirs: 2 });
        }
        other => panic!("{other:?}"),
    }
    let q = ExperimentConfig::load(&configs().join("quadrotor.toml")).unwrap();
    assert_eq!(q.safe_states.dim(), 8);
    assert_eq!(q.safe_states.num_generators(), 8);
}

#[test]
fn json_configs_with_inline_sets_load() {
    let text = r#"{
        "seeds": [3],
        "env": {"id": "pendulum", "noise": 0.05},
        "safe_set": {"center": [0, 0], "generators": [[0.1, 0], [0, 0.5]]},
        "variants": [{"name": "rm", "safeguard": "ray_mask", "center_source": "explicit"}]
    }"#;
    let exp = ExperimentConfig::parse(text, true).unwrap().resolve(configs()).unwrap();
    assert_eq!(exp.safe_states.num_generators(), 2);
    assert_eq!(exp.build_env().unwrap().params().noise.half_widths()[1], 0.05);
}

#[test]
fn invalid_configs_are_config_errors() {
    assert!(config_error(&BASE.replace("seeds = [0, 1]", "seeds = []")).contains("seed"));
    let dup = format!("{BASE}\n[[variants]]\nname = \"unsafe\"\nsafeguard = \"none\"\n");
    assert!(config_error(&dup).contains("unique"));
    assert!(config_error(&BASE.replace("name = \"unsafe\"", "name = \"a b\"")).contains("may only use"));
    assert!(config_error(&BASE.replace("id = \"pendulum\"", "id = \"quadrotor\"")).contains("dimension"));
    assert!(!config_error(&BASE.replace("total_steps = 4096", "total_steps = 4096\nlearning_rate = 1")).is_empty());
    assert!(!config_error(&BASE.replace("id = \"pendulum\"", "id = \"cartpole\"")).is_empty());
    assert!(config_error(&BASE.replace("safeguard = \"none\"", "safeguard = \"none\"\nc_d = 0.5")).contains("c_d"));
    assert!(!config_error(&BASE.replace("total_steps = 4096", "batch = 0")).is_empty());
    assert!(!config_error(&BASE.replace("pendulum_safe_set.json", "missing.json")).is_empty());
    assert!(!config_error(&BASE.replace("[env]\nid = \"pendulum\"", "[env]\nid = \"pendulum\"\ndt = -1.0")).is_empty());
    let no_variants = BASE.split("[[variants]]").next().unwrap();
    assert!(!config_error(no_variants).is_empty());
    let bad_rm = BASE.replace("safeguard = \"none\"", "safeguard = \"ray_mask\"\nn_dirs = 0");
    assert!(!config_error(&bad_rm).is_empty());
}

#[test]
fn missing_config_file_is_a_config_error() {
    let err = ExperimentConfig::load(&configs().join("nope.toml")).unwrap_err();
    assert!(matches!(err, BenchError::Config(_)));
    assert_eq!(err.exit_code(), 2);
}
