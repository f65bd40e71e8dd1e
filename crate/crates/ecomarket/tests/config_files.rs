use std::fs;

use ecomarket::config::ConfigError;
use ecomarket::{parse_config, Mode, Overrides, PopulationKind, RunConfig};

fn write(text: &str) -> tempfile::NamedTempFile {
    let f = tempfile::NamedTempFile::new().unwrap();
    fs::write(f.path(), text).unwrap();
    f
}

#[test]
fn empty_file_gives_defaults() {
    let f = write("");
    assert_eq!(parse_config(Some(f.path()), &Overrides::default()).unwrap(), RunConfig::default());
}

#[test]
fn single_agent_is_accepted() {
    let f = write("[sim]\nn_agents = 1\n");
    assert_eq!(parse_config(Some(f.path()), &Overrides::default()).unwrap().sim.n_agents, 1);
}

#[test]
fn negative_penalty_names_the_key() {
    let f = write("[sim.reward]\nbeta_short = -1.0\n");
    let err = parse_config(Some(f.path()), &Overrides::default()).unwrap_err();
    match &err {
        ConfigError::Invalid { key, .. } => assert_eq!(key, "sim.reward.beta_short"),
        other => panic!("unexpected {other}"),
    }
    assert!(err.to_string().contains("beta_short"));
}

#[test]
fn flags_win_over_the_file() {
    let f = write("seed = 3\nepisodes = 4\npopulation = \"fcn\"\n");
    let o = Overrides { mode: Some(Mode::Analyze), seed: Some(9), ..Overrides::default() };
    let cfg = parse_config(Some(f.path()), &o).unwrap();
    assert_eq!((cfg.mode, cfg.seed, cfg.episodes, cfg.population), (Mode::Analyze, 9, 4, PopulationKind::Fcn));
}

#[test]
fn missing_file_and_bad_toml_are_reported() {
    let missing = parse_config(Some("/nonexistent/run.toml".as_ref()), &Overrides::default()).unwrap_err();
    assert!(matches!(missing, ConfigError::Read { .. }));
    let f = write("seed = \"many\"\n");
    assert!(matches!(parse_config(Some(f.path()), &Overrides::default()), Err(ConfigError::Parse { .. })));
}
