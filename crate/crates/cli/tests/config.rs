use std::path::PathBuf;

use kbench_cli::config::Config;
use kbench_core::recon::ReconMethod;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn default_file_matches_built_in_defaults() {
    let cfg = Config::load(&configs_dir().join("default.toml")).unwrap();
    assert_eq!(cfg, Config::default());
}

#[test]
fn default_file_states_solver_iterations() {
    let text = std::fs::read_to_string(configs_dir().join("default.toml")).unwrap();
    let raw: toml::Table = toml::from_str(&text).unwrap();
    for m in ["zero_filled", "cg_sense", "cs_tv"] {
        let t = raw["recon"][m].as_table().unwrap();
        assert!(t.contains_key("max_iters") && t.contains_key("step_size"), "{m}");
    }
}

#[test]
fn smoke_file_parses() {
    let cfg = Config::load(&configs_dir().join("smoke.toml")).unwrap();
    assert_eq!(cfg.sim.n_cases, 4);
    assert_eq!(cfg.recon.config(ReconMethod::CsTv).max_iters, Some(30));
}

#[test]
fn partial_file_keeps_other_defaults() {
    let cfg = Config::parse("[sim]\nn_cases = 8\n").unwrap();
    assert_eq!(cfg.sim.n_cases, 8);
    assert_eq!(cfg.sim.width, Config::default().sim.width);
    assert_eq!(cfg.recon, Config::default().recon);
}

#[test]
fn round_trips_through_toml() {
    let cfg = Config::default();
    assert_eq!(Config::parse(&cfg.to_toml()).unwrap(), cfg);
}

#[test]
fn rejects_bad_files() {
    for text in [
        "[sim]\nn_case = 4\n",
        "[bogus]\n",
        "[recon.cs_tv]\nmethod = \"cg_sense\"\n",
        "[recon.cg_sense]\nmax_iters = 0\n",
        "[sim]\nwidth = 64\n",
        "[split]\ntraining = 0.9\n",
        "[sampling]\ncenter_fraction_r8 = 1.5\n",
        "[study]\nmulticoil_accel = 6\n",
        "[recon]\nmethods = []\n",
    ] {
        assert!(Config::parse(text).is_err(), "{text}");
    }
}

#[test]
fn hash_ignores_formatting() {
    let a = Config::parse("[run]\nseed = 7\n[sim]\nn_cases = 8\n").unwrap();
    let b = Config::parse("[sim]\nn_cases   = 8\n\n[run]\nseed = 7 # comment\n").unwrap();
    assert_eq!(a.sha256(), b.sha256());
    assert_ne!(a.sha256(), Config::default().sha256());
}

#[test]
fn redaction_hides_tokens() {
    let cfg = Config::parse("[eval]\nadmin_token = \"s3cret\"\n[eval.teams]\ntok-a = \"alpha\"\n").unwrap();
    let text = serde_json::to_string(&cfg.redacted()).unwrap();
    assert!(!text.contains("s3cret") && !text.contains("tok-a"));
    assert!(text.contains("alpha"));
}
