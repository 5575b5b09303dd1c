use put_cli::config::{Config, ConstraintKind, PolicyKind, SourceKind};
use put_cli::{cmd_adversary, cmd_eval, cmd_geolife, cmd_synth_sweep, cmd_train, cmd_verify, find_plt_files, Run};
use put_core::belief::{belief_update, ActionKernel, Belief};
use put_core::geolife::{synthetic_user, SyntheticUser};
use put_core::source::TransitionMatrix;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn sample_dir() -> PathBuf {
    repo().join("data/geolife-sample")
}

fn tiny(mut cfg: Config) -> Config {
    cfg.train.horizon = 12;
    cfg.train.episodes = 3;
    cfg.train.hidden = 8;
    cfg.sweep.rollouts = 4;
    cfg.eval.rollouts = 4;
    cfg.adversary.rollouts = 10;
    cfg
}

fn run_in(dir: &Path, cfg: Config) -> Run {
    Run::new(cfg, "test".into(), None, dir.to_path_buf())
}

fn put() -> Command {
    Command::new(env!("CARGO_BIN_EXE_put"))
}

#[test]
fn bundled_sample_matches_generator() {
    let files = find_plt_files(&sample_dir()).unwrap();
    let generated = synthetic_user(&SyntheticUser::default()).unwrap();
    assert_eq!(files.len(), generated.len());
    for (name, body) in generated {
        let on_disk = fs::read_to_string(sample_dir().join("Trajectory").join(&name)).unwrap();
        assert!(on_disk == body, "{name} differs from the generator output");
    }
}

#[test]
fn reference_config_lists_the_defaults() {
    let text = fs::read_to_string(repo().join("configs/reference.toml")).unwrap();
    let mut parsed = Config::from_toml(&text).unwrap();
    parsed.geolife.input = Config::default().geolife.input;
    assert_eq!(parsed, Config::default());
}

#[test]
fn shipped_configs_parse() {
    for entry in fs::read_dir(repo().join("configs")).unwrap() {
        let p = entry.unwrap().path();
        Config::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn geolife_on_bundled_sample_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = Config::default();
    cfg.geolife.input = sample_dir();
    let s1 = cmd_geolife(&run_in(a.path(), cfg.clone())).unwrap();
    let s2 = cmd_geolife(&run_in(b.path(), cfg)).unwrap();
    assert_eq!(s1.clusters, 16);
    assert_eq!(s1, s2);
    for name in ["clusters.csv", "symbols.csv", "transition.csv", "distortion.csv", "init.csv", "summary.txt"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let t = fs::read_to_string(a.path().join("transition.csv")).unwrap();
    assert!(t.starts_with("# put "));
    assert_eq!(TransitionMatrix::from_csv(&t).unwrap().size(), 16);
}

#[test]
fn geolife_rejects_empty_input() {
    let empty = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let mut cfg = Config::default();
    cfg.geolife.input = empty.path().to_path_buf();
    let err = cmd_geolife(&run_in(out.path(), cfg)).unwrap_err();
    assert!(!put_cli::is_config_error(&err));
    assert!(err.to_string().contains("no parseable"));
}

fn reversed(b: &Belief, q: &TransitionMatrix, a: &ActionKernel, y: usize) -> put_core::Result<Belief> {
    let mut p = belief_update(b, q, a, y)?.probs().to_vec();
    p.reverse();
    Belief::new(p)
}

#[test]
fn verify_passes_and_catches_a_broken_update() {
    let good = cmd_verify(0, None).unwrap();
    assert!(good.all_passed(), "{}", good.to_text());
    for name in ["lemma1_pairwise_le_total", "lemma2_total_mi", "chain_rule", "belief_consistency", "leakage_single_step", "theorem2_order2_window"] {
        assert!(good.get(name).is_some(), "{name} missing from the report");
    }
    let bad = cmd_verify(0, Some(reversed)).unwrap();
    let names: Vec<&str> = bad.failures().iter().map(|c| c.name).collect();
    assert_eq!(names, vec!["belief_consistency"]);
}

#[test]
fn sweep_is_reproducible_and_pairs_myopic_rows() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = tiny(Config::default());
    cfg.train.target = 0.8;
    cfg.sweep.values = vec![0.5, 2.0];
    let s = cmd_synth_sweep(&run_in(a.path(), cfg.clone())).unwrap();
    assert!(s.failures.is_empty(), "{:?}", s.failures);
    let names: Vec<&str> = s.records.iter().map(|r| r.policy_name.as_str()).collect();
    assert_eq!(names, vec!["pdrp_q0", "myopic_q0", "pdrp_q0", "myopic_q0"]);
    for pair in s.records.chunks(2) {
        // myopic spends at most the trained policy's distortion
        assert!(pair[1].avg_distortion <= pair[0].avg_distortion + 1e-3);
    }
    cmd_synth_sweep(&run_in(b.path(), cfg)).unwrap();
    assert_eq!(fs::read(a.path().join("put.csv")).unwrap(), fs::read(b.path().join("put.csv")).unwrap());
    assert!(a.path().join("learning/q0_adc_1.csv").exists());
}

#[test]
fn instantaneous_sweep_over_three_chains() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(Config::default());
    cfg.train.episodes = 1;
    cfg.train.constraint = ConstraintKind::Idc;
    cfg.scenario.chains = vec![
        put_cli::config::ChainKind::Q0,
        put_cli::config::ChainKind::Q1,
        put_cli::config::ChainKind::Q2,
    ];
    cfg.sweep.values = vec![1.0, 2.0, 3.0, 4.0];
    let s = cmd_synth_sweep(&run_in(dir.path(), cfg)).unwrap();
    assert_eq!(s.records.len(), 12);
    assert!(s.records.iter().all(|r| r.constraint_mode == "IDC"));
    let csv = fs::read_to_string(dir.path().join("put.csv")).unwrap();
    assert_eq!(csv.lines().count(), 14);
}

#[test]
fn train_then_eval_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(Config::default());
    let trained = cmd_train(&run_in(dir.path(), cfg.clone())).unwrap();
    cfg.eval.checkpoint = Some(dir.path().join("q0/actor.ckpt"));
    let evaluated = cmd_eval(&run_in(dir.path(), cfg.clone())).unwrap();
    assert_eq!(trained.len(), 1);
    assert_eq!(trained[0].avg_leakage, evaluated[0].avg_leakage);

    cfg.eval.checkpoint = Some(dir.path().join("nope.ckpt"));
    let err = cmd_eval(&run_in(dir.path(), cfg)).unwrap_err();
    assert!(format!("{err:#}").contains("nope.ckpt"));
}

#[test]
fn adversary_report_shape() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(Config::default());
    cfg.train.target = 0.8;
    cfg.adversary.values = vec![0.5, 2.0];
    let rows = cmd_adversary(&run_in(dir.path(), cfg.clone())).unwrap();
    assert_eq!(rows.len(), 3 * 2);
    assert_eq!(rows[0].memories, vec![1, 5]);
    let csv = fs::read_to_string(dir.path().join("adversary.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("policy,constraint_km_or_steps,avg_leakage_nats,ce_m1,ce_m5"));

    cfg.adversary.policies = vec![PolicyKind::Pdrp];
    cfg.adversary.checkpoints = vec![dir.path().join("missing.ckpt")];
    let err = cmd_adversary(&run_in(dir.path(), cfg)).unwrap_err();
    assert!(format!("{err:#}").contains("missing.ckpt"));
}

#[test]
fn model_scenario_from_geolife_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(Config::default());
    cfg.geolife.input = sample_dir();
    cmd_geolife(&run_in(dir.path(), cfg.clone())).unwrap();
    cfg.scenario.source = SourceKind::Model;
    cfg.scenario.model_dir = Some(dir.path().to_path_buf());
    cfg.train.constraint = ConstraintKind::Idc;
    cfg.train.value = 3.0;
    let recs = cmd_train(&run_in(&dir.path().join("run"), cfg)).unwrap();
    assert_eq!(recs[0].policy_name, "pdrp_model");
    assert!(recs[0].avg_distortion <= 3.0 + 1e-9);
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[train]\nepisodez = 2\n").unwrap();
    let st = put().arg("--config").arg(&bad).arg("verify").status().unwrap();
    assert_eq!(st.code(), Some(2));

    let st = put().args(["--out"]).arg(dir.path()).arg("geolife").arg(dir.path().join("empty")).status().unwrap();
    assert_eq!(st.code(), Some(1));

    let st = put().arg("synth-sweep").arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(2), "empty sweep values is a config error");

    let st = put().arg("frobnicate").status().unwrap();
    assert_eq!(st.code(), Some(2));

    let out = put().arg("--seed").arg("4").arg("verify").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("belief_consistency"));
}
