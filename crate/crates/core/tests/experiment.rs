use std::fs;
use std::path::Path;
use std::process::Command;

use proptest::prelude::*;
use spatial_traffic::experiment::{
    run_baseline_in, run_experiment_in, run_sweep_in, BaselinePolicy, ExperimentConfig, RunSummary,
    OUTPUT_ROOT_ENV,
};
use spatial_traffic::influence::InfluenceMode;
use spatial_traffic::Error;

fn tiny(rows: usize, cols: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.topology.rows = rows;
    c.topology.cols = cols;
    c.influence_mode = InfluenceMode::FullyConnected;
    c.selfish_index = 1.0;
    c.episodes = 3;
    c.steps = 20;
    c.learner.batch_size = 8;
    c.learner.hidden_layers = vec![8];
    c.eval_episodes = 2;
    c
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn run_directory_layout_and_row_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(2, 2);
    cfg.checkpoint_every = 2;
    cfg.influence_center = Some([0, 0]);
    cfg.baselines = vec![BaselinePolicy::Random(0.5)];
    let out = run_experiment_in(&cfg, tmp.path()).unwrap();

    let metrics = read(tmp.path(), "metrics.csv");
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "episode,step,agent,reward,adjusted_reward,group_utility,critic_loss,actor_objective,noise"
    );
    assert_eq!(lines.count(), cfg.episodes * cfg.steps * 4);
    assert_eq!(read(tmp.path(), "trajectory.csv").lines().count(), 1 + cfg.steps * 4);
    for f in ["config.resolved.json", "summary.json", "episodes.csv", "eval_trajectory.csv"] {
        assert!(tmp.path().join(f).is_file(), "{f}");
    }
    assert!(tmp.path().join("checkpoints/episode00002/agent3_actor.json").is_file());
    assert!(tmp.path().join("checkpoints/final/agent0_critic.json").is_file());
    assert!(tmp.path().join("baselines/random-0.5/metrics.csv").is_file());

    let summary = RunSummary::load(tmp.path()).unwrap();
    assert_eq!(summary, out.summary);
    assert_eq!(summary.observation_dims, vec![10, 10, 10, 10]);
    assert_eq!(summary.baselines.len(), 1);
    assert_eq!(summary.episode_group_utility.len(), 3);

    let echoed: ExperimentConfig = serde_json::from_str(&read(tmp.path(), "config.resolved.json")).unwrap();
    assert_eq!(echoed, cfg.resolved());
}

#[test]
fn checkpoints_reload() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(1, 1);
    run_experiment_in(&cfg, tmp.path()).unwrap();
    let net = spatial_traffic::nn::Mlp::load(&tmp.path().join("checkpoints/final/agent0_actor.json")).unwrap();
    assert_eq!(net.layer_sizes(), vec![8, 8, 1]);
}

#[test]
fn baseline_metrics_share_the_training_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(1, 2);
    run_baseline_in(&cfg, "fixed:3".parse().unwrap(), tmp.path()).unwrap();
    let metrics = read(tmp.path(), "metrics.csv");
    assert!(metrics.starts_with("episode,step,agent,reward,adjusted_reward,group_utility,"));
    assert_eq!(metrics.lines().count(), 1 + 3 * 20 * 2);
}

#[test]
fn sweep_writes_one_run_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(1, 2);
    let values: Vec<String> = ["0", "0.5", "1"].iter().map(|s| s.to_string()).collect();
    let out = run_sweep_in(&cfg, "selfish_index", &values, tmp.path()).unwrap();
    assert_eq!(out.rows.len(), 3);
    for v in &values {
        let sub = tmp.path().join(format!("selfish_index={v}"));
        let echoed: ExperimentConfig = serde_json::from_str(&read(&sub, "config.resolved.json")).unwrap();
        assert_eq!(echoed.selfish_index, v.parse::<f64>().unwrap());
    }
    assert_eq!(read(tmp.path(), "sweep.csv").lines().count(), 4);
    assert!(matches!(
        run_sweep_in(&cfg, "selfish_index", &["-1".to_string()], tmp.path()),
        Err(Error::InvalidConfig { .. })
    ));
}

#[test]
fn plots_from_runs_and_sweeps() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(1, 2);
    let a = tmp.path().join("a");
    run_experiment_in(&cfg, &a).unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    fs::write(empty.join("metrics.csv"), "episode,step,agent,reward,adjusted_reward,group_utility,critic_loss,actor_objective,noise\n").unwrap();

    let written = spatial_traffic::experiment::emit_plots(&[a.clone()], &tmp.path().join("plots")).unwrap();
    assert!(written.iter().any(|p| p.ends_with("learning_curves.svg")));
    for p in &written {
        assert!(read(p.parent().unwrap(), p.file_name().unwrap().to_str().unwrap()).starts_with("<svg"));
    }
    let err = spatial_traffic::experiment::emit_plots(&[empty], &tmp.path().join("p2")).unwrap_err();
    assert!(err.to_string().contains("no rows"), "{err}");
}

fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
    (
        1usize..4,
        1usize..4,
        0.0f64..2.0,
        prop::sample::select(InfluenceMode::ALL.to_vec()),
        any::<u64>(),
        1usize..50,
        prop::collection::vec(1usize..64, 0..3),
        0.0f64..1.0,
    )
        .prop_map(|(rows, cols, selfish, mode, seed, episodes, hidden, gamma)| {
            let mut c = ExperimentConfig::default();
            c.topology.rows = rows;
            c.topology.cols = cols;
            c.selfish_index = selfish;
            c.influence_mode = mode;
            c.seed = seed;
            c.episodes = episodes;
            c.learner.hidden_layers = hidden;
            c.learner.gamma = gamma;
            c
        })
}

proptest! {
    #[test]
    fn config_json_round_trip(cfg in arb_config()) {
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        let resolved = serde_json::to_string(&cfg.resolved()).unwrap();
        prop_assert_eq!(ExperimentConfig::from_json_str(&resolved).unwrap(), cfg.resolved());
    }
}

fn trafficlab(args: &[&str], root: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_trafficlab"))
        .args(args)
        .env(OUTPUT_ROOT_ENV, root)
        .output()
        .unwrap()
}

#[test]
fn cli_exit_codes_and_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("c.json");
    fs::write(&cfg_path, r#"{"name": "cli", "episodes": 1, "steps": 10}"#).unwrap();
    let root = tmp.path().join("root");

    let ok = trafficlab(&["train", cfg_path.to_str().unwrap()], &root);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(root.join("cli/metrics.csv").is_file());

    let preset = trafficlab(&["baseline", "smoke", "--policy", "fixed:2"], &root);
    assert!(preset.status.success(), "{}", String::from_utf8_lossy(&preset.stderr));
    assert!(root.join("smoke_baseline_fixed-2/metrics.csv").is_file());

    let base = trafficlab(&["baseline", cfg_path.to_str().unwrap(), "--policy", "always"], &root);
    assert!(base.status.success());
    assert!(root.join("cli_baseline_always/metrics.csv").is_file());

    fs::write(&cfg_path, r#"{"selfish_index": -1}"#).unwrap();
    let bad = trafficlab(&["train", cfg_path.to_str().unwrap()], &root);
    assert_eq!(bad.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&bad.stderr);
    assert!(stderr.contains("[config]") && stderr.contains("selfish_index"), "{stderr}");

    fs::write(&cfg_path, "{ \"seed\": }").unwrap();
    assert_eq!(trafficlab(&["train", cfg_path.to_str().unwrap()], &root).status.code(), Some(2));
    assert_eq!(trafficlab(&["train", "/nonexistent/cfg.json"], &root).status.code(), Some(3));
    assert_eq!(trafficlab(&["plot", tmp.path().join("nope").to_str().unwrap()], &root).status.code(), Some(3));

    let eq = trafficlab(&["equilibrium", "--c", "1", "--d", "4", "--pmax", "4"], &root);
    assert!(eq.status.success());
    assert!(root.join("equilibrium/frontier.csv").is_file());
    assert!(String::from_utf8_lossy(&eq.stdout).contains("0 of"));
}
