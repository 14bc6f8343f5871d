//! Training runs, baseline runs and parameter sweeps, each writing a run
//! directory of CSV metrics, checkpoints and a JSON summary.

use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ddpg::{
    record_trajectory, stream_rng, EpisodeAccumulator, EpisodeStats, StepRecord, Trainer, ARRIVAL_STREAM,
    BASELINE_STREAM, EVAL_ARRIVAL_STREAM,
};
use crate::env::TrafficEnv;
use crate::error::{Error, Result};
use crate::experiment::baseline::{BaselineController, BaselinePolicy};
use crate::experiment::config::ExperimentConfig;
use crate::traffic::TrajectoryRow;

pub const METRICS_FILE: &str = "metrics.csv";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_FILE: &str = "sweep.csv";

/// Streaming writer for per-(episode, step, agent) rows.
pub struct MetricsWriter {
    path: PathBuf,
    inner: csv::Writer<fs::File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let inner = csv::Writer::from_path(path).map_err(|e| Error::Metrics(format!("{}: {e}", path.display())))?;
        Ok(MetricsWriter {
            path: path.to_path_buf(),
            inner,
        })
    }

    pub fn write(&mut self, row: &StepRecord) -> Result<()> {
        Ok(self.inner.serialize(row)?)
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<StepRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Metrics(format!("{}: {e}", path.display())))?;
    let rows = reader.deserialize().collect::<std::result::Result<Vec<StepRecord>, _>>()?;
    Ok(rows)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Metrics(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EpisodeRow {
    episode: usize,
    group_utility: f64,
    mean_congestion: f64,
    mean_return: f64,
    saturation: f64,
}

fn episode_rows(stats: &[EpisodeStats]) -> Vec<EpisodeRow> {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    stats
        .iter()
        .map(|s| EpisodeRow {
            episode: s.episode,
            group_utility: s.group_utility,
            mean_congestion: mean(&s.congestion),
            mean_return: mean(&s.returns),
            saturation: s.saturation,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub policy: String,
    pub final_group_utility: f64,
    pub eval_group_utility: Option<f64>,
    /// Learned minus baseline; positive means the learners did better.
    pub delta_final: f64,
    pub delta_eval: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    /// `ddpg` or the baseline policy string.
    pub controller: String,
    pub seed: u64,
    pub agents: usize,
    pub influence_mode: String,
    pub selfish_index: f64,
    pub episodes: usize,
    pub steps: usize,
    pub observation_dims: Vec<usize>,
    /// Mean per-step group utility of every training episode.
    pub episode_group_utility: Vec<f64>,
    /// Number of trailing episodes averaged for the `final_*` fields.
    pub final_window: usize,
    pub final_group_utility: f64,
    pub per_agent_congestion: Vec<f64>,
    pub saturation: f64,
    pub eval_episodes: usize,
    pub eval_group_utility: Option<f64>,
    pub baselines: Vec<BaselineComparison>,
}

impl RunSummary {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(SUMMARY_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(SUMMARY_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&path, e))
    }
}

/// Trailing 10% of episodes, at least one.
pub fn final_window(episodes: usize) -> usize {
    episodes.div_ceil(10).max(1)
}

fn summarize(cfg: &ExperimentConfig, controller: String, dims: Vec<usize>, stats: &[EpisodeStats]) -> RunSummary {
    let window = final_window(stats.len()).min(stats.len());
    let tail = &stats[stats.len() - window..];
    let n = window.max(1) as f64;
    let agents = dims.len();
    let mut congestion = vec![0.0; agents];
    for s in tail {
        for (c, v) in congestion.iter_mut().zip(&s.congestion) {
            *c += v / n;
        }
    }
    RunSummary {
        name: cfg.name.clone(),
        controller,
        seed: cfg.seed,
        agents,
        influence_mode: cfg.influence_mode.to_string(),
        selfish_index: cfg.selfish_index,
        episodes: cfg.episodes,
        steps: cfg.steps,
        observation_dims: dims,
        episode_group_utility: stats.iter().map(|s| s.group_utility).collect(),
        final_window: window,
        final_group_utility: tail.iter().map(|s| s.group_utility).sum::<f64>() / n,
        per_agent_congestion: congestion,
        saturation: tail.iter().map(|s| s.saturation).sum::<f64>() / n,
        eval_episodes: 0,
        eval_group_utility: None,
        baselines: Vec::new(),
    }
}

fn mean_utility(stats: &[EpisodeStats]) -> Option<f64> {
    (!stats.is_empty()).then(|| stats.iter().map(|s| s.group_utility).sum::<f64>() / stats.len() as f64)
}

fn build_env(cfg: &ExperimentConfig, rng: ChaCha8Rng) -> Result<TrafficEnv> {
    let topo = cfg.topology()?;
    let graph = cfg.influence_graph(&topo)?;
    let weights = cfg.social_weights(&topo)?;
    Ok(TrafficEnv::new(topo, graph, weights, cfg.queue_normalizer, rng))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn save_networks(trainer: &Trainer, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    for (j, agent) in trainer.agents().iter().enumerate() {
        agent.actor.save(&dir.join(format!("agent{j}_actor.json")))?;
        agent.critic.save(&dir.join(format!("agent{j}_critic.json")))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: RunSummary,
}

/// Train into `cfg.run_dir()`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    run_experiment_in(cfg, &cfg.run_dir())
}

/// Train, evaluate greedily, run the configured baselines, and write
/// everything under `dir`.
pub fn run_experiment_in(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    create_dir(dir)?;
    cfg.write_resolved(dir)?;

    let env = build_env(cfg, stream_rng(cfg.seed, ARRIVAL_STREAM))?;
    let dims = (0..env.agents()).map(|j| env.graph().observation_dim(j)).collect();
    let mut trainer = Trainer::new(env, &cfg.learner, cfg.seed)?;

    let mut metrics = MetricsWriter::create(&dir.join(METRICS_FILE))?;
    let mut stats = Vec::with_capacity(cfg.episodes);
    let mut trajectory = Vec::new();
    for ep in 0..cfg.episodes {
        let last = ep + 1 == cfg.episodes;
        let s = trainer.run_episode_traced(
            ep,
            cfg.steps,
            &mut |r| metrics.write(r),
            last.then_some(&mut trajectory),
        )?;
        stats.push(s);
        if cfg.checkpoint_every > 0 && (ep + 1) % cfg.checkpoint_every == 0 {
            save_networks(&trainer, &dir.join("checkpoints").join(format!("episode{:05}", ep + 1)))?;
        }
    }
    metrics.finish()?;
    save_networks(&trainer, &dir.join("checkpoints").join("final"))?;
    write_rows(&dir.join(EPISODES_FILE), &episode_rows(&stats))?;
    write_rows(&dir.join(TRAJECTORY_FILE), &trajectory)?;

    trainer.env_mut().replace_rng(stream_rng(cfg.seed, EVAL_ARRIVAL_STREAM));
    let mut eval = Vec::with_capacity(cfg.eval_episodes);
    let mut eval_traj = Vec::new();
    for e in 0..cfg.eval_episodes {
        eval.push(trainer.evaluate_traced(e, cfg.steps, (e == 0).then_some(&mut eval_traj))?);
    }
    if !eval.is_empty() {
        write_rows(&dir.join("eval_trajectory.csv"), &eval_traj)?;
    }

    let mut summary = summarize(cfg, "ddpg".into(), dims, &stats);
    summary.eval_episodes = eval.len();
    summary.eval_group_utility = mean_utility(&eval);

    for policy in &cfg.baselines {
        let b = run_baseline_in(cfg, *policy, &dir.join("baselines").join(policy.slug()))?;
        summary.baselines.push(BaselineComparison {
            policy: policy.to_string(),
            final_group_utility: b.summary.final_group_utility,
            eval_group_utility: b.summary.eval_group_utility,
            delta_final: summary.final_group_utility - b.summary.final_group_utility,
            delta_eval: summary.eval_group_utility.zip(b.summary.eval_group_utility).map(|(a, b)| a - b),
        });
    }
    summary.save(dir)?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        summary,
    })
}

/// Roll out a baseline policy; arrivals come from `arrival_rng`.
pub fn baseline_rollout(
    env: &mut TrafficEnv,
    controller: &mut BaselineController,
    policy_rng: &mut ChaCha8Rng,
    episode: usize,
    steps: usize,
    sink: &mut dyn FnMut(&StepRecord) -> Result<()>,
    mut trajectory: Option<&mut Vec<TrajectoryRow>>,
) -> Result<EpisodeStats> {
    env.reset();
    controller.reset();
    let mut acc = EpisodeAccumulator::new(env.agents());
    for step in 0..steps {
        let actions = controller.act(policy_rng);
        let outcome = env.step(&actions)?;
        acc.add(&outcome);
        if let Some(rows) = trajectory.as_deref_mut() {
            record_trajectory(rows, step as u64, &actions, &outcome);
        }
        for j in 0..env.agents() {
            sink(&StepRecord {
                episode,
                step,
                agent: j,
                reward: outcome.rewards[j],
                adjusted_reward: outcome.adjusted_rewards[j],
                group_utility: outcome.group_utility,
                critic_loss: None,
                actor_objective: None,
                noise: 0.0,
            })?;
        }
    }
    Ok(acc.finish(episode))
}

/// Baseline run next to the config's run directory.
pub fn run_baseline(cfg: &ExperimentConfig, policy: BaselinePolicy) -> Result<RunOutcome> {
    let dir = cfg.output_root().join(format!("{}_baseline_{}", cfg.name, policy.slug()));
    run_baseline_in(cfg, policy, &dir)
}

/// Same episode budget and arrival streams as training, same metrics files.
pub fn run_baseline_in(cfg: &ExperimentConfig, policy: BaselinePolicy, dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    policy.check().map_err(|reason| Error::InvalidConfig {
        key: "policy".into(),
        reason,
    })?;
    create_dir(dir)?;
    cfg.write_resolved(dir)?;

    let mut env = build_env(cfg, stream_rng(cfg.seed, ARRIVAL_STREAM))?;
    let dims = (0..env.agents()).map(|j| env.graph().observation_dim(j)).collect();
    let mut controller = policy.controller(env.agents());
    let mut policy_rng = stream_rng(cfg.seed, BASELINE_STREAM);

    let mut metrics = MetricsWriter::create(&dir.join(METRICS_FILE))?;
    let mut stats = Vec::with_capacity(cfg.episodes);
    let mut trajectory = Vec::new();
    for ep in 0..cfg.episodes {
        let last = ep + 1 == cfg.episodes;
        stats.push(baseline_rollout(
            &mut env,
            &mut controller,
            &mut policy_rng,
            ep,
            cfg.steps,
            &mut |r| metrics.write(r),
            last.then_some(&mut trajectory),
        )?);
    }
    metrics.finish()?;
    write_rows(&dir.join(EPISODES_FILE), &episode_rows(&stats))?;
    write_rows(&dir.join(TRAJECTORY_FILE), &trajectory)?;

    let eval = evaluate_baseline(cfg, policy)?;
    let mut summary = summarize(cfg, policy.to_string(), dims, &stats);
    summary.eval_episodes = eval.len();
    summary.eval_group_utility = mean_utility(&eval);
    summary.save(dir)?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        summary,
    })
}

/// Baseline over `eval_episodes` on the evaluation arrival stream.
pub fn evaluate_baseline(cfg: &ExperimentConfig, policy: BaselinePolicy) -> Result<Vec<EpisodeStats>> {
    let mut env = build_env(cfg, stream_rng(cfg.seed, EVAL_ARRIVAL_STREAM))?;
    let mut controller = policy.controller(env.agents());
    let mut policy_rng = stream_rng(cfg.seed, BASELINE_STREAM);
    (0..cfg.eval_episodes)
        .map(|e| baseline_rollout(&mut env, &mut controller, &mut policy_rng, e, cfg.steps, &mut |_| Ok(()), None))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub key: String,
    pub value: String,
    pub run: String,
    pub final_group_utility: f64,
    pub eval_group_utility: Option<f64>,
    pub mean_congestion: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub dir: PathBuf,
    pub rows: Vec<SweepRow>,
}

/// One training run per value of the dotted `key`, run in parallel, each in
/// its own sub-directory of the config's run directory.
pub fn run_sweep(cfg: &ExperimentConfig, key: &str, values: &[String]) -> Result<SweepOutcome> {
    let dir = cfg.run_dir();
    run_sweep_in(cfg, key, values, &dir)
}

pub fn run_sweep_in(cfg: &ExperimentConfig, key: &str, values: &[String], dir: &Path) -> Result<SweepOutcome> {
    if values.is_empty() {
        return Err(Error::InvalidConfig {
            key: "values".into(),
            reason: "sweep needs at least one value".into(),
        });
    }
    let configs = values
        .iter()
        .map(|v| {
            let mut c = cfg.with_override(key, v)?;
            c.name = format!("{key}={v}");
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    create_dir(dir)?;
    cfg.write_resolved(dir)?;

    let outcomes: Vec<Result<RunOutcome>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| {
                let sub = dir.join(&c.name);
                s.spawn(move || run_experiment_in(c, &sub))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });

    let mut rows = Vec::with_capacity(values.len());
    for (v, outcome) in values.iter().zip(outcomes) {
        let o = outcome?;
        let c = &o.summary.per_agent_congestion;
        rows.push(SweepRow {
            key: key.to_string(),
            value: v.clone(),
            run: o.dir.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            final_group_utility: o.summary.final_group_utility,
            eval_group_utility: o.summary.eval_group_utility,
            mean_congestion: c.iter().sum::<f64>() / c.len().max(1) as f64,
        });
    }
    write_rows(&dir.join(SWEEP_FILE), &rows)?;
    Ok(SweepOutcome {
        dir: dir.to_path_buf(),
        rows,
    })
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Metrics(format!("{}: {e}", path.display())))?;
    Ok(reader.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?)
}
