//! Per-intersection DDPG learners and the multi-agent training loop.
//!
//! Every agent owns an actor, a critic, their target copies, a replay
//! buffer and an Ornstein–Uhlenbeck noise process. Critics score
//! `(observation, action)` for their own agent only; there is no centralized
//! critic and no parameter sharing.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{EnvStep, TrafficEnv};
use crate::error::{Error, Result};
use crate::nn::{apply_update, binarize, soft_update, Adam, Gradients, Mlp, OutputActivation};
use crate::traffic::{Action, TrajectoryRow};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_observation: Vec<f64>,
}

/// Fixed-capacity ring; the oldest transition is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(4096)),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// `n` distinct stored indices, uniformly at random.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if n > self.items.len() || n == 0 {
            return Err(Error::InsufficientSamples {
                have: self.items.len(),
                need: n.max(1),
            });
        }
        Ok(index::sample(rng, self.items.len(), n).into_vec())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Transition>> {
        Ok(self
            .sample_indices(n, rng)?
            .into_iter()
            .map(|i| self.items[i].clone())
            .collect())
    }
}

/// Discretized Ornstein–Uhlenbeck process
/// `x <- x + theta (mu - x) + sigma * N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuNoise {
    pub x: f64,
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl OuNoise {
    pub fn new(theta: f64, mu: f64, sigma: f64) -> Self {
        OuNoise { x: mu, theta, mu, sigma }
    }

    pub fn reset(&mut self) {
        self.x = self.mu;
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let shock: f64 = if self.sigma == 0.0 { 0.0 } else { rng.sample(StandardNormal) };
        self.x += self.theta * (self.mu - self.x) + self.sigma * shock;
        self.x
    }
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64, 32]
}

/// Learner hyperparameters shared by every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub ou_theta: f64,
    pub ou_mu: f64,
    pub ou_sigma: f64,
    /// Steepness `t` of the actor's output sigmoid.
    pub steepness: f64,
    #[serde(default = "default_hidden")]
    pub hidden_layers: Vec<usize>,
    /// Multiplier applied to rewards before they enter the replay buffer.
    pub reward_scale: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            gamma: 0.99,
            tau: 0.01,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            batch_size: 64,
            buffer_capacity: 100_000,
            ou_theta: 0.15,
            ou_mu: 0.0,
            ou_sigma: 0.3,
            steepness: 10.0,
            hidden_layers: default_hidden(),
            reward_scale: 1e-3,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| {
            Err(Error::InvalidConfig {
                key: format!("learner.{key}"),
                reason,
            })
        };
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma", format!("must lie in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau", format!("must lie in [0, 1], got {}", self.tau));
        }
        for (key, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(key, format!("must be positive, got {lr}"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive".into());
        }
        if self.buffer_capacity < self.batch_size {
            return bad(
                "buffer_capacity",
                format!("must be at least batch_size ({}), got {}", self.batch_size, self.buffer_capacity),
            );
        }
        if !(self.ou_theta >= 0.0 && self.ou_theta <= 1.0) {
            return bad("ou_theta", format!("must lie in [0, 1], got {}", self.ou_theta));
        }
        if !(self.ou_sigma >= 0.0 && self.ou_sigma.is_finite()) {
            return bad("ou_sigma", format!("must be >= 0, got {}", self.ou_sigma));
        }
        if !self.ou_mu.is_finite() {
            return bad("ou_mu", "must be finite".into());
        }
        if !(self.steepness > 0.0 && self.steepness.is_finite()) {
            return bad("steepness", format!("must be positive, got {}", self.steepness));
        }
        if self.hidden_layers.contains(&0) {
            return bad("hidden_layers", "layer widths must be positive".into());
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward_scale", format!("must be positive, got {}", self.reward_scale));
        }
        Ok(())
    }

    fn sizes(&self, input: usize) -> Vec<usize> {
        std::iter::once(input)
            .chain(self.hidden_layers.iter().copied())
            .chain(std::iter::once(1))
            .collect()
    }
}

/// Result of `select_action`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionChoice {
    pub action: Action,
    /// Actor output plus noise, clipped to [0, 1].
    pub raw: f64,
    pub actor_output: f64,
    pub noise: f64,
}

#[derive(Debug, Clone)]
pub struct AgentLearner {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    pub buffer: ReplayBuffer,
    pub noise: OuNoise,
    cfg: LearnerConfig,
    rng: ChaCha8Rng,
}

impl AgentLearner {
    pub fn new(obs_dim: usize, cfg: &LearnerConfig, mut rng: ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let actor = Mlp::new(
            &cfg.sizes(obs_dim),
            OutputActivation::SteepSigmoid {
                steepness: cfg.steepness,
            },
            &mut rng,
        )?;
        let critic = Mlp::new(&cfg.sizes(obs_dim + 1), OutputActivation::Linear, &mut rng)?;
        Ok(Self::from_networks(actor, critic, cfg, rng))
    }

    /// Targets start as exact copies of the online networks.
    pub fn from_networks(actor: Mlp, critic: Mlp, cfg: &LearnerConfig, rng: ChaCha8Rng) -> Self {
        AgentLearner {
            actor_opt: Adam::new(&actor),
            critic_opt: Adam::new(&critic),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            noise: OuNoise::new(cfg.ou_theta, cfg.ou_mu, cfg.ou_sigma),
            cfg: cfg.clone(),
            rng,
        }
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn select_action(&mut self, obs: &[f64], explore: bool) -> Result<ActionChoice> {
        let actor_output = self.actor.forward(obs)?[0];
        let noise = if explore { self.noise.sample(&mut self.rng) } else { 0.0 };
        let raw = (actor_output + noise).clamp(0.0, 1.0);
        Ok(ActionChoice {
            action: binarize(raw),
            raw,
            actor_output,
            noise,
        })
    }

    fn critic_input(obs: &[f64], action: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(obs.len() + 1);
        v.extend_from_slice(obs);
        v.push(action);
        v
    }

    /// `y = r + gamma * Q'(o', mu'(o'))`, no terminal masking.
    pub fn critic_target(&self, batch: &[Transition]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::InsufficientSamples { have: 0, need: 1 });
        }
        batch
            .iter()
            .map(|t| {
                let a = self.target_actor.forward(&t.next_observation)?[0];
                let q = self.target_critic.forward(&Self::critic_input(&t.next_observation, a))?[0];
                Ok(t.reward + self.cfg.gamma * q)
            })
            .collect()
    }

    /// One optimizer step on the mean squared TD error. Returns the loss
    /// measured before the step.
    pub fn update_critic(&mut self, batch: &[Transition]) -> Result<f64> {
        let targets = self.critic_target(batch)?;
        let n = batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.critic);
        let mut loss = 0.0;
        for (t, y) in batch.iter().zip(&targets) {
            let trace = self.critic.trace(&Self::critic_input(&t.observation, t.action.as_f64()))?;
            let residual = y - trace.output()[0];
            loss += residual * residual / n;
            self.critic.backward_into(&trace, &[-2.0 * residual / n], &mut grads)?;
        }
        apply_update(&mut self.critic, &grads, &mut self.critic_opt, self.cfg.critic_lr)?;
        Ok(loss)
    }

    /// Mean `Q(o, mu(o))` over the batch and its gradient w.r.t. actor
    /// parameters, chained through the critic's action input.
    pub fn actor_gradient(&self, batch: &[Transition]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::InsufficientSamples { have: 0, need: 1 });
        }
        let n = batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.actor);
        let mut objective = 0.0;
        for t in batch {
            let actor_trace = self.actor.trace(&t.observation)?;
            let a = actor_trace.output()[0];
            let critic_trace = self.critic.trace(&Self::critic_input(&t.observation, a))?;
            objective += critic_trace.output()[0] / n;
            let dq = self.critic.input_gradient(&critic_trace, &[1.0 / n])?;
            let dq_da = *dq.last().expect("critic input has an action slot");
            self.actor.backward_into(&actor_trace, &[dq_da], &mut grads)?;
        }
        Ok((objective, grads))
    }

    /// Gradient ascent on the batch objective; the critic is not touched.
    /// Returns the objective before the step.
    pub fn update_actor(&mut self, batch: &[Transition]) -> Result<f64> {
        let (objective, mut grads) = self.actor_gradient(batch)?;
        grads.scale(-1.0);
        apply_update(&mut self.actor, &grads, &mut self.actor_opt, self.cfg.actor_lr)?;
        Ok(objective)
    }

    pub fn update_targets(&mut self) -> Result<()> {
        soft_update(&mut self.target_critic, &self.critic, self.cfg.tau)?;
        soft_update(&mut self.target_actor, &self.actor, self.cfg.tau)
    }

    pub fn sample_batch(&mut self) -> Result<Vec<Transition>> {
        self.buffer.sample(self.cfg.batch_size, &mut self.rng)
    }

    /// Critic step, actor step, then soft target updates, once the buffer
    /// holds a full batch. Returns `(critic_loss, actor_objective)`.
    pub fn learn(&mut self) -> Result<Option<(f64, f64)>> {
        if self.buffer.len() < self.cfg.batch_size {
            return Ok(None);
        }
        let batch = self.sample_batch()?;
        let loss = self.update_critic(&batch)?;
        let objective = self.update_actor(&batch)?;
        self.update_targets()?;
        Ok(Some((loss, objective)))
    }
}

/// One logged `(episode, step, agent)` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: usize,
    pub step: usize,
    pub agent: usize,
    pub reward: f64,
    pub adjusted_reward: f64,
    pub group_utility: f64,
    pub critic_loss: Option<f64>,
    pub actor_objective: Option<f64>,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    /// Mean per-step group utility.
    pub group_utility: f64,
    /// Mean per-step congestion cost per agent.
    pub congestion: Vec<f64>,
    /// Undiscounted sum of adjusted rewards per agent.
    pub returns: Vec<f64>,
    /// Share of actor outputs within 0.01 of 0 or 1.
    pub saturation: f64,
}

/// Accumulates per-step values into `EpisodeStats`.
#[derive(Debug, Clone)]
pub(crate) struct EpisodeAccumulator {
    steps: usize,
    utility: f64,
    congestion: Vec<f64>,
    returns: Vec<f64>,
    saturated: usize,
    outputs: usize,
}

impl EpisodeAccumulator {
    pub(crate) fn new(agents: usize) -> Self {
        EpisodeAccumulator {
            steps: 0,
            utility: 0.0,
            congestion: vec![0.0; agents],
            returns: vec![0.0; agents],
            saturated: 0,
            outputs: 0,
        }
    }

    pub(crate) fn add(&mut self, step: &crate::env::EnvStep) {
        self.steps += 1;
        self.utility += step.group_utility;
        for (c, v) in self.congestion.iter_mut().zip(&step.congestion) {
            *c += v;
        }
        for (r, v) in self.returns.iter_mut().zip(&step.adjusted_rewards) {
            *r += v;
        }
    }

    pub(crate) fn add_output(&mut self, y: f64) {
        self.outputs += 1;
        if y.min(1.0 - y) < 0.01 {
            self.saturated += 1;
        }
    }

    pub(crate) fn finish(self, episode: usize) -> EpisodeStats {
        let n = self.steps.max(1) as f64;
        EpisodeStats {
            episode,
            group_utility: self.utility / n,
            congestion: self.congestion.into_iter().map(|c| c / n).collect(),
            returns: self.returns,
            saturation: if self.outputs == 0 {
                0.0
            } else {
                self.saturated as f64 / self.outputs as f64
            },
        }
    }
}

/// Independent seeded stream `stream` derived from the run seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids used for the environment and every agent.
pub const ARRIVAL_STREAM: u64 = 1;
pub const EVAL_ARRIVAL_STREAM: u64 = 2;
pub const BASELINE_STREAM: u64 = 3;
const AGENT_STREAM_BASE: u64 = 1000;

pub struct Trainer {
    env: TrafficEnv,
    agents: Vec<AgentLearner>,
}

impl Trainer {
    pub fn new(env: TrafficEnv, cfg: &LearnerConfig, seed: u64) -> Result<Self> {
        let agents = (0..env.agents())
            .map(|j| {
                let dim = env.graph().observation_dim(j);
                AgentLearner::new(dim, cfg, stream_rng(seed, AGENT_STREAM_BASE + j as u64))
            })
            .collect::<Result<_>>()?;
        Ok(Trainer { env, agents })
    }

    pub fn agents(&self) -> &[AgentLearner] {
        &self.agents
    }

    pub fn env(&self) -> &TrafficEnv {
        &self.env
    }

    pub fn env_mut(&mut self) -> &mut TrafficEnv {
        &mut self.env
    }

    /// One training episode: act with exploration, step the network, store
    /// influence-augmented transitions with social rewards, and update every
    /// agent after each step.
    pub fn run_episode(
        &mut self,
        episode: usize,
        steps: usize,
        sink: &mut dyn FnMut(&StepRecord) -> Result<()>,
    ) -> Result<EpisodeStats> {
        self.run_episode_traced(episode, steps, sink, None)
    }

    pub fn run_episode_traced(
        &mut self,
        episode: usize,
        steps: usize,
        sink: &mut dyn FnMut(&StepRecord) -> Result<()>,
        mut trajectory: Option<&mut Vec<TrajectoryRow>>,
    ) -> Result<EpisodeStats> {
        self.env.reset();
        for agent in &mut self.agents {
            agent.noise.reset();
        }
        let mut acc = EpisodeAccumulator::new(self.agents.len());
        let mut obs = self.env.observations()?;

        for step in 0..steps {
            let choices = self
                .agents
                .iter_mut()
                .zip(&obs)
                .map(|(agent, o)| agent.select_action(o, true))
                .collect::<Result<Vec<_>>>()?;
            let actions: Vec<Action> = choices.iter().map(|c| c.action).collect();
            let outcome = self.env.step(&actions)?;
            let next_obs = self.env.observations()?;
            acc.add(&outcome);
            if let Some(rows) = trajectory.as_deref_mut() {
                record_trajectory(rows, step as u64, &actions, &outcome);
            }

            for (j, agent) in self.agents.iter_mut().enumerate() {
                acc.add_output(choices[j].actor_output);
                agent.buffer.push(Transition {
                    observation: std::mem::take(&mut obs[j]),
                    action: actions[j],
                    reward: outcome.adjusted_rewards[j] * agent.cfg.reward_scale,
                    next_observation: next_obs[j].clone(),
                });
                let learned = agent.learn()?;
                if let Some((loss, objective)) = learned {
                    let what = if !loss.is_finite() {
                        Some("critic loss")
                    } else if !objective.is_finite() {
                        Some("actor objective")
                    } else {
                        None
                    };
                    if let Some(what) = what {
                        return Err(Error::Diverged {
                            episode,
                            step,
                            agent: j,
                            what,
                        });
                    }
                }
                sink(&StepRecord {
                    episode,
                    step,
                    agent: j,
                    reward: outcome.rewards[j],
                    adjusted_reward: outcome.adjusted_rewards[j],
                    group_utility: outcome.group_utility,
                    critic_loss: learned.map(|l| l.0),
                    actor_objective: learned.map(|l| l.1),
                    noise: choices[j].noise,
                })?;
            }
            obs = next_obs;
        }
        Ok(acc.finish(episode))
    }

    /// Greedy rollout (no exploration, no learning).
    pub fn evaluate(&mut self, episode: usize, steps: usize) -> Result<EpisodeStats> {
        self.evaluate_traced(episode, steps, None)
    }

    /// `evaluate`, optionally recording every intersection's post-step state.
    pub fn evaluate_traced(
        &mut self,
        episode: usize,
        steps: usize,
        mut trajectory: Option<&mut Vec<TrajectoryRow>>,
    ) -> Result<EpisodeStats> {
        self.env.reset();
        let mut acc = EpisodeAccumulator::new(self.agents.len());
        for step in 0..steps {
            let obs = self.env.observations()?;
            let mut actions = Vec::with_capacity(self.agents.len());
            for (agent, o) in self.agents.iter_mut().zip(&obs) {
                let c = agent.select_action(o, false)?;
                acc.add_output(c.actor_output);
                actions.push(c.action);
            }
            let outcome = self.env.step(&actions)?;
            if let Some(rows) = trajectory.as_deref_mut() {
                record_trajectory(rows, step as u64, &actions, &outcome);
            }
            acc.add(&outcome);
        }
        Ok(acc.finish(episode))
    }
}

pub(crate) fn record_trajectory(rows: &mut Vec<TrajectoryRow>, step: u64, actions: &[Action], outcome: &EnvStep) {
    for (n, s) in outcome.report.state.intersections.iter().enumerate() {
        rows.push(TrajectoryRow::new(step, n, s, actions[n], outcome.rewards[n]));
    }
}
