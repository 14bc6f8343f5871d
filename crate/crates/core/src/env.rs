//! Multi-agent view of the road network: one agent per intersection, each
//! seeing its own queues and light plus its influencers' previous actions.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::influence::{observe, InfluenceGraph, LastActions};
use crate::reward::{base_reward, congestion_cost, group_utility, SocialWeights};
use crate::traffic::{Action, GridTopology, NetworkState, StepReport};

pub struct TrafficEnv {
    topology: GridTopology,
    graph: InfluenceGraph,
    weights: SocialWeights,
    normalizer: f64,
    state: NetworkState,
    last: LastActions,
    rng: ChaCha8Rng,
}

/// Outcome of one joint step, rewards evaluated on the post-step queues.
#[derive(Debug, Clone)]
pub struct EnvStep {
    pub report: StepReport,
    pub rewards: Vec<f64>,
    pub adjusted_rewards: Vec<f64>,
    pub congestion: Vec<f64>,
    pub group_utility: f64,
}

impl TrafficEnv {
    pub fn new(
        topology: GridTopology,
        graph: InfluenceGraph,
        weights: SocialWeights,
        normalizer: f64,
        rng: ChaCha8Rng,
    ) -> Self {
        let state = NetworkState::reset(&topology);
        let last = LastActions::new(topology.len());
        TrafficEnv {
            topology,
            graph,
            weights,
            normalizer,
            state,
            last,
            rng,
        }
    }

    pub fn agents(&self) -> usize {
        self.topology.len()
    }

    pub fn topology(&self) -> &GridTopology {
        &self.topology
    }

    pub fn graph(&self) -> &InfluenceGraph {
        &self.graph
    }

    pub fn weights(&self) -> &SocialWeights {
        &self.weights
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn last_actions(&self) -> &LastActions {
        &self.last
    }

    /// Empty network and zeroed action memory. The arrival stream carries on.
    pub fn reset(&mut self) {
        self.state = NetworkState::reset(&self.topology);
        self.last.reset();
    }

    pub fn replace_rng(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }

    pub fn observation(&self, agent: usize) -> Result<Vec<f64>> {
        Ok(observe(agent, &self.state, &self.last, &self.graph, self.normalizer)?.to_vec())
    }

    pub fn observations(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.agents()).map(|n| self.observation(n)).collect()
    }

    pub fn step(&mut self, actions: &[Action]) -> Result<EnvStep> {
        let report = self.state.step(actions, &self.topology, &mut self.rng)?;
        self.last.update(actions)?;
        self.state = report.state.clone();

        let states = &self.state.intersections;
        let rewards = states.iter().map(base_reward).collect();
        let congestion = states.iter().map(|s| congestion_cost(&s.queues)).collect();
        let adjusted_rewards = (0..states.len())
            .map(|n| self.weights.adjusted_reward(n, states))
            .collect::<Result<_>>()?;
        Ok(EnvStep {
            group_utility: group_utility(states),
            report,
            rewards,
            adjusted_rewards,
            congestion,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::influence::InfluenceMode;
    use rand::SeedableRng;

    fn env(mode: InfluenceMode, seed: u64) -> TrafficEnv {
        let t = GridTopology::new(3, 3).unwrap();
        let g = InfluenceGraph::build(&t, mode, None).unwrap();
        let w = SocialWeights::uniform(&t, 1.0).unwrap();
        TrafficEnv::new(t, g, w, 50.0, ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn observation_dims_follow_graph() {
        let e = env(InfluenceMode::FullyConnected, 0);
        let obs = e.observations().unwrap();
        for (n, o) in obs.iter().enumerate() {
            assert_eq!(o.len(), 8 + e.topology().neighbors(n).len());
            assert!(o[8..].iter().all(|&a| a == 0.0));
        }
    }

    #[test]
    fn step_updates_memory_and_rewards() {
        let mut e = env(InfluenceMode::FullyConnected, 1);
        let acts = vec![Action::Switch; 9];
        let s = e.step(&acts).unwrap();
        assert_eq!(e.last_actions().get(), acts.as_slice());
        assert!(e.observation(4).unwrap()[8..].iter().all(|&a| a == 1.0));
        assert_eq!(s.group_utility, s.rewards.iter().sum::<f64>());
        for (r, a) in s.rewards.iter().zip(&s.adjusted_rewards) {
            assert!(a <= r);
        }
        e.reset();
        assert_eq!(e.state().time, 0);
        assert!(e.last_actions().get().iter().all(|&a| a == Action::Continue));
    }
}
