//! Congestion cost and neighbor-weighted ("social") rewards.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::traffic::{GridTopology, IntersectionState};

/// Sum of squared queue lengths.
pub fn congestion_cost(queues: &[u32; 4]) -> f64 {
    queues.iter().map(|&q| f64::from(q) * f64::from(q)).sum()
}

pub fn base_reward(state: &IntersectionState) -> f64 {
    -congestion_cost(&state.queues)
}

/// Negative total congestion over the whole network.
pub fn group_utility(states: &[IntersectionState]) -> f64 {
    -states.iter().map(|s| congestion_cost(&s.queues)).sum::<f64>()
}

/// Social tie weights `w[n][m]` over physically adjacent intersections.
#[derive(Debug, Clone, PartialEq)]
pub struct SocialWeights {
    neighbors: Vec<Vec<usize>>,
    weights: Vec<BTreeMap<usize, f64>>,
}

impl SocialWeights {
    /// Every agent spreads `selfish_index` evenly over its neighbors, so
    /// `sum_m w[n][m] == selfish_index` wherever `n` has neighbors.
    pub fn uniform(topology: &GridTopology, selfish_index: f64) -> Result<Self> {
        if !(selfish_index >= 0.0 && selfish_index.is_finite()) {
            return Err(Error::InvalidConfig {
                key: "selfish_index".into(),
                reason: format!("must be a finite number >= 0, got {selfish_index}"),
            });
        }
        let neighbors: Vec<Vec<usize>> = (0..topology.len()).map(|n| topology.neighbors(n)).collect();
        let weights = neighbors
            .iter()
            .map(|ms| {
                let w = if ms.is_empty() { 0.0 } else { selfish_index / ms.len() as f64 };
                ms.iter().map(|&m| (m, w)).collect()
            })
            .collect();
        Ok(SocialWeights { neighbors, weights })
    }

    /// Override a single directed weight `w[agent][neighbor]`.
    pub fn set(&mut self, agent: usize, neighbor: usize, weight: f64) -> Result<()> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::InvalidConfig {
                key: format!("edge_weights[{agent}->{neighbor}]"),
                reason: format!("weight must be a finite number >= 0, got {weight}"),
            });
        }
        let ms = self.neighbors.get(agent).ok_or(Error::UnknownAgent(agent))?;
        if !ms.contains(&neighbor) {
            return Err(Error::InvalidConfig {
                key: format!("edge_weights[{agent}->{neighbor}]"),
                reason: "intersections are not adjacent".into(),
            });
        }
        self.weights[agent].insert(neighbor, weight);
        Ok(())
    }

    pub fn weight(&self, agent: usize, neighbor: usize) -> f64 {
        self.weights
            .get(agent)
            .and_then(|w| w.get(&neighbor))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn neighbors(&self, agent: usize) -> Option<&[usize]> {
        self.neighbors.get(agent).map(Vec::as_slice)
    }

    pub fn selfish_index(&self, agent: usize) -> Result<f64> {
        self.weights
            .get(agent)
            .map(|w| w.values().sum())
            .ok_or(Error::UnknownAgent(agent))
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for w in &mut out.weights {
            for v in w.values_mut() {
                *v *= factor;
            }
        }
        out
    }

    /// `-F(own) - sum_m w[n][m] * F(m)`.
    pub fn adjusted_reward(&self, agent: usize, states: &[IntersectionState]) -> Result<f64> {
        let own = states.get(agent).ok_or(Error::UnknownAgent(agent))?;
        let w = self.weights.get(agent).ok_or(Error::UnknownAgent(agent))?;
        let penalty: f64 = w
            .iter()
            .map(|(&m, &wm)| wm * congestion_cost(&states[m].queues))
            .sum();
        Ok(base_reward(own) - penalty)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::LightPhase;
    use proptest::prelude::*;

    fn st(q: [u32; 4]) -> IntersectionState {
        IntersectionState::new(q, LightPhase::GREEN_EW)
    }

    #[test]
    fn cost_and_base_reward() {
        assert_eq!(congestion_cost(&[1, 2, 3, 4]), 30.0);
        assert_eq!(congestion_cost(&[0; 4]), 0.0);
        assert_eq!(congestion_cost(&[5, 0, 0, 0]), 25.0);
        assert_eq!(base_reward(&st([1, 2, 3, 4])), -30.0);
        assert_eq!(base_reward(&st([0; 4])), 0.0);
        assert_eq!(base_reward(&st([10; 4])), -400.0);
    }

    #[test]
    fn group_utility_sums() {
        assert_eq!(group_utility(&[st([0; 4]); 9]), 0.0);
        let mut s = vec![st([0; 4]); 9];
        s[4] = st([1, 2, 3, 4]);
        assert_eq!(group_utility(&s), -30.0);
        assert_eq!(group_utility(&[st([1, 0, 0, 0]), st([1, 0, 0, 0])]), -2.0);
    }

    #[test]
    fn adjusted_reward_line() {
        // 1x3 line, middle agent: own F=30, neighbors F=10 and F=20, w=0.25 each.
        let t = GridTopology::new(1, 3).unwrap();
        let w = SocialWeights::uniform(&t, 0.5).unwrap();
        assert_eq!(w.weight(1, 0), 0.25);
        let states = [st([1, 3, 0, 0]), st([1, 2, 3, 4]), st([2, 4, 0, 0])];
        assert_eq!(w.adjusted_reward(1, &states).unwrap(), -37.5);
        assert_eq!(w.selfish_index(1).unwrap(), 0.5);
    }

    #[test]
    fn adjusted_reward_center() {
        let t = GridTopology::new(3, 3).unwrap();
        let mut w = SocialWeights::uniform(&t, 4.0).unwrap();
        assert_eq!(w.weight(4, 1), 1.0);
        let mut s = vec![st([1; 4]); 9];
        s[4] = st([2; 4]);
        assert_eq!(w.adjusted_reward(4, &s).unwrap(), -32.0);
        assert_eq!(w.selfish_index(0).unwrap(), 4.0);

        w.set(4, 1, 0.0).unwrap();
        assert_eq!(w.selfish_index(4).unwrap(), 3.0);
        assert!(w.set(4, 0, 1.0).is_err());
        assert!(w.set(4, 1, -1.0).is_err());
        assert!(matches!(w.adjusted_reward(9, &s), Err(Error::UnknownAgent(9))));
    }

    #[test]
    fn zero_weights_equal_base() {
        let t = GridTopology::new(3, 3).unwrap();
        let w = SocialWeights::uniform(&t, 0.0).unwrap();
        let s: Vec<_> = (0..9u32).map(|i| st([i, i + 1, 2 * i, 3])).collect();
        let mut total = 0.0;
        for n in 0..9 {
            let r = w.adjusted_reward(n, &s).unwrap();
            assert_eq!(r, base_reward(&s[n]));
            total += r;
        }
        assert_eq!(total, group_utility(&s));
    }

    #[test]
    fn negative_index_rejected() {
        let t = GridTopology::new(2, 2).unwrap();
        assert!(SocialWeights::uniform(&t, -1.0).is_err());
    }

    fn queues() -> impl Strategy<Value = Vec<[u32; 4]>> {
        prop::collection::vec(prop::array::uniform4(0u32..40), 9)
    }

    proptest! {
        #[test]
        fn monotone_in_neighbor_queues(qs in queues(), agent in 0usize..9, bump in 1u32..10, idx in 0usize..4, s in 0.0f64..3.0) {
            let t = GridTopology::new(3, 3).unwrap();
            let w = SocialWeights::uniform(&t, s).unwrap();
            let states: Vec<_> = qs.iter().map(|&q| st(q)).collect();
            let before = w.adjusted_reward(agent, &states).unwrap();
            for m in t.neighbors(agent) {
                let mut bumped = states.clone();
                bumped[m].queues[idx] += bump;
                prop_assert!(w.adjusted_reward(agent, &bumped).unwrap() <= before);
            }
        }

        #[test]
        fn doubling_weights_doubles_penalty(qs in queues(), agent in 0usize..9, s in 0.0f64..3.0) {
            let t = GridTopology::new(3, 3).unwrap();
            let w = SocialWeights::uniform(&t, s).unwrap();
            let states: Vec<_> = qs.iter().map(|&q| st(q)).collect();
            let base = base_reward(&states[agent]);
            let p1 = base - w.adjusted_reward(agent, &states).unwrap();
            let p2 = base - w.scaled(2.0).adjusted_reward(agent, &states).unwrap();
            prop_assert!((p2 - 2.0 * p1).abs() <= 1e-9 * p1.abs().max(1.0));
        }
    }
}
