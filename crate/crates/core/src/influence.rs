//! Directed influence graphs and influence-augmented observations.
//!
//! An edge `a -> b` means agent `b` sees the last action of agent `a`.
//! Edges only join physically adjacent intersections.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traffic::{Action, GridTopology, NetworkState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfluenceMode {
    #[default]
    None,
    /// Border toward center: corner agents see nobody.
    Inward,
    /// Center toward border: the center agent sees nobody.
    Outward,
    #[serde(rename = "full")]
    FullyConnected,
}

impl InfluenceMode {
    pub const ALL: [InfluenceMode; 4] = [
        InfluenceMode::None,
        InfluenceMode::Inward,
        InfluenceMode::Outward,
        InfluenceMode::FullyConnected,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InfluenceMode::None => "none",
            InfluenceMode::Inward => "inward",
            InfluenceMode::Outward => "outward",
            InfluenceMode::FullyConnected => "full",
        }
    }
}

impl fmt::Display for InfluenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InfluenceMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        InfluenceMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown influence mode `{s}` (expected none | inward | outward | full)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfluenceGraph {
    mode: InfluenceMode,
    edges: Vec<(usize, usize)>,
    influencers: Vec<Vec<usize>>,
}

impl InfluenceGraph {
    /// Inward and outward orient every adjacent pair by Manhattan distance
    /// to the center cell; adjacent cells always differ by exactly one, so
    /// there are no ties. Grids with an even dimension have no natural
    /// center and must supply one.
    pub fn build(topology: &GridTopology, mode: InfluenceMode, center: Option<(usize, usize)>) -> Result<Self> {
        let pairs = topology.adjacent_pairs();
        let edges: Vec<(usize, usize)> = match mode {
            InfluenceMode::None => Vec::new(),
            InfluenceMode::FullyConnected => pairs.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect(),
            InfluenceMode::Inward | InfluenceMode::Outward => {
                let (cr, cc) = match center {
                    Some((r, c)) if r < topology.rows() && c < topology.cols() => (r, c),
                    Some((r, c)) => {
                        return Err(Error::InvalidTopology(format!(
                            "center ({r}, {c}) lies outside the {}x{} grid",
                            topology.rows(),
                            topology.cols()
                        )))
                    }
                    None if topology.rows() % 2 == 1 && topology.cols() % 2 == 1 => {
                        ((topology.rows() - 1) / 2, (topology.cols() - 1) / 2)
                    }
                    None => {
                        return Err(Error::NoCenter {
                            mode: mode.name(),
                            rows: topology.rows(),
                            cols: topology.cols(),
                        })
                    }
                };
                let dist = |n: usize| {
                    let (r, c) = topology.coords(n);
                    r.abs_diff(cr) + c.abs_diff(cc)
                };
                pairs
                    .iter()
                    .map(|&(a, b)| {
                        let (far, near) = if dist(a) > dist(b) { (a, b) } else { (b, a) };
                        if mode == InfluenceMode::Inward {
                            (far, near)
                        } else {
                            (near, far)
                        }
                    })
                    .collect()
            }
        };

        let mut influencers = vec![Vec::new(); topology.len()];
        for &(from, to) in &edges {
            influencers[to].push(from);
        }
        for list in &mut influencers {
            list.sort_unstable();
        }
        Ok(InfluenceGraph {
            mode,
            edges,
            influencers,
        })
    }

    pub fn mode(&self) -> InfluenceMode {
        self.mode
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Influencers of `agent`, row-major.
    pub fn influencers(&self, agent: usize) -> &[usize] {
        &self.influencers[agent]
    }

    pub fn in_degree(&self, agent: usize) -> usize {
        self.influencers[agent].len()
    }

    pub fn len(&self) -> usize {
        self.influencers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.influencers.is_empty()
    }

    pub fn observation_dim(&self, agent: usize) -> usize {
        OWN_FEATURES + self.in_degree(agent)
    }
}

/// Normalized queues plus one-hot phase.
pub const OWN_FEATURES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub own_queues: [f64; 4],
    pub own_phase: [f64; 4],
    pub influencer_actions: Vec<f64>,
}

impl Observation {
    pub fn dim(&self) -> usize {
        OWN_FEATURES + self.influencer_actions.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.own_queues);
        v.extend_from_slice(&self.own_phase);
        v.extend_from_slice(&self.influencer_actions);
        v
    }
}

/// Actions of the previous step. Starts all-zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LastActions(Vec<Action>);

impl LastActions {
    pub fn new(agents: usize) -> Self {
        LastActions(vec![Action::Continue; agents])
    }

    pub fn update(&mut self, actions: &[Action]) -> Result<()> {
        if actions.len() != self.0.len() {
            return Err(Error::ActionCount {
                expected: self.0.len(),
                got: actions.len(),
            });
        }
        self.0.copy_from_slice(actions);
        Ok(())
    }

    pub fn get(&self) -> &[Action] {
        &self.0
    }

    pub fn reset(&mut self) {
        self.0.fill(Action::Continue);
    }
}

pub fn observe(
    agent: usize,
    state: &NetworkState,
    last: &LastActions,
    graph: &InfluenceGraph,
    normalizer: f64,
) -> Result<Observation> {
    let own = state.intersections.get(agent).ok_or(Error::UnknownAgent(agent))?;
    if graph.len() != state.len() {
        return Err(Error::Dimension {
            expected: graph.len(),
            got: state.len(),
        });
    }
    let own_queues = own.queues.map(|q| f64::from(q) / normalizer);
    let mut own_phase = [0.0; 4];
    own_phase[usize::from(own.phase.value())] = 1.0;
    let influencer_actions = graph
        .influencers(agent)
        .iter()
        .map(|&m| last.get()[m].as_f64())
        .collect();
    Ok(Observation {
        own_queues,
        own_phase,
        influencer_actions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CORNERS: [usize; 4] = [0, 2, 6, 8];

    fn grid3() -> GridTopology {
        GridTopology::new(3, 3).unwrap()
    }

    #[test]
    fn inward_corners_are_independent() {
        let g = InfluenceGraph::build(&grid3(), InfluenceMode::Inward, None).unwrap();
        for c in CORNERS {
            assert_eq!(g.in_degree(c), 0);
        }
        assert_eq!(g.in_degree(4), 4);
    }

    #[test]
    fn outward_center_is_independent() {
        let g = InfluenceGraph::build(&grid3(), InfluenceMode::Outward, None).unwrap();
        assert_eq!(g.in_degree(4), 0);
        for c in CORNERS {
            assert_eq!(g.in_degree(c), 2);
        }
    }

    #[test]
    fn full_matches_adjacency_degree() {
        let t = grid3();
        let g = InfluenceGraph::build(&t, InfluenceMode::FullyConnected, None).unwrap();
        assert_eq!(g.in_degree(4), 4);
        for c in CORNERS {
            assert_eq!(g.in_degree(c), 2);
        }
        for n in 0..9 {
            assert_eq!(g.in_degree(n), t.neighbors(n).len());
        }
    }

    #[test]
    fn edge_counts_per_mode() {
        for (r, c) in [(3, 3), (1, 5), (5, 3), (1, 1)] {
            let t = GridTopology::new(r, c).unwrap();
            let pairs = t.adjacent_pairs().len();
            let count = |m| InfluenceGraph::build(&t, m, None).unwrap().edges().len();
            assert_eq!(count(InfluenceMode::None), 0);
            assert_eq!(count(InfluenceMode::Inward), pairs);
            assert_eq!(count(InfluenceMode::Outward), pairs);
            assert_eq!(count(InfluenceMode::FullyConnected), 2 * pairs);

            let mut inward: Vec<_> = InfluenceGraph::build(&t, InfluenceMode::Inward, None)
                .unwrap()
                .edges()
                .iter()
                .map(|&(a, b)| (b, a))
                .collect();
            let mut outward = InfluenceGraph::build(&t, InfluenceMode::Outward, None).unwrap().edges().to_vec();
            inward.sort_unstable();
            outward.sort_unstable();
            assert_eq!(inward, outward);
        }
    }

    #[test]
    fn even_grid_needs_center() {
        let t = GridTopology::new(2, 2).unwrap();
        assert!(matches!(
            InfluenceGraph::build(&t, InfluenceMode::Inward, None),
            Err(Error::NoCenter { .. })
        ));
        let g = InfluenceGraph::build(&t, InfluenceMode::Outward, Some((0, 0))).unwrap();
        assert_eq!(g.in_degree(0), 0);
        assert!(InfluenceGraph::build(&t, InfluenceMode::Outward, Some((2, 0))).is_err());
        assert!(InfluenceGraph::build(&t, InfluenceMode::FullyConnected, None).is_ok());
    }

    #[test]
    fn observation_layout() {
        let t = grid3();
        let mut s = NetworkState::reset(&t);
        s.intersections[0].queues = [50, 25, 0, 100];
        let full = InfluenceGraph::build(&t, InfluenceMode::FullyConnected, None).unwrap();
        let mut last = LastActions::new(9);

        let o = observe(0, &s, &last, &full, 50.0).unwrap();
        assert_eq!(o.dim(), 10);
        assert_eq!(o.own_queues, [1.0, 0.5, 0.0, 2.0]);
        assert_eq!(o.own_phase, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(o.influencer_actions, vec![0.0, 0.0]);

        let mut acts = vec![Action::Continue; 9];
        acts[3] = Action::Switch;
        last.update(&acts).unwrap();
        let o = observe(0, &s, &last, &full, 50.0).unwrap();
        assert_eq!(o.influencer_actions, vec![0.0, 1.0]);
        assert_eq!(o.to_vec().len(), 10);

        let none = InfluenceGraph::build(&t, InfluenceMode::None, None).unwrap();
        for n in 0..9 {
            assert_eq!(observe(n, &s, &last, &none, 50.0).unwrap().dim(), 8);
        }
        assert!(matches!(observe(9, &s, &last, &none, 50.0), Err(Error::UnknownAgent(9))));
    }

    #[test]
    fn last_action_buffer() {
        let mut b = LastActions::new(3);
        assert_eq!(b.get(), &[Action::Continue; 3]);
        b.update(&[Action::Switch, Action::Continue, Action::Switch]).unwrap();
        assert_eq!(b.get(), &[Action::Switch, Action::Continue, Action::Switch]);
        b.update(&[Action::Continue, Action::Switch, Action::Switch]).unwrap();
        assert_eq!(b.get(), &[Action::Continue, Action::Switch, Action::Switch]);
        assert!(b.update(&[Action::Switch]).is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in InfluenceMode::ALL {
            assert_eq!(m.name().parse::<InfluenceMode>().unwrap(), m);
            let js = serde_json::to_string(&m).unwrap();
            assert_eq!(js, format!("\"{}\"", m.name()));
        }
    }
}
