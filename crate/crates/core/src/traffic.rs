//! Discrete-time grid road network.
//!
//! Each intersection keeps four queues indexed `[west, north, east, south]`
//! and a four-state light. The east–west pair (west + east queues) forms the
//! first flow, the north–south pair the second. A queue holds vehicles that
//! arrived from that side, so the west queue drains eastbound.
//!
//! One network step runs, in order: departures under the current phases,
//! routing of departed vehicles, external arrivals, the queue recursion
//! `x' = x + arrivals - departures`, then every light advances by its action.

use std::ops::{Add, AddAssign, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WEST: usize = 0;
pub const NORTH: usize = 1;
pub const EAST: usize = 2;
pub const SOUTH: usize = 3;

/// Per-agent signal command: keep the current light or advance it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Action {
    #[default]
    Continue,
    Switch,
}

impl Action {
    pub fn bit(self) -> u8 {
        match self {
            Action::Continue => 0,
            Action::Switch => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.bit())
    }
}

impl From<Action> for u8 {
    fn from(a: Action) -> u8 {
        a.bit()
    }
}

impl TryFrom<u8> for Action {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Action::Continue),
            1 => Ok(Action::Switch),
            other => Err(format!("action must be 0 or 1, got {other}")),
        }
    }
}

impl From<bool> for Action {
    fn from(switch: bool) -> Self {
        if switch {
            Action::Switch
        } else {
            Action::Continue
        }
    }
}

/// Light configuration: 0 green east–west, 1 yellow east–west,
/// 2 green north–south, 3 yellow north–south.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct LightPhase(u8);

impl LightPhase {
    pub const GREEN_EW: LightPhase = LightPhase(0);
    pub const YELLOW_EW: LightPhase = LightPhase(1);
    pub const GREEN_NS: LightPhase = LightPhase(2);
    pub const YELLOW_NS: LightPhase = LightPhase(3);

    pub fn new(value: u8) -> Option<Self> {
        (value < 4).then_some(LightPhase(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn step(self, action: Action) -> Self {
        LightPhase((self.0 + action.bit()) % 4)
    }

    /// Whether vehicles in `queue` may cross under this phase.
    pub fn serves(self, queue: usize) -> bool {
        match self.0 {
            0 => queue == WEST || queue == EAST,
            2 => queue == NORTH || queue == SOUTH,
            _ => false,
        }
    }
}

pub fn step_light(phase: LightPhase, action: Action) -> LightPhase {
    phase.step(action)
}

/// Vehicle counts. Integer in the simulator, real-valued in the
/// deterministic fluid instances.
pub trait Volume:
    Copy + Default + PartialOrd + Add<Output = Self> + Sub<Output = Self> + AddAssign
{
    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl<T> Volume for T where
    T: Copy + Default + PartialOrd + Add<Output = T> + Sub<Output = T> + AddAssign
{
}

/// Departures for one intersection: `min(queue, rate)` on the green flow,
/// zero everywhere else.
pub fn gated_departures<T: Volume>(queues: [T; 4], phase: LightPhase, ew_rate: T, ns_rate: T) -> [T; 4] {
    let mut out = [T::default(); 4];
    for (i, slot) in out.iter_mut().enumerate() {
        if phase.serves(i) {
            let rate = if i == WEST || i == EAST { ew_rate } else { ns_rate };
            *slot = queues[i].min_of(rate);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoadKind {
    Main,
    Branch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadClass {
    pub kind: RoadKind,
    /// Vehicles that can cross per green step.
    pub passing_rate: u32,
    /// Upper bound for bounded-uniform external arrivals per step.
    pub arrival_bound: u32,
}

impl RoadClass {
    pub fn main() -> Self {
        RoadClass {
            kind: RoadKind::Main,
            passing_rate: 16,
            arrival_bound: 8,
        }
    }

    pub fn branch() -> Self {
        RoadClass {
            kind: RoadKind::Branch,
            passing_rate: 4,
            arrival_bound: 2,
        }
    }
}

/// External arrival process on boundary entry roads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalModel {
    /// At most one vehicle per step: probability `p1` on east–west entries,
    /// `p2` on north–south entries.
    Bernoulli { p1: f64, p2: f64 },
    /// Uniform integer in `[0, arrival_bound]` of the entry road's class.
    BoundedUniform,
}

impl Default for ArrivalModel {
    fn default() -> Self {
        ArrivalModel::Bernoulli { p1: 0.9, p2: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridTopology {
    rows: usize,
    cols: usize,
    row_class: Vec<RoadClass>,
    col_class: Vec<RoadClass>,
    arrivals: ArrivalModel,
    travel_delay: bool,
}

impl GridTopology {
    /// East–west roads (rows) default to main, north–south (columns) to branch.
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        Self::with_classes(
            vec![RoadClass::main(); rows],
            vec![RoadClass::branch(); cols],
            ArrivalModel::default(),
        )
    }

    pub fn with_classes(
        row_class: Vec<RoadClass>,
        col_class: Vec<RoadClass>,
        arrivals: ArrivalModel,
    ) -> Result<Self> {
        let (rows, cols) = (row_class.len(), col_class.len());
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidTopology(format!(
                "grid must have at least one row and column, got {rows}x{cols}"
            )));
        }
        if let Some(c) = row_class.iter().chain(&col_class).find(|c| c.passing_rate == 0) {
            return Err(Error::InvalidTopology(format!(
                "passing rate must be positive ({:?} road has 0)",
                c.kind
            )));
        }
        if let ArrivalModel::Bernoulli { p1, p2 } = arrivals {
            if !(0.0..=1.0).contains(&p1) || !(0.0..=1.0).contains(&p2) {
                return Err(Error::InvalidTopology(format!(
                    "Bernoulli probabilities must lie in [0, 1], got p1={p1}, p2={p2}"
                )));
            }
        }
        Ok(GridTopology {
            rows,
            cols,
            row_class,
            col_class,
            arrivals,
            travel_delay: false,
        })
    }

    pub fn with_arrivals(mut self, arrivals: ArrivalModel) -> Result<Self> {
        let rc = std::mem::take(&mut self.row_class);
        let cc = std::mem::take(&mut self.col_class);
        let delay = self.travel_delay;
        Ok(Self::with_classes(rc, cc, arrivals)?.with_travel_delay(delay))
    }

    /// Hold routed vehicles in transit for one step before they join the
    /// downstream queue.
    pub fn with_travel_delay(mut self, delay: bool) -> Self {
        self.travel_delay = delay;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn arrivals(&self) -> ArrivalModel {
        self.arrivals
    }

    pub fn travel_delay(&self) -> bool {
        self.travel_delay
    }

    pub fn row_class(&self, row: usize) -> RoadClass {
        self.row_class[row]
    }

    pub fn col_class(&self, col: usize) -> RoadClass {
        self.col_class[col]
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn coords(&self, n: usize) -> (usize, usize) {
        (n / self.cols, n % self.cols)
    }

    pub fn ew_rate(&self, n: usize) -> u32 {
        self.row_class[n / self.cols].passing_rate
    }

    pub fn ns_rate(&self, n: usize) -> u32 {
        self.col_class[n % self.cols].passing_rate
    }

    /// Intersection reached by vehicles leaving `n` from `queue`, if on-grid.
    pub fn downstream(&self, n: usize, queue: usize) -> Option<usize> {
        let (r, c) = self.coords(n);
        match queue {
            WEST if c + 1 < self.cols => Some(self.index(r, c + 1)),
            NORTH if r + 1 < self.rows => Some(self.index(r + 1, c)),
            EAST if c > 0 => Some(self.index(r, c - 1)),
            SOUTH if r > 0 => Some(self.index(r - 1, c)),
            _ => None,
        }
    }

    /// Whether `queue` at `n` is fed from outside the grid.
    pub fn is_entry(&self, n: usize, queue: usize) -> bool {
        let (r, c) = self.coords(n);
        match queue {
            WEST => c == 0,
            NORTH => r == 0,
            EAST => c + 1 == self.cols,
            SOUTH => r + 1 == self.rows,
            _ => false,
        }
    }

    /// Physically adjacent intersections of `n`, ascending.
    pub fn neighbors(&self, n: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..4).filter_map(|q| self.downstream(n, q)).collect();
        out.sort_unstable();
        out
    }

    /// Every adjacent pair once, as `(a, b)` with `a < b`.
    pub fn adjacent_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.len())
            .flat_map(|n| {
                self.neighbors(n)
                    .into_iter()
                    .filter(move |&m| m > n)
                    .map(move |m| (n, m))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IntersectionState {
    pub queues: [u32; 4],
    pub phase: LightPhase,
}

impl IntersectionState {
    pub fn new(queues: [u32; 4], phase: LightPhase) -> Self {
        IntersectionState { queues, phase }
    }

    pub fn total(&self) -> u64 {
        self.queues.iter().map(|&q| u64::from(q)).sum()
    }
}

pub fn compute_departures(state: &IntersectionState, ew_rate: u32, ns_rate: u32) -> [u32; 4] {
    gated_departures(state.queues, state.phase, ew_rate, ns_rate)
}

/// Departed vehicles after routing.
#[derive(Debug, Clone, PartialEq)]
pub struct Routed<T> {
    /// Arrivals per intersection and queue from on-grid upstream neighbors.
    pub internal: Vec<[T; 4]>,
    /// Vehicles that left the grid.
    pub exits: T,
}

/// Straight-through routing: a vehicle leaving queue `i` joins queue `i` of
/// the next intersection in its direction of travel, or exits the grid.
pub fn route_vehicles<T: Volume>(departures: &[[T; 4]], topology: &GridTopology) -> Routed<T> {
    let mut internal = vec![[T::default(); 4]; departures.len()];
    let mut exits = T::default();
    for (n, dep) in departures.iter().enumerate() {
        for (q, &count) in dep.iter().enumerate() {
            match topology.downstream(n, q) {
                Some(m) => internal[m][q] += count,
                None => exits += count,
            }
        }
    }
    Routed { internal, exits }
}

/// External arrivals for one step. Non-entry queues always receive zero.
pub fn sample_arrivals<R: Rng + ?Sized>(topology: &GridTopology, rng: &mut R) -> Vec<[u32; 4]> {
    let mut out = vec![[0u32; 4]; topology.len()];
    for (n, slot) in out.iter_mut().enumerate() {
        let (r, c) = topology.coords(n);
        for (q, count) in slot.iter_mut().enumerate() {
            if !topology.is_entry(n, q) {
                continue;
            }
            let east_west = q == WEST || q == EAST;
            *count = match topology.arrivals {
                ArrivalModel::Bernoulli { p1, p2 } => {
                    let p = if east_west { p1 } else { p2 };
                    u32::from(rng.random_bool(p))
                }
                ArrivalModel::BoundedUniform => {
                    let bound = if east_west {
                        topology.row_class[r].arrival_bound
                    } else {
                        topology.col_class[c].arrival_bound
                    };
                    rng.random_range(0..=bound)
                }
            };
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkState {
    pub intersections: Vec<IntersectionState>,
    /// Vehicles routed last step that join their queue this step. Always
    /// zero unless the topology has a travel delay.
    pub in_transit: Vec<[u32; 4]>,
    pub time: u64,
}

/// Everything that happened during one network step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub state: NetworkState,
    pub departures: Vec<[u32; 4]>,
    pub external: Vec<[u32; 4]>,
    pub internal: Vec<[u32; 4]>,
    pub exits: u64,
}

impl NetworkState {
    /// Empty queues, every light green east–west, time zero.
    pub fn reset(topology: &GridTopology) -> Self {
        NetworkState {
            intersections: vec![IntersectionState::default(); topology.len()],
            in_transit: vec![[0; 4]; topology.len()],
            time: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.intersections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intersections.is_empty()
    }

    /// Vehicles on the grid, queued or in transit.
    pub fn total_vehicles(&self) -> u64 {
        let queued: u64 = self.intersections.iter().map(IntersectionState::total).sum();
        let moving: u64 = self
            .in_transit
            .iter()
            .flat_map(|q| q.iter())
            .map(|&v| u64::from(v))
            .sum();
        queued + moving
    }

    pub fn step<R: Rng + ?Sized>(
        &self,
        actions: &[Action],
        topology: &GridTopology,
        rng: &mut R,
    ) -> Result<StepReport> {
        self.check_actions(actions)?;
        let departures = self.departures(topology);
        let external = sample_arrivals(topology, rng);
        Ok(self.advance(actions, topology, departures, external))
    }

    /// Step with caller-supplied external arrivals instead of sampling them.
    pub fn step_with_arrivals(
        &self,
        actions: &[Action],
        topology: &GridTopology,
        external: Vec<[u32; 4]>,
    ) -> Result<StepReport> {
        self.check_actions(actions)?;
        if external.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: external.len(),
            });
        }
        let departures = self.departures(topology);
        Ok(self.advance(actions, topology, departures, external))
    }

    fn check_actions(&self, actions: &[Action]) -> Result<()> {
        if actions.len() != self.len() {
            return Err(Error::ActionCount {
                expected: self.len(),
                got: actions.len(),
            });
        }
        Ok(())
    }

    fn departures(&self, topology: &GridTopology) -> Vec<[u32; 4]> {
        self.intersections
            .iter()
            .enumerate()
            .map(|(n, s)| compute_departures(s, topology.ew_rate(n), topology.ns_rate(n)))
            .collect()
    }

    fn advance(
        &self,
        actions: &[Action],
        topology: &GridTopology,
        departures: Vec<[u32; 4]>,
        external: Vec<[u32; 4]>,
    ) -> StepReport {
        let routed = route_vehicles(&departures, topology);
        let (landing, in_transit) = if topology.travel_delay {
            (self.in_transit.clone(), routed.internal.clone())
        } else {
            (routed.internal.clone(), vec![[0; 4]; self.len()])
        };

        let intersections = self
            .intersections
            .iter()
            .enumerate()
            .map(|(n, s)| {
                let mut queues = s.queues;
                for q in 0..4 {
                    queues[q] = queues[q] + external[n][q] + landing[n][q] - departures[n][q];
                }
                IntersectionState::new(queues, s.phase.step(actions[n]))
            })
            .collect();

        StepReport {
            state: NetworkState {
                intersections,
                in_transit,
                time: self.time + 1,
            },
            departures,
            external,
            internal: routed.internal,
            exits: u64::from(routed.exits),
        }
    }
}

/// One row of a trajectory dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: u64,
    pub intersection: usize,
    pub q_w: u32,
    pub q_n: u32,
    pub q_e: u32,
    pub q_s: u32,
    pub phase: u8,
    pub action: u8,
    pub reward: f64,
}

impl TrajectoryRow {
    pub fn new(step: u64, intersection: usize, state: &IntersectionState, action: Action, reward: f64) -> Self {
        let [q_w, q_n, q_e, q_s] = state.queues;
        TrajectoryRow {
            step,
            intersection,
            q_w,
            q_n,
            q_e,
            q_s,
            phase: state.phase.value(),
            action: action.bit(),
            reward,
        }
    }
}
