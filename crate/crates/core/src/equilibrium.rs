//! Deterministic fixed-rate instances for checking stability and unilateral
//! deviations of periodic signal plans.
//!
//! Every fed entry queue receives exactly `c` vehicles per step and a green
//! queue releases `min(queue, d)`. Rates are real-valued; the light automaton,
//! gating and routing are the simulator's own.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::traffic::{gated_departures, route_vehicles, Action, GridTopology, LightPhase};

/// Largest period accepted by the enumerator.
pub const MAX_ENUMERATION_PERIOD: usize = 12;

/// Cap on simulated joint periods before falling back to the last drift.
const MAX_PERIODS: usize = 5000;

/// A linear road of one or two intersections with constant rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeterministicInstance {
    intersections: usize,
    arrival: f64,
    departure: f64,
}

impl DeterministicInstance {
    pub fn new(intersections: usize, arrival: f64, departure: f64) -> Result<Self> {
        if !(1..=2).contains(&intersections) {
            return Err(Error::InvalidConfig {
                key: "intersections".into(),
                reason: format!("must be 1 or 2, got {intersections}"),
            });
        }
        if !(arrival >= 0.0 && arrival.is_finite()) {
            return Err(Error::InvalidConfig {
                key: "c".into(),
                reason: format!("arrival rate must be >= 0, got {arrival}"),
            });
        }
        if !(departure > 0.0 && departure.is_finite()) {
            return Err(Error::InvalidConfig {
                key: "d".into(),
                reason: format!("departure rate must be > 0, got {departure}"),
            });
        }
        Ok(DeterministicInstance {
            intersections,
            arrival,
            departure,
        })
    }

    pub fn single(arrival: f64, departure: f64) -> Result<Self> {
        Self::new(1, arrival, departure)
    }

    pub fn pair(arrival: f64, departure: f64) -> Result<Self> {
        Self::new(2, arrival, departure)
    }

    pub fn intersections(&self) -> usize {
        self.intersections
    }

    pub fn arrival(&self) -> f64 {
        self.arrival
    }

    pub fn departure(&self) -> f64 {
        self.departure
    }

    pub fn with_arrival(&self, arrival: f64) -> Result<Self> {
        Self::new(self.intersections, arrival, self.departure)
    }

    fn topology(&self) -> GridTopology {
        GridTopology::new(1, self.intersections).expect("1x1 or 1x2 grid")
    }

    fn eps(&self) -> f64 {
        1e-9 * self.arrival.max(self.departure).max(1.0)
    }
}

/// A finite action sequence repeated forever.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CyclicPolicy(Vec<Action>);

impl CyclicPolicy {
    pub fn new(actions: Vec<Action>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::InvalidConfig {
                key: "policy".into(),
                reason: "a cyclic policy needs at least one action".into(),
            });
        }
        Ok(CyclicPolicy(actions))
    }

    pub fn always_switch() -> Self {
        CyclicPolicy(vec![Action::Switch])
    }

    pub fn never_switch() -> Self {
        CyclicPolicy(vec![Action::Continue])
    }

    pub fn period(&self) -> usize {
        self.0.len()
    }

    pub fn actions(&self) -> &[Action] {
        &self.0
    }

    pub fn action_at(&self, t: usize) -> Action {
        self.0[t % self.0.len()]
    }

    /// Steps after which both the action sequence and the light phase
    /// (starting from green east–west) repeat.
    pub fn state_period(&self) -> usize {
        let switches = self.0.iter().filter(|&&a| a == Action::Switch).count() % 4;
        self.period() * 4 / gcd(switches, 4)
    }
}

impl fmt::Display for CyclicPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.0 {
            write!(f, "{}", a.bit())?;
        }
        Ok(())
    }
}

impl FromStr for CyclicPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let actions = s
            .chars()
            .map(|ch| match ch {
                '0' => Ok(Action::Continue),
                '1' => Ok(Action::Switch),
                other => Err(format!("policy must be a string of 0/1, found `{other}`")),
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        CyclicPolicy::new(actions).map_err(|e| e.to_string())
    }
}

impl Serialize for CyclicPolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Period after which a joint plan repeats exactly.
pub fn joint_period(policies: &[CyclicPolicy]) -> usize {
    policies.iter().map(CyclicPolicy::state_period).fold(1, lcm)
}

#[derive(Debug, Clone, PartialEq)]
struct FluidState {
    queues: Vec<[f64; 4]>,
    phases: Vec<LightPhase>,
    time: usize,
}

struct Rollout<'a> {
    instance: &'a DeterministicInstance,
    topology: GridTopology,
    policies: &'a [CyclicPolicy],
}

impl<'a> Rollout<'a> {
    fn new(instance: &'a DeterministicInstance, policies: &'a [CyclicPolicy]) -> Result<Self> {
        if policies.len() != instance.intersections {
            return Err(Error::ActionCount {
                expected: instance.intersections,
                got: policies.len(),
            });
        }
        Ok(Rollout {
            instance,
            topology: instance.topology(),
            policies,
        })
    }

    fn start(&self) -> FluidState {
        FluidState {
            queues: vec![[0.0; 4]; self.instance.intersections],
            phases: vec![LightPhase::GREEN_EW; self.instance.intersections],
            time: 0,
        }
    }

    /// Advance one step; returns the departures that happened.
    fn step(&self, s: &mut FluidState) -> Vec<[f64; 4]> {
        let d = self.instance.departure;
        let departures: Vec<[f64; 4]> = s
            .queues
            .iter()
            .zip(&s.phases)
            .map(|(q, &p)| gated_departures(*q, p, d, d))
            .collect();
        let routed = route_vehicles(&departures, &self.topology);
        for (n, q) in s.queues.iter_mut().enumerate() {
            for i in 0..4 {
                let external = if self.topology.is_entry(n, i) {
                    self.instance.arrival
                } else {
                    0.0
                };
                q[i] = q[i] + external + routed.internal[n][i] - departures[n][i];
            }
        }
        for (p, policy) in s.phases.iter_mut().zip(self.policies) {
            *p = p.step(policy.action_at(s.time));
        }
        s.time += 1;
        departures
    }
}

fn congestion(queues: &[[f64; 4]]) -> f64 {
    queues.iter().flatten().map(|q| q * q).sum()
}

/// Exact rollout from empty queues; element `t` holds the queues at time `t`.
pub fn simulate_cycle(
    instance: &DeterministicInstance,
    policies: &[CyclicPolicy],
    horizon: usize,
) -> Result<Vec<Vec<[f64; 4]>>> {
    let rollout = Rollout::new(instance, policies)?;
    let mut s = rollout.start();
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(s.queues.clone());
    for _ in 0..horizon {
        rollout.step(&mut s);
        out.push(s.queues.clone());
    }
    Ok(out)
}

/// Periodic steady state of a joint plan, or evidence of unbounded growth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyState {
    pub stable: bool,
    pub period: usize,
    /// Joint periods simulated before deciding.
    pub periods: usize,
    /// Queue change over the last simulated period, per intersection.
    pub growth: Vec<[f64; 4]>,
    /// Departures over the last simulated period, per intersection.
    pub departed: Vec<[f64; 4]>,
    /// Green steps per flow `[east–west, north–south]` in one period.
    pub green_slots: Vec<[usize; 2]>,
    /// Mean per-step group utility over the steady period; `-inf` if unstable.
    pub average_utility: f64,
}

/// Simulates whole joint periods from empty queues until the queue vector
/// repeats (stable) or some queue keeps growing past the point where every
/// green step runs at full rate (unstable).
pub fn steady_state(instance: &DeterministicInstance, policies: &[CyclicPolicy]) -> Result<SteadyState> {
    let rollout = Rollout::new(instance, policies)?;
    let period = joint_period(policies);
    let eps = instance.eps();
    let bound = 4.0 * period as f64 * (instance.arrival + instance.departure);
    let mut state = rollout.start();

    let mut green_slots = vec![[0usize; 2]; instance.intersections];
    let mut periods = 0;
    loop {
        let before = state.queues.clone();
        let mut departed = vec![[0.0; 4]; instance.intersections];
        let mut cost = 0.0;
        for _ in 0..period {
            if periods == 0 {
                for (g, p) in green_slots.iter_mut().zip(&state.phases) {
                    match p.value() {
                        0 => g[0] += 1,
                        2 => g[1] += 1,
                        _ => {}
                    }
                }
            }
            for (acc, dep) in departed.iter_mut().zip(rollout.step(&mut state)) {
                for i in 0..4 {
                    acc[i] += dep[i];
                }
            }
            cost += congestion(&state.queues);
        }
        periods += 1;

        let growth: Vec<[f64; 4]> = state
            .queues
            .iter()
            .zip(&before)
            .map(|(a, b)| std::array::from_fn(|i| a[i] - b[i]))
            .collect();
        let max_growth = growth.iter().flatten().fold(f64::NEG_INFINITY, |m, &g| m.max(g));
        let repeated = growth.iter().flatten().all(|g| g.abs() <= eps);
        let runaway = max_growth > eps && state.queues.iter().flatten().any(|&q| q > bound);

        if repeated || runaway || periods >= MAX_PERIODS {
            let stable = max_growth <= eps;
            return Ok(SteadyState {
                stable,
                period,
                periods,
                growth,
                departed,
                green_slots,
                average_utility: if stable {
                    -cost / period as f64
                } else {
                    f64::NEG_INFINITY
                },
            });
        }
    }
}

/// Per-flow summary for a single intersection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowDrift {
    pub green_slots: usize,
    /// Arrivals minus actual departures over one steady period (largest of
    /// the flow's two queues).
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub stable: bool,
    pub period: usize,
    /// `[east–west, north–south]`.
    pub flows: [FlowDrift; 2],
}

/// Stability of `policy` on the first intersection of `instance` (the others,
/// if any, run the same plan).
pub fn is_stable(instance: &DeterministicInstance, policy: &CyclicPolicy) -> Result<StabilityReport> {
    let policies = vec![policy.clone(); instance.intersections];
    let ss = steady_state(instance, &policies)?;
    let flow = |queues: [usize; 2], slot: usize| FlowDrift {
        green_slots: ss.green_slots[0][slot],
        drift: queues
            .iter()
            .map(|&q| ss.growth[0][q])
            .fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(StabilityReport {
        stable: ss.stable,
        period: ss.period,
        flows: [flow([0, 2], 0), flow([1, 3], 1)],
    })
}

/// Every binary sequence of length `1..=max_period`, one representative
/// (the lexicographically least rotation) per rotation class.
pub fn enumerate_policies(max_period: usize) -> Result<Vec<CyclicPolicy>> {
    if max_period > MAX_ENUMERATION_PERIOD {
        return Err(Error::PeriodTooLarge(max_period));
    }
    Ok((1..=max_period).flat_map(policies_of_length).collect())
}

fn policies_of_length(n: usize) -> Vec<CyclicPolicy> {
    let bits = |code: u32| -> Vec<Action> { (0..n).rev().map(|i| Action::from(code >> i & 1 == 1)).collect() };
    let mask = (1u32 << n) - 1;
    (0..=mask)
        .filter(|&code| (1..n).all(|r| ((code << r | code >> (n - r)) & mask) >= code))
        .map(|code| CyclicPolicy(bits(code)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deviation {
    pub agent: usize,
    pub policy: CyclicPolicy,
    pub average_utility: f64,
    pub improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentDeviations {
    pub agent: usize,
    pub evaluated: usize,
    pub improving: usize,
    pub best: Option<Deviation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    pub joint: Vec<CyclicPolicy>,
    pub baseline: SteadyState,
    pub agents: Vec<AgentDeviations>,
}

impl DeviationReport {
    pub fn improving(&self) -> usize {
        self.agents.iter().map(|a| a.improving).sum()
    }

    pub fn evaluated(&self) -> usize {
        self.agents.iter().map(|a| a.evaluated).sum()
    }
}

/// For each agent in turn, tries every enumerated plan with the other agents
/// held fixed and compares long-run average group utility.
pub fn check_unilateral_deviation(
    instance: &DeterministicInstance,
    joint: &[CyclicPolicy],
    max_period: usize,
) -> Result<DeviationReport> {
    let baseline = steady_state(instance, joint)?;
    let candidates = enumerate_policies(max_period)?;
    let tol = 1e-9 * baseline.average_utility.abs().max(1.0);
    let mut agents = Vec::with_capacity(joint.len());
    for agent in 0..joint.len() {
        let mut improving = 0;
        let mut best: Option<Deviation> = None;
        for policy in &candidates {
            let mut trial = joint.to_vec();
            trial[agent] = policy.clone();
            let u = steady_state(instance, &trial)?.average_utility;
            let improvement = if u == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                u - baseline.average_utility
            };
            if improvement > tol {
                improving += 1;
            }
            if best.as_ref().is_none_or(|b| u > b.average_utility) {
                best = Some(Deviation {
                    agent,
                    policy: policy.clone(),
                    average_utility: u,
                    improvement,
                });
            }
        }
        agents.push(AgentDeviations {
            agent,
            evaluated: candidates.len(),
            improving,
            best,
        });
    }
    Ok(DeviationReport {
        joint: joint.to_vec(),
        baseline,
        agents,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierRow {
    pub period: usize,
    /// Largest `c / d` some period-`period` plan keeps stable.
    pub threshold: f64,
    pub policy: CyclicPolicy,
    /// Rollouts confirmed stability at the threshold and growth just above it.
    pub verified: bool,
}

/// Green share `min_f G_f / L` of a plan, counted from a rollout.
pub fn green_share(instance: &DeterministicInstance, policy: &CyclicPolicy) -> Result<f64> {
    let probe = instance.with_arrival(0.0)?;
    let ss = steady_state(&probe, &vec![policy.clone(); instance.intersections])?;
    let slots = ss
        .green_slots
        .iter()
        .flat_map(|g| g.iter().copied())
        .min()
        .unwrap_or(0);
    Ok(slots as f64 / ss.period as f64)
}

/// Best stabilizable arrival ratio per signal-cycle length, the same plan
/// running at every intersection. Row `P` covers the plans whose actions and
/// light both repeat after exactly `P` steps.
pub fn nash_feasibility_frontier(instance: &DeterministicInstance, max_period: usize) -> Result<Vec<FrontierRow>> {
    if max_period > MAX_ENUMERATION_PERIOD {
        return Err(Error::PeriodTooLarge(max_period));
    }
    let d = instance.departure;
    (1..=max_period)
        .map(|period| {
            let mut best: Option<(f64, CyclicPolicy)> = None;
            let plans = policies_of_length(period).into_iter().filter(|p| p.state_period() == period);
            for policy in plans {
                let share = green_share(instance, &policy)?;
                if best.as_ref().is_none_or(|(b, _)| share > *b) {
                    best = Some((share, policy));
                }
            }
            let (threshold, policy) = best.expect("at least one plan per period");
            let plan = vec![policy.clone(); instance.intersections];
            let at = steady_state(&instance.with_arrival(threshold * d)?, &plan)?.stable;
            let above = steady_state(&instance.with_arrival((threshold + 0.01) * d)?, &plan)?.stable;
            Ok(FrontierRow {
                period,
                threshold,
                policy,
                verified: at && !above,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> CyclicPolicy {
        s.parse().unwrap()
    }

    #[test]
    fn no_arrivals_no_queues() {
        let inst = DeterministicInstance::pair(0.0, 4.0).unwrap();
        for pol in enumerate_policies(3).unwrap() {
            let traj = simulate_cycle(&inst, &[pol.clone(), p("1")], 20).unwrap();
            assert!(traj.iter().flatten().flatten().all(|&q| q == 0.0));
        }
    }

    #[test]
    fn all_ones_cycle_balances() {
        let inst = DeterministicInstance::single(1.0, 4.0).unwrap();
        let traj = simulate_cycle(&inst, &[p("1")], 40).unwrap();
        for t in 8..36 {
            assert_eq!(traj[t + 4], traj[t]);
        }
        // west queue peaks at 4 when its green starts, then refills 1,2,3
        let west: Vec<f64> = traj[4..8].iter().map(|q| q[0][0]).collect();
        assert_eq!(west, vec![4.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn never_switching_starves_red_flow() {
        let inst = DeterministicInstance::single(1.0, 4.0).unwrap();
        let traj = simulate_cycle(&inst, &[p("0")], 30).unwrap();
        for t in 0..30 {
            assert!(traj[t + 1][0][1] > traj[t][0][1]);
            assert!(traj[t + 1][0][3] > traj[t][0][3]);
        }
    }

    #[test]
    fn all_ones_boundary() {
        let stable = |c| is_stable(&DeterministicInstance::single(c, 4.0).unwrap(), &p("1")).unwrap();
        assert!(stable(1.0).stable);
        assert!(stable(0.5).stable);
        let r = stable(2.0);
        assert!(!r.stable);
        assert_eq!(r.period, 4);
        assert_eq!(r.flows[0].green_slots, 1);
        assert_eq!(r.flows[0].drift, 4.0);
    }

    #[test]
    fn state_periods() {
        assert_eq!(p("1").state_period(), 4);
        assert_eq!(p("0").state_period(), 1);
        assert_eq!(p("01").state_period(), 8);
        assert_eq!(p("0110").state_period(), 8);
        assert_eq!(p("1111").state_period(), 4);
        assert_eq!(joint_period(&[p("1"), p("01")]), 8);
    }

    #[test]
    fn enumeration_small() {
        let e = enumerate_policies(1).unwrap();
        assert_eq!(e, vec![p("0"), p("1")]);
        let e = enumerate_policies(2).unwrap();
        assert_eq!(e, vec![p("0"), p("1"), p("00"), p("01"), p("11")]);
        assert!(enumerate_policies(8).unwrap().iter().all(|x| x.period() <= 8));
        assert!(matches!(enumerate_policies(13), Err(Error::PeriodTooLarge(13))));
    }

    #[test]
    fn policy_parse() {
        assert_eq!(p("0110").to_string(), "0110");
        assert!("012".parse::<CyclicPolicy>().is_err());
        assert!("".parse::<CyclicPolicy>().is_err());
    }

    #[test]
    fn zero_traffic_deviations_tie() {
        let inst = DeterministicInstance::pair(0.0, 4.0).unwrap();
        let r = check_unilateral_deviation(&inst, &[p("1"), p("1")], 3).unwrap();
        assert_eq!(r.improving(), 0);
        assert_eq!(r.evaluated(), 2 * enumerate_policies(3).unwrap().len());
        for a in &r.agents {
            assert_eq!(a.best.as_ref().unwrap().improvement, 0.0);
        }
    }

    #[test]
    fn never_switch_deviation_is_unbounded() {
        let inst = DeterministicInstance::pair(1.0, 4.0).unwrap();
        let ss = steady_state(&inst, &[p("0"), p("1")]).unwrap();
        assert!(!ss.stable);
        assert_eq!(ss.average_utility, f64::NEG_INFINITY);
        assert!(steady_state(&inst, &[p("1"), p("1")]).unwrap().stable);
    }

    #[test]
    fn frontier_rows() {
        let inst = DeterministicInstance::single(0.0, 4.0).unwrap();
        let rows = nash_feasibility_frontier(&inst, 5).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0].threshold, 0.0);
        assert_eq!(rows[0].policy, p("0"));
        assert_eq!(rows[3].threshold, 0.25);
        assert_eq!(rows[3].policy, p("1111"));
        assert_eq!(rows[4].threshold, 0.2);
        assert!(rows.iter().all(|r| r.verified));
        assert_eq!(green_share(&inst, &p("0")).unwrap(), 0.0);
        assert!(rows[4].threshold < 0.5);
    }
}
