use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spatial_traffic::reward::{congestion_cost, SocialWeights};
use spatial_traffic::traffic::{Action, ArrivalModel, GridTopology, LightPhase, NetworkState};

fn grid(rows: usize, cols: usize, uniform: bool, delay: bool) -> GridTopology {
    let t = GridTopology::new(rows, cols).unwrap().with_travel_delay(delay);
    if uniform {
        t.with_arrivals(ArrivalModel::BoundedUniform).unwrap()
    } else {
        t
    }
}

fn actions_from(bits: &[bool], n: usize, t: usize) -> Vec<Action> {
    (0..n).map(|j| Action::from(bits[(t * n + j) % bits.len()])).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn vehicles_are_conserved(
        rows in 1usize..4,
        cols in 1usize..4,
        uniform: bool,
        delay: bool,
        seed: u64,
        bits in prop::collection::vec(any::<bool>(), 1..40),
    ) {
        let topo = grid(rows, cols, uniform, delay);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = NetworkState::reset(&topo);
        for t in 0..30 {
            let acts = actions_from(&bits, topo.len(), t);
            let r = state.step(&acts, &topo, &mut rng).unwrap();
            let arrived: u64 = r.external.iter().flatten().map(|&v| v as u64).sum();
            prop_assert_eq!(state.total_vehicles() + arrived, r.state.total_vehicles() + r.exits);
            for (d, s) in r.departures.iter().zip(&state.intersections) {
                for q in 0..4 {
                    prop_assert!(d[q] <= s.queues[q]);
                    if d[q] > 0 {
                        prop_assert!(s.phase.serves(q));
                    }
                }
            }
            for (n, (before, after)) in state.intersections.iter().zip(&r.state.intersections).enumerate() {
                prop_assert_eq!(after.phase, before.phase.step(acts[n]));
            }
            state = r.state;
        }
    }

    #[test]
    fn same_seed_same_trajectory(seed: u64, bits in prop::collection::vec(any::<bool>(), 1..20)) {
        let topo = grid(2, 3, false, false);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = NetworkState::reset(&topo);
            let mut out = Vec::new();
            for t in 0..25 {
                s = s.step(&actions_from(&bits, topo.len(), t), &topo, &mut rng).unwrap().state;
                out.push(s.clone());
            }
            out
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn bounded_uniform_respects_bounds(seed: u64) {
        let topo = grid(3, 3, true, false);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = NetworkState::reset(&topo);
        for _ in 0..20 {
            let r = s.step(&vec![Action::Continue; 9], &topo, &mut rng).unwrap();
            for (n, ext) in r.external.iter().enumerate() {
                let (row, col) = topo.coords(n);
                for q in 0..4 {
                    let bound = if q % 2 == 0 { topo.row_class(row).arrival_bound } else { topo.col_class(col).arrival_bound };
                    prop_assert!(ext[q] <= bound);
                    if !topo.is_entry(n, q) {
                        prop_assert_eq!(ext[q], 0);
                    }
                }
            }
        }
    }

    #[test]
    fn adjusted_reward_never_exceeds_base(
        queues in prop::collection::vec(prop::array::uniform4(0u32..30), 9),
        selfish in 0.0f64..3.0,
    ) {
        let topo = GridTopology::new(3, 3).unwrap();
        let w = SocialWeights::uniform(&topo, selfish).unwrap();
        let states: Vec<_> = queues
            .iter()
            .map(|q| spatial_traffic::traffic::IntersectionState::new(*q, LightPhase::GREEN_EW))
            .collect();
        for n in 0..9 {
            let adj = w.adjusted_reward(n, &states).unwrap();
            prop_assert!(adj <= -congestion_cost(&states[n].queues) + 1e-9);
        }
    }
}

#[test]
fn wrong_action_count_is_rejected() {
    let topo = grid(2, 2, false, false);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = NetworkState::reset(&topo);
    assert!(s.step(&[Action::Switch; 3], &topo, &mut rng).is_err());
}

#[test]
fn travel_delay_holds_vehicles_one_step() {
    let topo = GridTopology::new(1, 2)
        .unwrap()
        .with_arrivals(ArrivalModel::Bernoulli { p1: 0.0, p2: 0.0 })
        .unwrap()
        .with_travel_delay(true);
    let mut s = NetworkState::reset(&topo);
    s.intersections[0].queues = [5, 0, 0, 0];
    let none = vec![[0u32; 4]; 2];
    let r = s.step_with_arrivals(&[Action::Continue; 2], &topo, none.clone()).unwrap();
    assert_eq!(r.state.intersections[1].queues[0], 0);
    assert_eq!(r.state.in_transit[1][0], 5);
    let r2 = r.state.step_with_arrivals(&[Action::Switch; 2], &topo, none.clone()).unwrap();
    assert_eq!(r2.state.in_transit[1][0], 0);
    assert_eq!(r2.state.total_vehicles() + r2.exits, 5);
}
