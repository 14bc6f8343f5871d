//! Step a 3x3 grid under random switching and watch the queues.
//!
//! cargo run --example simulate_grid -- [steps] [seed]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spatial_traffic::reward::group_utility;
use spatial_traffic::traffic::{Action, GridTopology, NetworkState};

fn main() -> spatial_traffic::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let topo = GridTopology::new(3, 3)?;
    let mut arrivals = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = ChaCha8Rng::seed_from_u64(seed + 1);
    let mut state = NetworkState::reset(&topo);
    let mut exited = 0;

    for t in 0..steps {
        let actions: Vec<Action> = (0..topo.len()).map(|_| Action::from(policy.random_bool(0.5))).collect();
        let r = state.step(&actions, &topo, &mut arrivals)?;
        exited += r.exits;
        state = r.state;
        println!("t={t:3}  on grid {:4}  exited {:5}  utility {:9.1}", state.total_vehicles(), exited, group_utility(&state.intersections));
    }
    for (n, s) in state.intersections.iter().enumerate() {
        let (row, col) = topo.coords(n);
        println!("({row},{col}) queues W/N/E/S {:?} phase {}", s.queues, s.phase.value());
    }
    Ok(())
}
