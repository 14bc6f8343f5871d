//! How the selfish index spreads a neighbour's congestion into each reward.

use spatial_traffic::reward::{congestion_cost, SocialWeights};
use spatial_traffic::traffic::{GridTopology, IntersectionState, LightPhase};

fn main() -> spatial_traffic::Result<()> {
    let topo = GridTopology::new(3, 3)?;
    let states: Vec<IntersectionState> = (0..9u32)
        .map(|n| IntersectionState::new([n, 1, 0, n % 3], LightPhase::GREEN_EW))
        .collect();

    for selfish in [0.0, 0.5, 1.0, 2.0] {
        let w = SocialWeights::uniform(&topo, selfish)?;
        let rewards: Vec<String> = (0..9)
            .map(|n| w.adjusted_reward(n, &states).map(|r| format!("{r:7.1}")))
            .collect::<Result<_, _>>()?;
        println!("selfish index {selfish:3}: {}", rewards.join(" "));
    }
    let own: Vec<String> = states.iter().map(|s| format!("{:7.1}", -congestion_cost(&s.queues))).collect();
    println!("own reward only:   {}", own.join(" "));

    // Per-edge weights: the centre cares only about its western neighbour.
    let mut w = SocialWeights::uniform(&topo, 0.0)?;
    w.set(4, 3, 1.0)?;
    println!("centre with a single weighted edge: {:.1}", w.adjusted_reward(4, &states)?);
    Ok(())
}
