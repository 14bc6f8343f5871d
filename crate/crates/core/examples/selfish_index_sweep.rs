//! Sweep the selfish index on a small grid and plot the response.
//!
//! cargo run --release --example selfish_index_sweep -- [episodes]

use spatial_traffic::experiment::{emit_plots, run_sweep_in, ExperimentConfig};
use spatial_traffic::influence::InfluenceMode;

fn main() -> spatial_traffic::Result<()> {
    let episodes = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let mut cfg = ExperimentConfig::preset("grid3x3-desk")?;
    cfg.topology.rows = 2;
    cfg.topology.cols = 2;
    cfg.influence_mode = InfluenceMode::FullyConnected;
    cfg.episodes = episodes;
    cfg.steps = 100;

    let dir = std::env::temp_dir().join("trafficlab-selfish-sweep");
    let values: Vec<String> = ["0", "0.25", "0.5", "1", "2"].iter().map(|s| s.to_string()).collect();
    let sweep = run_sweep_in(&cfg, "selfish_index", &values, &dir)?;
    for r in &sweep.rows {
        println!("selfish index {:>4}: final group utility {:9.2}", r.value, r.final_group_utility);
    }
    for p in emit_plots(&[sweep.dir.clone()], &dir.join("plots"))? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
