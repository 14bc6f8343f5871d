//! Train the 3x3 grid under each influence mode with the same seed and
//! compare the outcome.
//!
//! cargo run --release --example influence_direction_comparison -- [episodes] [selfish_index]

use spatial_traffic::experiment::{emit_plots, run_experiment_in, ExperimentConfig};
use spatial_traffic::influence::InfluenceMode;

fn main() -> spatial_traffic::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let selfish = args.next().and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let root = std::env::temp_dir().join("trafficlab-influence");

    let mut dirs = Vec::new();
    for mode in InfluenceMode::ALL {
        let mut cfg = ExperimentConfig::preset("grid3x3-desk")?;
        cfg.episodes = episodes;
        cfg.influence_mode = mode;
        cfg.selfish_index = selfish;
        let out = run_experiment_in(&cfg, &root.join(mode.name()))?;
        let s = &out.summary;
        println!(
            "{:<8} obs dims {:?}  final group utility {:9.2}  eval {:9.2}",
            mode.name(),
            s.observation_dims,
            s.final_group_utility,
            s.eval_group_utility.unwrap_or(f64::NAN)
        );
        dirs.push(out.dir);
    }
    emit_plots(&dirs, &root.join("plots"))?;
    println!("plots in {}", root.join("plots").display());
    Ok(())
}
