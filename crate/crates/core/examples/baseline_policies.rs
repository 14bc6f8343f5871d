//! Hand-coded signal policies on the 3x3 grid, all on one arrival stream.

use spatial_traffic::experiment::{evaluate_baseline, BaselinePolicy, ExperimentConfig};

fn main() -> spatial_traffic::Result<()> {
    let mut cfg = ExperimentConfig::preset("grid3x3-desk")?;
    cfg.eval_episodes = 5;
    for p in ["always", "fixed:2", "fixed:3", "fixed:6", "random:0.3", "random:0.5", "random:0.8", "fixed:inf"] {
        let policy: BaselinePolicy = p.parse()?;
        let stats = evaluate_baseline(&cfg, policy)?;
        let mean = stats.iter().map(|s| s.group_utility).sum::<f64>() / stats.len() as f64;
        let worst = stats[0].congestion.iter().copied().fold(0.0, f64::max);
        println!("{p:<11} group utility {mean:12.1}   worst intersection {worst:10.1}");
    }
    Ok(())
}
