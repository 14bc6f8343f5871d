//! Train one learner on a single intersection and compare it to the
//! hand-coded baselines on the same arrivals.
//!
//! cargo run --release --example train_single_intersection -- [episodes] [seed]

use spatial_traffic::experiment::{evaluate_baseline, run_experiment_in, BaselinePolicy, ExperimentConfig};

fn main() -> spatial_traffic::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = ExperimentConfig::preset("single-desk")?;
    if let Some(e) = args.next().and_then(|s| s.parse().ok()) {
        cfg.episodes = e;
    }
    if let Some(s) = args.next().and_then(|s| s.parse().ok()) {
        cfg.seed = s;
    }
    cfg.eval_episodes = 10;
    let dir = std::env::temp_dir().join("trafficlab-single");
    let out = run_experiment_in(&cfg, &dir)?;

    let u = &out.summary.episode_group_utility;
    for (e, chunk) in u.chunks(10).enumerate() {
        println!("episodes {:3}-{:3}: {:8.2}", e * 10, e * 10 + chunk.len() - 1, chunk.iter().sum::<f64>() / chunk.len() as f64);
    }
    println!("greedy evaluation: {:.2}", out.summary.eval_group_utility.unwrap_or(f64::NAN));
    for p in ["random:0.5", "always", "fixed:2", "fixed:4"] {
        let policy: BaselinePolicy = p.parse()?;
        let e = evaluate_baseline(&cfg, policy)?;
        println!("{p:<11} {:.2}", e.iter().map(|s| s.group_utility).sum::<f64>() / e.len() as f64);
    }
    println!("run directory {}", out.dir.display());
    Ok(())
}
