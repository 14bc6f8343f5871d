//! Periodic signal plans on the deterministic fluid model: stability,
//! unilateral deviations and the best stabilizable load per cycle length.
//!
//! cargo run --release --example equilibrium_report -- [c] [d] [pmax]

use spatial_traffic::equilibrium::{
    check_unilateral_deviation, enumerate_policies, is_stable, nash_feasibility_frontier, CyclicPolicy,
    DeterministicInstance,
};

fn main() -> spatial_traffic::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<f64>().ok());
    let c = args.next().flatten().unwrap_or(1.0);
    let d = args.next().flatten().unwrap_or(4.0);
    let pmax = args.next().flatten().unwrap_or(8.0) as usize;

    let single = DeterministicInstance::single(c, d)?;
    let plans = enumerate_policies(pmax)?;
    let stable: Vec<String> = plans
        .iter()
        .filter(|p| is_stable(&single, p).map(|r| r.stable).unwrap_or(false))
        .map(|p| p.to_string())
        .collect();
    println!("{} of {} plans (P <= {pmax}) are stable at c/d = {}", stable.len(), plans.len(), c / d);
    println!("  {}", stable.join(" "));

    let pair = DeterministicInstance::pair(c, d)?;
    let report = check_unilateral_deviation(&pair, &vec![CyclicPolicy::always_switch(); 2], pmax)?;
    println!(
        "always-switch pair: utility {:.3}, {} of {} deviations improve",
        report.baseline.average_utility,
        report.improving(),
        report.evaluated()
    );

    println!("cycle  max c/d  plan");
    for row in nash_feasibility_frontier(&pair, pmax)? {
        println!("{:5}  {:7.4}  {}", row.period, row.threshold, row.policy);
    }
    Ok(())
}
