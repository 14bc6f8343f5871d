//! Backprop against central finite differences on random small networks.

use spatial_traffic::gradcheck::{check_random_networks, DEFAULT_TOLERANCE};

fn main() -> spatial_traffic::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let checks = check_random_networks(n, 0)?;
    for c in &checks {
        println!("{:?} {:<40} worst {:.2e}", c.layer_sizes, c.output, c.max_error());
    }
    let worst = checks.iter().map(|c| c.max_error()).fold(0.0, f64::max);
    println!("worst relative error {worst:.2e} (tolerance {DEFAULT_TOLERANCE:e})");
    Ok(())
}
