//! Print the influence graph of every mode on a grid, with observation sizes.
//!
//! cargo run --example influence_graphs -- [rows] [cols]

use spatial_traffic::influence::{InfluenceGraph, InfluenceMode};
use spatial_traffic::traffic::GridTopology;

fn main() -> spatial_traffic::Result<()> {
    let mut args = std::env::args().skip(1);
    let rows = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let cols = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let topo = GridTopology::new(rows, cols)?;
    let center = (rows % 2 == 0 || cols % 2 == 0).then_some((rows / 2, cols / 2));

    for mode in InfluenceMode::ALL {
        let g = InfluenceGraph::build(&topo, mode, center)?;
        println!("{mode}: {} edges", g.edges().len());
        for r in 0..rows {
            let line: Vec<String> = (0..cols)
                .map(|c| format!("{}", g.in_degree(topo.index(r, c))))
                .collect();
            println!("  in-degree  {}", line.join(" "));
        }
        for &(from, to) in g.edges() {
            println!("  {:?} -> {:?}", topo.coords(from), topo.coords(to));
        }
        println!("  observation dims {:?}", (0..topo.len()).map(|n| g.observation_dim(n)).collect::<Vec<_>>());
    }
    Ok(())
}
