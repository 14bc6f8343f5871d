use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spatial_traffic::equilibrium::{
    check_unilateral_deviation, is_stable, nash_feasibility_frontier, CyclicPolicy, DeterministicInstance,
};
use spatial_traffic::experiment::{
    emit_plots, load_config, preset_names, run_baseline, run_experiment, run_sweep, BaselinePolicy, ExperimentConfig,
    OUTPUT_ROOT_ENV,
};
use spatial_traffic::gradcheck::{check_random_networks, DEFAULT_TOLERANCE};
use spatial_traffic::{Error, Result};

/// Traffic-signal learning experiments on grid road networks.
#[derive(Parser)]
#[command(name = "trafficlab", version, after_help = format!("Set {OUTPUT_ROOT_ENV} to redirect every run directory."))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one DDPG learner per intersection.
    Train {
        /// JSON config file or preset name.
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a hand-coded policy: fixed:<k>, fixed:inf, random:<p> or always.
    Baseline {
        /// JSON config file or preset name.
        config: PathBuf,
        #[arg(long)]
        policy: BaselinePolicy,
    },
    /// Train once per value of a dotted config key.
    Sweep {
        /// JSON config file or preset name.
        config: PathBuf,
        #[arg(long)]
        key: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Periodic-plan stability, unilateral deviations and the feasibility frontier.
    Equilibrium {
        /// Arrivals per step on every entry.
        #[arg(long)]
        c: f64,
        /// Departures per green step.
        #[arg(long)]
        d: f64,
        #[arg(long, default_value_t = 8)]
        pmax: usize,
        #[arg(long, default_value_t = 2)]
        intersections: usize,
        /// Joint plan to test for deviations, one bit string per intersection.
        #[arg(long, value_delimiter = ',')]
        plan: Vec<String>,
        /// Directory for frontier.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        networks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render SVG figures from run or sweep directories.
    Plot {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig> {
    let cfg = match path.to_str() {
        Some(name) if !path.exists() && preset_names().any(|p| p == name) => ExperimentConfig::preset(name)?,
        _ => load_config(path)?,
    };
    eprintln!("config {} resolved:\n{}", path.display(), serde_json::to_string_pretty(&cfg.resolved())?);
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out = run_experiment(&cfg)?;
            let s = &out.summary;
            println!("run {}", out.dir.display());
            println!("final group utility ({} episodes): {:.3}", s.final_window, s.final_group_utility);
            if let Some(e) = s.eval_group_utility {
                println!("greedy eval group utility: {e:.3}");
            }
            for b in &s.baselines {
                println!("vs {}: {:.3} (delta {:+.3})", b.policy, b.final_group_utility, b.delta_final);
            }
            println!("actor saturation: {:.3}", s.saturation);
        }
        Command::Baseline { config, policy } => {
            let out = run_baseline(&load(&config)?, policy)?;
            println!("run {}", out.dir.display());
            println!("final group utility: {:.3}", out.summary.final_group_utility);
            if let Some(e) = out.summary.eval_group_utility {
                println!("eval group utility: {e:.3}");
            }
        }
        Command::Sweep { config, key, values } => {
            let out = run_sweep(&load(&config)?, &key, &values)?;
            println!("sweep {}", out.dir.display());
            for r in &out.rows {
                println!("{}={}: final group utility {:.3}", r.key, r.value, r.final_group_utility);
            }
        }
        Command::Equilibrium {
            c,
            d,
            pmax,
            intersections,
            plan,
            out,
        } => equilibrium(c, d, pmax, intersections, plan, out)?,
        Command::Gradcheck { networks, seed } => {
            let checks = check_random_networks(networks, seed)?;
            let mut failed = 0;
            for (i, c) in checks.iter().enumerate() {
                let ok = c.max_error() < DEFAULT_TOLERANCE;
                failed += usize::from(!ok);
                println!(
                    "net {i:2} {:?} {}: params {:.2e}, inputs {:.2e} {}",
                    c.layer_sizes,
                    c.output,
                    c.max_param_error,
                    c.max_input_error,
                    if ok { "ok" } else { "FAIL" }
                );
            }
            if failed > 0 {
                return Err(Error::Metrics(format!("{failed} of {networks} networks exceed {DEFAULT_TOLERANCE:e}")));
            }
            println!("all {networks} networks within {DEFAULT_TOLERANCE:e}");
        }
        Command::Plot { runs, out } => {
            let out = out.unwrap_or_else(|| runs[0].join("plots"));
            for p in emit_plots(&runs, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn equilibrium(c: f64, d: f64, pmax: usize, intersections: usize, plan: Vec<String>, out: Option<PathBuf>) -> Result<()> {
    let inst = DeterministicInstance::new(intersections, c, d)?;
    println!("c = {c}, d = {d}, c/d = {:.4}, {intersections} intersection(s)", c / d);

    let single = inst.with_arrival(c)?;
    let all_ones = CyclicPolicy::always_switch();
    let r = is_stable(&single, &all_ones)?;
    println!(
        "always-switch plan: {} (drift per period {:+.4}, {:+.4})",
        if r.stable { "stable" } else { "unstable" },
        r.flows[0].drift,
        r.flows[1].drift
    );

    let joint = if plan.is_empty() {
        vec![all_ones; intersections]
    } else {
        plan.iter()
            .map(|s| {
                s.parse().map_err(|reason| Error::InvalidConfig {
                    key: "plan".into(),
                    reason,
                })
            })
            .collect::<Result<Vec<CyclicPolicy>>>()?
    };
    let dev = check_unilateral_deviation(&inst, &joint, pmax)?;
    let names: Vec<String> = joint.iter().map(|p| p.to_string()).collect();
    println!(
        "joint plan [{}]: average utility {:.4}, {} of {} deviations (P <= {pmax}) improve",
        names.join(", "),
        dev.baseline.average_utility,
        dev.improving(),
        dev.evaluated()
    );
    for a in &dev.agents {
        if let Some(b) = &a.best {
            println!("  agent {}: best deviation {} ({:+.4})", a.agent, b.policy, b.improvement);
        }
    }

    let frontier = nash_feasibility_frontier(&inst, pmax)?;
    println!("period  max c/d  plan  verified");
    for row in &frontier {
        println!("{:>6}  {:>7.4}  {}  {}", row.period, row.threshold, row.policy, row.verified);
    }
    let dir = out.unwrap_or_else(|| {
        std::env::var_os(OUTPUT_ROOT_ENV)
            .filter(|r| !r.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join("equilibrium")
    });
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join("frontier.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Metrics(format!("{}: {e}", path.display())))?;
    for row in &frontier {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
