use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use urbansim_core::{parse_scenario, run_scenario, MetricsSummary, PacketStatus, RunOptions};

#[derive(Parser)]
#[command(name = "urbansim", version, about = "Discrete-event simulator for multipath QoS routing in MANETs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, value_enum, default_value = "on")]
        trace: Toggle,
        #[arg(long)]
        quiet: bool,
    },
    /// Run a scenario under several seeds in parallel, one subdirectory each.
    Sweep {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds, or an inclusive range like `1..10`.
        #[arg(long, default_value = "1..5")]
        seeds: String,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, value_enum, default_value = "off")]
        trace: Toggle,
    },
    /// Parse and validate a scenario without running it.
    Check { scenario: PathBuf },
}

fn parse_seeds(s: &str) -> Option<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (a.trim().parse::<u64>().ok()?, b.trim().parse::<u64>().ok()?);
        return (a <= b).then(|| (a..=b).collect());
    }
    s.split(',').map(|x| x.trim().parse().ok()).collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn print_summary(s: &MetricsSummary) {
    println!("generated          {}", s.generated);
    for status in PacketStatus::ALL {
        println!("{:<18} {}", status.as_str(), s.count(status));
    }
    println!("delivery_ratio     {}", fmt_opt(s.delivery_ratio));
    println!("deadline_miss      {}", fmt_opt(s.deadline_miss_ratio));
    println!("mean_delay_s       {}", fmt_opt(s.mean_delay_s));
    println!("p95_delay_s        {}", fmt_opt(s.p95_delay_s));
    println!("control_overhead   {}", fmt_opt(s.control_overhead));
    println!("discoveries        {}", s.discoveries_initiated);
    println!("mean_paths         {}", fmt_opt(s.mean_disjoint_paths));
    let dead = s.nodes.iter().filter(|n| n.death_time.is_some()).count();
    println!("depleted_nodes     {dead}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Check { scenario } => match parse_scenario(&scenario) {
            Ok(_) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Command::Run { scenario, out, seed, duration, trace, quiet } => {
            let cfg = match parse_scenario(&scenario) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(e.exit_code() as u8);
                }
            };
            let opts = RunOptions { out_dir: out, trace: matches!(trace, Toggle::On), seed, duration };
            match run_scenario(cfg, &opts) {
                Ok(s) => {
                    if !quiet {
                        print_summary(&s);
                    }
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
        Command::Sweep { scenario, out, seeds, duration, trace } => {
            let Some(seeds) = parse_seeds(&seeds) else {
                eprintln!("error: invalid --seeds value `{seeds}`");
                return ExitCode::from(2);
            };
            let cfg = match parse_scenario(&scenario) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(e.exit_code() as u8);
                }
            };
            let results: Vec<_> = seeds
                .par_iter()
                .map(|&seed| {
                    let opts = RunOptions {
                        out_dir: out.join(format!("seed-{seed}")),
                        trace: matches!(trace, Toggle::On),
                        seed: Some(seed),
                        duration,
                    };
                    (seed, run_scenario(cfg.clone(), &opts))
                })
                .collect();
            println!("seed,generated,delivery_ratio,deadline_miss_ratio,mean_delay_s,control_overhead");
            let mut code = 0;
            for (seed, r) in results {
                match r {
                    Ok(s) => println!(
                        "{seed},{},{},{},{},{}",
                        s.generated,
                        fmt_opt(s.delivery_ratio),
                        fmt_opt(s.deadline_miss_ratio),
                        fmt_opt(s.mean_delay_s),
                        fmt_opt(s.control_overhead)
                    ),
                    Err(e) => {
                        eprintln!("error: seed {seed}: {e}");
                        code = code.max(e.exit_code());
                    }
                }
            }
            code
        }
    };
    ExitCode::from(code as u8)
}
