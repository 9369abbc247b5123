//! `fhefl`: parameter reports, simulations, benchmarks and bound checks.

mod bench;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fhefl_core::he::HeParams;
use fhefl_core::sim::{
    metrics_csv, timings_csv, write_atomic, AggregateSummary, BoundReport, ExperimentConfig, Mode, Simulation,
};
use fhefl_core::Error;

#[derive(Parser)]
#[command(name = "fhefl", version, about = "Encrypted robust federated learning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the parameter report of a preset.
    Params {
        #[arg(value_name = "PRESET", required_unless_present = "preset")]
        name: Option<String>,
        #[arg(long, value_name = "NAME", conflicts_with = "name")]
        preset: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Run a simulation described by a JSON config.
    Simulate {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
        /// Replaces the config's seed list; repeatable.
        #[arg(long = "seed", value_name = "N")]
        seeds: Vec<u64>,
        #[arg(long, value_parser = ["plain", "encrypted"])]
        mode: Option<String>,
        #[arg(long, value_name = "NAME")]
        aggregator: Option<String>,
        #[arg(long, value_name = "NAME")]
        preset: Option<String>,
        #[arg(long)]
        override_attacker_cap: bool,
        #[arg(long)]
        quiet: bool,
    },
    /// Time encrypt, add, mult+relin and a full secure round.
    Bench {
        #[arg(long, value_name = "NAME", default_value = "test-1024")]
        preset: String,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        reps: u64,
        #[arg(long, default_value_t = 1)]
        round_reps: u64,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(2..))]
        users: u32,
    },
    /// Evaluate the malicious-weight bound for given role counts.
    CheckBound {
        #[arg(long = "b", value_name = "B")]
        benign: usize,
        #[arg(long = "m", value_name = "M")]
        malicious: usize,
        #[arg(long, value_name = "G2")]
        gsq: f64,
        #[arg(long, value_name = "Z2", default_value_t = 0.0)]
        zsq: f64,
    },
}

/// Exit 2 for usage and configuration problems, 1 for runtime failures.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::UnknownPreset(_) | Error::Parse { .. } => 2,
            _ => 1,
        };
        Failure {
            code,
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

fn usage(error: Error) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

fn params(name: &str, json: bool) -> Result<(), Failure> {
    let report = HeParams::preset(name)?.report();
    if json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?);
        return Ok(());
    }
    let chain: Vec<String> = report.chain_bits.iter().map(u32::to_string).collect();
    println!("preset      {}", report.name);
    println!("N           {}", report.degree);
    println!("logq        {}", report.log_q);
    println!("chain_bits  {}", chain.join(","));
    if let Some(p) = report.special_bits {
        println!("special     {p}");
    }
    println!("delta_bits  {}", report.scale_bits);
    println!("L           {}", report.levels);
    println!("slots       {}", report.slots);
    println!("security    {}", report.security);
    Ok(())
}

struct Overrides {
    seeds: Vec<u64>,
    mode: Option<String>,
    aggregator: Option<String>,
    preset: Option<String>,
    override_attacker_cap: bool,
}

fn load_config(path: &Path, o: Overrides) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::read(path)?;
    if !o.seeds.is_empty() {
        cfg.seeds = o.seeds;
    }
    if let Some(m) = o.mode {
        cfg.mode = if m == "encrypted" { Mode::Encrypted } else { Mode::Plain };
    }
    if let Some(a) = o.aggregator {
        cfg.aggregator = a;
    }
    if let Some(p) = o.preset {
        cfg.preset = p;
    }
    cfg.override_attacker_cap |= o.override_attacker_cap;
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(cfg: &ExperimentConfig, out: &Path, quiet: bool) -> Result<(), Failure> {
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let mut sim = Simulation::new(cfg, seed)?;
        let (metrics, summary) = sim.run(|m| {
            if !quiet {
                eprintln!(
                    "seed {seed} round {:>4}/{} accuracy {:.4} aasr {:.4}",
                    m.epoch + 1,
                    cfg.rounds,
                    m.accuracy,
                    m.aasr
                );
            }
        })?;
        write_atomic(&out.join(format!("metrics_seed{seed}.csv")), metrics_csv(&metrics).as_bytes())?;
        write_atomic(&out.join(format!("timings_seed{seed}.csv")), timings_csv(&metrics).as_bytes())?;
        runs.push(summary);
    }
    let summary = AggregateSummary::new(runs);
    let json = serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)?;
    write_atomic(&out.join("summary.json"), json.as_bytes())?;
    println!(
        "{} seed(s): mean final accuracy {:.4}, mean AASR {:.4}; wrote {}",
        summary.seeds.len(),
        summary.mean_final_accuracy,
        summary.mean_aasr,
        out.display()
    );
    Ok(())
}

fn check_bound(b: usize, m: usize, gsq: f64, zsq: f64) -> Result<(), Failure> {
    let report = BoundReport::new(b, m, gsq, zsq).map_err(usage)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?);
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("FHEFL_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| usage(Error::Config(format!("FHEFL_THREADS={v} is not a positive integer"))))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(anyhow::Error::from)?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Params { name, preset, json } => params(&name.or(preset).unwrap_or_default(), json),
        Command::Simulate {
            config,
            out,
            seeds,
            mode,
            aggregator,
            preset,
            override_attacker_cap,
            quiet,
        } => {
            let cfg = load_config(
                &config,
                Overrides {
                    seeds,
                    mode,
                    aggregator,
                    preset,
                    override_attacker_cap,
                },
            )?;
            simulate(&cfg, &out, quiet)
        }
        Command::Bench {
            preset,
            reps,
            round_reps,
            users,
        } => {
            let params = HeParams::preset(&preset)?;
            let rows = bench::run(&params, reps as usize, round_reps as usize, users)?;
            print!("{}", bench::render(&rows));
            Ok(())
        }
        Command::CheckBound {
            benign,
            malicious,
            gsq,
            zsq,
        } => check_bound(benign, malicious, gsq, zsq),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
