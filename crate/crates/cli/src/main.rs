//! Experiment harness for the duty-cycled MAC simulator.
//!
//! `run` executes one scenario, `batch` repeats it across seeds, `sweep`
//! grids over the adaptive protocol's knobs, and `report` re-renders
//! exports from a stored JSON report.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dutymac_core::mac::CounterKey;
use dutymac_core::report::{
    export_report, run_batch, run_experiment, run_sweep, ExportFormat, RunReport, SweepGrid,
};
use dutymac_core::scenario::{Protocol, Scenario};

#[derive(Parser)]
#[command(name = "dutymac", version, about = "Duty-cycled wireless MAC simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and export its report.
    Run {
        /// Scenario configuration file (TOML).
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run one scenario once per seed and summarize each run.
    Batch {
        scenario: PathBuf,
        /// First seed of the range.
        #[arg(long, default_value_t = 1)]
        seed_start: u64,
        /// Number of consecutive seeds.
        #[arg(long, default_value_t = 100)]
        seed_count: u64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Grid over initial interval, alpha, and register length.
    Sweep {
        scenario: PathBuf,
        /// Initial wake-up intervals to try, in ms.
        #[arg(long, value_delimiter = ',')]
        initial_ms: Vec<f64>,
        /// Smoothing weights to try.
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
        /// Register lengths to try.
        #[arg(long, value_delimiter = ',')]
        tsr_len: Vec<usize>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Re-render exports from a stored JSON report.
    Report {
        /// A report.json produced by `run`.
        report: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> ExportFormat {
        match f {
            Format::Json => ExportFormat::Json,
            Format::Csv => ExportFormat::Csv,
        }
    }
}

fn main() {
    if let Err(err) = dispatch(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { scenario, seed, out_dir, format } => {
            let mut scenario = Scenario::load(&scenario)?;
            if let Some(seed) = seed {
                scenario.seed = seed;
            }
            let report = run_experiment(&scenario)?;
            print_run_summary(&report);
            let written = export_report(&report, format.into(), &out_dir)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Batch { scenario, seed_start, seed_count, out_dir, threads } => {
            if seed_count == 0 {
                bail!("seed_count must be at least 1");
            }
            let scenario = Scenario::load(&scenario)?;
            let seeds: Vec<u64> = (seed_start..seed_start + seed_count).collect();
            let reports = in_pool(threads, || run_batch(&scenario, &seeds))??;
            let path = out_dir.join("batch.csv");
            write_batch_csv(&reports, &path)?;
            println!("{} runs complete", reports.len());
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Sweep { scenario, initial_ms, alpha, tsr_len, out_dir, threads } => {
            let scenario = Scenario::load(&scenario)?;
            if scenario.protocol != Protocol::Tadmac {
                bail!("sweep varies adaptive parameters; the scenario must select tadmac");
            }
            let grid = SweepGrid {
                initial_interval_s: initial_ms.iter().map(|ms| ms * 1e-3).collect(),
                alpha,
                tsr_len,
            };
            let rows = in_pool(threads, || run_sweep(&scenario, &grid))??;
            let path = out_dir.join("sweep.csv");
            write_sweep_csv(&rows, &path)?;
            println!("{} sweep rows", rows.len());
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Report { report, out_dir, format } => {
            let doc = std::fs::read_to_string(&report)
                .with_context(|| format!("cannot read {}", report.display()))?;
            let report: RunReport = RunReport::from_json_str(&doc)
                .with_context(|| format!("cannot parse {}", report.display()))?;
            let written = export_report(&report, format.into(), &out_dir)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn in_pool<T: Send>(threads: Option<usize>, work: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(work()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("cannot build worker pool")?;
            Ok(pool.install(work))
        }
    }
}

fn print_run_summary(report: &RunReport) {
    let scenario = &report.scenario;
    println!(
        "{} | {} transmitters | seed {} | {} s simulated",
        scenario.protocol, scenario.n_transmitters, report.seed, scenario.horizon_s
    );
    for node in &report.nodes {
        let total: f64 = node.energy.iter().map(|r| r.energy_mj).sum();
        println!("node {}: {:.3} mJ total", node.node_id, total);
    }
    for c in &report.convergence {
        match c.wakeups_to_convergence {
            Some(n) => println!(
                "node {}: settled at {:.3} ms after {} wakeups",
                c.node_id, c.final_interval_ms, n
            ),
            None => println!("node {}: did not settle", c.node_id),
        }
    }
    println!(
        "channel: {} sent, {} delivered, {} collision pairs",
        report.channel.sent, report.channel.delivered, report.channel.collision_pairs
    );
}

fn counter(report: &RunReport, node: usize, key: CounterKey) -> u64 {
    report.nodes[node].counters.get(&key).copied().unwrap_or(0)
}

fn write_batch_csv(reports: &[RunReport], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record([
        "seed",
        "node_id",
        "total_energy_mj",
        "data_generated",
        "data_received",
        "queue_drops",
        "wakeups_to_convergence",
        "final_interval_ms",
    ])?;
    for report in reports {
        for (i, node) in report.nodes.iter().enumerate() {
            let total: f64 = node.energy.iter().map(|r| r.energy_mj).sum();
            let convergence = report.convergence.iter().find(|c| c.node_id == node.node_id);
            w.serialize((
                report.seed,
                node.node_id,
                total,
                counter(report, i, CounterKey::DataGenerated),
                counter(report, i, CounterKey::DataReceived),
                counter(report, i, CounterKey::QueueDrops),
                convergence.and_then(|c| c.wakeups_to_convergence),
                convergence.map(|c| c.final_interval_ms),
            ))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_sweep_csv(rows: &[dutymac_core::report::SweepRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record([
        "initial_interval_ms",
        "alpha",
        "tsr_len",
        "node_id",
        "wakeups_to_convergence",
        "final_interval_ms",
    ])?;
    for row in rows {
        w.serialize((
            row.initial_interval_ms,
            row.alpha,
            row.tsr_len,
            row.node_id,
            row.wakeups_to_convergence,
            row.final_interval_ms,
        ))?;
    }
    w.flush()?;
    Ok(())
}
