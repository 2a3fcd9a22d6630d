//! Experiment execution and export.
//!
//! `run_experiment` turns a validated scenario into a `RunReport`: energy
//! and counters for every node plus, for the adaptive protocol, the full
//! interval history, the register traces, and a convergence verdict per
//! transmitter. Reports serialize to a single JSON document or to one CSV
//! file per trace kind; the same scenario and seed always produce the same
//! bytes.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::adaptive::TsrRegister;
use crate::convergence::detect_convergence;
use crate::energy::{RadioState, REPORTED_STATES};
use crate::engine::{ChannelStats, Engine, EngineError, SimOutput};
use crate::mac::{CounterKey, NodeId};
use crate::scenario::{Protocol, Scenario, ScenarioError};
use crate::time::SimTime;
use crate::traffic::arrival_times;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },
}

impl ExportError {
    fn at(path: &Path, err: impl std::fmt::Display) -> Self {
        ExportError::Write { path: path.to_path_buf(), message: err.to_string() }
    }
}

/// Per-state residency and cost for one node, one row per radio state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub state: RadioState,
    pub time_ms: f64,
    pub energy_mj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub node_id: u32,
    pub energy: Vec<EnergyRow>,
    pub counters: BTreeMap<CounterKey, u64>,
}

/// One receiver wake-up aimed at `node_id`, with the interval in force
/// after the update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub wakeup_index: u64,
    pub sim_time_s: f64,
    pub node_id: u32,
    pub i_wu_ms: f64,
    pub hit: bool,
}

/// The register history for one transmitter: the starting pattern and the
/// bit each wake-up shifted in (1 = data arrived).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsrTrace {
    pub node_id: u32,
    pub initial_bits: Vec<u8>,
    pub hits: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub node_id: u32,
    /// First index of the quiet stretch, if the history settled.
    pub converged_at_index: Option<usize>,
    /// Wake-ups spent before the interval was demonstrably steady.
    pub wakeups_to_convergence: Option<usize>,
    pub final_interval_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub seed: u64,
    pub nodes: Vec<NodeReport>,
    pub intervals: Vec<IntervalRecord>,
    pub tsr_traces: Vec<TsrTrace>,
    pub convergence: Vec<ConvergenceRecord>,
    pub channel: ChannelStats,
}

impl RunReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn from_json_str(doc: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(doc)
    }
}

/// Runs one scenario to completion and assembles its report.
pub fn run_experiment(scenario: &Scenario) -> Result<RunReport, RunError> {
    scenario.validate()?;
    let mut engine = Engine::new(scenario.radio, scenario.topology(), scenario.build_macs());
    let hub = NodeId(0);
    for node in 1..=scenario.n_transmitters {
        let node = NodeId(node);
        for t in arrival_times(&scenario.traffic, scenario.seed, node, scenario.horizon_s) {
            engine.schedule_upper_data(
                SimTime::from_secs_f64(t),
                node,
                hub,
                scenario.traffic.data_bytes,
            );
        }
    }
    let out = engine.run(SimTime::from_secs_f64(scenario.horizon_s))?;
    Ok(assemble(scenario, out))
}

fn assemble(scenario: &Scenario, out: SimOutput) -> RunReport {
    let nodes = out
        .ledgers
        .iter()
        .zip(&out.counters)
        .enumerate()
        .map(|(id, (ledger, counters))| NodeReport {
            node_id: id as u32,
            energy: REPORTED_STATES
                .iter()
                .map(|&state| EnergyRow {
                    state,
                    time_ms: ledger.time_in(state).as_millis_f64(),
                    energy_mj: ledger.energy_mj(state, &scenario.power),
                })
                .collect(),
            counters: counters.clone(),
        })
        .collect();

    let intervals: Vec<IntervalRecord> = out
        .samples
        .iter()
        .map(|s| IntervalRecord {
            wakeup_index: s.index,
            sim_time_s: s.at.as_secs_f64(),
            node_id: s.neighbor.0,
            i_wu_ms: s.i_wu_s * 1e3,
            hit: s.hit,
        })
        .collect();

    let mut tsr_traces = Vec::new();
    let mut convergence = Vec::new();
    if scenario.protocol == Protocol::Tadmac {
        let initial_bits = TsrRegister::new(scenario.tadmac.tsr_len, scenario.tadmac.tsr_init)
            .expect("scenario was validated")
            .bits()
            .to_vec();
        for node in 1..=scenario.n_transmitters {
            let per_node: Vec<&IntervalRecord> =
                intervals.iter().filter(|r| r.node_id == node).collect();
            tsr_traces.push(TsrTrace {
                node_id: node,
                initial_bits: initial_bits.clone(),
                hits: per_node.iter().map(|r| u8::from(r.hit)).collect(),
            });
            let history: Vec<f64> = per_node.iter().map(|r| r.i_wu_ms * 1e-3).collect();
            let converged_at_index = detect_convergence(&history, &scenario.convergence);
            convergence.push(ConvergenceRecord {
                node_id: node,
                converged_at_index,
                wakeups_to_convergence: converged_at_index
                    .map(|i| i + scenario.convergence.window),
                final_interval_ms: history
                    .last()
                    .map_or(scenario.tadmac.initial_interval_s * 1e3, |v| v * 1e3),
            });
        }
    }

    RunReport {
        scenario: scenario.clone(),
        seed: scenario.seed,
        nodes,
        intervals,
        tsr_traces,
        convergence,
        channel: out.channel,
    }
}

/// Runs the same scenario once per seed, in parallel. Reports come back in
/// seed order regardless of thread count.
pub fn run_batch(scenario: &Scenario, seeds: &[u64]) -> Result<Vec<RunReport>, RunError> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut per_seed = scenario.clone();
            per_seed.seed = seed;
            run_experiment(&per_seed)
        })
        .collect()
}

/// One cell of a parameter sweep over the adaptive protocol's knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub initial_interval_ms: f64,
    pub alpha: f64,
    pub tsr_len: usize,
    pub node_id: u32,
    pub wakeups_to_convergence: Option<usize>,
    pub final_interval_ms: f64,
}

/// Value grids for the sweep; an empty grid keeps the scenario's value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepGrid {
    pub initial_interval_s: Vec<f64>,
    pub alpha: Vec<f64>,
    pub tsr_len: Vec<usize>,
}

/// Runs the cross product of the grid, one experiment per cell, in
/// parallel. Rows come back in grid order, transmitters in id order.
pub fn run_sweep(scenario: &Scenario, grid: &SweepGrid) -> Result<Vec<SweepRow>, RunError> {
    let initials = if grid.initial_interval_s.is_empty() {
        vec![scenario.tadmac.initial_interval_s]
    } else {
        grid.initial_interval_s.clone()
    };
    let alphas =
        if grid.alpha.is_empty() { vec![scenario.tadmac.alpha] } else { grid.alpha.clone() };
    let lens =
        if grid.tsr_len.is_empty() { vec![scenario.tadmac.tsr_len] } else { grid.tsr_len.clone() };

    let mut cells = Vec::new();
    for &initial in &initials {
        for &alpha in &alphas {
            for &len in &lens {
                cells.push((initial, alpha, len));
            }
        }
    }

    let nested: Vec<Vec<SweepRow>> = cells
        .par_iter()
        .map(|&(initial, alpha, len)| {
            let mut cell = scenario.clone();
            cell.tadmac.initial_interval_s = initial;
            cell.tadmac.alpha = alpha;
            cell.tadmac.tsr_len = len;
            let report = run_experiment(&cell)?;
            Ok(report
                .convergence
                .iter()
                .map(|c| SweepRow {
                    initial_interval_ms: initial * 1e3,
                    alpha,
                    tsr_len: len,
                    node_id: c.node_id,
                    wakeups_to_convergence: c.wakeups_to_convergence,
                    final_interval_ms: c.final_interval_ms,
                })
                .collect())
        })
        .collect::<Result<_, RunError>>()?;
    Ok(nested.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

/// Writes the report under `dir`: `report.json` for JSON, or
/// `intervals.csv`, `energy.csv`, and `counters.csv` for CSV. Returns the
/// paths written.
pub fn export_report(
    report: &RunReport,
    format: ExportFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>, ExportError> {
    std::fs::create_dir_all(dir).map_err(|e| ExportError::at(dir, e))?;
    match format {
        ExportFormat::Json => {
            let path = dir.join("report.json");
            let mut file = std::fs::File::create(&path).map_err(|e| ExportError::at(&path, e))?;
            file.write_all(report.to_json_string().as_bytes())
                .and_then(|()| file.write_all(b"\n"))
                .map_err(|e| ExportError::at(&path, e))?;
            Ok(vec![path])
        }
        ExportFormat::Csv => {
            let intervals = dir.join("intervals.csv");
            write_intervals_csv(report, &intervals)?;
            let energy = dir.join("energy.csv");
            write_energy_csv(report, &energy)?;
            let counters = dir.join("counters.csv");
            write_counters_csv(report, &counters)?;
            Ok(vec![intervals, energy, counters])
        }
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, ExportError> {
    let file = std::fs::File::create(path).map_err(|e| ExportError::at(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_intervals_csv(report: &RunReport, path: &Path) -> Result<(), ExportError> {
    let mut w = csv_writer(path)?;
    w.write_record(["wakeup_index", "sim_time", "node_id", "i_wu_ms"])
        .map_err(|e| ExportError::at(path, e))?;
    for r in &report.intervals {
        w.serialize((r.wakeup_index, r.sim_time_s, r.node_id, r.i_wu_ms))
            .map_err(|e| ExportError::at(path, e))?;
    }
    w.flush().map_err(|e| ExportError::at(path, e))
}

fn write_energy_csv(report: &RunReport, path: &Path) -> Result<(), ExportError> {
    let mut w = csv_writer(path)?;
    w.write_record(["node_id", "state", "time_ms", "energy_mj"])
        .map_err(|e| ExportError::at(path, e))?;
    for node in &report.nodes {
        for row in &node.energy {
            w.serialize((node.node_id, row.state, row.time_ms, row.energy_mj))
                .map_err(|e| ExportError::at(path, e))?;
        }
    }
    w.flush().map_err(|e| ExportError::at(path, e))
}

fn write_counters_csv(report: &RunReport, path: &Path) -> Result<(), ExportError> {
    let mut w = csv_writer(path)?;
    w.write_record(["node_id", "counter", "value"]).map_err(|e| ExportError::at(path, e))?;
    for node in &report.nodes {
        for (key, value) in &node.counters {
            w.serialize((node.node_id, key, value)).map_err(|e| ExportError::at(path, e))?;
        }
    }
    w.flush().map_err(|e| ExportError::at(path, e))
}
