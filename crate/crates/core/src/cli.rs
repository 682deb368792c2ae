//! Command-line front end: argument parsing, worker pool setup, and the
//! experiment dispatcher that writes the output directory.
//!
//! Output files (all under `--out`):
//!
//! | experiment   | files                                                            |
//! |--------------|------------------------------------------------------------------|
//! | simulate     | `observables.jsonl`, `snapshot_rNNNN.bin`, `ledger.csv` (opt.)   |
//! | coupling     | `coupling.csv`, `coupling_summary.json`                          |
//! | lyapunov     | `lyapunov.csv`, `lyapunov_summary.json`                          |
//! | exit-times   | `exit_times.csv`, `exit_times_summary.json`                      |
//! | check-drift  | `assumptions.json` (table also printed to stdout)                |
//!
//! plus `manifest.json`, written before any data and rewritten on success.

use std::path::{Path, PathBuf};

use clap::Parser;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{parse_config, ExperimentKind, Resolved};
use crate::drift::check_assumptions;
use crate::error::{Error, Result};
use crate::experiments::{run_coupling, run_exit_times, run_lyapunov};
use crate::integrator::{energy_residual, step_count, Observables, SimState, Stepper};
use crate::io::{write_json, write_snapshot, DataFile, Manifest};
use crate::noise::replica_rng;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "RSHE_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "rshe", version, about = "Monte-Carlo experiments for the drifted rearranged stochastic heat equation")]
pub struct Args {
    /// Experiment to run.
    #[arg(value_enum)]
    pub experiment: ExperimentKind,
    /// TOML run configuration; every key has a default.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration entry, e.g. `--set drift.mu=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Base seed; overrides the configuration file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the configuration file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
}

/// Parses arguments, runs, and returns the process exit status.
pub fn main_with_args(args: Args) -> i32 {
    match execute(&args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(args: &Args) -> Result<()> {
    let mut cfg = parse_config(args.config.as_deref(), &args.overrides)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    if let Some(kind) = cfg.experiment {
        if kind != args.experiment {
            log::warn!(
                "config names experiment '{}', running '{}'",
                kind.name(),
                args.experiment.name()
            );
        }
    }
    cfg.experiment = Some(args.experiment);
    let base = args
        .config
        .as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let resolved = cfg.resolve(args.experiment, &base)?;
    let config_json = serde_json::to_value(&cfg).map_err(|e| Error::Config(e.to_string()))?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.workers {
        if n == 0 {
            return Err(Error::param("workers", n, "integers >= 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run(&resolved, config_json))
}

/// Writes the manifest, runs the experiment, and rewrites the manifest with
/// the list of data files.
pub fn run(r: &Resolved, config_json: serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(&r.out).map_err(|e| Error::io(&r.out, e))?;
    let mut manifest = Manifest::new(r.kind.name(), r.seed, config_json);
    manifest.write(&r.out)?;
    let files = match r.kind {
        ExperimentKind::Simulate => run_simulate(r)?,
        ExperimentKind::Coupling => {
            let (params, u, v) = r.coupling.as_ref().expect("resolved coupling");
            let rep = run_coupling(params, u, v, r.seed)?;
            let mut f = DataFile::create(&r.out.join("coupling.csv"))?;
            f.write_csv_row(["t", "distance", "ratio"])?;
            for row in &rep.rows {
                f.write_csv_row([row.t, row.distance, row.ratio])?;
            }
            f.finish()?;
            write_json(&r.out.join("coupling_summary.json"), &rep)?;
            vec!["coupling.csv".into(), "coupling_summary.json".into()]
        }
        ExperimentKind::Lyapunov => {
            let (params, inits) = r.lyapunov.as_ref().expect("resolved lyapunov");
            let rep = run_lyapunov(params, inits, r.seed)?;
            let mut f = DataFile::create(&r.out.join("lyapunov.csv"))?;
            let mut header = vec!["t".to_string()];
            for i in 0..inits.len() {
                header.push(format!("mean_norm_sq_{i}"));
                header.push(format!("stderr_norm_sq_{i}"));
            }
            header.push("energy_distance".into());
            f.write_csv_row(header)?;
            for row in &rep.rows {
                let mut cells = vec![row.t];
                for (m, s) in row.mean_norm_sq.iter().zip(&row.stderr_norm_sq) {
                    cells.push(*m);
                    cells.push(*s);
                }
                cells.push(row.energy_distance);
                f.write_csv_row(cells)?;
            }
            f.finish()?;
            #[derive(Serialize)]
            struct Summary<'a> {
                distance_note: &'static str,
                plateau: f64,
                balance_plateau: f64,
                effective_rate: f64,
                fits: &'a [Option<crate::experiments::LyapunovFit>],
                crossing_time: Option<f64>,
                final_distance_ratio: f64,
                assumptions: &'a crate::drift::AssumptionReport,
            }
            write_json(
                &r.out.join("lyapunov_summary.json"),
                &Summary {
                    distance_note: "energy distance between ensemble laws of (mean, L2 norm, value at 0); \
                                    an observable-level substitute for total-variation convergence",
                    plateau: rep.plateau,
                    balance_plateau: rep.balance_plateau,
                    effective_rate: rep.effective_rate,
                    fits: &rep.fits,
                    crossing_time: rep.crossing_time,
                    final_distance_ratio: rep.final_distance_ratio(),
                    assumptions: &rep.assumptions,
                },
            )?;
            vec!["lyapunov.csv".into(), "lyapunov_summary.json".into()]
        }
        ExperimentKind::ExitTimes => {
            let params = r.exit_times.as_ref().expect("resolved exit times");
            let rep = run_exit_times(params, r.seed)?;
            let mut f = DataFile::create(&r.out.join("exit_times.csv"))?;
            f.write_csv_row([
                "epsilon",
                "replicas",
                "mean_tau",
                "stderr",
                "median_tau",
                "censored_count",
                "horizon",
                "censored",
            ])?;
            for row in &rep.rows {
                f.write_csv_row([
                    row.epsilon.to_string(),
                    row.replicas.to_string(),
                    row.mean_tau.to_string(),
                    row.stderr.to_string(),
                    row.median_tau.to_string(),
                    row.censored_count.to_string(),
                    row.horizon.to_string(),
                    row.censored.to_string(),
                ])?;
            }
            f.finish()?;
            write_json(&r.out.join("exit_times_summary.json"), &rep)?;
            vec!["exit_times.csv".into(), "exit_times_summary.json".into()]
        }
        ExperimentKind::CheckDrift => {
            let (samples, radius) = r.check_drift;
            let mut rng = replica_rng(r.seed, 0);
            let rep = check_assumptions(&r.step.drift, r.grid, samples, radius, &mut rng)?;
            println!("{}", rep.table());
            write_json(&r.out.join("assumptions.json"), &rep)?;
            vec!["assumptions.json".into()]
        }
    };
    manifest.files = files;
    manifest.status = "complete".into();
    manifest.write(&r.out)
}

struct ReplicaOutput {
    rows: Vec<Observables>,
    final_state: SimState,
}

fn simulate_replica(r: &Resolved, replica: usize) -> Result<ReplicaOutput> {
    let mut stepper = Stepper::new(r.step.clone(), r.grid)?;
    let mut state = stepper.initial_state(&r.initial, r.ledger)?;
    r.step.check_step_size(&state.field)?;
    let steps = step_count(r.horizon, r.step.dt)?;
    let mut rng = replica_rng(r.seed, replica as u64);
    let mut rows = vec![Observables::of(&state)];
    for k in 1..=steps {
        stepper.step(&mut state, &mut rng)?;
        if k % r.stride == 0 || k == steps {
            r.step.check_step_size(&state.field)?;
            rows.push(Observables::of(&state));
        }
    }
    Ok(ReplicaOutput {
        rows,
        final_state: state,
    })
}

#[derive(Serialize)]
struct ObservableLine<'a> {
    replica: usize,
    #[serde(flatten)]
    obs: &'a Observables,
}

fn run_simulate(r: &Resolved) -> Result<Vec<String>> {
    let mut files = vec!["observables.jsonl".to_string()];
    let mut obs = DataFile::create(&r.out.join("observables.jsonl"))?;
    let mut ledger = if r.ledger {
        files.push("ledger.csv".into());
        let mut f = DataFile::create(&r.out.join("ledger.csv"))?;
        f.write_csv_row([
            "replica",
            "t",
            "norm_sq",
            "inner_drift",
            "grad_sq",
            "noise_qv",
            "displacement",
            "norm_sq_after",
            "drift_defect",
            "heat_defect",
            "projection_defect",
            "martingale",
            "energy_residual",
        ])?;
        Some(f)
    } else {
        None
    };
    // Replicas run in batches on the pool; the coordinator appends each
    // batch in replica order.
    let batch = rayon::current_num_threads().max(1);
    let mut start = 0;
    while start < r.replicas {
        let end = (start + batch).min(r.replicas);
        let outputs: Vec<ReplicaOutput> = (start..end)
            .into_par_iter()
            .map(|i| simulate_replica(r, i))
            .collect::<Result<_>>()?;
        for (i, out) in (start..end).zip(outputs) {
            for row in &out.rows {
                obs.write_json_line(&ObservableLine { replica: i, obs: row })?;
            }
            let name = format!("snapshot_r{i:04}.bin");
            write_snapshot(&r.out.join(&name), &out.final_state.field)?;
            files.push(name);
            if let (Some(f), Some(l)) = (ledger.as_mut(), out.final_state.ledger.as_ref()) {
                if !l.records.is_empty() {
                    for (rec, res) in l.records.iter().zip(energy_residual(l)?) {
                        f.write_csv_row([
                            i as f64,
                            rec.t,
                            rec.norm_sq,
                            rec.inner_drift,
                            rec.grad_sq,
                            rec.noise_qv,
                            rec.displacement,
                            rec.norm_sq_after,
                            rec.drift_defect,
                            rec.heat_defect,
                            rec.projection_defect,
                            rec.martingale,
                            res,
                        ])?;
                    }
                }
            }
        }
        start = end;
    }
    obs.finish()?;
    if let Some(f) = ledger {
        f.finish()?;
    }
    Ok(files)
}
