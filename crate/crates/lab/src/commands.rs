//! The four CLI commands. Each computes first, then writes a fresh run
//! directory, so a failed precondition leaves nothing behind.

use std::fmt::Write as _;
use std::path::PathBuf;

use pat_core::recon::Termination;
use pat_core::{energy, simulate, StabilityReport};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::experiment::{self, Setup};
use crate::formats::{self, fmt_f64};
use crate::rundir::{RunDir, CONFIG_COPY};
use crate::seeds::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Verify,
    Reconstruct,
    Sweep,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::Reconstruct => "reconstruct",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    /// Defaults to the available parallelism.
    pub workers: Option<usize>,
    /// Replaces the config's master seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub run_dir: PathBuf,
    pub summary: String,
    pub exit_code: i32,
}

pub fn run(cmd: Command, config_text: &str, opts: &RunOptions) -> Result<Outcome> {
    let mut cfg = ExperimentConfig::from_toml_str(config_text)?;
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    let workers = opts
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = experiment::build_pool(workers)?;
    let out = opts
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| {
            let hash = sha256_hex(config_text.as_bytes());
            PathBuf::from("runs").join(format!("{}-{}-s{}", cmd.name(), &hash[..12], cfg.seed))
        });

    let setup = Setup::new(&cfg)?;
    let result = match cmd {
        Command::Simulate => simulate_cmd(&cfg, &setup)?,
        Command::Verify => {
            let report = experiment::run_ensemble(&cfg, &setup, &pool)?;
            verify_outputs(&report)?
        }
        Command::Reconstruct => reconstruct_cmd(&cfg, &setup)?,
        Command::Sweep => sweep_cmd(&cfg, &pool)?,
    };

    let mut dir = RunDir::create(out)?;
    dir.write(CONFIG_COPY, config_text.as_bytes())?;
    for (name, bytes) in &result.files {
        dir.write(name, bytes)?;
    }
    let run_dir = dir.finish(cmd.name(), cfg.seed, config_text, &result.status, result.failures)?;
    Ok(Outcome {
        run_dir,
        summary: result.summary,
        exit_code: result.exit_code,
    })
}

struct Produced {
    files: Vec<(String, Vec<u8>)>,
    summary: String,
    status: String,
    failures: Vec<String>,
    exit_code: i32,
}

impl Produced {
    fn ok(files: Vec<(String, Vec<u8>)>, summary: String) -> Self {
        Self {
            files,
            summary,
            status: "ok".into(),
            failures: Vec::new(),
            exit_code: 0,
        }
    }
}

fn simulate_cmd(cfg: &ExperimentConfig, setup: &Setup) -> Result<Produced> {
    let c = experiment::truth_speed(cfg, setup)?;
    let s = experiment::truth_pressure(cfg, setup)?;
    let mut solver = setup.solver.clone();
    solver.track_energy = true;
    let out = simulate(&c, &setup.gamma, &s, &solver)?;

    let mut files = vec![
        ("trace.patt".to_string(), formats::encode_trace(&out.trace)),
        ("trace.csv".to_string(), formats::trace_csv(&out.trace)?),
        ("u0.patf".to_string(), formats::encode_field(s.u0())),
        ("c.patf".to_string(), formats::encode_field(c.field())),
        ("energy.csv".to_string(), formats::energy_csv(&out.energy, out.timing.dt)?),
    ];
    let mut rows = Vec::new();
    for (k, snap) in out.snapshots.iter().enumerate() {
        files.push((format!("snapshots/u_{k:05}.patf"), formats::encode_field(&snap.u)));
        rows.push(vec![k.to_string(), fmt_f64(snap.t), fmt_f64(energy(snap, &c)?)]);
    }
    if !rows.is_empty() {
        files.push(("snapshots.csv".into(), formats::table_csv(&["index", "t", "energy"], rows)?));
    }

    let e = &out.energy;
    let e0 = e.first().copied().unwrap_or(0.0);
    let e_end = e.last().copied().unwrap_or(0.0);
    let max_rise = e.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "{} steps, dt {:.6e}, T {:.6e}, {} boundary nodes",
        out.timing.n_steps,
        out.timing.dt,
        out.timing.final_time(),
        setup.grid.boundary_len()
    );
    let _ = writeln!(summary, "energy: first {e0:.6e}, last {e_end:.6e}, largest one-step rise {max_rise:.3e}");
    let _ = write!(summary, "trace max |u| {:.6e}", out.trace.max_abs());
    Ok(Produced::ok(files, summary))
}

fn verify_outputs(report: &StabilityReport) -> Result<Produced> {
    let files = vec![("report.csv".to_string(), formats::report_csv(report)?)];
    let mut summary = format!(
        "{} members, {} in region, {} degenerate, {} violations",
        report.n_pairs,
        report.pairs_in_region,
        report.degenerate.len(),
        report.violations.len()
    );
    match report.c_empirical {
        Some(c) => {
            let _ = write!(summary, "\nempirical constant {c:.6e}");
        }
        None => summary.push_str("\nno member evaluated; empirical constant undefined"),
    }
    if !report.degenerate.is_empty() {
        let _ = write!(
            summary,
            "\nnote: members {:?} have zero state discrepancy and carry no stability information",
            report.degenerate
        );
    }
    let violated = !report.violations.is_empty();
    if violated {
        let _ = write!(summary, "\nviolations at members {:?}", report.violations);
    }
    Ok(Produced {
        files,
        summary,
        status: if violated { "violations" } else { "ok" }.into(),
        failures: report.violations.iter().map(|i| format!("member {i}")).collect(),
        exit_code: i32::from(violated),
    })
}

fn reconstruct_cmd(cfg: &ExperimentConfig, setup: &Setup) -> Result<Produced> {
    let out = experiment::run_reconstruction(cfg, setup)?;
    let h = &out.history;
    let mut files = vec![
        ("history.csv".to_string(), formats::history_csv(h)?),
        ("u0.patf".to_string(), formats::encode_field(&out.u0)),
        ("u0.csv".to_string(), formats::field_csv(&out.u0)?),
        ("data.patt".to_string(), formats::encode_trace(&out.data)),
    ];
    if let Some(c) = &out.c {
        files.push(("c.patf".into(), formats::encode_field(c.field())));
        files.push(("c.csv".into(), formats::field_csv(c.field())?));
    }
    for cp in &out.checkpoints {
        files.push((format!("checkpoints/u0_{:05}.patf", cp.iter), formats::encode_field(&cp.u0)));
        if let Some(c) = &cp.c {
            files.push((format!("checkpoints/c_{:05}.patf", cp.iter), formats::encode_field(c.field())));
        }
    }
    let events: Vec<Vec<String>> = h
        .events
        .iter()
        .map(|e| vec![format!("{e:?}")])
        .collect();
    files.push(("events.csv".into(), formats::table_csv(&["event"], events)?));

    let last = h.records.last();
    let mut summary = format!(
        "{} mode, {} history rows, termination {:?}",
        if out.joint { "joint" } else { "fixed-speed" },
        h.records.len(),
        h.termination
    );
    if let Some(r) = last {
        let _ = write!(summary, "\nfinal misfit {:.6e}", r.misfit);
        if let Some(e) = r.err_u_rel {
            let _ = write!(summary, ", err_u_rel {e:.6e}");
        }
        if let Some(e) = r.err_c_rel {
            let _ = write!(summary, ", err_c_rel {e:.6e}");
        }
    }
    if h.left_region() {
        summary.push_str("\nwarning: the iterates left the uniqueness region");
    }
    let mut produced = Produced::ok(files, summary);
    match h.termination {
        Termination::Diverged { .. } => {
            let err = h.status().expect_err("diverged");
            let _ = write!(produced.summary, "\nerror: {err}");
            produced.status = "diverged".into();
            produced.failures.push(err.to_string());
            produced.exit_code = 1;
        }
        Termination::Stalled { iteration } => produced.status = format!("stalled at {iteration}"),
        _ => {}
    }
    Ok(produced)
}

pub const SWEEP_HEADER: [&str; 12] = [
    "cell", "cells", "epsilon", "target_speed_ratio", "target_state_ratio", "n_pairs",
    "pairs_in_region", "degenerate", "violations", "c_empirical", "status", "error",
];

fn sweep_cmd(cfg: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<Produced> {
    let results = experiment::run_sweep(cfg, pool)?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut violations = 0;
    for (k, (cell, res)) in results.iter().enumerate() {
        let mut row = vec![
            k.to_string(),
            cell.cells.to_string(),
            fmt_f64(cell.epsilon),
            fmt_f64(cell.target_speed_ratio),
            fmt_f64(cell.target_state_ratio),
        ];
        match res {
            Ok(r) => {
                violations += r.violations.len();
                row.extend([
                    r.n_pairs.to_string(),
                    r.pairs_in_region.to_string(),
                    r.degenerate.len().to_string(),
                    r.violations.len().to_string(),
                    r.c_empirical.map(fmt_f64).unwrap_or_default(),
                    "ok".into(),
                    String::new(),
                ]);
            }
            Err(e) => {
                failures.push(format!("cell {k}: {e}"));
                row.extend(["", "", "", "", ""].map(String::from));
                row.extend(["failed".into(), e.to_string()]);
            }
        }
        rows.push(row);
    }
    let files = vec![("sweep.csv".to_string(), formats::table_csv(&SWEEP_HEADER, rows)?)];
    let summary = format!(
        "{} cells, {} failed, {} violations",
        results.len(),
        failures.len(),
        violations
    );
    let bad = !failures.is_empty() || violations > 0;
    Ok(Produced {
        files,
        summary,
        status: if failures.is_empty() { "ok" } else { "partial" }.into(),
        failures,
        exit_code: i32::from(bad),
    })
}
