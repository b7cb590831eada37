//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Oracles are computed here, independently of the library's own
//! bookkeeping where possible.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use pat_core::norms::inner_h0;
use pat_core::recon::{gradient_wavespeed, CoarseMesh};
use pat_core::verify::MemberOutcome;
use pat_core::{
    adjoint_simulate, check_uniqueness_region, forward_map, norm_hminus1, perturb_pair, simulate,
    speed_discrepancy_ratio, state_discrepancy_ratio, trace_norm_h0, BoundaryImpedance,
    BoundaryTrace, Grid2D, InitialState, ScalarField2D, SolverConfig, SpeedBounds, WaveSpeed,
};
use pat_lab::experiment::{self, Setup};
use pat_lab::{bench, run, Command, ExperimentConfig, RunOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn bump(grid: Grid2D, cx: f64, cy: f64, r: f64) -> ScalarField2D {
    ScalarField2D::from_fn(grid, |x, y| {
        let s2 = ((x - cx).powi(2) + (y - cy).powi(2)) / (r * r);
        if s2 < 1.0 {
            (1.0 - 1.0 / (1.0 - s2)).exp()
        } else {
            0.0
        }
    })
    .unwrap()
    .with_zero_boundary()
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(text).unwrap()
}

fn shipped(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)).unwrap()
}

/// `fine` sampled at the boundary nodes and record times of `coarse`.
fn restrict(fine: &BoundaryTrace, coarse: &BoundaryTrace) -> BoundaryTrace {
    let (gf, gc) = (fine.grid(), coarse.grid());
    let rx = (gf.nx() - 1) / (gc.nx() - 1);
    let rt = (fine.n_times() - 1) / (coarse.n_times() - 1);
    let lookup: HashMap<usize, usize> = gf
        .boundary_nodes()
        .into_iter()
        .enumerate()
        .map(|(b, n)| (n, b))
        .collect();
    let map: Vec<usize> = gc
        .boundary_nodes()
        .into_iter()
        .map(|n| {
            let (i, j) = gc.ij(n);
            lookup[&gf.index(i * rx, j * rx)]
        })
        .collect();
    let mut out = Vec::new();
    for k in 0..coarse.n_times() {
        let row = fine.at_time(k * rt);
        out.extend(map.iter().map(|&b| row[b]));
    }
    BoundaryTrace::new(*gc, coarse.dt_record(), out).unwrap()
}

fn solver_convergence() -> Check {
    let start = Instant::now();
    let run = |cells: usize| {
        let g = Grid2D::unit_square(cells).unwrap();
        let c = WaveSpeed::constant(g, 1.0, SpeedBounds::new(0.5, 2.0).unwrap()).unwrap();
        let gamma = BoundaryImpedance::uniform(&g, 1.0).unwrap();
        let s = InitialState::pressure(bump(g, 0.5, 0.5, 0.35)).unwrap();
        forward_map(&c, &gamma, &s, &SolverConfig::new(1.0)).unwrap()
    };
    let (m1, m2, m3) = (run(64), run(128), run(256));
    let r2 = restrict(&m2, &m1);
    let e12 = trace_norm_h0(&r2.sub(&m1).unwrap()).unwrap();
    let e23 = trace_norm_h0(&restrict(&m3, &m1).sub(&r2).unwrap()).unwrap();
    let order = (e12 / e23).log2();
    let took = start.elapsed();
    let msg = format!("trace refinement order {order:.3} on 64/128/256 in {took:.1?}");
    if (order - 2.0).abs() <= 0.3 && took < Duration::from_secs(120) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn energy_dissipation() -> Check {
    let cfg = config(&shipped("simulate-disk.toml"));
    let setup = Setup::new(&cfg).unwrap();
    let c = experiment::truth_speed(&cfg, &setup).unwrap();
    let s = experiment::truth_pressure(&cfg, &setup).unwrap();
    let mut solver = setup.solver.clone();
    solver.track_energy = true;
    let expected_t = 3.0 * 2f64.sqrt() / cfg.speed.low;
    let out = simulate(&c, &setup.gamma, &s, &solver).unwrap();
    let e = &out.energy;
    let e0 = e[0];
    let worst = e.windows(2).map(|w| (w[1] - w[0]) / e0).fold(f64::NEG_INFINITY, f64::max);
    let msg = format!(
        "{} steps to T = {:.4}, largest relative rise {worst:.2e}, final/initial {:.2e}",
        e.len(),
        out.timing.final_time(),
        e[e.len() - 1] / e0
    );
    if e0 > 0.0 && worst <= 1e-12 && (out.timing.final_time() - expected_t).abs() < 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn hminus1_oracle() -> Check {
    let g = Grid2D::unit_square(128).unwrap();
    let f = ScalarField2D::from_fn(g, |x, y| (PI * x).sin() * (PI * y).sin()).unwrap();
    let v = norm_hminus1(&f).unwrap().powi(2);
    let exact = 1.0 / (8.0 * PI * PI);
    let rel = (v - exact).abs() / exact;
    let msg = format!("squared norm {v:.6e} vs {exact:.6e}, rel {rel:.2e}");
    if rel < 0.01 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn random_field(grid: Grid2D, rng: &mut ChaCha8Rng) -> ScalarField2D {
    let v = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    ScalarField2D::new(grid, v).unwrap()
}

fn adjoint_checks() -> Check {
    let grid = Grid2D::unit_square(32).unwrap();
    let bounds = SpeedBounds::new(0.5, 2.0).unwrap();
    let c = WaveSpeed::new(
        ScalarField2D::from_fn(grid, |x, y| 1.0 + 0.05 * (PI * x).sin() * (PI * y).cos()).unwrap(),
        bounds,
    )
    .unwrap();
    let gamma = BoundaryImpedance::uniform(&grid, 1.0).unwrap();
    let mut solver = SolverConfig::new(1.5);
    solver.reference_speed = Some(bounds.high);
    let mut rng = ChaCha8Rng::seed_from_u64(20);

    let mut worst_adj: f64 = 0.0;
    for _ in 0..5 {
        let d0 = random_field(grid, &mut rng).with_zero_boundary();
        let d1 = random_field(grid, &mut rng);
        let m = forward_map(&c, &gamma, &InitialState::new(d0.clone(), d1.clone()).unwrap(), &solver).unwrap();
        let r = BoundaryTrace::new(
            grid,
            m.dt_record(),
            (0..m.samples().len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let adj = adjoint_simulate(&r, &c, &gamma, &solver).unwrap();
        let lhs = m.inner(&r).unwrap();
        let rhs = inner_h0(&d0, &adj.u0).unwrap() + inner_h0(&d1, &adj.u1).unwrap();
        worst_adj = worst_adj.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }

    let u0 = bump(grid, 0.45, 0.55, 0.3);
    let s = InitialState::pressure(u0.clone()).unwrap();
    let c_data = WaveSpeed::new(c.field().map(|v| 1.03 * v).unwrap(), bounds).unwrap();
    let m = forward_map(&c_data, &gamma, &s, &solver).unwrap();
    let misfit = |cc: &WaveSpeed| {
        let r = forward_map(cc, &gamma, &s, &solver).unwrap().sub(&m).unwrap();
        0.5 * r.inner(&r).unwrap()
    };
    let mesh = CoarseMesh::new(&grid, 6, 6).unwrap();
    let residual = forward_map(&c, &gamma, &s, &solver).unwrap().sub(&m).unwrap();
    let g = gradient_wavespeed(&u0, &c, &residual, &gamma, &solver, &mesh).unwrap();
    let mut worst_fd: f64 = 0.0;
    for _ in 0..5 {
        let d: Vec<f64> = (0..mesh.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let df = mesh.prolong(&d).unwrap();
        let shifted = |t: f64| WaveSpeed::new(c.field().axpy(t, &df).unwrap(), bounds).unwrap();
        let h = 1e-4;
        let fd = (misfit(&shifted(h)) - misfit(&shifted(-h))) / (2.0 * h);
        let an: f64 = g.coarse.iter().zip(&d).map(|(a, b)| a * b).sum();
        worst_fd = worst_fd.max((fd - an).abs() / fd.abs().max(an.abs()));
    }
    let msg = format!("adjoint identity worst rel {worst_adj:.2e}, finite-difference gradient worst rel {worst_fd:.2e}");
    if worst_adj < 1e-6 && worst_fd < 1e-3 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ensemble_certification() -> Check {
    let start = Instant::now();
    let cfg = config(&shipped("verify-ensemble.toml"));
    let setup = Setup::new(&cfg).unwrap();
    let pool = experiment::build_pool(4).unwrap();
    let report = experiment::run_ensemble(&cfg, &setup, &pool).map_err(|e| e.to_string())?;
    let ens = cfg.ensemble.as_ref().unwrap();
    let mut evaluated = 0;
    let mut violations = 0;
    for o in &report.outcomes {
        if let MemberOutcome::Evaluated { report: r, .. } = o {
            evaluated += 1;
            // in region by construction
            if r.speed_ratio_sq > ens.epsilon * r.state_ratio_sq {
                violations += 1;
            }
            if r.state_ratio_sq > 1e-4 && r.meas_ratio_sq.is_none_or(|m| m <= 1e-16) {
                violations += 1;
            }
        }
    }
    let took = start.elapsed();
    let msg = format!(
        "{} members at {}x{} cells, {evaluated} evaluated, {violations} violations, constant {:?}, {took:.1?}",
        report.n_pairs, cfg.grid.cells, cfg.grid.cells, report.c_empirical
    );
    let finite = report.c_empirical.is_some_and(f64::is_finite);
    if report.n_pairs == 50 && evaluated == 50 && violations == 0 && finite && took < Duration::from_secs(600) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn region_geometry() -> Check {
    let eps = 1e-2;
    let grid = Grid2D::unit_square(64).unwrap();
    let bounds = SpeedBounds::new(0.8, 1.2).unwrap();
    let c = WaveSpeed::new(
        ScalarField2D::from_fn(grid, |x, y| 1.0 + 0.04 * (PI * x).sin() * (PI * y).sin()).unwrap(),
        bounds,
    )
    .unwrap();
    let s = InitialState::pressure(bump(grid, 0.5, 0.45, 0.3)).unwrap();
    let mut flips = 0;
    let mut total = 0;
    for (seed, u) in [(1u64, 1e-2), (2, 3e-3), (3, 1e-1), (4, 5e-2)] {
        let at = |sr: f64, ur: f64| {
            let (ct, st) = perturb_pair(&c, &s, sr, ur, seed).unwrap();
            check_uniqueness_region(&c, &ct, &s, &st, eps).unwrap()
        };
        let (ct, st) = perturb_pair(&c, &s, eps * u, u, seed).unwrap();
        let (sr, ur) = (speed_discrepancy_ratio(&c, &ct).unwrap(), state_discrepancy_ratio(&s, &st).unwrap());
        // on the boundary up to rounding
        let on_line = ((sr - eps * ur) / sr).abs() < 1e-9;
        let cases = [
            (at(eps * u * (1.0 + 1e-6), u).in_region, false),
            (at(eps * u * (1.0 - 1e-6), u).in_region, true),
            (at(eps * u, u * (1.0 + 1e-6)).in_region, true),
            (at(eps * u, u * (1.0 - 1e-6)).in_region, false),
        ];
        total += cases.len();
        if on_line {
            flips += cases.iter().filter(|(got, want)| got == want).count();
        }
    }
    let msg = format!("{flips}/{total} nudges flipped the verdict as expected");
    if flips == total {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn fixed_speed_reconstruction() -> Check {
    let start = Instant::now();
    let cfg = config(&shipped("reconstruct-fixed.toml"));
    let setup = Setup::new(&cfg).unwrap();
    let out = experiment::run_reconstruction(&cfg, &setup).map_err(|e| e.to_string())?;
    let truth = experiment::truth_pressure(&cfg, &setup).unwrap();
    // independent error: plain trapezoid sums
    let w = setup.grid.quadrature_weights();
    let sq = |v: &mut dyn Iterator<Item = f64>| v.zip(&w).map(|(x, w)| w * x * x).sum::<f64>();
    let num = sq(&mut truth.u0().values().iter().zip(out.u0.values()).map(|(a, b)| a - b));
    let den = sq(&mut truth.u0().values().iter().copied());
    let err = (num / den).sqrt();
    let iters = out.history.records.len() - 1;
    let took = start.elapsed();
    let msg = format!("relative error {err:.3e} after {iters} iterations in {took:.1?}");
    if err < 0.05 && iters <= 200 && took < Duration::from_secs(300) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn relaxation_discipline() -> Check {
    let cfg = config(bench::JOINT_BENCHMARK);
    let setup = Setup::new(&cfg).unwrap();
    let on = experiment::run_reconstruction(&cfg, &setup).map_err(|e| e.to_string())?;
    let flags: Vec<Option<bool>> = on.history.records.iter().map(|r| r.in_region).collect();
    let kept = flags.iter().all(|f| *f == Some(true));

    let mut loose = cfg.clone();
    let r = loose.reconstruct.as_mut().unwrap();
    r.enforce_relaxation = false;
    r.step_c_scale = 10.0;
    let off = experiment::run_reconstruction(&loose, &setup).map_err(|e| e.to_string())?;
    let exit = off.history.records.iter().position(|r| r.in_region == Some(false));
    let msg = format!(
        "enforced: {} iterates all in region = {kept} ({:?}); unenforced x10: first exit at {:?}",
        flags.len(),
        on.history.termination,
        exit
    );
    if kept && exit.is_some() {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn csv_files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                let name = p.strip_prefix(root).unwrap().display().to_string();
                out.push((name, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn reproducibility() -> Check {
    let tmp = tempfile::tempdir().unwrap();
    let mut joint = config(bench::JOINT_BENCHMARK);
    joint.grid.cells = 32;
    joint.reconstruct.as_mut().unwrap().max_iter = 8;
    let mut verify = config(&shipped("verify-ensemble.toml"));
    verify.grid.cells = 32;
    verify.ensemble.as_mut().unwrap().size = 8;
    let cases = [
        (Command::Simulate, shipped("simulate-disk.toml")),
        (Command::Verify, verify.to_toml_string()),
        (Command::Reconstruct, joint.to_toml_string()),
        (Command::Sweep, shipped("sweep-epsilon.toml")),
    ];
    let mut compared = 0;
    for (cmd, text) in &cases {
        let mut runs = Vec::new();
        for (k, workers) in [1, 4].into_iter().enumerate() {
            let opts = RunOptions {
                out: Some(tmp.path().join(format!("{}-{k}", cmd.name()))),
                workers: Some(workers),
                seed: Some(99),
            };
            let o = run(*cmd, text, &opts).map_err(|e| format!("{}: {e}", cmd.name()))?;
            runs.push(csv_files(&o.run_dir));
        }
        if runs[0].is_empty() || runs[0] != runs[1] {
            return Err(format!("{}: CSV outputs differ between runs", cmd.name()));
        }
        compared += runs[0].len();
    }
    Ok(format!("{compared} CSV files byte-identical across paired runs (1 and 4 workers)"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("solver convergence", solver_convergence),
        ("energy dissipation", energy_dissipation),
        ("negative-norm oracle", hminus1_oracle),
        ("adjoint correctness", adjoint_checks),
        ("stability ensemble", ensemble_certification),
        ("region geometry", region_geometry),
        ("fixed-speed reconstruction", fixed_speed_reconstruction),
        ("relaxation discipline", relaxation_discipline),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        match outcome {
            Ok(msg) => println!("PASS {} {name}: {msg} [{took:.1?}]", k + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {} {name}: {msg} [{took:.1?}]", k + 1)
            }
        }
    }
    println!("acceptance: {}/9 passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
