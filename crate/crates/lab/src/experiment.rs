//! Turns a parsed config into core objects and runs the pipelines.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rayon::ThreadPool;

use pat_core::recon::{Checkpoint, IterateHistory};
use pat_core::verify::evaluate_member;
use pat_core::{
    forward_map, joint_reconstruct, make_pressure_phantom, make_speed_phantom, perturb_pair,
    reconstruct_pressure, BoundThresholds, BoundaryImpedance, BoundaryTrace, CoarseMesh,
    EnsembleMember, Feature, Grid2D, InitialState, PhantomKind, PhantomSpec,
    ReconstructionConfig, RegionPolicy, ScalarField2D, SolverConfig, SpeedBounds, SpeedProfile,
    StabilityReport, StabilitySettings, Truth, WaveSpeed,
};

use crate::config::{EnsembleSection, ExperimentConfig, FeatureConfig, ReconstructSection};
use crate::error::{LabError, Result};
use crate::seeds::derive_seed;

/// Geometry, boundary and solver shared by every run of one config.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: Grid2D,
    pub gamma: BoundaryImpedance,
    pub solver: SolverConfig,
    pub bounds: SpeedBounds,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let g = &cfg.grid;
        let grid = Grid2D::rectangle(g.origin, g.extent, g.cells + 1, g.cells_y.unwrap_or(g.cells) + 1)?;
        let bounds = SpeedBounds::new(cfg.speed.low, cfg.speed.high)?;
        let s = &cfg.solver;
        let mut solver = SolverConfig::new(
            s.final_time
                .unwrap_or_else(|| SolverConfig::observation_time(&grid, bounds.low)),
        );
        solver.cfl_factor = s.cfl_factor;
        solver.record_stride = s.record_stride;
        solver.snapshot_stride = s.snapshot_stride;
        solver.validate()?;
        Ok(Self {
            grid,
            gamma: BoundaryImpedance::uniform(&grid, cfg.impedance.gamma)?,
            solver,
            bounds,
        })
    }

    /// Solver whose time step is fixed by the upper speed bound, so data and
    /// every iterate share one time grid.
    pub fn pinned_solver(&self) -> SolverConfig {
        let mut s = self.solver.clone();
        s.reference_speed = Some(self.bounds.high);
        s
    }
}

fn features(list: &[FeatureConfig]) -> Vec<Feature> {
    list.iter()
        .map(|f| Feature {
            center: f.center,
            radius: f.radius,
            amplitude: f.amplitude,
            aspect: f.aspect,
            angle: f.angle,
        })
        .collect()
}

fn phantom_spec(
    kind: &str,
    list: &[FeatureConfig],
    count: usize,
    margin: f64,
    seed: u64,
    grid: &Grid2D,
) -> Result<Option<PhantomSpec>> {
    let kind = PhantomKind::parse(kind)?;
    if !list.is_empty() {
        return Ok(Some(PhantomSpec {
            kind,
            features: features(list),
            support_margin: margin,
            seed,
        }));
    }
    if count == 0 {
        return Ok(None);
    }
    Ok(Some(PhantomSpec::random(kind, count, margin, seed, grid)?))
}

/// The `[speed]` phantom.
pub fn truth_speed(cfg: &ExperimentConfig, setup: &Setup) -> Result<WaveSpeed> {
    let sp = &cfg.speed;
    if let Some(coarse) = &sp.coarse {
        let mesh = CoarseMesh::new(&setup.grid, coarse.nodes, coarse.nodes)?;
        let field = mesh.prolong(&coarse.values)?.map(|v| sp.base + v)?;
        return Ok(WaveSpeed::new(field, setup.bounds)?);
    }
    let seed = derive_seed(cfg.seed, "speed", 0);
    match phantom_spec(&sp.kind, &sp.features, sp.count, sp.margin, seed, &setup.grid)? {
        Some(spec) => Ok(make_speed_phantom(
            &spec,
            &setup.grid,
            SpeedProfile::new(sp.base, sp.variation),
            setup.bounds,
        )?),
        None => Ok(WaveSpeed::constant(setup.grid, sp.base, setup.bounds)?),
    }
}

/// The `[pressure]` phantom; zero when it declares no features.
pub fn truth_pressure(cfg: &ExperimentConfig, setup: &Setup) -> Result<InitialState> {
    let p = &cfg.pressure;
    let seed = derive_seed(cfg.seed, "pressure", 0);
    match phantom_spec(&p.kind, &p.features, p.count, p.margin, seed, &setup.grid)? {
        Some(spec) => Ok(make_pressure_phantom(&spec, &setup.grid)?),
        None => Ok(InitialState::zeros(setup.grid)),
    }
}

pub fn build_pool(workers: usize) -> Result<ThreadPool> {
    if workers == 0 {
        return Err(LabError::Workers("worker count must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| LabError::Workers(e.to_string()))
}

/// Runs `f` over `0..n` on the pool; results come back in index order and
/// the first error by index wins, whatever the scheduling.
fn indexed<T: Send>(pool: &ThreadPool, n: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let results: Vec<Result<T>> = pool.install(|| (0..n).into_par_iter().map(&f).collect());
    results.into_iter().collect()
}

fn ensemble_section(cfg: &ExperimentConfig) -> Result<&EnsembleSection> {
    cfg.ensemble
        .as_ref()
        .ok_or_else(|| LabError::config(None, "this command needs an [ensemble] section"))
}

/// Member `k`: reference pair from the config (or seeded random phantoms)
/// and a candidate from `perturb_pair` at the configured targets.
pub fn build_ensemble(cfg: &ExperimentConfig, setup: &Setup, pool: &ThreadPool) -> Result<Vec<EnsembleMember>> {
    let ens = ensemble_section(cfg)?;
    let fixed_pressure = !cfg.pressure.features.is_empty() || cfg.pressure.count > 0;
    let base_speed = truth_speed(cfg, setup)?;
    let base_pressure = truth_pressure(cfg, setup)?;
    indexed(pool, ens.size, |k| {
        let k64 = k as u64;
        let c = if ens.member_speed_features > 0 {
            let sp = &cfg.speed;
            let spec = PhantomSpec::random(
                PhantomKind::parse(&sp.kind)?,
                ens.member_speed_features,
                sp.margin,
                derive_seed(cfg.seed, "member-speed", k64),
                &setup.grid,
            )?;
            make_speed_phantom(&spec, &setup.grid, SpeedProfile::new(sp.base, sp.variation), setup.bounds)?
        } else {
            base_speed.clone()
        };
        let s = if fixed_pressure {
            base_pressure.clone()
        } else {
            let p = &cfg.pressure;
            let spec = PhantomSpec::random(
                PhantomKind::parse(&p.kind)?,
                ens.member_features,
                p.margin,
                derive_seed(cfg.seed, "member-pressure", k64),
                &setup.grid,
            )?;
            make_pressure_phantom(&spec, &setup.grid)?
        };
        let (c_tilde, s_tilde) = perturb_pair(
            &c,
            &s,
            ens.target_speed_ratio,
            ens.target_state_ratio,
            derive_seed(cfg.seed, "member-perturb", k64),
        )?;
        Ok(EnsembleMember { c, c_tilde, s, s_tilde })
    })
}

/// Explicit `(k, K)` from the config, else derived from the reference states.
pub fn thresholds(ens: &EnsembleSection, members: &[EnsembleMember]) -> Result<BoundThresholds> {
    let family = BoundThresholds::from_family(members.iter().map(|m| &m.s))?;
    Ok(BoundThresholds::new(
        ens.mass_floor.unwrap_or(family.k),
        ens.energy_cap.unwrap_or(family.big_k),
    )?)
}

pub fn run_ensemble(cfg: &ExperimentConfig, setup: &Setup, pool: &ThreadPool) -> Result<StabilityReport> {
    let ens = ensemble_section(cfg)?;
    let members = build_ensemble(cfg, setup, pool)?;
    let settings = StabilitySettings {
        gamma: &setup.gamma,
        solver: &setup.solver,
        epsilon: ens.epsilon,
        thresholds: thresholds(ens, &members)?,
        policy: if ens.policy == "skip" {
            RegionPolicy::Skip
        } else {
            RegionPolicy::Require
        },
    };
    let outcomes = indexed(pool, members.len(), |k| Ok(evaluate_member(k, &members[k], &settings)?))?;
    Ok(StabilityReport::aggregate(outcomes))
}

/// One cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub cells: usize,
    pub epsilon: f64,
    pub target_speed_ratio: f64,
    pub target_state_ratio: f64,
}

/// Cartesian product in the order cells × epsilon × speed × state.
pub fn sweep_cells(cfg: &ExperimentConfig) -> Result<Vec<SweepCell>> {
    let ens = ensemble_section(cfg)?;
    let sw = cfg.sweep.clone().unwrap_or_default();
    let or = |v: Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v };
    let cells = if sw.cells.is_empty() { vec![cfg.grid.cells] } else { sw.cells };
    let eps = or(sw.epsilon, ens.epsilon);
    let ts = or(sw.target_speed_ratio, ens.target_speed_ratio);
    let tu = or(sw.target_state_ratio, ens.target_state_ratio);
    let mut out = Vec::new();
    for &n in &cells {
        for &e in &eps {
            for &a in &ts {
                for &b in &tu {
                    out.push(SweepCell {
                        cells: n,
                        epsilon: e,
                        target_speed_ratio: a,
                        target_state_ratio: b,
                    });
                }
            }
        }
    }
    Ok(out)
}

impl SweepCell {
    pub fn apply(&self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut c = cfg.clone();
        c.grid.cells = self.cells;
        if c.grid.cells_y.is_some() {
            c.grid.cells_y = Some(self.cells);
        }
        let e = c.ensemble.as_mut().expect("checked by sweep_cells");
        e.epsilon = self.epsilon;
        e.target_speed_ratio = self.target_speed_ratio;
        e.target_state_ratio = self.target_state_ratio;
        c.sweep = None;
        c
    }
}

/// Every cell, independently; a failing cell does not stop the others.
pub fn run_sweep(cfg: &ExperimentConfig, pool: &ThreadPool) -> Result<Vec<(SweepCell, Result<StabilityReport>)>> {
    let cells = sweep_cells(cfg)?;
    let reports = indexed(pool, cells.len(), |k| {
        let c = cells[k].apply(cfg);
        Ok(Setup::new(&c).and_then(|s| run_ensemble(&c, &s, pool)))
    })?;
    Ok(cells.into_iter().zip(reports).collect())
}

#[derive(Debug, Clone)]
pub struct ReconOutcome {
    pub joint: bool,
    pub u0: ScalarField2D,
    pub c: Option<WaveSpeed>,
    pub history: IterateHistory,
    pub checkpoints: Vec<Checkpoint>,
    pub data: BoundaryTrace,
}

fn recon_config(r: &ReconstructSection) -> ReconstructionConfig {
    ReconstructionConfig {
        step_u: r.step_u,
        step_c: r.step_c,
        step_c_scale: r.step_c_scale,
        max_iter: r.max_iter,
        tol_misfit: r.tol_misfit,
        coarse_nx: r.coarse_nodes,
        coarse_ny: r.coarse_nodes,
        nesterov: r.nesterov,
        epsilon: r.epsilon,
        enforce_relaxation: r.enforce_relaxation,
        window: r.window,
        checkpoint_stride: r.checkpoint_stride,
    }
}

/// Synthetic data from the `[speed]`/`[pressure]` truth, with optional
/// seeded Gaussian noise.
pub fn synthetic_data(cfg: &ExperimentConfig, setup: &Setup, c: &WaveSpeed, s: &InitialState, noise: f64) -> Result<BoundaryTrace> {
    let m = forward_map(c, &setup.gamma, s, &setup.pinned_solver())?;
    if noise == 0.0 {
        return Ok(m);
    }
    let sigma = noise * m.max_abs();
    let normal = Normal::new(0.0, sigma).map_err(|e| LabError::config(None, format!("noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "trace-noise", 0));
    let (grid, dt) = (*m.grid(), m.dt_record());
    let samples = m.into_samples().into_iter().map(|v| v + normal.sample(&mut rng)).collect();
    Ok(BoundaryTrace::new(grid, dt, samples)?)
}

pub fn run_reconstruction(cfg: &ExperimentConfig, setup: &Setup) -> Result<ReconOutcome> {
    let r = cfg
        .reconstruct
        .as_ref()
        .ok_or_else(|| LabError::config(None, "this command needs a [reconstruct] section"))?;
    let c_true = truth_speed(cfg, setup)?;
    let s_true = truth_pressure(cfg, setup)?;
    let data = synthetic_data(cfg, setup, &c_true, &s_true, r.noise)?;
    let solver = setup.pinned_solver();
    let rc = recon_config(r);
    let u_true = s_true.u0();
    let joint = r.mode == "joint";

    let c_init = if !joint || r.init == "truth" {
        c_true.clone()
    } else {
        WaveSpeed::constant(setup.grid, r.initial_speed.unwrap_or(cfg.speed.base), setup.bounds)?
    };
    let u_init = match r.init.as_str() {
        "truth" => Some(u_true.clone()),
        "landweber" => {
            let warm = ReconstructionConfig {
                max_iter: r.warm_start_iters,
                ..Default::default()
            };
            Some(reconstruct_pressure(&data, &c_init, &setup.gamma, &solver, &warm, None, None)?.u0)
        }
        _ => None,
    };

    if joint {
        let u_init = u_init.unwrap_or_else(|| ScalarField2D::zeros(setup.grid));
        let truth = (!r.blind).then_some(Truth { u0: u_true, c: &c_true });
        let out = joint_reconstruct(&data, &u_init, &c_init, &setup.gamma, &solver, &rc, truth)?;
        Ok(ReconOutcome {
            joint,
            u0: out.u0,
            c: Some(out.c),
            history: out.history,
            checkpoints: out.checkpoints,
            data,
        })
    } else {
        let truth = (!r.blind).then_some(u_true);
        let out = reconstruct_pressure(&data, &c_true, &setup.gamma, &solver, &rc, u_init.as_ref(), truth)?;
        Ok(ReconOutcome {
            joint,
            u0: out.u0,
            c: None,
            history: out.history,
            checkpoints: out.checkpoints,
            data,
        })
    }
}
