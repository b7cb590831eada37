use pat_core::phantom::{make_pressure_phantom, make_speed_phantom, Feature, PhantomKind, PhantomSpec, SpeedProfile};
use pat_core::recon::{
    joint_reconstruct, project_speed, reconstruct_pressure, CoarseMesh, ReconstructionConfig,
    Termination, Truth,
};
use pat_core::wave::{BoundaryImpedance, SolverConfig};
use pat_core::{
    forward_map, norm_h0, norm_w1inf, BoundaryTrace, Grid2D, InitialState, ScalarField2D,
    SpeedBounds, WaveSpeed,
};
use proptest::prelude::*;

fn disk_phantom(grid: &Grid2D) -> ScalarField2D {
    let spec = PhantomSpec {
        kind: PhantomKind::Disks,
        features: vec![
            Feature::round([0.4, 0.45], 0.2, 1.0),
            Feature::round([0.65, 0.6], 0.12, 0.6),
        ],
        support_margin: 0.05,
        seed: 0,
    };
    make_pressure_phantom(&spec, grid).unwrap().u0().clone()
}

fn fixed_speed_problem(cells: usize) -> (WaveSpeed, BoundaryImpedance, SolverConfig, ScalarField2D, BoundaryTrace) {
    let grid = Grid2D::unit_square(cells).unwrap();
    let c = WaveSpeed::constant(grid, 1.0, SpeedBounds::new(0.5, 2.0).unwrap()).unwrap();
    let gamma = BoundaryImpedance::uniform(&grid, 1.0).unwrap();
    let solver = SolverConfig::new(SolverConfig::observation_time(&grid, 1.0));
    let u0 = disk_phantom(&grid);
    let m = forward_map(&c, &gamma, &InitialState::pressure(u0.clone()).unwrap(), &solver).unwrap();
    (c, gamma, solver, u0, m)
}

fn rel_h0(truth: &ScalarField2D, u: &ScalarField2D) -> f64 {
    norm_h0(&truth.sub(u).unwrap()).unwrap() / norm_h0(truth).unwrap()
}

fn rel_speed(truth: &WaveSpeed, c: &WaveSpeed) -> f64 {
    let q = truth.inverse_square();
    norm_w1inf(&q.sub(&c.inverse_square()).unwrap()).unwrap() / norm_w1inf(&q).unwrap()
}

#[test]
fn landweber_recovers_disk_phantom() {
    let (c, gamma, solver, u0, m) = fixed_speed_problem(64);
    let cfg = ReconstructionConfig {
        max_iter: 200,
        tol_misfit: 0.0,
        ..Default::default()
    };
    let out = reconstruct_pressure(&m, &c, &gamma, &solver, &cfg, None, Some(&u0)).unwrap();
    assert!(out.history.records.len() <= 201);
    assert!(rel_h0(&u0, &out.u0) < 0.05);
    // the recorded error agrees with a direct evaluation
    let last = out.history.records.last().unwrap().err_u_rel.unwrap();
    assert!(last >= rel_h0(&u0, &out.u0) - 1e-12);
}

#[test]
fn landweber_misfit_is_non_expansive() {
    let (c, gamma, solver, _, m) = fixed_speed_problem(32);
    let cfg = ReconstructionConfig {
        max_iter: 30,
        tol_misfit: 0.0,
        ..Default::default()
    };
    let out = reconstruct_pressure(&m, &c, &gamma, &solver, &cfg, None, None).unwrap();
    let misfits = out.history.misfits();
    for w in misfits.windows(2) {
        assert!(w[1] <= w[0] + 1e-12 * misfits[0], "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn landweber_is_linear_in_the_data() {
    let (c, gamma, solver, _, m) = fixed_speed_problem(24);
    let cfg = ReconstructionConfig {
        step_u: Some(0.5),
        max_iter: 8,
        tol_misfit: 0.0,
        ..Default::default()
    };
    let a = reconstruct_pressure(&m, &c, &gamma, &solver, &cfg, None, None).unwrap();
    let b = reconstruct_pressure(&m.scaled(-3.0), &c, &gamma, &solver, &cfg, None, None).unwrap();
    let diff = b.u0.sub(&a.u0.scaled(-3.0)).unwrap().max_abs();
    assert!(diff < 1e-12 * a.u0.max_abs(), "{diff}");
}

#[test]
fn zero_data_returns_zero_pressure() {
    let (c, gamma, solver, _, m) = fixed_speed_problem(24);
    let cfg = ReconstructionConfig::default();
    let out = reconstruct_pressure(&m.scaled(0.0), &c, &gamma, &solver, &cfg, None, None).unwrap();
    assert_eq!(out.history.termination, Termination::ZeroResidual);
    assert_eq!(out.u0.max_abs(), 0.0);
}

#[test]
fn landweber_from_truth_stays_put() {
    let (c, gamma, solver, u0, m) = fixed_speed_problem(24);
    let cfg = ReconstructionConfig::default();
    let out = reconstruct_pressure(&m, &c, &gamma, &solver, &cfg, Some(&u0), Some(&u0)).unwrap();
    assert_eq!(out.history.records.len(), 1);
    assert_eq!(out.u0, u0);
}

struct JointProblem {
    grid: Grid2D,
    u0: ScalarField2D,
    c: WaveSpeed,
    c0: WaveSpeed,
    gamma: BoundaryImpedance,
    solver: SolverConfig,
    m: BoundaryTrace,
}

fn joint_problem(cells: usize, c_of: impl Fn(&Grid2D, SpeedBounds) -> WaveSpeed) -> JointProblem {
    let grid = Grid2D::unit_square(cells).unwrap();
    let bounds = SpeedBounds::new(0.8, 1.2).unwrap();
    let u0 = disk_phantom(&grid);
    let c = c_of(&grid, bounds);
    let gamma = BoundaryImpedance::uniform(&grid, 1.0).unwrap();
    let mut solver = SolverConfig::new(SolverConfig::observation_time(&grid, 1.0));
    solver.reference_speed = Some(bounds.high);
    let m = forward_map(&c, &gamma, &InitialState::pressure(u0.clone()).unwrap(), &solver).unwrap();
    JointProblem {
        grid,
        c0: WaveSpeed::constant(grid, 1.0, bounds).unwrap(),
        u0,
        c,
        gamma,
        solver,
        m,
    }
}

fn smooth_bump(grid: &Grid2D, bounds: SpeedBounds) -> WaveSpeed {
    let spec = PhantomSpec {
        kind: PhantomKind::Gaussians,
        features: vec![Feature::round([0.5, 0.5], 0.35, 1.0)],
        support_margin: 0.05,
        seed: 0,
    };
    make_speed_phantom(&spec, grid, SpeedProfile::new(1.0, 0.05), bounds).unwrap()
}

#[test]
fn joint_from_truth_returns_immediately() {
    let p = joint_problem(32, smooth_bump);
    let cfg = ReconstructionConfig {
        coarse_nx: 4,
        coarse_ny: 4,
        ..Default::default()
    };
    let truth = Truth { u0: &p.u0, c: &p.c };
    let out = joint_reconstruct(&p.m, &p.u0, &p.c, &p.gamma, &p.solver, &cfg, Some(truth)).unwrap();
    assert_eq!(out.history.termination, Termination::ZeroResidual);
    assert_eq!(out.history.records.len(), 1);
    assert_eq!(out.c, p.c);
}

#[test]
fn joint_improves_smooth_bump_speed() {
    let p = joint_problem(64, smooth_bump);
    let cfg = ReconstructionConfig {
        coarse_nx: 4,
        coarse_ny: 4,
        max_iter: 40,
        tol_misfit: 0.0,
        enforce_relaxation: false,
        ..Default::default()
    };
    let init = ScalarField2D::zeros(p.grid);
    let truth = Truth { u0: &p.u0, c: &p.c };
    let out = joint_reconstruct(&p.m, &init, &p.c0, &p.gamma, &p.solver, &cfg, Some(truth)).unwrap();
    out.history.status().unwrap();
    let (e_c0, e_c) = (rel_speed(&p.c, &p.c0), rel_speed(&p.c, &out.c));
    let e_u = rel_h0(&p.u0, &out.u0);
    assert!(e_c < e_c0, "speed error {e_c} vs initial {e_c0}");
    assert!(e_u < 0.1, "pressure error {e_u}");
    let first = &out.history.records[0];
    assert!((first.err_c_rel.unwrap() - e_c0).abs() < 1e-12);
}

#[test]
fn blind_joint_run_records_no_errors() {
    let p = joint_problem(32, smooth_bump);
    let cfg = ReconstructionConfig {
        coarse_nx: 4,
        coarse_ny: 4,
        max_iter: 6,
        ..Default::default()
    };
    let init = ScalarField2D::zeros(p.grid);
    let out = joint_reconstruct(&p.m, &init, &p.c0, &p.gamma, &p.solver, &cfg, None).unwrap();
    assert!(out.history.records.iter().all(|r| r.err_u_rel.is_none() && r.in_region.is_none()));
    let misfits = out.history.misfits();
    assert!(misfits.last().unwrap() < &misfits[0]);
}

#[test]
fn joint_rejects_data_on_another_grid() {
    let p = joint_problem(32, smooth_bump);
    let q = joint_problem(24, smooth_bump);
    let cfg = ReconstructionConfig {
        coarse_nx: 4,
        coarse_ny: 4,
        ..Default::default()
    };
    let init = ScalarField2D::zeros(p.grid);
    assert!(joint_reconstruct(&q.m, &init, &p.c0, &p.gamma, &p.solver, &cfg, None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projected_speed_respects_bounds(
        update in proptest::collection::vec(-2.0f64..2.0, 16),
        base in 0.85f64..1.15,
    ) {
        let grid = Grid2D::unit_square(20).unwrap();
        let bounds = SpeedBounds::new(0.8, 1.2).unwrap();
        let c = WaveSpeed::constant(grid, base, bounds).unwrap();
        let mesh = CoarseMesh::new(&grid, 4, 4).unwrap();
        let out = project_speed(&update, &c, &mesh).unwrap();
        prop_assert!(out.min() >= bounds.low && out.max() <= bounds.high);
    }

    #[test]
    fn prolongation_transpose_identity(
        coarse in proptest::collection::vec(-1.0f64..1.0, 12),
        seed in 0u64..1000,
    ) {
        let grid = Grid2D::unit_square(17).unwrap();
        let mesh = CoarseMesh::new(&grid, 4, 3).unwrap();
        let fine = ScalarField2D::from_fn(grid, |x, y| {
            ((seed as f64 + 1.0) * x).sin() + (3.0 * y + seed as f64).cos()
        })
        .unwrap();
        let lhs: f64 = mesh
            .prolong(&coarse)
            .unwrap()
            .values()
            .iter()
            .zip(fine.values())
            .map(|(a, b)| a * b)
            .sum();
        let rhs: f64 = mesh.restrict(&fine).unwrap().iter().zip(&coarse).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }
}
