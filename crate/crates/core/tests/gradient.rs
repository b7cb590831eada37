use core::f64::consts::PI;

use pat_core::recon::{gradient_wavespeed, CoarseMesh};
use pat_core::wave::{BoundaryImpedance, SolverConfig};
use pat_core::{forward_map, Grid2D, InitialState, ScalarField2D, SpeedBounds, WaveSpeed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup() -> (Grid2D, WaveSpeed, ScalarField2D, BoundaryImpedance, SolverConfig) {
    let grid = Grid2D::unit_square(32).unwrap();
    let bounds = SpeedBounds::new(0.5, 2.0).unwrap();
    let c = WaveSpeed::new(
        ScalarField2D::from_fn(grid, |x, y| 1.0 + 0.05 * (PI * x).sin() * (PI * y).cos()).unwrap(),
        bounds,
    )
    .unwrap();
    let u0 = ScalarField2D::from_fn(grid, |x, y| {
        let r2 = ((x - 0.45).powi(2) + (y - 0.55).powi(2)) / 0.09;
        if r2 < 1.0 {
            (1.0 - 1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    })
    .unwrap()
    .with_zero_boundary();
    let gamma = BoundaryImpedance::uniform(&grid, 1.0).unwrap();
    let mut solver = SolverConfig::new(1.5);
    solver.reference_speed = Some(bounds.high);
    (grid, c, u0, gamma, solver)
}

#[test]
fn adjoint_gradient_matches_central_differences() {
    let (grid, c, u0, gamma, solver) = setup();
    let s = InitialState::pressure(u0.clone()).unwrap();
    // data from a different speed so the residual is generic
    let c_data = WaveSpeed::new(
        c.field().map(|v| 1.03 * v).unwrap(),
        c.bounds(),
    )
    .unwrap();
    let m = forward_map(&c_data, &gamma, &s, &solver).unwrap();
    let misfit = |cc: &WaveSpeed| {
        let r = forward_map(cc, &gamma, &s, &solver).unwrap().sub(&m).unwrap();
        0.5 * r.inner(&r).unwrap()
    };
    let mesh = CoarseMesh::new(&grid, 6, 6).unwrap();
    let residual = forward_map(&c, &gamma, &s, &solver).unwrap().sub(&m).unwrap();
    let g = gradient_wavespeed(&u0, &c, &residual, &gamma, &solver, &mesh).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for probe in 0..5 {
        let d: Vec<f64> = (0..mesh.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let df = mesh.prolong(&d).unwrap();
        let h = 1e-4;
        let shifted = |t: f64| WaveSpeed::new(c.field().axpy(t, &df).unwrap(), c.bounds()).unwrap();
        let fd = (misfit(&shifted(h)) - misfit(&shifted(-h))) / (2.0 * h);
        let adj: f64 = g.coarse.iter().zip(&d).map(|(a, b)| a * b).sum();
        let rel = (fd - adj).abs() / fd.abs().max(adj.abs());
        assert!(rel < 1e-3, "probe {probe}: fd {fd:e} vs adjoint {adj:e} (rel {rel:e})");
    }
}

#[test]
fn zero_residual_gives_zero_gradient() {
    let (grid, c, u0, gamma, solver) = setup();
    let s = InitialState::pressure(u0.clone()).unwrap();
    let m = forward_map(&c, &gamma, &s, &solver).unwrap();
    let residual = m.sub(&m).unwrap();
    let mesh = CoarseMesh::new(&grid, 4, 4).unwrap();
    let g = gradient_wavespeed(&u0, &c, &residual, &gamma, &solver, &mesh).unwrap();
    assert!(g.coarse.iter().all(|&v| v == 0.0));
}
