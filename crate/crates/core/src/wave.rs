//! Explicit time-domain solver for `ü − c²Δu = 0` with the impedance
//! condition `∂_ν u + γ u̇ = 0`, the boundary forward map, energy
//! diagnostics, and the exact transpose of the discrete forward map.
//!
//! # Scheme
//!
//! Leapfrog in time, 5-point Laplacian in space. Boundary nodes are
//! unknowns; the outward normal derivative is eliminated through a ghost
//! node and replaced by `-γ u̇` with the time-centered
//! `u̇ = (uⁿ⁺¹ − uⁿ⁻¹)/(2dt)`. Written in weighted form the update is
//!
//! ```text
//! M (uⁿ⁺¹ − 2uⁿ + uⁿ⁻¹)/dt² + K uⁿ + B (uⁿ⁺¹ − uⁿ⁻¹)/(2dt) = 0
//! ```
//!
//! with `M = W c⁻²`, `K = −W L` symmetric, and `B = diag(γ · arc length)`,
//! so the staggered energy `½|vⁿ⁺½|²_M + ½ uⁿ⁺¹·K uⁿ` decreases by exactly
//! the boundary flux each step.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField2D};
use crate::operators::{gradient, neumann_laplacian, weighted_dot};
use crate::state::{InitialState, WaveSpeed};
use crate::trace::BoundaryTrace;

/// Amplitude above which a run is declared unstable.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

/// Default fraction of the CFL limit.
pub const DEFAULT_CFL: f64 = 0.4;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Final time `T`.
    pub final_time: f64,
    /// Fraction of `min(hx, hy) / max(c)` used as the time step.
    pub cfl_factor: f64,
    /// Record the boundary trace every this many steps.
    pub record_stride: usize,
    /// Emit full-field snapshots every this many steps.
    pub snapshot_stride: Option<usize>,
    /// Record the discrete energy after every step.
    pub track_energy: bool,
    /// Speed used for the CFL bound when larger than `max(c)`. Pinning it
    /// keeps the time grid fixed across different speeds.
    pub reference_speed: Option<f64>,
}

impl SolverConfig {
    pub fn new(final_time: f64) -> Self {
        Self {
            final_time,
            cfl_factor: DEFAULT_CFL,
            record_stride: 1,
            snapshot_stride: None,
            track_energy: false,
            reference_speed: None,
        }
    }

    /// `T = 3 · diam(Ω) / c_low`, a conservative observation time for
    /// convex domains and mildly varying speed.
    pub fn observation_time(grid: &Grid2D, c_low: f64) -> f64 {
        3.0 * grid.diameter() / c_low
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "final time must be positive, got {}",
                self.final_time
            )));
        }
        if !(self.cfl_factor > 0.0 && self.cfl_factor <= 0.5) {
            return Err(Error::InvalidConfig(format!(
                "cfl_factor must lie in (0, 0.5], got {}",
                self.cfl_factor
            )));
        }
        if self.record_stride == 0 || self.snapshot_stride == Some(0) {
            return Err(Error::InvalidConfig("strides must be at least 1".into()));
        }
        if let Some(c) = self.reference_speed {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "reference speed must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Uniform time discretization of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
    pub record_stride: usize,
}

impl TimeGrid {
    pub fn dt_record(&self) -> f64 {
        self.dt * self.record_stride as f64
    }

    /// Number of recorded samples, including `t = 0`.
    pub fn n_records(&self) -> usize {
        self.n_steps / self.record_stride + 1
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.n_steps as f64
    }
}

/// `dt = cfl · min(hx, hy) / max(c)`, shrunk so that `T` is a whole number
/// of steps.
pub fn cfl_timestep(grid: &Grid2D, c: &WaveSpeed, cfg: &SolverConfig) -> Result<TimeGrid> {
    cfg.validate()?;
    let c_max = c.max().max(cfg.reference_speed.unwrap_or(0.0));
    timestep_for(grid, c_max, cfg)
}

fn timestep_for(grid: &Grid2D, c_max: f64, cfg: &SolverConfig) -> Result<TimeGrid> {
    if !(c_max > 0.0) {
        return Err(Error::InvalidConfig(
            "maximum speed must be positive".into(),
        ));
    }
    let dt0 = cfg.cfl_factor * grid.hx().min(grid.hy()) / c_max;
    // tolerate representation error in T / dt0 before rounding up
    let n_steps = libm::ceil(cfg.final_time / dt0 * (1.0 - 1e-12)).max(1.0) as usize;
    Ok(TimeGrid {
        dt: cfg.final_time / n_steps as f64,
        n_steps,
        record_stride: cfg.record_stride,
    })
}

/// Impedance `γ` at every boundary node, in boundary order.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryImpedance {
    gamma: Vec<f64>,
}

impl BoundaryImpedance {
    pub fn new(grid: &Grid2D, gamma: Vec<f64>) -> Result<Self> {
        if gamma.len() != grid.boundary_len() {
            return Err(Error::InvalidConfig(format!(
                "expected {} impedance values, got {}",
                grid.boundary_len(),
                gamma.len()
            )));
        }
        if gamma.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidConfig("impedance must be positive".into()));
        }
        Ok(Self { gamma })
    }

    pub fn uniform(grid: &Grid2D, gamma: f64) -> Result<Self> {
        Self::new(grid, vec![gamma; grid.boundary_len()])
    }

    /// `γ ≡ 0`: a fully reflecting boundary. Outside the absorbing regime;
    /// meant for conservation and reversibility diagnostics.
    pub fn reflecting(grid: &Grid2D) -> Self {
        Self {
            gamma: vec![0.0; grid.boundary_len()],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.gamma
    }
}

/// Full state `(u, u̇)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveSnapshot {
    pub t: f64,
    pub u: ScalarField2D,
    pub u_dot: ScalarField2D,
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub trace: BoundaryTrace,
    pub snapshots: Vec<WaveSnapshot>,
    /// Staggered discrete energy after each step (empty unless tracked).
    pub energy: Vec<f64>,
    pub timing: TimeGrid,
}

/// Precomputed per-node coefficients of the explicit scheme.
pub(crate) struct Propagator {
    pub grid: Grid2D,
    pub timing: TimeGrid,
    /// `c² dt²`
    pub a: Vec<f64>,
    /// `1 / (1 + σ)`
    pub d1: Vec<f64>,
    /// `(1 − σ) / (1 + σ)`
    pub d2: Vec<f64>,
    /// `1 − σ`
    pub one_minus_sigma: Vec<f64>,
    /// trapezoidal node weights
    pub w: Vec<f64>,
    /// `c⁻²`
    pub q: Vec<f64>,
    pub boundary: Vec<usize>,
    /// trace quadrature: arc-length weight per boundary node
    pub arc: Vec<f64>,
}

impl Propagator {
    pub fn new(c: &WaveSpeed, gamma: &BoundaryImpedance, cfg: &SolverConfig) -> Result<Self> {
        let grid = *c.grid();
        let timing = cfl_timestep(&grid, c, cfg)?;
        Self::with_timing(c, gamma, timing)
    }

    pub fn with_timing(c: &WaveSpeed, gamma: &BoundaryImpedance, timing: TimeGrid) -> Result<Self> {
        let grid = *c.grid();
        if gamma.values().len() != grid.boundary_len() {
            return Err(Error::GeometryMismatch(
                "impedance does not match the grid boundary".into(),
            ));
        }
        let dt = timing.dt;
        let w = grid.quadrature_weights();
        let boundary = grid.boundary_nodes();
        let arc = grid.boundary_arc_weights();
        let mut sigma = vec![0.0; grid.len()];
        for ((&idx, &g), &l) in boundary.iter().zip(gamma.values()).zip(&arc) {
            let cc = c.values()[idx];
            sigma[idx] = g * l * dt * cc * cc / (2.0 * w[idx]);
        }
        let a: Vec<f64> = c.values().iter().map(|c| c * c * dt * dt).collect();
        let d1 = sigma.iter().map(|s| 1.0 / (1.0 + s)).collect();
        let d2 = sigma.iter().map(|s| (1.0 - s) / (1.0 + s)).collect();
        let one_minus_sigma = sigma.iter().map(|s| 1.0 - s).collect();
        let q = c.values().iter().map(|c| 1.0 / (c * c)).collect();
        Ok(Self {
            grid,
            timing,
            a,
            d1,
            d2,
            one_minus_sigma,
            w,
            q,
            boundary,
            arc,
        })
    }

    fn blow_up_check(&self, u: &[f64], step: usize) -> Result<()> {
        if u.iter().any(|v| !(v.abs() <= BLOW_UP_THRESHOLD)) {
            return Err(Error::BlowUp {
                step,
                time: step as f64 * self.timing.dt,
            });
        }
        Ok(())
    }

    /// Runs the scheme from `(u0, u1)` and calls `visit(n, uⁿ⁻¹, uⁿ, uⁿ⁺¹, Luⁿ)`
    /// for `n = 0..=N`. For `n = 0` the first slice is the virtual level
    /// `u¹ − 2dt·u₁`; for `n = N` the last is one step past `T`.
    pub fn forward(
        &self,
        u0: &[f64],
        u1: &[f64],
        mut visit: impl FnMut(usize, &[f64], &[f64], &[f64], &[f64]),
    ) -> Result<()> {
        let n = self.grid.len();
        let dt = self.timing.dt;
        let mut prev = vec![0.0; n];
        let mut cur = u0.to_vec();
        let mut next = vec![0.0; n];
        let mut lap = vec![0.0; n];

        neumann_laplacian(&self.grid, &cur, &mut lap);
        for k in 0..n {
            next[k] = cur[k] + 0.5 * self.a[k] * lap[k] + self.one_minus_sigma[k] * dt * u1[k];
            prev[k] = next[k] - 2.0 * dt * u1[k];
        }
        self.blow_up_check(&next, 1)?;
        visit(0, &prev, &cur, &next, &lap);

        for step in 1..=self.timing.n_steps {
            core::mem::swap(&mut prev, &mut cur);
            core::mem::swap(&mut cur, &mut next);
            neumann_laplacian(&self.grid, &cur, &mut lap);
            for k in 0..n {
                next[k] = self.d1[k] * (2.0 * cur[k] + self.a[k] * lap[k]) - self.d2[k] * prev[k];
            }
            self.blow_up_check(&next, step + 1)?;
            visit(step, &prev, &cur, &next, &lap);
        }
        Ok(())
    }

    /// Source term `Pᵀ(τ_k ℓ r_k) / W` for the adjoint recurrence at step `n`.
    fn inject(&self, residual: &BoundaryTrace, n: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let stride = self.timing.record_stride;
        if n % stride != 0 {
            return;
        }
        let k = n / stride;
        let nt = residual.n_times();
        if k >= nt {
            return;
        }
        let tau = if k == 0 || k == nt - 1 {
            0.5 * residual.dt_record()
        } else {
            residual.dt_record()
        };
        for ((&idx, &l), &r) in self.boundary.iter().zip(&self.arc).zip(residual.at_time(k)) {
            out[idx] = tau * l * r / self.w[idx];
        }
    }

    /// Transpose of the forward map with respect to the trace pairing and
    /// the trapezoidal state pairing. Calls `visit(n, μⁿ)` for
    /// `n = N..=0` and returns `(Λ₀*r, Λ₁*r)`, the components acting on
    /// `u₀` and `u₁`.
    pub fn adjoint(
        &self,
        residual: &BoundaryTrace,
        mut visit: impl FnMut(usize, &[f64]),
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.grid.len();
        let steps = self.timing.n_steps;
        if residual.n_times() != self.timing.n_records()
            || residual.dt_record() != self.timing.dt_record()
            || residual.grid() != &self.grid
        {
            return Err(Error::GeometryMismatch(format!(
                "residual has {} samples at dt {}, solver expects {} at dt {}",
                residual.n_times(),
                residual.dt_record(),
                self.timing.n_records(),
                self.timing.dt_record()
            )));
        }
        let mut mu2 = vec![0.0; n]; // μⁿ⁺²
        let mut mu1 = vec![0.0; n]; // μⁿ⁺¹
        let mut mu = vec![0.0; n];
        let mut src = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let mut lap = vec![0.0; n];

        for step in (0..=steps).rev() {
            self.inject(residual, step, &mut src);
            if step == steps {
                mu.copy_from_slice(&src);
            } else if step > 0 {
                for k in 0..n {
                    tmp[k] = self.a[k] * self.d1[k] * mu1[k];
                }
                neumann_laplacian(&self.grid, &tmp, &mut lap);
                for k in 0..n {
                    mu[k] = src[k] + 2.0 * self.d1[k] * mu1[k] + lap[k] - self.d2[k] * mu2[k];
                }
            } else {
                for k in 0..n {
                    tmp[k] = self.a[k] * mu1[k];
                }
                neumann_laplacian(&self.grid, &tmp, &mut lap);
                for k in 0..n {
                    mu[k] = src[k] + mu1[k] + 0.5 * lap[k] - self.d2[k] * mu2[k];
                }
            }
            self.blow_up_check(&mu, step)?;
            visit(step, &mu);
            if step > 0 {
                core::mem::swap(&mut mu2, &mut mu1);
                core::mem::swap(&mut mu1, &mut mu);
            }
        }
        // after the loop `mu` holds μ⁰ and `mu1` holds μ¹
        let dt = self.timing.dt;
        let adj_u1 = (0..n)
            .map(|k| dt * self.one_minus_sigma[k] * mu1[k])
            .collect();
        Ok((mu, adj_u1))
    }
}

fn check_inputs(c: &WaveSpeed, s: &InitialState) -> Result<()> {
    c.grid().check_same(s.grid())
}

/// Runs the forward problem and returns the boundary trace together with any
/// requested snapshots and energy history.
pub fn simulate(
    c: &WaveSpeed,
    gamma: &BoundaryImpedance,
    s: &InitialState,
    cfg: &SolverConfig,
) -> Result<SimulationOutput> {
    check_inputs(c, s)?;
    let prop = Propagator::new(c, gamma, cfg)?;
    let grid = prop.grid;
    let timing = prop.timing;
    let dt = timing.dt;
    let nb = grid.boundary_len();
    let mut samples = Vec::with_capacity(timing.n_records() * nb);
    let mut snapshots = Vec::new();
    let mut energy = Vec::new();

    prop.forward(
        s.u0().values(),
        s.u1().values(),
        |n, prev, cur, next, lap| {
            if n % timing.record_stride == 0 {
                samples.extend(prop.boundary.iter().map(|&idx| cur[idx]));
            }
            if let Some(stride) = cfg.snapshot_stride {
                if n % stride == 0 {
                    let u_dot = prev
                        .iter()
                        .zip(next)
                        .map(|(p, q)| (q - p) / (2.0 * dt))
                        .collect();
                    snapshots.push(WaveSnapshot {
                        t: n as f64 * dt,
                        u: ScalarField2D::from_raw(grid, cur.to_vec()),
                        u_dot: ScalarField2D::from_raw(grid, u_dot),
                    });
                }
            }
            if cfg.track_energy && n < timing.n_steps {
                energy.push(staggered_energy(&prop, cur, next, lap));
            }
        },
    )?;

    Ok(SimulationOutput {
        trace: BoundaryTrace::from_raw(grid, timing.dt_record(), samples),
        snapshots,
        energy,
        timing,
    })
}

/// `½ |(uⁿ⁺¹ − uⁿ)/dt|²_M + ½ uⁿ⁺¹ · K uⁿ`, with `K uⁿ = −W L uⁿ`.
fn staggered_energy(prop: &Propagator, cur: &[f64], next: &[f64], lap_cur: &[f64]) -> f64 {
    let inv_dt = 1.0 / prop.timing.dt;
    let mut kinetic = 0.0;
    let mut potential = 0.0;
    for k in 0..cur.len() {
        let v = (next[k] - cur[k]) * inv_dt;
        kinetic += prop.w[k] * prop.q[k] * v * v;
        potential -= prop.w[k] * next[k] * lap_cur[k];
    }
    0.5 * (kinetic + potential)
}

/// `Λ_c(u₀, u₁)`: the boundary trace alone. Deterministic.
pub fn forward_map(
    c: &WaveSpeed,
    gamma: &BoundaryImpedance,
    s: &InitialState,
    cfg: &SolverConfig,
) -> Result<BoundaryTrace> {
    let mut quiet = cfg.clone();
    quiet.snapshot_stride = None;
    quiet.track_energy = false;
    Ok(simulate(c, gamma, s, &quiet)?.trace)
}

/// `½ ∫ c⁻² u̇² + |∇u|²` by trapezoidal quadrature.
pub fn energy(snap: &WaveSnapshot, c: &WaveSpeed) -> Result<f64> {
    let grid = snap.u.grid();
    grid.check_same(c.grid())?;
    grid.check_same(snap.u_dot.grid())?;
    let w = grid.quadrature_weights();
    let (gx, gy) = gradient(grid, snap.u.values());
    let kinetic: f64 = w
        .iter()
        .zip(snap.u_dot.values())
        .zip(c.values())
        .map(|((w, v), c)| w * v * v / (c * c))
        .sum();
    let potential = weighted_dot(&w, &gx, &gx) + weighted_dot(&w, &gy, &gy);
    Ok(0.5 * (kinetic + potential))
}

/// Adjoint field and the adjoint of the forward map applied to a residual.
#[derive(Debug, Clone)]
pub struct AdjointOutput {
    /// `Λ*r` restricted to the `u₀` component (trapezoidal pairing).
    pub u0: ScalarField2D,
    /// `Λ*r` restricted to the `u₁` component.
    pub u1: ScalarField2D,
    /// `(t, μ)` every `snapshot_stride` steps, in decreasing time.
    pub snapshots: Vec<(f64, ScalarField2D)>,
}

/// Time-reversed sweep realizing the exact transpose of the discrete
/// forward map: `⟨Λδ, r⟩_trace = ⟨δ₀, Λ₀*r⟩ + ⟨δ₁, Λ₁*r⟩`.
pub fn adjoint_simulate(
    residual: &BoundaryTrace,
    c: &WaveSpeed,
    gamma: &BoundaryImpedance,
    cfg: &SolverConfig,
) -> Result<AdjointOutput> {
    residual.grid().check_same(c.grid())?;
    let prop = Propagator::new(c, gamma, cfg)?;
    let grid = prop.grid;
    let dt = prop.timing.dt;
    let mut snapshots = Vec::new();
    let (u0, u1) = prop.adjoint(residual, |n, mu| {
        if let Some(stride) = cfg.snapshot_stride {
            if n % stride == 0 {
                snapshots.push((n as f64 * dt, ScalarField2D::from_raw(grid, mu.to_vec())));
            }
        }
    })?;
    Ok(AdjointOutput {
        u0: ScalarField2D::from_raw(grid, u0),
        u1: ScalarField2D::from_raw(grid, u1),
        snapshots,
    })
}
