//! Iterative recovery of the initial pressure (fixed speed) and of the pair
//! (pressure, speed) from a single boundary trace.
//!
//! The pressure update is Landweber on the linear map `Λ_c`. The speed is
//! represented on a coarse node mesh, prolongated bilinearly to the field
//! grid, and updated by a projected gradient step whose gradient comes from
//! the exact transpose of the discrete solver. Convergence is monitored
//! through contraction factors: the per-iteration error ratios of each
//! variable over a trailing window. The ordering `β_c ≤ α_u` (speed errors
//! shrink at least as fast as pressure errors) keeps the iterates inside
//! the uniqueness region once they start there, and relaxation adjusts the
//! step sizes when the ordering fails.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField2D};
use crate::norms::{norm_h0, norm_w1inf};
use crate::state::{InitialState, WaveSpeed};
use crate::trace::{trace_norm_h0, BoundaryTrace};
use crate::verify::{check_uniqueness_region, DEFAULT_EPSILON};
use crate::wave::{BoundaryImpedance, Propagator, SolverConfig};

/// Trailing window of the contraction monitor.
pub const DEFAULT_WINDOW: usize = 5;
/// Consecutive misfit increases tolerated before a run is declared divergent.
pub const DIVERGENCE_PATIENCE: usize = 5;
/// Power iterations used to estimate `‖Λ‖²` for the default pressure step.
pub const POWER_ITERATIONS: usize = 12;
/// Largest speed change of the first line-search probe, relative to the
/// mean speed.
pub const LINE_SEARCH_PROBE: f64 = 0.02;
/// Relaxation never shrinks the pressure step below this fraction of its
/// initial value.
pub const MIN_STEP_U_FRACTION: f64 = 1e-6;
/// Halvings tried on the speed step once the pressure is frozen.
pub const SPEED_HALVINGS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionConfig {
    /// Pressure step; `None` uses `1/‖Λ‖²` estimated by power iteration.
    pub step_u: Option<f64>,
    /// Speed step; `None` runs a one-shot line search at the first iterate
    /// with a nonzero speed gradient.
    pub step_c: Option<f64>,
    /// Multiplies the speed step (explicit or line-searched).
    pub step_c_scale: f64,
    pub max_iter: usize,
    /// Stop once `misfit ≤ tol_misfit · ‖m‖`.
    pub tol_misfit: f64,
    /// Nodes of the speed mesh along x and y.
    pub coarse_nx: usize,
    pub coarse_ny: usize,
    /// Nesterov momentum on the speed variable.
    pub nesterov: bool,
    /// Region parameter used when monitoring against a known truth.
    pub epsilon: f64,
    pub enforce_relaxation: bool,
    pub window: usize,
    /// Keep a copy of the iterate every this many iterations.
    pub checkpoint_stride: Option<usize>,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            step_u: None,
            step_c: None,
            step_c_scale: 1.0,
            max_iter: 200,
            tol_misfit: 1e-6,
            coarse_nx: 8,
            coarse_ny: 8,
            nesterov: false,
            epsilon: DEFAULT_EPSILON,
            enforce_relaxation: true,
            window: DEFAULT_WINDOW,
            checkpoint_stride: None,
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self, grid: &Grid2D) -> Result<()> {
        let positive = |v: Option<f64>| v.is_none_or(|s| s > 0.0 && s.is_finite());
        if !positive(self.step_u) || !positive(self.step_c) {
            return Err(Error::InvalidConfig("step sizes must be positive".into()));
        }
        if !(self.step_c_scale > 0.0 && self.step_c_scale.is_finite()) {
            return Err(Error::InvalidConfig("step_c_scale must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.tol_misfit >= 0.0) {
            return Err(Error::InvalidConfig("tol_misfit must be non-negative".into()));
        }
        if self.coarse_nx < 2
            || self.coarse_ny < 2
            || self.coarse_nx >= grid.nx()
            || self.coarse_ny >= grid.ny()
        {
            return Err(Error::InvalidConfig(format!(
                "coarse mesh {}x{} must have at least 2 nodes per axis and be strictly coarser than the {}x{} grid",
                self.coarse_nx,
                self.coarse_ny,
                grid.nx(),
                grid.ny()
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        if self.window < 2 {
            return Err(Error::InvalidConfig("window must be at least 2".into()));
        }
        if self.checkpoint_stride == Some(0) {
            return Err(Error::InvalidConfig("checkpoint_stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Bilinear interpolation from a coarse node mesh spanning the same
/// rectangle as the field grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseMesh {
    nx: usize,
    ny: usize,
    grid: Grid2D,
    /// Per fine node: lower-left coarse cell and local coordinates.
    cells: Vec<(usize, usize, f64, f64)>,
}

impl CoarseMesh {
    pub fn new(grid: &Grid2D, nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 || nx >= grid.nx() || ny >= grid.ny() {
            return Err(Error::InvalidConfig(format!(
                "coarse mesh {nx}x{ny} does not fit a {}x{} grid",
                grid.nx(),
                grid.ny()
            )));
        }
        let locate = |t: f64, n: usize| {
            let s = t * (n - 1) as f64;
            let k = (libm::floor(s) as usize).min(n - 2);
            (k, s - k as f64)
        };
        let mut cells = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            let (cj, fy) = locate(j as f64 / (grid.ny() - 1) as f64, ny);
            for i in 0..grid.nx() {
                let (ci, fx) = locate(i as f64 / (grid.nx() - 1) as f64, nx);
                cells.push((ci, cj, fx, fy));
            }
        }
        Ok(Self {
            nx,
            ny,
            grid: *grid,
            cells,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    fn corners(&self, node: usize) -> [(usize, f64); 4] {
        let (ci, cj, fx, fy) = self.cells[node];
        let k = cj * self.nx + ci;
        [
            (k, (1.0 - fx) * (1.0 - fy)),
            (k + 1, fx * (1.0 - fy)),
            (k + self.nx, (1.0 - fx) * fy),
            (k + self.nx + 1, fx * fy),
        ]
    }

    /// Coarse node values → field grid.
    pub fn prolong(&self, coarse: &[f64]) -> Result<ScalarField2D> {
        self.check_coarse(coarse)?;
        let values = (0..self.grid.len())
            .map(|n| self.corners(n).iter().map(|&(k, w)| w * coarse[k]).sum())
            .collect();
        ScalarField2D::new(self.grid, values)
    }

    /// Transpose of [`prolong`](Self::prolong): each fine value is spread
    /// onto its four coarse neighbors with the interpolation weights.
    pub fn restrict(&self, fine: &ScalarField2D) -> Result<Vec<f64>> {
        self.grid.check_same(fine.grid())?;
        let mut out = vec![0.0; self.len()];
        for (n, &v) in fine.values().iter().enumerate() {
            for (k, w) in self.corners(n) {
                out[k] += w * v;
            }
        }
        Ok(out)
    }

    fn check_coarse(&self, coarse: &[f64]) -> Result<()> {
        if coarse.len() != self.len() {
            return Err(Error::GeometryMismatch(format!(
                "coarse vector has {} entries, mesh has {}",
                coarse.len(),
                self.len()
            )));
        }
        Ok(())
    }
}

/// Adds the prolongated coarse `update` to `c`, clamps into `c`'s bounds,
/// and halves the update until the `W^{1,∞}` bound also holds. The result
/// always satisfies the speed invariants.
pub fn project_speed(update: &[f64], c: &WaveSpeed, mesh: &CoarseMesh) -> Result<WaveSpeed> {
    let delta = mesh.prolong(update)?;
    let bounds = c.bounds();
    let mut scale = 1.0;
    for _ in 0..40 {
        let field = c.field().zip_with(&delta, |a, d| bounds.clamp(a + scale * d))?;
        if let Ok(next) = WaveSpeed::new(field, bounds) {
            return Ok(next);
        }
        scale *= 0.5;
    }
    Ok(c.clone())
}

/// Coarse and fine gradients of `½‖Λ_c u₀ − m‖²` with respect to `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedGradient {
    pub coarse: Vec<f64>,
    pub fine: ScalarField2D,
}

/// Forward run keeping the second differences `uⁿ⁺¹ − 2uⁿ + uⁿ⁻¹`
/// (`n = 0` uses the virtual level, giving `2(u¹ − u⁰ − dt·u₁)`).
fn forward_with_history(prop: &Propagator, s: &InitialState) -> Result<(BoundaryTrace, Vec<f64>)> {
    let n = prop.grid.len();
    let steps = prop.timing.n_steps;
    let stride = prop.timing.record_stride;
    let mut samples = Vec::with_capacity(prop.timing.n_records() * prop.boundary.len());
    let mut second = vec![0.0; steps * n];
    prop.forward(s.u0().values(), s.u1().values(), |k, prev, cur, next, _| {
        if k % stride == 0 {
            samples.extend(prop.boundary.iter().map(|&idx| cur[idx]));
        }
        if k < steps {
            let row = &mut second[k * n..(k + 1) * n];
            for i in 0..n {
                row[i] = next[i] - 2.0 * cur[i] + prev[i];
            }
        }
    })?;
    Ok((
        BoundaryTrace::from_raw(prop.grid, prop.timing.dt_record(), samples),
        second,
    ))
}

/// `dJ/dq` for `q = c⁻²`, Euclidean in the node values:
/// `−W c² [d₁ Σ_{n≥1} μⁿ⁺¹ Δ²uⁿ + ½ μ¹ Δ²u⁰]`, plus `Λ₀* r`.
fn adjoint_gradient(
    prop: &Propagator,
    second: &[f64],
    residual: &BoundaryTrace,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = prop.grid.len();
    let mut acc = vec![0.0; n];
    let (adj_u0, _) = prop.adjoint(residual, |k, mu| {
        if k == 0 {
            return;
        }
        let row = &second[(k - 1) * n..k * n];
        if k == 1 {
            for i in 0..n {
                acc[i] += 0.5 * mu[i] * row[i];
            }
        } else {
            for i in 0..n {
                acc[i] += prop.d1[i] * mu[i] * row[i];
            }
        }
    })?;
    let grad_q = (0..n).map(|i| -prop.w[i] * acc[i] / prop.q[i]).collect();
    Ok((grad_q, adj_u0))
}

fn chain_to_speed(c: &WaveSpeed, grad_q: &[f64]) -> ScalarField2D {
    let values = c
        .values()
        .iter()
        .zip(grad_q)
        .map(|(&cv, &g)| -2.0 * g / (cv * cv * cv))
        .collect();
    ScalarField2D::from_raw(*c.grid(), values)
}

fn pinned_solver(solver: &SolverConfig, c: &WaveSpeed) -> SolverConfig {
    let mut cfg = solver.clone();
    let high = c.bounds().high;
    cfg.reference_speed = Some(cfg.reference_speed.map_or(high, |r| r.max(high)));
    cfg.snapshot_stride = None;
    cfg.track_energy = false;
    cfg
}

/// Adjoint-state gradient of `½‖Λ_c(u₀, 0) − m‖²` with respect to the
/// coarse speed parameters, where `residual = Λ_c(u₀, 0) − m` comes from
/// the same configuration. The coarse gradient is the transpose of the
/// prolongation applied to the fine one.
pub fn gradient_wavespeed(
    u0: &ScalarField2D,
    c: &WaveSpeed,
    residual: &BoundaryTrace,
    gamma: &BoundaryImpedance,
    solver: &SolverConfig,
    mesh: &CoarseMesh,
) -> Result<SpeedGradient> {
    c.grid().check_same(u0.grid())?;
    let prop = Propagator::new(c, gamma, solver)?;
    let s = InitialState::pressure(u0.clone())?;
    let (_, second) = forward_with_history(&prop, &s)?;
    let (grad_q, _) = adjoint_gradient(&prop, &second, residual)?;
    let fine = chain_to_speed(c, &grad_q);
    let coarse = mesh.restrict(&fine)?;
    Ok(SpeedGradient { coarse, fine })
}

/// Min and max of consecutive error ratios over a trailing window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionFactors {
    pub alpha: f64,
    pub beta: f64,
    /// Some error in the window is exactly zero; ratios are undefined and
    /// reported as zero.
    pub exact: bool,
}

impl ContractionFactors {
    /// Ratios `e_{k+1}/e_k` over the last `window` steps of `errors`
    /// (at least three entries).
    pub fn from_errors(errors: &[f64], window: usize) -> Result<Self> {
        if errors.len() < 3 || window == 0 {
            return Err(Error::InvalidConfig(format!(
                "contraction factors need at least 3 errors, got {}",
                errors.len()
            )));
        }
        let start = errors.len().saturating_sub(window + 1);
        let tail = &errors[start..];
        if tail.iter().any(|&e| e == 0.0) {
            return Ok(Self {
                alpha: 0.0,
                beta: 0.0,
                exact: true,
            });
        }
        let (mut alpha, mut beta) = (f64::INFINITY, 0.0f64);
        for w in tail.windows(2) {
            let r = w[1] / w[0];
            alpha = alpha.min(r);
            beta = beta.max(r);
        }
        Ok(Self {
            alpha,
            beta,
            exact: false,
        })
    }

    /// Strictly contracting: `0 < α ≤ β < 1`.
    pub fn is_contracting(&self) -> bool {
        !self.exact && self.alpha > 0.0 && self.beta < 1.0
    }
}

/// Where the monitored errors came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorSource {
    /// Distances to a known truth.
    Truth,
    /// Increment norms `‖x⁽ⁿ⁺¹⁾ − x⁽ⁿ⁾‖`, used when no truth is available.
    Increments,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionReport {
    pub u: ContractionFactors,
    pub c: Option<ContractionFactors>,
    pub source: ErrorSource,
}

impl ContractionReport {
    pub fn alpha_u(&self) -> f64 {
        self.u.alpha
    }

    pub fn beta_u(&self) -> f64 {
        self.u.beta
    }

    pub fn alpha_c(&self) -> Option<f64> {
        self.c.map(|f| f.alpha)
    }

    pub fn beta_c(&self) -> Option<f64> {
        self.c.map(|f| f.beta)
    }

    /// Both variables strictly contracting.
    pub fn is_valid(&self) -> bool {
        self.u.is_contracting() && self.c.is_none_or(|c| c.is_contracting())
    }

    /// `β_c ≤ α_u`; vacuous without a speed variable or at exact
    /// convergence.
    pub fn ordering_holds(&self) -> bool {
        match self.c {
            None => true,
            Some(c) if c.exact || self.u.exact => true,
            Some(c) => c.beta <= self.u.alpha,
        }
    }
}

/// Contraction factors from per-iterate error sequences.
pub fn contraction_factors(
    u_errors: &[f64],
    c_errors: Option<&[f64]>,
    window: usize,
    source: ErrorSource,
) -> Result<ContractionReport> {
    Ok(ContractionReport {
        u: ContractionFactors::from_errors(u_errors, window)?,
        c: c_errors
            .map(|e| ContractionFactors::from_errors(e, window))
            .transpose()?,
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub step_u: f64,
    pub step_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationLimits {
    pub step_c_max: f64,
    pub step_u_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relaxation {
    pub steps: StepSizes,
    pub adjusted: bool,
    /// The pressure step hit its floor, so the ordering may keep failing.
    pub saturated: bool,
}

/// When `β_c > α_u`, quarters the pressure step so the pressure is relaxed
/// and does not outrun the speed. If the speed is not contracting at all
/// (`β_c ≥ 1`, an overshooting step) the speed step is halved as well; a
/// contracting speed keeps its step, since shrinking it would only push
/// `β_c` towards 1. The speed step never exceeds `step_c_max` and the
/// pressure step never drops below `step_u_min`.
pub fn enforce_relaxation(
    report: &ContractionReport,
    steps: StepSizes,
    limits: RelaxationLimits,
) -> Relaxation {
    let capped = StepSizes {
        step_u: steps.step_u,
        step_c: steps.step_c.min(limits.step_c_max),
    };
    if report.ordering_holds() {
        return Relaxation {
            steps: capped,
            adjusted: capped != steps,
            saturated: false,
        };
    }
    let relaxed = 0.25 * steps.step_u;
    let saturated = relaxed < limits.step_u_min;
    let overshoot = report.beta_c().is_some_and(|b| b >= 1.0);
    Relaxation {
        steps: StepSizes {
            step_u: relaxed.max(limits.step_u_min),
            step_c: if overshoot { 0.5 * capped.step_c } else { capped.step_c },
        },
        adjusted: true,
        saturated,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    /// `‖Λ_{c⁽ⁿ⁾} u⁽ⁿ⁾ − m‖_{H⁰}`
    pub misfit: f64,
    /// `(‖u₀ − u⁽ⁿ⁾‖ / ‖u₀‖)` in `H⁰`, when the truth is known.
    pub err_u_rel: Option<f64>,
    /// `‖c⁻² − c⁽ⁿ⁾⁻²‖_{W1,∞} / ‖c⁻²‖_{W1,∞}`, when the truth is known.
    pub err_c_rel: Option<f64>,
    pub step_u: f64,
    pub step_c: Option<f64>,
    pub contraction: Option<ContractionReport>,
    pub in_region: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HistoryEvent {
    /// The iterate left the uniqueness region (run continues).
    RegionExit { iter: usize },
    RelaxationApplied { iter: usize, steps: StepSizes },
    /// Relaxation could not shrink the pressure step further.
    RelaxationSaturated { iter: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    /// The initial residual was exactly zero.
    ZeroResidual,
    Tolerance,
    MaxIter,
    /// Misfit grew for [`DIVERGENCE_PATIENCE`] consecutive iterations.
    Diverged { iteration: usize, misfit: f64 },
    /// Relaxation left no admissible move.
    Stalled { iteration: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateHistory {
    pub records: Vec<IterRecord>,
    pub events: Vec<HistoryEvent>,
    pub termination: Termination,
}

impl IterateHistory {
    /// Divergence as an error advising a smaller step; `Ok` otherwise.
    pub fn status(&self) -> Result<()> {
        match self.termination {
            Termination::Diverged { iteration, misfit } => {
                Err(Error::StepSize { iteration, misfit })
            }
            _ => Ok(()),
        }
    }

    pub fn misfits(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.misfit).collect()
    }

    /// `true` if any recorded iterate was flagged outside the region.
    pub fn left_region(&self) -> bool {
        self.records.iter().any(|r| r.in_region == Some(false))
    }
}

/// Ground truth for monitoring.
#[derive(Debug, Clone, Copy)]
pub struct Truth<'a> {
    pub u0: &'a ScalarField2D,
    pub c: &'a WaveSpeed,
}

fn pressure_error(truth: &ScalarField2D, u: &ScalarField2D) -> Result<f64> {
    let den = norm_h0(truth)?;
    if den == 0.0 {
        return Err(Error::DegenerateState);
    }
    Ok(norm_h0(&truth.sub(u)?)? / den)
}

fn speed_error(truth: &WaveSpeed, c: &WaveSpeed) -> Result<f64> {
    let q = truth.inverse_square();
    Ok(norm_w1inf(&q.sub(&c.inverse_square())?)? / norm_w1inf(&q)?)
}

fn speed_increment(a: &WaveSpeed, b: &WaveSpeed) -> Result<f64> {
    norm_w1inf(&a.inverse_square().sub(&b.inverse_square())?)
}

/// Misfit tracker implementing the divergence rule.
struct Divergence {
    last: f64,
    rising: usize,
}

impl Divergence {
    fn new() -> Self {
        Self {
            last: f64::INFINITY,
            rising: 0,
        }
    }

    fn update(&mut self, misfit: f64) -> bool {
        self.rising = if misfit > self.last { self.rising + 1 } else { 0 };
        self.last = misfit;
        self.rising >= DIVERGENCE_PATIENCE
    }
}

fn residual_of(prop: &Propagator, s: &InitialState, m: &BoundaryTrace) -> Result<BoundaryTrace> {
    let mut samples = Vec::with_capacity(m.samples().len());
    let stride = prop.timing.record_stride;
    prop.forward(s.u0().values(), s.u1().values(), |k, _, cur, _, _| {
        if k % stride == 0 {
            samples.extend(prop.boundary.iter().map(|&idx| cur[idx]));
        }
    })?;
    let trace = BoundaryTrace::from_raw(prop.grid, prop.timing.dt_record(), samples);
    trace.sub(m)
}

fn landweber_step(
    prop: &Propagator,
    u: &ScalarField2D,
    residual: &BoundaryTrace,
    step: f64,
) -> Result<ScalarField2D> {
    let (adj, _) = prop.adjoint(residual, |_, _| {})?;
    let g = ScalarField2D::from_raw(prop.grid, adj);
    Ok(u.axpy(-step, &g)?.with_zero_boundary())
}

/// `1 / ‖Λ₀ P‖²` with `P` the zero-boundary projection, by power iteration.
fn default_step_u(prop: &Propagator) -> Result<f64> {
    let grid = prop.grid;
    let mut v = ScalarField2D::constant(grid, 1.0).with_zero_boundary();
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let nv = norm_h0(&v)?;
        v = v.scaled(1.0 / nv);
        let s = InitialState::pressure(v.clone())?;
        let zero = BoundaryTrace::zeros(grid, prop.timing.dt_record(), prop.timing.n_records());
        let r = residual_of(prop, &s, &zero)?;
        let (adj, _) = prop.adjoint(&r, |_, _| {})?;
        v = ScalarField2D::from_raw(grid, adj).with_zero_boundary();
        lambda = norm_h0(&v)?;
        if lambda == 0.0 {
            return Err(Error::InvalidConfig(
                "forward map vanishes; cannot size the pressure step".into(),
            ));
        }
    }
    Ok(1.0 / lambda)
}

fn check_data(m: &BoundaryTrace, prop: &Propagator) -> Result<()> {
    if m.grid() != &prop.grid
        || m.n_times() != prop.timing.n_records()
        || m.dt_record() != prop.timing.dt_record()
    {
        return Err(Error::GeometryMismatch(format!(
            "data has {} samples at dt {}, solver records {} at dt {}",
            m.n_times(),
            m.dt_record(),
            prop.timing.n_records(),
            prop.timing.dt_record()
        )));
    }
    Ok(())
}

/// Iterate kept at a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub iter: usize,
    pub u0: ScalarField2D,
    /// `None` in fixed-speed runs.
    pub c: Option<WaveSpeed>,
}

fn due(cfg: &ReconstructionConfig, iter: usize) -> bool {
    cfg.checkpoint_stride.is_some_and(|s| iter % s == 0)
}

/// Result of a fixed-speed run.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureReconstruction {
    pub u0: ScalarField2D,
    pub step_u: f64,
    pub history: IterateHistory,
    pub checkpoints: Vec<Checkpoint>,
}

/// Landweber iteration `u ← P(u + step_u Λ_c*(m − Λ_c u))` with `u₁ = 0`
/// and `P` zeroing boundary values. Starts from `init` (zero if `None`).
pub fn reconstruct_pressure(
    m: &BoundaryTrace,
    c: &WaveSpeed,
    gamma: &BoundaryImpedance,
    solver: &SolverConfig,
    cfg: &ReconstructionConfig,
    init: Option<&ScalarField2D>,
    truth: Option<&ScalarField2D>,
) -> Result<PressureReconstruction> {
    let grid = *c.grid();
    if cfg.max_iter == 0 || !cfg.step_u.is_none_or(|s| s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidConfig(
            "max_iter must be >= 1 and step_u positive".into(),
        ));
    }
    if cfg.checkpoint_stride == Some(0) {
        return Err(Error::InvalidConfig("checkpoint_stride must be at least 1".into()));
    }
    let prop = Propagator::new(c, gamma, solver)?;
    check_data(m, &prop)?;
    let step_u = match cfg.step_u {
        Some(s) => s,
        None => default_step_u(&prop)?,
    };
    let data_norm = trace_norm_h0(m)?;
    let mut u = match init {
        Some(f) => {
            grid.check_same(f.grid())?;
            f.with_zero_boundary()
        }
        None => ScalarField2D::zeros(grid),
    };
    let mut records = Vec::new();
    let mut checkpoints = Vec::new();
    let mut divergence = Divergence::new();
    let mut errors = Vec::new();
    let termination = loop {
        let iter = records.len();
        let residual = residual_of(&prop, &InitialState::pressure(u.clone())?, m)?;
        let misfit = trace_norm_h0(&residual)?;
        let err = truth.map(|t| pressure_error(t, &u)).transpose()?;
        if let Some(e) = err {
            errors.push(e);
        }
        let contraction = if errors.len() >= 3 {
            Some(contraction_factors(&errors, None, cfg.window, ErrorSource::Truth)?)
        } else {
            None
        };
        records.push(IterRecord {
            iter,
            misfit,
            err_u_rel: err,
            err_c_rel: None,
            step_u,
            step_c: None,
            contraction,
            in_region: None,
        });
        if due(cfg, iter) {
            checkpoints.push(Checkpoint {
                iter,
                u0: u.clone(),
                c: None,
            });
        }
        if misfit == 0.0 {
            break Termination::ZeroResidual;
        }
        if misfit <= cfg.tol_misfit * data_norm {
            break Termination::Tolerance;
        }
        if divergence.update(misfit) {
            break Termination::Diverged { iteration: iter, misfit };
        }
        if iter == cfg.max_iter {
            break Termination::MaxIter;
        }
        u = landweber_step(&prop, &u, &residual, step_u)?;
    };
    Ok(PressureReconstruction {
        u0: u,
        step_u,
        history: IterateHistory {
            records,
            events: Vec::new(),
            termination,
        },
        checkpoints,
    })
}

/// Result of a joint run.
#[derive(Debug, Clone, PartialEq)]
pub struct JointReconstruction {
    pub u0: ScalarField2D,
    pub c: WaveSpeed,
    pub history: IterateHistory,
    pub checkpoints: Vec<Checkpoint>,
}

/// Parabola through the misfit at `0, s, 2s`; returns the minimizing
/// multiple of `s`, clamped to `[0.25, 4]`.
fn parabola_step(j0: f64, j1: f64, j2: f64) -> f64 {
    let a = 0.5 * (j2 - 2.0 * j1 + j0);
    let b = 0.5 * (4.0 * j1 - j2 - 3.0 * j0);
    if a > 0.0 {
        (-b / (2.0 * a)).clamp(0.25, 4.0)
    } else if j2 < j0 {
        4.0
    } else {
        0.25
    }
}

fn half_misfit_sq(r: &BoundaryTrace) -> Result<f64> {
    Ok(0.5 * r.inner(r)?)
}

/// Misfit gradient data at the current iterate: `Λ*r` for the pressure and
/// the coarse speed gradient.
struct Linearization {
    residual: BoundaryTrace,
    adj_u0: ScalarField2D,
    grad_c: Vec<f64>,
}

fn linearize(
    c: &WaveSpeed,
    u: &ScalarField2D,
    m: &BoundaryTrace,
    gamma: &BoundaryImpedance,
    solver: &SolverConfig,
    mesh: &CoarseMesh,
) -> Result<Linearization> {
    let prop = Propagator::new(c, gamma, solver)?;
    let (trace, second) = forward_with_history(&prop, &InitialState::pressure(u.clone())?)?;
    let residual = trace.sub(m)?;
    let (grad_q, adj) = adjoint_gradient(&prop, &second, &residual)?;
    Ok(Linearization {
        residual,
        adj_u0: ScalarField2D::from_raw(prop.grid, adj),
        grad_c: mesh.restrict(&chain_to_speed(c, &grad_q))?,
    })
}

/// What the contraction monitor measures each iterate against: errors
/// against the truth, or increment norms `(‖Δu‖, ‖Δc⁻²‖)` in blind mode.
struct Monitor<'a> {
    truth: Option<(Truth<'a>, InitialState)>,
    last_increments: Option<(f64, f64)>,
    /// Errors (or increments) where the ordering check started.
    base: Option<(f64, f64)>,
}

impl Monitor<'_> {
    fn source(&self) -> ErrorSource {
        match self.truth {
            Some(_) => ErrorSource::Truth,
            None => ErrorSource::Increments,
        }
    }

    fn measure(
        &self,
        (u, c): (&ScalarField2D, &WaveSpeed),
        (u_next, c_next): (&ScalarField2D, &WaveSpeed),
    ) -> Result<(f64, f64)> {
        match &self.truth {
            Some((t, _)) => Ok((pressure_error(t.u0, u_next)?, speed_error(t.c, c_next)?)),
            None => Ok((norm_h0(&u_next.sub(u)?)?, speed_increment(c_next, c)?)),
        }
    }

    /// Contraction `(ρ_u, ρ_c)` of a candidate relative to the base, or
    /// `None` while no base with both entries nonzero exists.
    fn ratios(
        &mut self,
        current: (&ScalarField2D, &WaveSpeed),
        next: (&ScalarField2D, &WaveSpeed),
    ) -> Result<Option<(f64, f64)>> {
        if self.base.is_none() {
            let now = match &self.truth {
                Some(_) => Some(self.measure(current, current)?),
                None => self.last_increments,
            };
            self.base = now.filter(|&(a, b)| a > 0.0 && b > 0.0);
        }
        let Some((bu, bc)) = self.base else {
            return Ok(None);
        };
        let (eu, ec) = self.measure(current, next)?;
        Ok(Some((eu / bu, ec / bc)))
    }
}

fn one_step_report(rho_u: f64, rho_c: f64, source: ErrorSource) -> ContractionReport {
    let f = |r: f64| ContractionFactors {
        alpha: r,
        beta: r,
        exact: false,
    };
    ContractionReport {
        u: f(rho_u),
        c: Some(f(rho_c)),
        source,
    }
}

/// Joint recovery of `(u₀, c)` from one trace, with `u₁ = 0`.
///
/// Each iteration linearizes at the current pair (one forward run keeping
/// its history, one adjoint run), then moves the pressure by a Landweber
/// step and the speed by a projected gradient step on the coarse mesh.
/// With Nesterov momentum the linearization point of the speed is
/// extrapolated from the last two speed iterates.
///
/// The nominal speed step (configured, or from a line search) is fixed at
/// the first iterate with a nonzero speed gradient. Because the curvature
/// of the misfit in `c` grows with the square of the pressure amplitude,
/// later steps are scaled by `(‖u_ls‖ / ‖u⁽ⁿ⁾‖)²`, where `u_ls` is the
/// pressure at that iterate.
///
/// With relaxation enforced, every candidate move is checked for
/// `ρ_c ≤ ρ_u`, where `ρ` is the contraction of each variable since the
/// first checked iterate (errors against the truth when supplied,
/// increment norms otherwise); this is the ordering `β_cⁿ ≤ α_uⁿ` that
/// carries the region condition from one iterate to the next.
/// [`enforce_relaxation`] shrinks the steps until it holds. If the pressure
/// step saturates, the pressure is frozen for that iteration and the speed
/// step is halved until the ordering holds on its own; a run in which
/// neither can move ends as [`Termination::Stalled`].
///
/// `c_init`'s bounds are the admissible speed range, and the solver's time
/// step is pinned by its upper bound so every iterate shares the data's
/// time grid; `m` must be recorded with `reference_speed` at least that
/// bound. With a truth, every iterate is also checked against the
/// uniqueness region; leaving it is recorded, not fatal.
pub fn joint_reconstruct(
    m: &BoundaryTrace,
    u0_init: &ScalarField2D,
    c_init: &WaveSpeed,
    gamma: &BoundaryImpedance,
    solver: &SolverConfig,
    cfg: &ReconstructionConfig,
    truth: Option<Truth<'_>>,
) -> Result<JointReconstruction> {
    let grid = *c_init.grid();
    cfg.validate(&grid)?;
    grid.check_same(u0_init.grid())?;
    let mesh = CoarseMesh::new(&grid, cfg.coarse_nx, cfg.coarse_ny)?;
    let solver = pinned_solver(solver, c_init);
    let data_norm = {
        let prop = Propagator::new(c_init, gamma, &solver)?;
        check_data(m, &prop)?;
        trace_norm_h0(m)?
    };
    let mut monitor = Monitor {
        truth: match truth {
            Some(t) => Some((t, InitialState::pressure(t.u0.clone())?)),
            None => None,
        },
        last_increments: None,
        base: None,
    };

    let mut u = u0_init.with_zero_boundary();
    let mut c = c_init.clone();
    let mut c_prev = c.clone();
    let mut step_u = cfg.step_u;
    // nominal speed step and the pressure norm it was calibrated at
    let mut step_c: Option<(f64, f64)> = None;

    let mut records: Vec<IterRecord> = Vec::new();
    let mut checkpoints = Vec::new();
    let mut events = Vec::new();
    let mut divergence = Divergence::new();
    let (mut u_series, mut c_series) = (Vec::new(), Vec::new());

    let termination = loop {
        let iter = records.len();
        let y = if cfg.nesterov && iter > 1 {
            let theta = (iter as f64 - 1.0) / (iter as f64 + 2.0);
            let field = c.field().zip_with(c_prev.field(), |a, b| a + theta * (a - b))?;
            let field = field.map(|v| c.bounds().clamp(v))?;
            WaveSpeed::new(field, c.bounds()).unwrap_or_else(|_| c.clone())
        } else {
            c.clone()
        };
        let lin = linearize(&y, &u, m, gamma, &solver, &mesh)?;
        let residual = if y == c {
            lin.residual.clone()
        } else {
            let prop = Propagator::new(&c, gamma, &solver)?;
            residual_of(&prop, &InitialState::pressure(u.clone())?, m)?
        };
        let misfit = trace_norm_h0(&residual)?;

        let s = InitialState::pressure(u.clone())?;
        let (err_u, err_c, region) = match &monitor.truth {
            Some((truth, state)) => {
                let r = check_uniqueness_region(truth.c, &c, state, &s, cfg.epsilon)?;
                u_series.push(pressure_error(truth.u0, &u)?);
                c_series.push(speed_error(truth.c, &c)?);
                (u_series.last().copied(), c_series.last().copied(), Some(r.in_region))
            }
            None => (None, None, None),
        };
        if region == Some(false) {
            events.push(HistoryEvent::RegionExit { iter });
        }
        let contraction = if u_series.len() >= 3 {
            Some(contraction_factors(
                &u_series,
                Some(&c_series),
                cfg.window,
                monitor.source(),
            )?)
        } else {
            None
        };
        let su = match step_u {
            Some(s) => s,
            None => {
                let s = default_step_u(&Propagator::new(&c, gamma, &solver)?)?;
                step_u = Some(s);
                s
            }
        };
        records.push(IterRecord {
            iter,
            misfit,
            err_u_rel: err_u,
            err_c_rel: err_c,
            step_u: su,
            step_c: None,
            contraction,
            in_region: region,
        });
        if due(cfg, iter) {
            checkpoints.push(Checkpoint {
                iter,
                u0: u.clone(),
                c: Some(c.clone()),
            });
        }
        if misfit == 0.0 {
            break Termination::ZeroResidual;
        }
        if misfit <= cfg.tol_misfit * data_norm {
            break Termination::Tolerance;
        }
        if divergence.update(misfit) {
            break Termination::Diverged { iteration: iter, misfit };
        }
        if iter == cfg.max_iter {
            break Termination::MaxIter;
        }

        // speed direction and nominal step
        let u_norm = norm_h0(&u)?;
        let direction: Vec<f64> = lin.grad_c.iter().map(|v| -v).collect();
        let moving = direction.iter().any(|&v| v != 0.0);
        if moving && step_c.is_none() {
            let s = match cfg.step_c {
                Some(s) => s,
                None => line_search(&y, &u, &direction, &lin.residual, m, gamma, &solver, &mesh)?,
            };
            step_c = Some((s * cfg.step_c_scale, u_norm));
        }
        let sc_nominal = match step_c {
            Some((s, u_ref)) if moving && u_norm > 0.0 => s * (u_ref / u_norm) * (u_ref / u_norm),
            _ => 0.0,
        };

        // candidate move, relaxed until the ordering holds
        let candidate = |su: f64, sc: f64| -> Result<(ScalarField2D, WaveSpeed)> {
            let u_next = u.axpy(-su, &lin.adj_u0)?.with_zero_boundary();
            let c_next = if sc > 0.0 {
                let upd: Vec<f64> = direction.iter().map(|v| sc * v).collect();
                project_speed(&upd, &y, &mesh)?
            } else {
                y.clone()
            };
            Ok((u_next, c_next))
        };
        let (mut su_k, mut sc_k) = (su, sc_nominal);
        let (mut u_next, mut c_next) = candidate(su_k, sc_k)?;
        let mut stalled = false;
        if cfg.enforce_relaxation && sc_nominal > 0.0 {
            let limits = RelaxationLimits {
                step_c_max: sc_nominal,
                step_u_min: su * MIN_STEP_U_FRACTION,
            };
            let mut adjusted = false;
            while let Some((rho_u, rho_c)) = monitor.ratios((&u, &c), (&u_next, &c_next))? {
                let report = one_step_report(rho_u, rho_c, monitor.source());
                let out = enforce_relaxation(
                    &report,
                    StepSizes {
                        step_u: su_k,
                        step_c: sc_k,
                    },
                    limits,
                );
                if !out.adjusted {
                    break;
                }
                adjusted = true;
                if out.saturated {
                    events.push(HistoryEvent::RelaxationSaturated { iter });
                    // freeze the pressure; the speed moves only if that
                    // alone keeps the ordering
                    su_k = 0.0;
                    let mut halvings = 0;
                    loop {
                        (u_next, c_next) = candidate(0.0, sc_k)?;
                        let held = monitor.ratios((&u, &c), (&u_next, &c_next))?;
                        if held.is_none_or(|(ru, rc)| rc <= ru) {
                            break;
                        }
                        if halvings == SPEED_HALVINGS {
                            sc_k = 0.0;
                            c_next = y.clone();
                            stalled = y == c;
                            break;
                        }
                        sc_k *= 0.5;
                        halvings += 1;
                    }
                    break;
                }
                su_k = out.steps.step_u;
                sc_k = out.steps.step_c;
                (u_next, c_next) = candidate(su_k, sc_k)?;
            }
            if adjusted {
                events.push(HistoryEvent::RelaxationApplied {
                    iter,
                    steps: StepSizes {
                        step_u: su_k,
                        step_c: sc_k,
                    },
                });
            }
        }
        if let Some(last) = records.last_mut() {
            last.step_u = su_k;
            last.step_c = Some(sc_k);
        }
        if stalled {
            break Termination::Stalled { iteration: iter };
        }

        if monitor.truth.is_none() {
            let inc = monitor.measure((&u, &c), (&u_next, &c_next))?;
            u_series.push(inc.0);
            c_series.push(inc.1);
            monitor.last_increments = Some(inc);
        }
        c_prev = core::mem::replace(&mut c, c_next);
        u = u_next;
    };
    Ok(JointReconstruction {
        u0: u,
        c,
        history: IterateHistory {
            records,
            events,
            termination,
        },
        checkpoints,
    })
}

/// Fits a parabola to the misfit at `0, s, 2s` along `direction` (with the
/// pressure fixed) and returns the step at its vertex. The probe `s` moves
/// the speed by [`LINE_SEARCH_PROBE`] of its mean at most.
#[allow(clippy::too_many_arguments)]
fn line_search(
    c: &WaveSpeed,
    u: &ScalarField2D,
    direction: &[f64],
    residual: &BoundaryTrace,
    m: &BoundaryTrace,
    gamma: &BoundaryImpedance,
    solver: &SolverConfig,
    mesh: &CoarseMesh,
) -> Result<f64> {
    let peak = mesh.prolong(direction)?.max_abs();
    let mean = c.values().iter().sum::<f64>() / c.values().len() as f64;
    let probe = LINE_SEARCH_PROBE * mean / peak;
    let s = InitialState::pressure(u.clone())?;
    let j0 = half_misfit_sq(residual)?;
    let mut j = [0.0; 2];
    for (k, jk) in j.iter_mut().enumerate() {
        let t = probe * (k + 1) as f64;
        let upd: Vec<f64> = direction.iter().map(|v| t * v).collect();
        let ct = project_speed(&upd, c, mesh)?;
        let prop = Propagator::new(&ct, gamma, solver)?;
        *jk = half_misfit_sq(&residual_of(&prop, &s, m)?)?;
    }
    Ok(probe * parabola_step(j0, j[0], j[1]))
}
