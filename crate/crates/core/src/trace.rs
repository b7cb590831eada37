//! Boundary time series produced by the forward map, and their norms.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{trapezoid_weights, Grid2D};

/// Boundary values `u|_{(0,T)×∂Ω}` sampled every `dt_record`, starting at
/// `t = 0`. Samples are time-major: `samples[k * n_boundary + b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    grid: Grid2D,
    dt_record: f64,
    samples: Vec<f64>,
}

impl BoundaryTrace {
    pub fn new(grid: Grid2D, dt_record: f64, samples: Vec<f64>) -> Result<Self> {
        let nb = grid.boundary_len();
        if !(dt_record > 0.0 && dt_record.is_finite()) {
            return Err(Error::InvalidTrace(format!(
                "recording interval must be positive, got {dt_record}"
            )));
        }
        if samples.is_empty() || samples.len() % nb != 0 {
            return Err(Error::InvalidTrace(format!(
                "{} samples is not a positive multiple of {nb} boundary nodes",
                samples.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTrace("non-finite sample".into()));
        }
        Ok(Self {
            grid,
            dt_record,
            samples,
        })
    }

    pub(crate) fn from_raw(grid: Grid2D, dt_record: f64, samples: Vec<f64>) -> Self {
        Self {
            grid,
            dt_record,
            samples,
        }
    }

    pub fn zeros(grid: Grid2D, dt_record: f64, n_times: usize) -> Self {
        Self::from_raw(grid, dt_record, vec![0.0; n_times * grid.boundary_len()])
    }

    /// Builds a trace by evaluating `f(t, boundary_position)` with `t = k dt`.
    pub fn from_fn(
        grid: Grid2D,
        dt_record: f64,
        n_times: usize,
        f: impl Fn(f64, usize) -> f64,
    ) -> Result<Self> {
        let nb = grid.boundary_len();
        let mut samples = Vec::with_capacity(n_times * nb);
        for k in 0..n_times {
            let t = k as f64 * dt_record;
            samples.extend((0..nb).map(|b| f(t, b)));
        }
        Self::new(grid, dt_record, samples)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn dt_record(&self) -> f64 {
        self.dt_record
    }

    pub fn n_boundary(&self) -> usize {
        self.grid.boundary_len()
    }

    pub fn n_times(&self) -> usize {
        self.samples.len() / self.n_boundary()
    }

    /// Time of the last sample.
    pub fn duration(&self) -> f64 {
        (self.n_times() - 1) as f64 * self.dt_record
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Boundary values at sample `k`.
    pub fn at_time(&self, k: usize) -> &[f64] {
        let nb = self.n_boundary();
        &self.samples[k * nb..(k + 1) * nb]
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        if self.dt_record != other.dt_record || self.samples.len() != other.samples.len() {
            return Err(Error::GeometryMismatch(format!(
                "traces differ in recording: dt {} vs {}, {} vs {} samples",
                self.dt_record,
                other.dt_record,
                self.n_times(),
                other.n_times()
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self::from_raw(
            self.grid,
            self.dt_record,
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self::from_raw(
            self.grid,
            self.dt_record,
            self.samples.iter().map(|v| alpha * v).collect(),
        )
    }

    /// Time derivative: centered inside, second-order one-sided at the ends
    /// (first-order one-sided when only two samples exist).
    pub fn time_derivative(&self) -> Result<Self> {
        let nt = self.n_times();
        if nt < 2 {
            return Err(Error::InvalidTrace("need at least two time samples".into()));
        }
        let nb = self.n_boundary();
        let s = &self.samples;
        let at = |k: usize, b: usize| s[k * nb + b];
        let inv = 1.0 / self.dt_record;
        let mut out = vec![0.0; s.len()];
        for k in 0..nt {
            for b in 0..nb {
                out[k * nb + b] = if nt == 2 {
                    (at(1, b) - at(0, b)) * inv
                } else if k == 0 {
                    (-3.0 * at(0, b) + 4.0 * at(1, b) - at(2, b)) * 0.5 * inv
                } else if k == nt - 1 {
                    (3.0 * at(k, b) - 4.0 * at(k - 1, b) + at(k - 2, b)) * 0.5 * inv
                } else {
                    (at(k + 1, b) - at(k - 1, b)) * 0.5 * inv
                };
            }
        }
        Ok(Self::from_raw(self.grid, self.dt_record, out))
    }

    /// Quadrature weight of every sample: trapezoidal in time times
    /// arc length on the boundary.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let tw = trapezoid_weights(self.n_times(), self.dt_record);
        let aw = self.grid.boundary_arc_weights();
        let mut w = Vec::with_capacity(self.samples.len());
        for t in tw {
            w.extend(aw.iter().map(|a| a * t));
        }
        w
    }

    /// `∫₀ᵀ ∫_{∂Ω} m r`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        let w = self.quadrature_weights();
        Ok(w.iter()
            .zip(self.samples.iter().zip(&other.samples))
            .map(|(w, (a, b))| w * a * b)
            .sum())
    }
}

/// `‖m‖_{H⁰((0,T)×∂Ω)}`.
pub fn trace_norm_h0(m: &BoundaryTrace) -> Result<f64> {
    if m.n_times() < 2 {
        return Err(Error::InvalidTrace("need at least two time samples".into()));
    }
    Ok(libm::sqrt(m.inner(m)?.max(0.0)))
}

/// `‖m‖_{H¹((0,T); H⁰(∂Ω))}`.
pub fn trace_norm_h1h0(m: &BoundaryTrace) -> Result<f64> {
    if m.n_times() < 3 {
        return Err(Error::InvalidTrace(
            "need at least three time samples".into(),
        ));
    }
    let n0 = trace_norm_h0(m)?;
    let n1 = trace_norm_h0(&m.time_derivative()?)?;
    Ok(libm::sqrt(n0 * n0 + n1 * n1))
}
