//! Wave speeds, initial states and the energy bounds on them.

use alloc::format;

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField2D};
use crate::norms::{gradient_energy, norm_h0, norm_hminus1, norm_w1inf};

/// Admissible speed range: pointwise lower bound and a bound on the
/// `W^{1,∞}` norm (which also caps the values).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedBounds {
    pub low: f64,
    pub high: f64,
}

impl SpeedBounds {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low > 0.0 && high >= low && high.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "speed bounds need 0 < low <= high < inf, got [{low}, {high}]"
            )));
        }
        Ok(Self { low, high })
    }

    pub fn clamp(&self, c: f64) -> f64 {
        c.clamp(self.low, self.high)
    }
}

/// A sampled wave speed together with its admissible bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveSpeed {
    field: ScalarField2D,
    bounds: SpeedBounds,
}

impl WaveSpeed {
    pub fn new(field: ScalarField2D, bounds: SpeedBounds) -> Result<Self> {
        let (lo, hi) = (field.min(), field.max());
        if lo < bounds.low || hi > bounds.high {
            return Err(Error::InvalidField(format!(
                "speed range [{lo}, {hi}] escapes bounds [{}, {}]",
                bounds.low, bounds.high
            )));
        }
        let w = norm_w1inf(&field)?;
        if w > bounds.high {
            return Err(Error::InvalidField(format!(
                "speed W1,inf norm {w} exceeds bound {}",
                bounds.high
            )));
        }
        Ok(Self { field, bounds })
    }

    pub fn constant(grid: Grid2D, c: f64, bounds: SpeedBounds) -> Result<Self> {
        Self::new(ScalarField2D::constant(grid, c), bounds)
    }

    pub fn field(&self) -> &ScalarField2D {
        &self.field
    }

    pub fn grid(&self) -> &Grid2D {
        self.field.grid()
    }

    pub fn bounds(&self) -> SpeedBounds {
        self.bounds
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn max(&self) -> f64 {
        self.field.max()
    }

    pub fn min(&self) -> f64 {
        self.field.min()
    }

    /// Pointwise `c⁻²`, the coefficient in which the wave equation is linear.
    pub fn inverse_square(&self) -> ScalarField2D {
        ScalarField2D::from_raw(
            *self.grid(),
            self.values().iter().map(|c| 1.0 / (c * c)).collect(),
        )
    }

    /// Same field, different bounds.
    pub fn with_bounds(self, bounds: SpeedBounds) -> Result<Self> {
        Self::new(self.field, bounds)
    }
}

/// `(u₀, u₁)` with `u₀` vanishing on the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    u0: ScalarField2D,
    u1: ScalarField2D,
}

impl InitialState {
    pub fn new(u0: ScalarField2D, u1: ScalarField2D) -> Result<Self> {
        u0.grid().check_same(u1.grid())?;
        if !u0.vanishes_on_boundary() {
            return Err(Error::InvalidField(
                "initial pressure must vanish on the boundary".into(),
            ));
        }
        Ok(Self { u0, u1 })
    }

    /// Pressure-only state (`u₁ = 0`).
    pub fn pressure(u0: ScalarField2D) -> Result<Self> {
        let u1 = ScalarField2D::zeros(*u0.grid());
        Self::new(u0, u1)
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            u0: ScalarField2D::zeros(grid),
            u1: ScalarField2D::zeros(grid),
        }
    }

    pub fn u0(&self) -> &ScalarField2D {
        &self.u0
    }

    pub fn u1(&self) -> &ScalarField2D {
        &self.u1
    }

    pub fn grid(&self) -> &Grid2D {
        self.u0.grid()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            u0: self.u0.scaled(alpha),
            u1: self.u1.scaled(alpha),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            u0: self.u0.sub(&other.u0)?,
            u1: self.u1.sub(&other.u1)?,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            u0: self.u0.add(&other.u0)?,
            u1: self.u1.add(&other.u1)?,
        })
    }

    /// `‖∇u₀‖² + ‖u₁‖²` (upper-bounded by `K`).
    pub fn energy(&self) -> Result<f64> {
        let n1 = norm_h0(&self.u1)?;
        Ok(gradient_energy(&self.u0)? + n1 * n1)
    }

    /// `‖u₀‖² + ‖u₁‖²_{H⁻¹}` (lower-bounded by `k`).
    pub fn mass(&self) -> Result<f64> {
        let n0 = norm_h0(&self.u0)?;
        let n1 = if self.u1.max_abs() == 0.0 {
            0.0
        } else {
            norm_hminus1(&self.u1)?
        };
        Ok(n0 * n0 + n1 * n1)
    }
}

/// Measured energy/mass of a state together with configured thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBounds {
    pub energy_upper: f64,
    pub mass_lower: f64,
    pub k: f64,
    pub big_k: f64,
}

impl StateBounds {
    pub fn mass_ok(&self) -> bool {
        self.mass_lower >= self.k
    }

    pub fn energy_ok(&self) -> bool {
        self.energy_upper <= self.big_k
    }

    pub fn holds(&self) -> bool {
        self.mass_ok() && self.energy_ok()
    }
}

/// Thresholds `0 < k < K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundThresholds {
    pub k: f64,
    pub big_k: f64,
}

impl BoundThresholds {
    pub fn new(k: f64, big_k: f64) -> Result<Self> {
        if !(k > 0.0 && big_k > k && big_k.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "state bounds need 0 < k < K < inf, got k = {k}, K = {big_k}"
            )));
        }
        Ok(Self { k, big_k })
    }

    /// `k` = half the smallest mass, `K` = twice the largest energy over a
    /// family of reference states.
    pub fn from_family<'a>(states: impl IntoIterator<Item = &'a InitialState>) -> Result<Self> {
        let mut min_mass = f64::INFINITY;
        let mut max_energy: f64 = 0.0;
        for s in states {
            min_mass = min_mass.min(s.mass()?);
            max_energy = max_energy.max(s.energy()?);
        }
        Self::new(0.5 * min_mass, 2.0 * max_energy)
    }
}
