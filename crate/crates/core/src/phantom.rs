//! Ground-truth pressure and speed phantoms, and perturbation pairs placed
//! at prescribed discrepancy ratios.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField2D};
use crate::norms::{norm_h0, norm_w1inf};
use crate::state::{InitialState, SpeedBounds, WaveSpeed};

/// Largest relative speed variation accepted unless explicitly overridden.
pub const DEFAULT_MAX_VARIATION: f64 = 0.10;
/// Width of the smoothed rim of disks and ellipses, as a fraction of the
/// radius.
pub const RIM_FRACTION: f64 = 0.3;
/// Highest sine mode of the perturbation shapes along each axis.
pub const PERTURBATION_MODES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    /// Flat-topped disks with a C² rim.
    Disks,
    /// Compactly supported `exp(1 − 1/(1 − ρ²))` bumps.
    Gaussians,
    /// Superposed flat-topped ellipses.
    SheppLike,
}

impl PhantomKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "disks" => Ok(Self::Disks),
            "gaussians" => Ok(Self::Gaussians),
            "shepp-like" => Ok(Self::SheppLike),
            other => Err(Error::InvalidSpec(format!("unknown phantom kind '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Disks => "disks",
            Self::Gaussians => "gaussians",
            Self::SheppLike => "shepp-like",
        }
    }
}

/// One feature. `radius` is the support radius (the first semi-axis for
/// ellipses); `aspect` scales the second semi-axis and `angle` rotates it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    pub center: [f64; 2],
    pub radius: f64,
    pub amplitude: f64,
    pub aspect: f64,
    pub angle: f64,
}

impl Feature {
    pub fn round(center: [f64; 2], radius: f64, amplitude: f64) -> Self {
        Self {
            center,
            radius,
            amplitude,
            aspect: 1.0,
            angle: 0.0,
        }
    }

    /// Radius of the smallest centered disk containing the support.
    pub fn extent(&self) -> f64 {
        self.radius * self.aspect.max(1.0)
    }

    /// Normalized radial coordinate: `< 1` inside the support.
    fn rho(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let (s, c) = (libm::sin(self.angle), libm::cos(self.angle));
        let a = (c * dx + s * dy) / self.radius;
        let b = (-s * dx + c * dy) / (self.radius * self.aspect);
        libm::hypot(a, b)
    }
}

/// C² step: 1 for `ρ ≤ 1 − w`, 0 for `ρ ≥ 1`.
fn flat_top(rho: f64) -> f64 {
    let inner = 1.0 - RIM_FRACTION;
    if rho <= inner {
        1.0
    } else if rho >= 1.0 {
        0.0
    } else {
        let t = (1.0 - rho) / RIM_FRACTION;
        t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

fn smooth_bump(rho: f64) -> f64 {
    if rho >= 1.0 {
        0.0
    } else {
        libm::exp(1.0 - 1.0 / (1.0 - rho * rho))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub features: Vec<Feature>,
    /// Minimum distance between any feature support and the boundary.
    pub support_margin: f64,
    pub seed: u64,
}

impl PhantomSpec {
    /// Draws `count` features inside `grid`'s rectangle, each keeping
    /// `support_margin` from the boundary. Deterministic in `seed`.
    pub fn random(
        kind: PhantomKind,
        count: usize,
        support_margin: f64,
        seed: u64,
        grid: &Grid2D,
    ) -> Result<Self> {
        let [ox, oy] = grid.origin();
        let [w, h] = grid.extent();
        let free = 0.5 * w.min(h) - support_margin;
        if !(support_margin > 0.0 && free > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "margin {support_margin} leaves no room inside the domain"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Vec::with_capacity(count);
        for _ in 0..count {
            let (aspect, angle) = match kind {
                PhantomKind::SheppLike => (rng.random_range(0.4..1.0f64), rng.random_range(0.0..PI)),
                _ => (1.0f64, 0.0),
            };
            let radius = rng.random_range(0.25..0.6) * free / aspect.max(1.0);
            let reach = radius * aspect.max(1.0) + support_margin;
            let cx = rng.random_range(ox + reach..ox + w - reach);
            let cy = rng.random_range(oy + reach..oy + h - reach);
            let amplitude = rng.random_range(0.5..1.0);
            features.push(Feature {
                center: [cx, cy],
                radius,
                amplitude,
                aspect,
                angle,
            });
        }
        Ok(Self {
            kind,
            features,
            support_margin,
            seed,
        })
    }

    /// Checks margin, amplitudes and that every support keeps the margin
    /// inside `grid`'s rectangle.
    pub fn validate(&self, grid: &Grid2D) -> Result<()> {
        if !(self.support_margin > 0.0 && self.support_margin.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "support margin must be positive, got {}",
                self.support_margin
            )));
        }
        let [ox, oy] = grid.origin();
        let [w, h] = grid.extent();
        for (k, f) in self.features.iter().enumerate() {
            if !f.amplitude.is_finite() {
                return Err(Error::InvalidSpec(format!("feature {k}: non-finite amplitude")));
            }
            if !(f.radius > 0.0 && f.radius.is_finite() && f.aspect > 0.0 && f.angle.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "feature {k}: radius and aspect must be positive"
                )));
            }
            let r = f.extent();
            let gap = (f.center[0] - r - ox)
                .min(ox + w - f.center[0] - r)
                .min(f.center[1] - r - oy)
                .min(oy + h - f.center[1] - r);
            if gap < self.support_margin {
                return Err(Error::InvalidSpec(format!(
                    "feature {k} comes within {gap:.4} of the boundary (margin {})",
                    self.support_margin
                )));
            }
        }
        Ok(())
    }

    /// Superposition of all features sampled on `grid`.
    pub fn sample(&self, grid: &Grid2D) -> Result<ScalarField2D> {
        self.validate(grid)?;
        let profile: fn(f64) -> f64 = match self.kind {
            PhantomKind::Disks | PhantomKind::SheppLike => flat_top,
            PhantomKind::Gaussians => smooth_bump,
        };
        ScalarField2D::from_fn(*grid, |x, y| {
            self.features
                .iter()
                .map(|f| f.amplitude * profile(f.rho(x, y)))
                .sum()
        })
    }
}

/// `u₀` from the spec, `u₁ = 0`. Supports stay inside the margin, so `u₀`
/// is exactly zero on the boundary. An empty spec gives the (degenerate)
/// zero state.
pub fn make_pressure_phantom(spec: &PhantomSpec, grid: &Grid2D) -> Result<InitialState> {
    let u0 = spec.sample(grid)?;
    InitialState::pressure(u0)
}

/// Speed profile parameters: `c = c_base (1 + variation · f)` with the
/// feature superposition `f` normalized to `max |f| = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedProfile {
    pub c_base: f64,
    pub variation: f64,
    /// Cap on `variation`; defaults to [`DEFAULT_MAX_VARIATION`].
    pub max_variation: f64,
}

impl SpeedProfile {
    pub fn new(c_base: f64, variation: f64) -> Self {
        Self {
            c_base,
            variation,
            max_variation: DEFAULT_MAX_VARIATION,
        }
    }
}

pub fn make_speed_phantom(
    spec: &PhantomSpec,
    grid: &Grid2D,
    profile: SpeedProfile,
    bounds: SpeedBounds,
) -> Result<WaveSpeed> {
    let SpeedProfile {
        c_base,
        variation,
        max_variation,
    } = profile;
    if !(c_base > 0.0 && c_base.is_finite()) {
        return Err(Error::InvalidSpec(format!("base speed must be positive, got {c_base}")));
    }
    if !(variation >= 0.0 && variation < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "variation {variation} would produce non-positive speeds"
        )));
    }
    if variation > max_variation {
        return Err(Error::InvalidSpec(format!(
            "variation {variation} exceeds the allowed {max_variation}"
        )));
    }
    let f = spec.sample(grid)?;
    let peak = f.max_abs();
    let scale = if peak > 0.0 { variation / peak } else { 0.0 };
    let field = f.map(|v| c_base * (1.0 + scale * v))?;
    WaveSpeed::new(field, bounds)
}

/// Band-limited shape `Σ_{k,l ≤ 3} r_kl sin(kπX) sin(lπY)` in normalized
/// coordinates, zero on the boundary.
fn sine_shape(grid: &Grid2D, rng: &mut ChaCha8Rng) -> ScalarField2D {
    let m = PERTURBATION_MODES;
    let coeffs: Vec<f64> = (0..m * m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let [ox, oy] = grid.origin();
    let [w, h] = grid.extent();
    let values = (0..grid.len())
        .map(|n| {
            let (i, j) = grid.ij(n);
            if grid.is_boundary(i, j) {
                return 0.0;
            }
            let (x, y) = ((grid.x(i) - ox) / w, (grid.y(j) - oy) / h);
            let mut v = 0.0;
            for k in 0..m {
                let sx = libm::sin((k + 1) as f64 * PI * x);
                for l in 0..m {
                    v += coeffs[k * m + l] * sx * libm::sin((l + 1) as f64 * PI * y);
                }
            }
            v
        })
        .collect();
    ScalarField2D::from_raw(*grid, values)
}

/// Speed with `c̃⁻² = c⁻² + a φ`, or `None` if it violates `c`'s bounds.
fn perturbed_speed(c: &WaveSpeed, phi: &ScalarField2D, a: f64) -> Option<WaveSpeed> {
    let mut values = Vec::with_capacity(phi.values().len());
    for (&cv, &p) in c.values().iter().zip(phi.values()) {
        let q = 1.0 / (cv * cv) + a * p;
        if !(q > 0.0) {
            return None;
        }
        values.push(1.0 / libm::sqrt(q));
    }
    let field = ScalarField2D::new(*c.grid(), values).ok()?;
    WaveSpeed::new(field, c.bounds()).ok()
}

/// Builds `(c̃, s̃)` with `speed_discrepancy_ratio(c, c̃)` and
/// `state_discrepancy_ratio(s, s̃)` equal to the targets.
///
/// The perturbations are `c̃⁻² = c⁻² + a φ` and `ũ₀ = u₀ + b ψ` for fixed
/// seeded shapes `φ`, `ψ`, `ũ₁ = u₁`. Both ratios are exact quadratic forms
/// in the amplitude, so `a` and `b` follow in closed form. When the speed
/// amplitude leaves the bounds of `c`, the largest admissible amplitude is
/// located by bisection and reported in the saturation error.
pub fn perturb_pair(
    c: &WaveSpeed,
    s: &InitialState,
    target_speed_ratio: f64,
    target_state_ratio: f64,
    seed: u64,
) -> Result<(WaveSpeed, InitialState)> {
    c.grid().check_same(s.grid())?;
    for t in [target_speed_ratio, target_state_ratio] {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidSpec(format!("target ratio must be >= 0, got {t}")));
        }
    }
    let mass = s.mass()?;
    if mass <= 0.0 {
        return Err(Error::DegenerateState);
    }
    let grid = *c.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = sine_shape(&grid, &mut rng);
    let psi = sine_shape(&grid, &mut rng);

    let c_tilde = if target_speed_ratio == 0.0 {
        c.clone()
    } else {
        let scale = norm_w1inf(&c.inverse_square())? / norm_w1inf(&phi)?;
        let a = libm::sqrt(target_speed_ratio) * scale;
        match perturbed_speed(c, &phi, a) {
            Some(ct) => ct,
            None => {
                let (mut lo, mut hi) = (0.0, a);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if perturbed_speed(c, &phi, mid).is_some() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Err(Error::Saturated {
                    requested: target_speed_ratio,
                    achievable: (lo / scale) * (lo / scale),
                });
            }
        }
    };

    let s_tilde = if target_state_ratio == 0.0 {
        s.clone()
    } else {
        let b = libm::sqrt(target_state_ratio * mass) / norm_h0(&psi)?;
        InitialState::new(s.u0().axpy(b, &psi)?, s.u1().clone())?
    };
    Ok((c_tilde, s_tilde))
}
