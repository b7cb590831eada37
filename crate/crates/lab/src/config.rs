//! Experiment configuration: TOML with one table per concern.
//!
//! Parse errors carry the offending line. Semantic checks look up the line
//! of the key they complain about, so a bad value points at its line too.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// The core grid needs 8 nodes per axis.
pub const MIN_CELLS: usize = 7;

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every random draw is derived from it.
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub impedance: ImpedanceSection,
    #[serde(default)]
    pub speed: SpeedSection,
    #[serde(default)]
    pub pressure: PressureSection,
    pub ensemble: Option<EnsembleSection>,
    pub reconstruct: Option<ReconstructSection>,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
}

/// Rectangle `[origin, origin + extent]` split into `cells` per axis
/// (`cells_y` overrides the y count).
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub cells: usize,
    pub cells_y: Option<usize>,
    #[serde(default = "unit_extent")]
    pub extent: [f64; 2],
    #[serde(default)]
    pub origin: [f64; 2],
}

fn unit_extent() -> [f64; 2] {
    [1.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    /// Defaults to three domain diameters at the lowest speed.
    pub final_time: Option<f64>,
    pub cfl_factor: f64,
    pub record_stride: usize,
    pub snapshot_stride: Option<usize>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            final_time: None,
            cfl_factor: pat_core::wave::DEFAULT_CFL,
            record_stride: 1,
            snapshot_stride: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpedanceSection {
    pub gamma: f64,
}

impl Default for ImpedanceSection {
    fn default() -> Self {
        Self { gamma: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub aspect: f64,
    #[serde(default)]
    pub angle: f64,
}

fn one() -> f64 {
    1.0
}

/// Speed `c = base (1 + variation f)` from features, or `base + P v` from
/// node values `v` on a coarse mesh.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedSection {
    pub low: f64,
    pub high: f64,
    pub base: f64,
    pub variation: f64,
    pub kind: String,
    pub margin: f64,
    /// Number of random features when `features` is empty.
    pub count: usize,
    pub features: Vec<FeatureConfig>,
    pub coarse: Option<CoarseSpeed>,
}

impl Default for SpeedSection {
    fn default() -> Self {
        Self {
            low: 0.8,
            high: 1.2,
            base: 1.0,
            variation: 0.0,
            kind: "gaussians".into(),
            margin: 0.05,
            count: 0,
            features: Vec::new(),
            coarse: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseSpeed {
    /// Nodes per axis.
    pub nodes: usize,
    /// Row-major node values added to `base`.
    pub values: Vec<f64>,
}

/// Initial pressure. With no features and `count = 0` the phantom is zero.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct PressureSection {
    pub kind: String,
    pub margin: f64,
    pub count: usize,
    pub features: Vec<FeatureConfig>,
}

impl Default for PressureSection {
    fn default() -> Self {
        Self {
            kind: "disks".into(),
            margin: 0.05,
            count: 0,
            features: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub size: usize,
    pub target_speed_ratio: f64,
    pub target_state_ratio: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// "require" aborts on a member outside the region, "skip" counts it.
    #[serde(default = "default_policy")]
    pub policy: String,
    /// Mass floor `k`; derived from the reference family when absent.
    pub mass_floor: Option<f64>,
    /// Energy cap `K`; derived from the reference family when absent.
    pub energy_cap: Option<f64>,
    /// Random pressure features per member when `[pressure]` has none.
    #[serde(default = "default_member_features")]
    pub member_features: usize,
    /// Random speed features per member (0 keeps the `[speed]` phantom).
    #[serde(default)]
    pub member_speed_features: usize,
}

fn default_epsilon() -> f64 {
    pat_core::verify::DEFAULT_EPSILON
}

fn default_policy() -> String {
    "require".into()
}

fn default_member_features() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructSection {
    /// "fixed" or "joint".
    pub mode: String,
    /// "zero", "truth" or "landweber".
    #[serde(default = "default_init")]
    pub init: String,
    /// Fixed-speed iterations at the initial speed when `init = "landweber"`.
    #[serde(default = "default_warm_start")]
    pub warm_start_iters: usize,
    /// Constant initial speed in joint mode; defaults to `[speed] base`.
    pub initial_speed: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol_misfit: f64,
    pub step_u: Option<f64>,
    pub step_c: Option<f64>,
    #[serde(default = "one")]
    pub step_c_scale: f64,
    #[serde(default = "default_coarse")]
    pub coarse_nodes: usize,
    #[serde(default)]
    pub nesterov: bool,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_true")]
    pub enforce_relaxation: bool,
    #[serde(default = "default_window")]
    pub window: usize,
    pub checkpoint_stride: Option<usize>,
    /// Std of additive Gaussian trace noise, relative to the trace's max.
    #[serde(default)]
    pub noise: f64,
    /// Withhold the truth from the monitor.
    #[serde(default)]
    pub blind: bool,
}

fn default_init() -> String {
    "zero".into()
}

fn default_warm_start() -> usize {
    5
}

fn default_max_iter() -> usize {
    200
}

fn default_tol() -> f64 {
    1e-6
}

fn default_coarse() -> usize {
    8
}

fn default_window() -> usize {
    pat_core::recon::DEFAULT_WINDOW
}

/// Parameter lists; an empty list keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub cells: Vec<usize>,
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub target_speed_ratio: Vec<f64>,
    #[serde(default)]
    pub target_state_ratio: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
}

/// 1-based line of byte offset `pos`.
fn line_of(text: &str, pos: usize) -> usize {
    text[..pos.min(text.len())].matches('\n').count() + 1
}

/// Line where `key` is assigned inside `[section]` (top level if empty).
pub fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_start_matches('[').trim_end_matches(']').trim().to_string();
            continue;
        }
        let Some((k, _)) = line.split_once('=') else {
            continue;
        };
        if current == section && k.trim() == key {
            return Some(n + 1);
        }
    }
    None
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|r| line_of(text, r.start));
            LabError::config(line, e.message().trim().to_string())
        })?;
        cfg.validate(text)?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn validate(&self, text: &str) -> Result<()> {
        let fail = |section: &str, key: &str, msg: String| {
            Err(LabError::config(locate(text, section, key), msg))
        };
        let g = &self.grid;
        if g.cells < MIN_CELLS || g.cells_y.is_some_and(|c| c < MIN_CELLS) {
            return fail("grid", "cells", format!("grid needs at least {MIN_CELLS} cells per axis"));
        }
        if !(g.extent.iter().all(|e| *e > 0.0 && e.is_finite())) {
            return fail("grid", "extent", "grid extent must be positive".into());
        }
        let s = &self.solver;
        if s.final_time.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
            return fail("solver", "final_time", "final_time must be positive".into());
        }
        if !(s.cfl_factor > 0.0 && s.cfl_factor <= 0.5) {
            return fail("solver", "cfl_factor", "cfl_factor must lie in (0, 0.5]".into());
        }
        if s.record_stride == 0 {
            return fail("solver", "record_stride", "record_stride must be at least 1".into());
        }
        if s.snapshot_stride == Some(0) {
            return fail("solver", "snapshot_stride", "snapshot_stride must be at least 1".into());
        }
        if !(self.impedance.gamma >= 0.0 && self.impedance.gamma.is_finite()) {
            return fail("impedance", "gamma", "gamma must be non-negative".into());
        }
        let sp = &self.speed;
        if !(sp.low > 0.0 && sp.low < sp.high && sp.high.is_finite()) {
            return fail("speed", "low", format!("need 0 < low < high, got {} and {}", sp.low, sp.high));
        }
        if !(sp.base >= sp.low && sp.base <= sp.high) {
            return fail("speed", "base", format!("base {} outside [{}, {}]", sp.base, sp.low, sp.high));
        }
        if pat_core::PhantomKind::parse(&sp.kind).is_err() {
            return fail("speed", "kind", format!("unknown phantom kind '{}'", sp.kind));
        }
        if pat_core::PhantomKind::parse(&self.pressure.kind).is_err() {
            return fail("pressure", "kind", format!("unknown phantom kind '{}'", self.pressure.kind));
        }
        if let Some(c) = &sp.coarse {
            if c.nodes < 2 || c.values.len() != c.nodes * c.nodes {
                return fail(
                    "speed.coarse",
                    "values",
                    format!("expected {} node values for {} nodes per axis", c.nodes * c.nodes, c.nodes),
                );
            }
        }
        if let Some(e) = &self.ensemble {
            if e.size == 0 {
                return fail("ensemble", "size", "ensemble size must be at least 1".into());
            }
            if !(e.epsilon > 0.0 && e.epsilon.is_finite()) {
                return fail("ensemble", "epsilon", "epsilon must be positive".into());
            }
            if e.policy != "require" && e.policy != "skip" {
                return fail("ensemble", "policy", format!("policy must be 'require' or 'skip', got '{}'", e.policy));
            }
        }
        if let Some(r) = &self.reconstruct {
            if r.mode != "fixed" && r.mode != "joint" {
                return fail("reconstruct", "mode", format!("mode must be 'fixed' or 'joint', got '{}'", r.mode));
            }
            if !matches!(r.init.as_str(), "zero" | "truth" | "landweber") {
                return fail("reconstruct", "init", format!("init must be zero, truth or landweber, got '{}'", r.init));
            }
            if !(r.noise >= 0.0 && r.noise.is_finite()) {
                return fail("reconstruct", "noise", "noise must be non-negative".into());
            }
            if r.init == "landweber" && r.warm_start_iters == 0 {
                return fail("reconstruct", "warm_start_iters", "warm_start_iters must be at least 1".into());
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.cells.iter().any(|c| *c < MIN_CELLS) {
                return fail("sweep", "cells", format!("grid needs at least {MIN_CELLS} cells per axis"));
            }
            if sw.epsilon.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                return fail("sweep", "epsilon", "epsilon values must be positive".into());
            }
        }
        Ok(())
    }
}
