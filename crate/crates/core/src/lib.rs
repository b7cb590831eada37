//! Numerical core of a photoacoustic tomography laboratory.
//!
//! Simulates the boundary measurement map of the damped wave equation on a
//! rectangle, evaluates the discrete norms that quantify discrepancies
//! between two (speed, initial pressure) pairs, decides whether a pair lies
//! in the conical uniqueness region, and runs joint iterative recovery of
//! pressure and speed.
//!
//! The crate is `no_std` and only needs `alloc`; file formats, the CLI, and
//! parallel ensembles live in the `pat-lab` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod grid;
pub mod norms;
pub mod operators;
pub mod phantom;
pub mod recon;
pub mod state;
pub mod trace;
pub mod verify;
pub mod wave;

pub use error::{Error, Result};
pub use grid::{Grid2D, ScalarField2D};
pub use norms::{norm_h0, norm_hminus1, norm_w1inf, poisson_dirichlet_solve};
pub use state::{BoundThresholds, InitialState, SpeedBounds, StateBounds, WaveSpeed};
pub use trace::{trace_norm_h0, trace_norm_h1h0, BoundaryTrace};
pub use wave::{
    adjoint_simulate, cfl_timestep, energy, forward_map, simulate, AdjointOutput,
    BoundaryImpedance, SimulationOutput, SolverConfig, TimeGrid, WaveSnapshot,
};
pub use phantom::{
    make_pressure_phantom, make_speed_phantom, perturb_pair, Feature, PhantomKind, PhantomSpec,
    SpeedProfile,
};
pub use verify::{
    check_assumption_bounds, check_uniqueness_region, measurement_discrepancy_ratio,
    speed_discrepancy_ratio, stability_report, state_discrepancy_ratio, DiscrepancyReport,
    EnsembleMember, RegionPolicy, StabilityReport, StabilitySettings,
};
pub use recon::{
    contraction_factors, enforce_relaxation, gradient_wavespeed, joint_reconstruct,
    project_speed, reconstruct_pressure, CoarseMesh, ContractionReport, IterateHistory,
    Checkpoint, ReconstructionConfig, Truth,
};
