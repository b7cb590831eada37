//! Discrepancy ratios between two (speed, state) pairs, the conical
//! uniqueness-region test, the state energy bounds, and the empirical
//! stability constant over an ensemble.
//!
//! For a reference pair `(c, s)` and a candidate `(c̃, s̃)`:
//!
//! ```text
//! speed ratio  S = ‖c⁻² − c̃⁻²‖²_{W1,∞} / ‖c⁻²‖²_{W1,∞}
//! state ratio  U = (‖u₀ − ũ₀‖² + ‖u₁ − ũ₁‖²_{H⁻¹}) / (‖u₀‖² + ‖u₁‖²_{H⁻¹})
//! meas. ratio  M = ‖Λ_c s − Λ_c̃ s̃‖²_{H¹(H⁰)} / ‖Λ_c s‖²_{H⁰}
//! ```
//!
//! The pair is in the region iff `S ≤ ε U`; there the stability estimate
//! `U ≤ (C/T) M` is probed through the quotient `T U / M`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::norms::{norm_h0, norm_hminus1, norm_w1inf};
use crate::state::{BoundThresholds, InitialState, StateBounds, WaveSpeed};
use crate::trace::{trace_norm_h0, trace_norm_h1h0, BoundaryTrace};
use crate::wave::{forward_map, BoundaryImpedance, SolverConfig};

/// Default region slope parameter.
pub const DEFAULT_EPSILON: f64 = 1e-2;
/// A member with `U` above this...
pub const VIOLATION_STATE_FLOOR: f64 = 1e-4;
/// ...and `M` below this is flagged as a uniqueness violation.
pub const VIOLATION_MEAS_CEILING: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscrepancyReport {
    pub speed_ratio_sq: f64,
    pub state_ratio_sq: f64,
    /// `None` until both forward maps have been evaluated.
    pub meas_ratio_sq: Option<f64>,
    pub epsilon: f64,
    pub in_region: bool,
    /// `T · U / M` when `M > 0`.
    pub empirical_quotient: Option<f64>,
}

/// Squared relative `W^{1,∞}` discrepancy of `c⁻²`, normalized by the first
/// argument.
pub fn speed_discrepancy_ratio(c: &WaveSpeed, c_tilde: &WaveSpeed) -> Result<f64> {
    c.grid().check_same(c_tilde.grid())?;
    let q = c.inverse_square();
    let diff = q.sub(&c_tilde.inverse_square())?;
    let num = norm_w1inf(&diff)?;
    let den = norm_w1inf(&q)?;
    Ok((num / den) * (num / den))
}

fn state_mass(u0: &crate::grid::ScalarField2D, u1: &crate::grid::ScalarField2D) -> Result<f64> {
    let a = norm_h0(u0)?;
    let b = if u1.max_abs() == 0.0 {
        0.0
    } else {
        norm_hminus1(u1)?
    };
    Ok(a * a + b * b)
}

/// Squared relative `H⁰ × H⁻¹` discrepancy, normalized by the first state.
pub fn state_discrepancy_ratio(s: &InitialState, s_tilde: &InitialState) -> Result<f64> {
    s.grid().check_same(s_tilde.grid())?;
    let den = s.mass()?;
    if den <= 0.0 {
        return Err(Error::DegenerateState);
    }
    let num = state_mass(&s.u0().sub(s_tilde.u0())?, &s.u1().sub(s_tilde.u1())?)?;
    Ok(num / den)
}

/// `‖trace − trace_tilde‖²_{H¹(H⁰)} / ‖reference‖²_{H⁰}`.
pub fn measurement_discrepancy_ratio(
    trace: &BoundaryTrace,
    trace_tilde: &BoundaryTrace,
    reference: &BoundaryTrace,
) -> Result<f64> {
    trace.check_compatible(trace_tilde)?;
    trace.check_compatible(reference)?;
    let den = trace_norm_h0(reference)?;
    if den <= 0.0 {
        return Err(Error::DegenerateMeasurement);
    }
    let num = trace_norm_h1h0(&trace.sub(trace_tilde)?)?;
    Ok((num / den) * (num / den))
}

/// Decides `S ≤ ε U` (without touching the forward maps).
pub fn check_uniqueness_region(
    c: &WaveSpeed,
    c_tilde: &WaveSpeed,
    s: &InitialState,
    s_tilde: &InitialState,
    epsilon: f64,
) -> Result<DiscrepancyReport> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let speed_ratio_sq = speed_discrepancy_ratio(c, c_tilde)?;
    let state_ratio_sq = state_discrepancy_ratio(s, s_tilde)?;
    Ok(DiscrepancyReport {
        speed_ratio_sq,
        state_ratio_sq,
        meas_ratio_sq: None,
        epsilon,
        in_region: in_region(speed_ratio_sq, state_ratio_sq, epsilon),
        empirical_quotient: None,
    })
}

#[inline]
pub fn in_region(speed_ratio_sq: f64, state_ratio_sq: f64, epsilon: f64) -> bool {
    speed_ratio_sq <= epsilon * state_ratio_sq
}

/// Computes `‖∇u₀‖² + ‖u₁‖²` and `‖u₀‖² + ‖u₁‖²_{H⁻¹}` and compares them to
/// `K` and `k`. A failed check is reported in the returned bounds, not as an
/// error.
pub fn check_assumption_bounds(
    s: &InitialState,
    thresholds: BoundThresholds,
) -> Result<StateBounds> {
    Ok(StateBounds {
        energy_upper: s.energy()?,
        mass_lower: s.mass()?,
        k: thresholds.k,
        big_k: thresholds.big_k,
    })
}

/// One ensemble member: reference pair and candidate pair.
#[derive(Debug, Clone)]
pub struct EnsembleMember {
    pub c: WaveSpeed,
    pub c_tilde: WaveSpeed,
    pub s: InitialState,
    pub s_tilde: InitialState,
}

/// How members outside the region are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionPolicy {
    /// Any member outside the region aborts the report.
    Require,
    /// Members outside the region are counted and excluded from the constant.
    Skip,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MemberOutcome {
    /// Zero state discrepancy: carries no information about the estimate.
    Degenerate { index: usize },
    /// Outside the region under [`RegionPolicy::Skip`].
    OutsideRegion {
        index: usize,
        report: DiscrepancyReport,
    },
    Evaluated {
        index: usize,
        report: DiscrepancyReport,
        violation: bool,
    },
}

impl MemberOutcome {
    pub fn index(&self) -> usize {
        match self {
            MemberOutcome::Degenerate { index }
            | MemberOutcome::OutsideRegion { index, .. }
            | MemberOutcome::Evaluated { index, .. } => *index,
        }
    }

    pub fn report(&self) -> Option<&DiscrepancyReport> {
        match self {
            MemberOutcome::Degenerate { .. } => None,
            MemberOutcome::OutsideRegion { report, .. }
            | MemberOutcome::Evaluated { report, .. } => Some(report),
        }
    }
}

/// Settings shared by every member of a stability run.
#[derive(Debug, Clone)]
pub struct StabilitySettings<'a> {
    pub gamma: &'a BoundaryImpedance,
    pub solver: &'a SolverConfig,
    pub epsilon: f64,
    pub thresholds: BoundThresholds,
    pub policy: RegionPolicy,
}

/// Region check, bound check, both forward maps and the quotient for one
/// member. Both maps share one time grid, pinned by the faster speed.
pub fn evaluate_member(
    index: usize,
    member: &EnsembleMember,
    settings: &StabilitySettings<'_>,
) -> Result<MemberOutcome> {
    let mut report = check_uniqueness_region(
        &member.c,
        &member.c_tilde,
        &member.s,
        &member.s_tilde,
        settings.epsilon,
    )?;
    if report.state_ratio_sq == 0.0 {
        return Ok(MemberOutcome::Degenerate { index });
    }
    if !report.in_region {
        return match settings.policy {
            RegionPolicy::Require => Err(Error::OutsideRegion {
                member: index,
                speed_ratio_sq: report.speed_ratio_sq,
                state_ratio_sq: report.state_ratio_sq,
                epsilon: settings.epsilon,
            }),
            RegionPolicy::Skip => Ok(MemberOutcome::OutsideRegion { index, report }),
        };
    }
    for (label, st) in [("reference", &member.s), ("candidate", &member.s_tilde)] {
        let b = check_assumption_bounds(st, settings.thresholds)?;
        if !b.holds() {
            return Err(Error::BoundsViolated {
                member: index,
                detail: describe_bounds(label, &b),
            });
        }
    }

    let mut solver = settings.solver.clone();
    let c_ref = member.c.max().max(member.c_tilde.max());
    solver.reference_speed = Some(solver.reference_speed.map_or(c_ref, |r| r.max(c_ref)));
    let trace = forward_map(&member.c, settings.gamma, &member.s, &solver)?;
    let trace_tilde = forward_map(&member.c_tilde, settings.gamma, &member.s_tilde, &solver)?;
    let meas = measurement_discrepancy_ratio(&trace, &trace_tilde, &trace)?;
    report.meas_ratio_sq = Some(meas);
    report.empirical_quotient = if meas > 0.0 {
        Some(solver.final_time * report.state_ratio_sq / meas)
    } else {
        None
    };
    let violation = report.state_ratio_sq > VIOLATION_STATE_FLOOR && meas < VIOLATION_MEAS_CEILING;
    Ok(MemberOutcome::Evaluated {
        index,
        report,
        violation,
    })
}

fn describe_bounds(label: &str, b: &StateBounds) -> String {
    format!(
        "{label} state: mass {:.6e} (k = {:.6e}), energy {:.6e} (K = {:.6e})",
        b.mass_lower, b.k, b.energy_upper, b.big_k
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub n_pairs: usize,
    /// Sorted by member index.
    pub outcomes: Vec<MemberOutcome>,
    /// Quotients of evaluated members, in member order.
    pub quotients: Vec<f64>,
    /// `max(quotients)`, or `None` when nothing was evaluated.
    pub c_empirical: Option<f64>,
    pub pairs_in_region: usize,
    pub degenerate: Vec<usize>,
    pub violations: Vec<usize>,
}

impl StabilityReport {
    /// Order-independent aggregation of member outcomes.
    pub fn aggregate(mut outcomes: Vec<MemberOutcome>) -> Self {
        outcomes.sort_by_key(MemberOutcome::index);
        let mut quotients = Vec::new();
        let mut degenerate = Vec::new();
        let mut violations = Vec::new();
        let mut pairs_in_region = 0;
        for o in &outcomes {
            match o {
                MemberOutcome::Degenerate { index } => degenerate.push(*index),
                MemberOutcome::OutsideRegion { .. } => {}
                MemberOutcome::Evaluated {
                    index,
                    report,
                    violation,
                } => {
                    pairs_in_region += 1;
                    if let Some(q) = report.empirical_quotient {
                        quotients.push(q);
                    }
                    if *violation {
                        violations.push(*index);
                    }
                }
            }
        }
        let c_empirical = quotients.iter().copied().reduce(f64::max);
        Self {
            n_pairs: outcomes.len(),
            outcomes,
            quotients,
            c_empirical,
            pairs_in_region,
            degenerate,
            violations,
        }
    }
}

/// Evaluates every member sequentially and aggregates.
pub fn stability_report(
    ensemble: &[EnsembleMember],
    settings: &StabilitySettings<'_>,
) -> Result<StabilityReport> {
    let outcomes = ensemble
        .iter()
        .enumerate()
        .map(|(i, m)| evaluate_member(i, m, settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityReport::aggregate(outcomes))
}
