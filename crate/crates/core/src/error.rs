use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Failure modes of the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Grid construction parameters violate the grid invariants.
    InvalidGrid(String),
    /// A field holds NaN/Inf or has the wrong number of samples.
    InvalidField(String),
    /// A boundary trace is empty, too short, or non-finite.
    InvalidTrace(String),
    /// Two objects that must share a grid or recording geometry do not.
    GeometryMismatch(String),
    /// A configuration value is out of range.
    InvalidConfig(String),
    /// A phantom or perturbation specification cannot be realized.
    InvalidSpec(String),
    /// The iterative elliptic solver hit its iteration cap.
    SolverFailure { iterations: usize, residual: f64 },
    /// The explicit time stepper produced |u| > 1e12.
    BlowUp { step: usize, time: f64 },
    /// Denominator of the state ratio vanished.
    DegenerateState,
    /// Reference trace has zero norm.
    DegenerateMeasurement,
    /// An ensemble member lies outside the uniqueness region.
    OutsideRegion {
        member: usize,
        speed_ratio_sq: f64,
        state_ratio_sq: f64,
        epsilon: f64,
    },
    /// An ensemble member violates the state energy bounds.
    BoundsViolated { member: usize, detail: String },
    /// A perturbation target exceeds what the speed bounds allow.
    Saturated { requested: f64, achievable: f64 },
    /// Misfit grew for several consecutive iterations.
    StepSize { iteration: usize, misfit: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidGrid(msg) => write!(f, "invalid grid: {msg}"),
            Error::InvalidField(msg) => write!(f, "invalid field: {msg}"),
            Error::InvalidTrace(msg) => write!(f, "invalid trace: {msg}"),
            Error::GeometryMismatch(msg) => write!(f, "geometry mismatch: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::InvalidSpec(msg) => write!(f, "invalid specification: {msg}"),
            Error::SolverFailure {
                iterations,
                residual,
            } => write!(
                f,
                "elliptic solver did not converge after {iterations} iterations (relative residual {residual:.3e})"
            ),
            Error::BlowUp { step, time } => {
                write!(f, "wave solver blew up at step {step} (t = {time:.6})")
            }
            Error::DegenerateState => {
                write!(f, "reference state has zero H0/H-1 mass; ratio undefined")
            }
            Error::DegenerateMeasurement => {
                write!(f, "reference trace has zero norm; ratio undefined")
            }
            Error::OutsideRegion {
                member,
                speed_ratio_sq,
                state_ratio_sq,
                epsilon,
            } => write!(
                f,
                "member {member} lies outside the uniqueness region: speed ratio {speed_ratio_sq:.6e} > {epsilon:.3e} * state ratio {state_ratio_sq:.6e}"
            ),
            Error::BoundsViolated { member, detail } => {
                write!(f, "member {member} violates the state bounds: {detail}")
            }
            Error::Saturated {
                requested,
                achievable,
            } => write!(
                f,
                "requested ratio {requested:.6e} unreachable under speed bounds (maximum {achievable:.6e})"
            ),
            Error::StepSize { iteration, misfit } => write!(
                f,
                "misfit diverged at iteration {iteration} (misfit {misfit:.6e}); reduce the step size"
            ),
        }
    }
}

impl core::error::Error for Error {}
