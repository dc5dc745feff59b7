//! Crate-wide error type.
//!
//! Errors are reserved for conditions a caller can plausibly hit with bad
//! input (inadmissible states, tangled geometry, unsolvable constraint
//! systems, malformed configs). Internal invariant violations panic instead.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter is outside its documented range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A thermodynamic state left the admissible set (rho > 0, T > 0).
    #[error("inadmissible state at t = {time}: {what} = {value}")]
    InadmissibleState {
        time: f64,
        what: String,
        value: f64,
    },

    /// The curvilinear mapping folded (non-positive Jacobian) at a node.
    #[error("geometry invalid: J = {jacobian} at node {node} of element {element}")]
    GeometryInvalid {
        element: usize,
        node: usize,
        jacobian: f64,
    },

    /// The discrete metric-constraint system is inconsistent beyond tolerance.
    #[error("metric constraint system unsolvable on element {element}: |1^T c| = {residual}")]
    MetricConstraint { element: usize, residual: f64 },

    /// The adaptive time integrator could not find an acceptable step size.
    #[error("time step underflow at t = {time} (dt = {dt})")]
    StepSizeUnderflow { time: f64, dt: f64 },

    /// The relaxation-parameter root solve failed to bracket/converge.
    #[error("relaxation solve failed at t = {time}: {why}")]
    RelaxationFailed { time: f64, why: String },

    /// Configuration file problems (I/O or schema).
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
