use thiserror::Error;

/// Errors raised by the traffic engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LtmError {
    /// An argument lies outside the domain of the function it was passed to.
    #[error("domain error: {0}")]
    Domain(String),

    /// Initial and boundary data are incompatible with the kinematic wave solution.
    #[error("infeasible link data on `{link}`: {detail}")]
    Feasibility { link: String, detail: String },

    /// A junction produced fluxes that exceed a demand or a supply.
    #[error("junction contract violated on link `{link}`: {detail}")]
    JunctionContract { link: String, detail: String },

    /// Turning proportions leave an outgoing link with no admissible merge subset.
    #[error("degenerate turning proportions for outgoing port {port}")]
    DegenerateTurning { port: usize },

    /// Network or simulation configuration is invalid.
    #[error("config error: {0}")]
    Config(String),

    /// The oracle grid violates the CFL condition.
    #[error("CFL violated: dt*max(v, w) = {lhs} > dx = {dx}")]
    Cfl { lhs: f64, dx: f64 },

    /// Not enough data to compute an estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A simulation step failed; wraps the underlying fault.
    #[error("step {step} (t = {t}): {source}")]
    Step {
        step: usize,
        t: f64,
        #[source]
        source: Box<LtmError>,
    },
}

impl LtmError {
    /// Innermost error, unwrapping step context.
    pub fn root(&self) -> &LtmError {
        match self {
            LtmError::Step { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = LtmError> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(LtmError::Domain(msg.into()))
}
