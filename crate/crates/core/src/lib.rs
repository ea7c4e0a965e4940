//! Continuous link transmission model on networks of triangular-diagram links.

pub mod config;
pub mod curve;
pub mod error;
pub mod fd;
pub mod godunov;
pub mod junction;
pub mod kernel;
pub mod link;
pub mod network;
pub mod profile;
pub mod scenarios;
pub mod sim;
pub mod statics;

pub use curve::CumulativeCurve;
pub use error::{LtmError, Result};
pub use fd::TriangularFD;
pub use link::LinkState;
pub use profile::DensityProfile;
