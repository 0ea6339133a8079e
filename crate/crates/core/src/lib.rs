//! Robust max-min fair rate-splitting beamforming for visible light downlinks.
//!
//! The pipeline runs from the LOS channel model ([`scene`]) through the
//! max-entropy input distribution ([`sigdist`]) and the rate lower bounds
//! ([`rates`]) to the lifted convex subproblem ([`lifting`]). That subproblem is
//! solved by a dense barrier method ([`ipm`]) inside a penalized CCCP loop
//! ([`driver`]). [`bench`] holds scenario loading and sweeps.

pub mod bench;
pub mod driver;
pub mod ipm;
pub mod lifting;
pub mod linalg;
pub mod rates;
pub mod scene;
pub mod sigdist;

pub use driver::{run_mmf, run_sdma, DriverConfig, Scheme};
pub use rates::BeamformingSolution;
pub use scene::{ChannelEstimate, LedParams, Point3, Scenario};
pub use sigdist::SignalDistribution;
