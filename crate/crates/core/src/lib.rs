//! Simulation and bound verification for renewal processes whose periods may
//! be dependent and non-identically distributed.
//!
//! The crate covers four layers:
//!
//! * [`gendist`] — mixed nonnegative laws described by a hazard with atoms:
//!   evaluation, moments, inverse-hazard sampling, minimum composition,
//!   common parts, stochastic ordering.
//! * [`renewal`] — path simulation under iid or envelope-constrained
//!   policies, overshoot/undershoot queries, the renewal-equation solver and
//!   its limit checks.
//! * [`lorden`] — overshoot/undershoot expectation bounds from period-law
//!   moments, with Monte Carlo verification tables.
//! * [`coupling`] / [`models`] — coalescing joint constructions with
//!   total-variation rate curves, and the two application systems (a
//!   two-element repairable pair and a state-modulated event-flow model).

pub mod coupling;
pub mod error;
pub mod gendist;
pub mod hist;
pub mod lorden;
pub mod models;
pub mod quad;
pub mod renewal;
pub mod report;
pub mod stats;
pub mod stream;

pub use error::{Error, Result};
pub use gendist::{
    common_part_kappa, common_part_kappa_n, stochastic_order_check, Atom, ContinuousHazard,
    DistributionView, HazardSpec, MassAt, Moment,
};
pub use hist::{empirical_tv, BinSpec, Histogram};
pub use renewal::{Envelope, Modulator, PathRecord, RenewalPolicy};
pub use stream::{substream, Executor};
