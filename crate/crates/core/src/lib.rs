//! Optical wireless uplinks from top-of-rack transmitters to ceiling-mounted
//! spine-switch receivers.
//!
//! - [`geometry`]: vectors, aim angles, placement.
//! - [`optics`]: Lambertian branches, WFOV receivers, LOS gain and the
//!   recursive multipath impulse response.
//! - [`linkbudget`]: OOK eye powers, noise, SNR, BER, achievable rate.
//! - [`scenario`]: world model, the built-in pod, validation, link assignment.

pub mod geometry;
pub mod linkbudget;
pub mod optics;
pub mod scenario;

pub use geometry::{AimAngles, Vec3};
pub use linkbudget::{LinkBudget, NoiseParams, RateSolution, RateStatus};
pub use optics::{AngleDiversityTransmitter, ImpulseResponse, TransmitterBranch, WfovReceiver};
pub use scenario::{paper_scenario, AimMode, Scenario};
