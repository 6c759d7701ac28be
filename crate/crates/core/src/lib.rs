//! Simulation and analysis toolkit for visible-light relative vehicle
//! localization.
//!
//! Two quadrant-photodiode receivers (QRXs) on the ego vehicle measure the
//! angle of arrival of the BFSK light signals emitted by the two tail
//! lights of a leading target vehicle; triangulating each transmitter over
//! the receiver baseline localizes the target at the estimation rate. The
//! crate models the full chain:
//!
//! - [`geometry`]: frames, poses, true AoA and visibility cones
//! - [`optics`]: the defocused-spot QRX model, quadrant power fractions,
//!   the AoA-to-power-ratio map and its tabulated inverse
//! - [`channel`]: Lambertian line-of-sight links, weather attenuation, and
//!   shot/thermal receiver noise
//! - [`signal`]: BFSK modem, buffer correlation, AoA measurement, latency
//! - [`vlp`]: dual-AoA triangulation and the localization error metric
//! - [`crlb`]: Fisher information and the Cramer-Rao position bound
//! - [`scenario`]: driving-scenario presets (SM1-SM4)
//! - [`engine`]: the per-buffer simulation engine and sweep drivers
//! - [`config`]/[`report`]: TOML run configs and CSV/SVG outputs

pub mod channel;
pub mod config;
pub mod crlb;
pub mod engine;
pub mod geometry;
pub mod optics;
pub mod report;
pub mod scenario;
pub mod signal;
pub mod vlp;

pub use channel::{Ambient, ChannelCondition, TiaConfig, Weather};
pub use engine::{RunConfig, RunResult, ScenarioConfig, SimParams};
pub use geometry::{Point, VehicleGeometry, VehiclePose};
pub use optics::{GqrxTable, QrxOpticalConfig};
