//! Simulation toolkit for cantilever piezoelectric vibration harvesters feeding
//! a rectifier, UVLO-gated buck converter and storage capacitors.
//!
//! * [`harvester`]: lumped electromechanical model and its frequency-domain solution.
//! * [`power_stage`]: averaged rectifier, UVLO and buck models.
//! * [`transient`]: time-domain integration of the coupled system.
//! * [`sweep`] and [`fit`]: parameter sweeps and least-squares calibration.
//! * [`io`]: configuration, CSV and SVG.

pub mod error;
pub mod fit;
pub mod harvester;
pub mod io;
pub mod power_stage;
pub mod presets;
pub mod sweep;
pub mod transient;

pub use error::{Error, Result};
