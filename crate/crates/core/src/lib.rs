//! Gate- and pulse-level simulation of toric-code anyon interferometry with a
//! microwave cavity as the probe.

pub mod error;
pub mod gates;
pub mod hilbert;
pub mod interferometry;
pub mod oracle;
pub mod pulse;
pub mod toric;

pub use error::{Error, Result};
pub use hilbert::{LinearOperator, MeasurePolicy, StateVector, SubsystemLayout, C64};
