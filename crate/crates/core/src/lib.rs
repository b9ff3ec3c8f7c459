//! Simulation and stability analysis of slotted random access with
//! successive interference cancellation (CRDSA, CRDSA++, IRSA).
//!
//! The pipeline runs bottom-up:
//!
//! * [`frame`] places packet instances in a frame and peels collisions.
//! * [`plr`] tabulates the packet loss ratio against load by Monte Carlo.
//! * [`equilibrium`] turns a PLR curve into equilibrium contours, channel
//!   load lines and classified equilibrium points.
//! * [`delay`] gives the packet delay law at a channel operating point.
//! * [`closed_loop`] simulates the full retransmission feedback loop.
//! * [`io`] holds scenario files and the CSV/JSON export formats.

pub mod closed_loop;
pub mod delay;
pub mod equilibrium;
pub mod error;
pub mod frame;
pub mod io;
pub mod model;
pub mod plr;

pub use error::{Error, Result};
pub use model::{DegreeDistribution, PopulationModel, RetransmitPolicy, SystemConfig};
pub use plr::PlrCurve;
