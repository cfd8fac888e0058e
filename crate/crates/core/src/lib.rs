//! Static soliton and soliton-condensate profiles of two-photon paired
//! superradiance in a dissipative two-level medium.
//!
//! * [`units`] — physical scales and dimensionless parameters.
//! * [`bloch`] — steady-state Bloch vector under static fields.
//! * [`profile`] — profile equations for infinite targets.
//! * [`eigenwell`] — bound states and the self-consistent finite-target problem.
//! * [`master`] — static residual of the time-dependent master equations.
//! * [`scenario`], [`output`], [`run`] — configuration, artifacts and the front end.

// Parameter checks are written as `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bloch;
pub mod eigenwell;
pub mod error;
pub mod master;
pub mod ode;
pub mod output;
pub mod profile;
pub mod run;
pub mod scenario;
pub mod units;

pub use error::{PsrError, Result};
