//! Security analysis for differential-phase-shift QKD driven by an arbitrary
//! pair of i.i.d. source states.
//!
//! The crate is layered bottom-up:
//!
//! * [`fock`]: truncated photon-number-basis states and operators.
//! * [`source`]: characterized photon statistics of a light source.
//! * [`bounds`]: phase-error upper bound, asymptotic key rate, μ optimization
//!   and channel-transmission sweeps.
//! * [`oracle`]: exact verification of every intermediate bound from the
//!   virtual-protocol state, plus exact lossy-channel statistics.
//! * [`protocol`]: Monte Carlo simulation of the full protocol loop.
//! * [`cli`]: the `dpsqkd` command-line front end.

pub mod bounds;
pub mod cli;
mod error;
pub mod fock;
pub mod oracle;
pub mod protocol;
pub mod record;
pub mod source;

pub use error::{Error, Result};
