//! Simulator and optimizer for over-the-air federated learning with fluid-antenna users.
//!
//! * [`channel`]: positional line-of-sight channel model and gain bounds.
//! * [`ota`]: analog gradient aggregation over a multi-antenna receiver.
//! * [`objective`]: per-round communication penalty and convergence bounds.
//! * [`pdd`]: penalty dual decomposition solver for joint selection, beamforming and positioning.
//! * [`baselines`]: reference schemes and an exhaustive selection oracle.
//! * [`fedsim`]: federated training with OTA-aggregated gradients.
//! * [`harness`]: experiment grids, CSV/JSON output.
//! * [`oracle`]: independent numeric cross-checks used by the test suites and the CLI.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod error;
pub mod fedsim;
pub mod harness;
pub mod linalg;
pub mod objective;
pub mod ota;
pub mod oracle;
pub mod pdd;

pub use error::{Error, Result};
pub use linalg::C64;
