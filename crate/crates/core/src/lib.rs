//! Navigation stack and deterministic 2D simulator for a differential-drive
//! tractor towing a passive trailer through an on-axle hitch.

// `!(x > 0.0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cover;
pub mod experiments;
pub mod grid;
pub mod hitch;
pub mod kinematics;
pub mod lattice;
pub mod sim;
pub mod tracker;
