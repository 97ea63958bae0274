//! Converts a recorded human hand–object manipulation into an executable
//! dexterous-hand trajectory and scores the transfer.
//!
//! The stages follow the data flow: [`demo`] ingestion, kinematic
//! [`retarget`]ing to a primary control sequence, [`sim`]ulated replay,
//! residual-policy contact optimization in [`adapt`], closed-form
//! [`wrist`] planning for the manipulation phase, and [`metrics`].
//! [`pipeline`] wires them together.

pub mod adapt;
pub mod demo;
pub mod fixtures;
pub mod geom;
pub mod hand;
pub mod metrics;
pub mod pipeline;
pub mod retarget;
pub mod sim;
pub mod wrist;
