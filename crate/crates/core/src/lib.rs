//! Secure minimum-time motion planning for a differential-drive robot over an
//! untrusted map.
//!
//! The planner only commits to trajectories whose reactive stopping region
//! (the set of places an evasive maneuver could take the robot) has already
//! been seen by the onboard sensor and stays clear of every known obstacle.
//! A closed-loop simulator executes plans, detects obstacles the map omitted,
//! hands control to a reactive controller, and replans.

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod io;
pub mod planner;
pub mod qp;
pub mod reactive_controller;
pub mod reactive_set;
pub mod render;
pub mod sensor;
pub mod simulator;

pub use error::{Error, Result};
