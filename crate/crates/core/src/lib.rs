//! Hybrid persistent coverage with intruder interception on an ellipsoid of revolution.

pub mod automaton;
pub mod control;
pub mod engine;
pub mod geometry;
pub mod intruder;
pub mod io;
pub mod kinematics;
pub mod quad;
pub mod sensing;
