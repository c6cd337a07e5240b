//! Numerical laboratory for closed G2-structures on a flat 7-torus.

pub mod error;
pub mod exterior7;
pub mod g2point;
pub mod hodge_green;
pub mod torus_field;
pub mod report;
pub mod variations;
pub mod connection_lab;
pub mod flow_engine;
pub mod curvature;

pub use error::{Error, Result};
