//! HTTP service and command-line front end for the trajectory engine.

pub mod api;
pub mod cli;
pub mod render;
