//! Independent reference implementations shared by the oracle tests and
//! the acceptance suite. Each test binary uses a subset.
#![allow(dead_code)]

pub mod delaunay;
pub mod energy;
pub mod maxflow;
pub mod planner;
pub mod quality;
