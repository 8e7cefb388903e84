//! Edge server placement and cell assignment.
//!
//! Given per-pair cell workloads, candidate server sites, a server count and
//! a per-server capacity, choose server sites and assign cells to servers so
//! that backhaul cost (cross-server and overflow demand) and geo-spread
//! (demand-weighted fronthaul distance) are both small.
//!
//! The main solver runs three phases: k-median swap search for spread,
//! pairwise Fiduccia-Mattheyses cell migration for cost, and a Hungarian
//! relocation of servers for spread. See [`pipeline::solve`].

pub mod fm;
pub mod geogen;
pub mod harness;
pub mod hungarian;
pub mod io;
pub mod kmedian;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod render;
pub mod seeding;

#[cfg(test)]
mod testutil;

pub use model::{
    cost, objectives, server_load, server_loads, spread, validate, Assignment, AssignmentError,
    GridLayout, Instance, InstanceError, Objectives, Point,
};
