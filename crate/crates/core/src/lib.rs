//! Coupled Purkinje network and myocardium activation-time solver.
//!
//! The conduction network is solved with a multi-source shortest-path
//! Eikonal solver, the muscle with a P1 finite-element Eikonal-diffusion
//! model marched in pseudo-time, and the two are coupled through
//! Purkinje-muscle junctions in a partitioned fixed-point loop.

pub mod krylov;
pub mod mesh;
pub mod sparse;
pub mod network;
pub mod eikonal;
pub mod coupling;
pub mod scenario;
