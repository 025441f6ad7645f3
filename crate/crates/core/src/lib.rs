//! Maximal fold values of cooperative elliptic systems from the minimax
//! formula over positive finite-element cones.

pub mod mesh_fem;
pub mod model;
pub mod rayleigh;
pub mod minimax;
pub mod picone;
pub mod perturbation;
pub mod harness;
