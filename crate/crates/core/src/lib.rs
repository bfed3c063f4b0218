//! Response matching: a generative model for molecules and crystals.
//!
//! Equilibrium structures are corrupted with random displacements and cell
//! strain; a local interatomic potential is trained to reproduce the restoring
//! pseudo forces and stresses; new structures are produced by relaxing random
//! initial configurations on the learned pseudo potential-energy surface.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod elements;
pub mod error;
pub mod generate;
pub mod io;
pub mod neighbors;
pub mod noise;
pub mod potential;
pub mod seeding;
pub mod structure;
pub mod train;

pub use error::{Error, Result};
pub use structure::{Mat3, Structure, Vec3};
