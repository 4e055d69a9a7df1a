//! Homogenized Darcy permeability of thin porous media.
//!
//! The crate solves the periodic cell Stokes problems on a voxelized
//! reference cell, assembles the 2x2 permeability tensor, solves the
//! homogenized two-dimensional Darcy problem and checks the limit model
//! against direct Stokes simulation of the perforated thin domain.

pub mod cell_stokes;
pub mod config;
pub mod darcy2d;
pub mod dns_thin;
pub mod error;
pub mod geometry;
pub mod io;
pub mod krylov;
pub mod mac;
pub mod permeability;
pub mod pipeline;
pub mod stokes;
pub mod unfolding;

pub use error::{Error, Result};
