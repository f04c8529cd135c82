//! Critical site percolation on hyperbolic random half-planar triangulations,
//! built through the random-walk and decorated-tree encoding of the root cluster.

pub mod boltzmann;
pub mod cluster;
pub mod coding;
pub mod continuum;
pub mod dynamics;
pub mod error;
pub mod excursions;
pub mod geometry;
pub mod model;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
