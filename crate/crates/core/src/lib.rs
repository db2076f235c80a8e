//! Mixing diagnostics for passive scalars on the two-dimensional torus.

pub mod bounds;
pub mod bressan;
pub mod error;
pub mod estimates;
pub mod grid;
pub mod mixing;
pub mod torus;
pub mod transport;
pub mod velocity;

pub use error::{Error, Result};
pub use grid::{ScalarField, SpectralField};
