pub mod blending;
pub mod cli;
pub mod cones;
pub mod cycles_tangencies;
pub mod error;
pub mod grassmann;
pub mod intersect;
pub mod linalg;
pub mod par;
pub mod regions;
pub mod shift_space;
pub mod skewproduct;
mod subdivide;

pub use error::{Error, Result};
