pub mod entropy;
pub mod error;
pub mod fk;
pub mod group;
pub mod lattice;
pub mod mm;
pub mod parse;
pub mod sofic;
pub mod ring;
pub mod spectral;

pub use error::{FklError, Result};
