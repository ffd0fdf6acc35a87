pub mod cli;
pub mod data_io;
pub mod density;
pub mod error;
pub mod hypergraph;
pub mod layers;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
