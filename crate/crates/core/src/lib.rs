//! Hybrid encryption in the correlated-randomness model.

pub mod error;
pub mod gf2;
pub mod source;
pub mod uhash;
pub mod ikem;
pub mod dem;
pub mod hybrid;
pub mod combiner;
pub mod games;

pub use error::*;
