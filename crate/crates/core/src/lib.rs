pub mod acceptance;
pub mod circuit;
pub mod dmrg;
pub mod error;
pub mod evolve;
pub mod experiment;
pub mod model;
pub mod mpo;
pub mod mps;
pub mod oracle;
pub mod random;
pub mod tensor;

pub use error::{Error, Result};
