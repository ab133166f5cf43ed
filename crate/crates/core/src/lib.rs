pub mod basis;
pub mod casestudies;
pub mod conjugate;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod linalg;
pub mod offline;
pub mod online;
pub mod rng;
pub mod serde_matrix;
pub mod ssm;

pub use error::{Error, Result};
