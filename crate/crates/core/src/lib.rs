//! Quantum Markov states and the reduced dynamics induced on their
//! conditioning system by localized channels.

pub mod assignment;
pub mod channels;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod markov;
pub mod random;
pub mod scenarios;
pub mod states;

pub use channels::{compose, factor_out_identity, KrausChannel};
pub use error::{Error, Result};
pub use linalg::{CMatrix, Factor, SpaceLayout};
pub use states::{conditional_mutual_information, mutual_information, DensityMatrix};
