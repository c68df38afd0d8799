pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod hw_profile;
pub mod numerics;
pub mod pme_solver;
pub mod reaction;
pub mod selfsimilar;
pub mod stationary_profiles;
pub mod threshold;

pub use error::{Error, Result};
