pub mod cli;
pub mod contraction;
pub mod density;
pub mod ergodic;
pub mod error;
pub mod fokker_planck;
pub mod noise;
pub mod ou;
pub mod potentials;
pub mod rng;
pub mod sde;

pub use error::{Error, Result};
