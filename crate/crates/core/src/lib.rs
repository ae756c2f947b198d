pub mod corpus;
pub mod error;
pub mod exposure;
pub mod geo;
pub mod hedonics;
pub mod lexicon;
pub mod seeding;
pub mod synth;
pub mod tz;
pub mod vegetation;
pub mod wordshift;

pub use error::{Error, ErrorKind, Result};
