pub mod audio;
pub mod decoder;
pub mod dsp;
pub mod error;
pub mod hrtf;
pub mod metrics;
pub mod mixgen;
pub mod pipeline;
pub mod rng;
pub mod room;
pub mod scene;
pub mod sh;
pub mod signal;

pub use error::{Error, ErrorKind, Result};
