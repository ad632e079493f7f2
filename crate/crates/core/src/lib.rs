pub mod error;
pub mod evaluation;
pub mod harness;
pub mod io;
pub mod notch;
pub mod shrinkage;
pub mod signal;
pub mod spectrum;
pub mod swt;
pub mod synthesis;

pub use error::{Error, Result};
pub use signal::{Signal, SnrDb};
