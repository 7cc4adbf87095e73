pub mod bicoherent;
pub mod error;
pub mod intertwining;
pub mod io;
pub mod operator;
pub mod report;
pub mod zoo;

pub use error::{Error, Result};
