pub mod data;
pub mod error;
pub mod experiments;
pub mod learning;
pub mod numerics;
pub mod oracle;
pub mod projector;
pub mod snn;

pub use error::{Error, Result};
