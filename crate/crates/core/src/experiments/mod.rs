pub mod checkpoint;
pub mod config;
pub mod metrics;
pub mod runners;
pub mod trainer;
pub mod verify;
pub use config::*;
pub use metrics::*;
pub use runners::*;
pub use trainer::*;
