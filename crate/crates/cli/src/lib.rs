pub mod analyze;
pub mod config;
pub mod metrics;
pub mod plot;
pub mod run;
pub mod verify;
