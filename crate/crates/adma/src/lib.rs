//! The ADMA service: persistence of the core catalog, sandboxed tool
//! execution, the HTTP API and the command-line client.

pub mod api;
pub mod cli;
pub mod client;
pub mod config;
pub mod executor;
pub mod sandbox;
pub mod service;
pub mod store;

pub use config::{Config, ExecutorProfile};
pub use service::{Service, ServiceError};
