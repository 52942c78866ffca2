pub mod commands;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod loop_closure;
pub mod mapping;
pub mod oracle;
pub mod pipeline;
pub mod pose_graph;
pub mod raster;
pub mod tracking;

pub use error::{Error, Result};
