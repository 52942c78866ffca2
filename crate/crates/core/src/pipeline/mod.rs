//! Tracking and mapping stages and the end-to-end run.

mod run;
mod tracking;

pub use run::{run_pipeline, RunOutput};
pub use tracking::{run_tracking, KeyframePacket, TrackingConfig, TrackingEvent, TrackingOutput};
