//! Simulated feed-forward frontend: a synthetic room, a camera orbit, and noisy
//! per-frame pose, point and surfel predictions.

mod frontend;
mod noise;
mod scene;

pub use frontend::{
    ground_truth_view, FramePrediction, GroundTruthView, Oracle, OracleConfig, SubmapDescriptor, SubmapState,
    SurfelAttributes, VALID_ACCUMULATION,
};
pub use noise::{stream_seed, NoiseModel};
pub use scene::{generate_scene, look_rotation, SceneConfig, SyntheticScene};
