//! CPU reference rasterizer for 2D Gaussian surfels.

mod buffers;
mod camera;
mod loss;
mod render;
mod surfel;

pub use buffers::{check_shape, GrayImage, RenderBuffers, RgbImage};
pub use camera::CameraIntrinsics;
pub use loss::{
    grad_color_opacity, render_loss, LossWeights, RenderTargets, SurfelGradient, ViewGradients,
    DEPTH_MASK_ACCUMULATION,
};
pub use render::{
    contribution_weights, project_surfel, render, Contribution, Footprint, Projection, Rasterizer,
    RenderConfig, RenderOutput, RenderTrace,
};
pub use surfel::Surfel;

