//! Global surfel map: voxelization, gated fusion, pruning, appearance
//! refinement and rigid loop correction.

mod backend;
mod map;
mod ops;

pub use backend::{predicted_depth, Mapper, MapperConfig, MapperStats};
pub use map::GlobalSurfelMap;
pub use ops::{
    adaptive_voxelize, fuse, prune, refine, to_world, DepthThreshold, FusionConfig, FusionStats, Preconditioner,
    RefineConfig, RefineReport, RefineView, SurfelGrid, VoxelizationConfig,
};
