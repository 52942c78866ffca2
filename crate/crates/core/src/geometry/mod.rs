//! SE(3)/Sim(3) group operations, exp/log maps and similarity alignment.

mod rotation;
mod se3;
mod sim3;
mod umeyama;

pub use rotation::{
    align, canonicalize, hat, quat, quat_mul, rotation_angle, so3_exp, so3_log, stored_quat, Quat, Vec3,
};
pub use se3::Se3Pose;
pub use sim3::{Sim3, Sim3Tangent, Vector7, TAYLOR_THRESHOLD};
pub use umeyama::umeyama_sim3;
