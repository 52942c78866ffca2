use nalgebra::{Matrix3, Rotation3, UnitQuaternion};

use super::rotation::Vec3;
use super::sim3::Sim3;
use crate::error::{Error, Result};

/// Relative singular-value floor below which a point set counts as collinear.
const RANK_TOLERANCE: f64 = 1e-12;

/// Least-squares similarity `T` minimizing `sum |target_k - T(source_k)|^2`.
///
/// Scale is the variance-ratio estimator; a reflection in the SVD solution is
/// corrected through the determinant sign.
pub fn umeyama_sim3(source: &[Vec3], target: &[Vec3]) -> Result<Sim3> {
    if source.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: source.len(),
            right: target.len(),
        });
    }
    if source.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "umeyama needs at least 3 correspondences, got {}",
            source.len()
        )));
    }
    let n = source.len() as f64;
    let mean_src = source.iter().sum::<Vec3>() / n;
    let mean_dst = target.iter().sum::<Vec3>() / n;

    let mut cov = Matrix3::zeros();
    let mut cov_src = Matrix3::zeros();
    let mut var_src = 0.0;
    for (s, d) in source.iter().zip(target) {
        let sc = s - mean_src;
        let dc = d - mean_dst;
        cov += dc * sc.transpose();
        cov_src += sc * sc.transpose();
        var_src += sc.norm_squared();
    }
    cov /= n;
    cov_src /= n;
    var_src /= n;

    if var_src <= f64::EPSILON * mean_src.norm_squared().max(1.0) {
        return Err(Error::DegenerateConfiguration("coincident source points".into()));
    }
    let src_sv = cov_src.symmetric_eigenvalues();
    let mut src_sv: Vec<f64> = src_sv.iter().copied().collect();
    src_sv.sort_by(|a, b| b.total_cmp(a));
    if src_sv[1] <= RANK_TOLERANCE * src_sv[0] {
        return Err(Error::DegenerateConfiguration("collinear source points".into()));
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateConfiguration("svd failed".into())),
    };
    // `svd` returns singular values in descending order.
    let mut d = svd.singular_values;
    let mut s_diag = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        s_diag[(2, 2)] = -1.0;
    }
    if d[1] <= RANK_TOLERANCE * d[0] {
        return Err(Error::DegenerateConfiguration("rank-deficient cross covariance".into()));
    }
    let rot = u * s_diag * v_t;
    d[2] *= s_diag[(2, 2)];
    let scale = d.sum() / var_src;
    if !(scale > 0.0) {
        return Err(Error::DegenerateConfiguration(format!("non-positive scale {scale}")));
    }
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rot));
    let t = mean_dst - q * mean_src * scale;
    Ok(Sim3::new(scale, q, t))
}
