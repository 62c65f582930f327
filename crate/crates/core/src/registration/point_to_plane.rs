use nalgebra::{Matrix6, Rotation3, SymmetricEigen, Vector3, Vector6};

use super::point_to_point::run_icp_loop;
use super::{estimate_normals, positions, require_points, IcpParams, Matches, RegistrationResult};
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};
use crate::spatial_index::KdTree;

/// Neighbourhood size used for target normals.
pub const DEFAULT_NORMAL_K: usize = 10;

/// Eigenvalues of the 6x6 normal matrix below this fraction of the largest
/// count as zero.
const RANK_TOLERANCE: f64 = 1e-10;

/// Point-to-plane ICP with target normals estimated from
/// [`DEFAULT_NORMAL_K`] neighbours.
pub fn icp_point_to_plane(
    source: &PointCloud,
    target: &PointCloud,
    params: &IcpParams,
    init: &RigidTransform,
) -> Result<RegistrationResult> {
    require_points(target, "target needs at least 3 points")?;
    let normals = estimate_normals(target, DEFAULT_NORMAL_K.min(target.len()))?;
    icp_point_to_plane_with_normals(source, target, &normals, params, init)
}

/// Point-to-plane ICP: each step minimises `Σ (n_j · (R s_i + t - q_j))²`
/// under the small-angle model `R ≈ I + [ω]×`, solving the 6x6 normal
/// equations for `(ω, t)`. A rank-deficient system is an error.
pub fn icp_point_to_plane_with_normals(
    source: &PointCloud,
    target: &PointCloud,
    normals: &[Vector3<f64>],
    params: &IcpParams,
    init: &RigidTransform,
) -> Result<RegistrationResult> {
    params.validate()?;
    require_points(source, "source needs at least 3 points")?;
    require_points(target, "target needs at least 3 points")?;
    if normals.len() != target.len() {
        return Err(Error::InvalidParams(format!(
            "{} normals for {} target points",
            normals.len(),
            target.len()
        )));
    }
    let tree = KdTree::build(target)?;
    let target_pts = positions(target);
    run_icp_loop(&positions(source), &tree, params, init, |moved, matches| {
        plane_step(moved, &target_pts, normals, matches)
    })
}

fn plane_step(
    moved: &[Vector3<f64>],
    target: &[Vector3<f64>],
    normals: &[Vector3<f64>],
    matches: &Matches,
) -> Result<RigidTransform> {
    let mut ata = Matrix6::zeros();
    let mut atb = Vector6::zeros();
    for &(i, j) in &matches.pairs {
        let (s, n) = (moved[i], normals[j]);
        let c = s.cross(&n);
        let row = Vector6::new(c.x, c.y, c.z, n.x, n.y, n.z);
        let residual = n.dot(&(s - target[j]));
        ata += row * row.transpose();
        atb -= row * residual;
    }

    let eig = SymmetricEigen::new(ata);
    let largest = eig.eigenvalues.amax();
    let rank = eig.eigenvalues.iter().filter(|&&l| l > RANK_TOLERANCE * largest).count();
    if !(largest > 0.0) || rank < 6 {
        return Err(Error::SingularSystem { rank: if largest > 0.0 { rank } else { 0 } });
    }
    let projected = eig.eigenvectors.transpose() * atb;
    let scaled = Vector6::from_fn(|k, _| projected[k] / eig.eigenvalues[k]);
    let x = eig.eigenvectors * scaled;

    let omega = Vector3::new(x[0], x[1], x[2]);
    let rotation = Rotation3::new(omega).into_inner();
    Ok(RigidTransform::from_parts_unchecked(rotation, Vector3::new(x[3], x[4], x[5])))
}
