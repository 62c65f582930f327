use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{centroid, PointCloud};
use crate::spatial_index::KdTree;

/// Normal reported for neighbourhoods without a defined plane (coincident or
/// collinear points).
pub const FALLBACK_NORMAL: Vector3<f64> = Vector3::new(0.0, 0.0, 1.0);

const DEGENERACY_RATIO: f64 = 1e-12;

/// Per-point unit normals from the `k` nearest neighbours (the point itself
/// included).
///
/// Each normal is the eigenvector of the smallest eigenvalue of the
/// neighbourhood covariance. Orientation: normals point away from the cloud
/// centroid (`n · (p - centroid) >= 0`); when that product vanishes the
/// largest-magnitude component is made positive.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<Vec<Vector3<f64>>> {
    if k < 3 || cloud.len() < k {
        return Err(Error::InvalidParams(format!(
            "normal estimation needs |cloud| >= k >= 3 (|cloud| = {}, k = {k})",
            cloud.len()
        )));
    }
    let tree = KdTree::build(cloud)?;
    let center = centroid(cloud)?.coords();
    let normals = cloud
        .iter()
        .map(|p| {
            let nbrs = tree.nearest_k(p, k);
            let pts: Vec<Vector3<f64>> = nbrs.iter().map(|n| Vector3::from(tree.point(n.index))).collect();
            let mean = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
            let cov = pts.iter().fold(Matrix3::zeros(), |acc, q| {
                let d = q - mean;
                acc + d * d.transpose()
            });
            let normal = smallest_eigenvector(&cov).unwrap_or(FALLBACK_NORMAL);
            orient(normal, &(p.coords() - center))
        })
        .collect();
    Ok(normals)
}

fn smallest_eigenvector(cov: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let eig = SymmetricEigen::new(*cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[2]];
    let middle = eig.eigenvalues[order[1]];
    if !(largest > 0.0) || middle <= DEGENERACY_RATIO * largest {
        return None;
    }
    Some(eig.eigenvectors.column(order[0]).normalize())
}

fn orient(n: Vector3<f64>, outward: &Vector3<f64>) -> Vector3<f64> {
    let dot = n.dot(outward);
    let scale = outward.norm().max(1e-300);
    if dot / scale > 1e-12 {
        return n;
    }
    if dot / scale < -1e-12 {
        return -n;
    }
    let i = n.iamax();
    if n[i] < 0.0 {
        -n
    } else {
        n
    }
}
