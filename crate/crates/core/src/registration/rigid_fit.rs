use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Point3, RigidTransform};

/// Singular-value ratio below which the cross-covariance is treated as rank
/// deficient.
const RANK_TOLERANCE: f64 = 1e-12;

/// Least-squares rigid motion taking each `source` point onto its `target`.
///
/// Centroids are removed, the rotation comes from the SVD of the 3x3
/// cross-covariance with a determinant correction (never a reflection), and
/// the translation is `mean(target) - R * mean(source)`.
pub fn best_rigid_fit(pairs: &[(Point3, Point3)]) -> Result<RigidTransform> {
    fit_vectors(pairs.iter().map(|(s, t)| (s.coords(), t.coords())), pairs.len())
}

pub(crate) fn fit_vectors(
    pairs: impl Iterator<Item = (Vector3<f64>, Vector3<f64>)> + Clone,
    n: usize,
) -> Result<RigidTransform> {
    if n < 3 {
        return Err(Error::DegenerateGeometry("rigid fit needs at least 3 pairs"));
    }
    let inv_n = 1.0 / n as f64;
    let (sum_s, sum_t) = pairs
        .clone()
        .fold((Vector3::zeros(), Vector3::zeros()), |(a, b), (s, t)| (a + s, b + t));
    let mu_s = sum_s * inv_n;
    let mu_t = sum_t * inv_n;

    let mut h = Matrix3::zeros();
    for (s, t) in pairs {
        h += (s - mu_s) * (t - mu_t).transpose();
    }

    let svd = h.svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= RANK_TOLERANCE * sv[0] {
        return Err(Error::DegenerateGeometry("correspondences are collinear or coincident"));
    }
    let u = svd.u.expect("u requested");
    let v = svd.v_t.expect("v_t requested").transpose();

    // H = U S V^T; R = V diag(1, 1, d) U^T with d = sign(det(V U^T)), the
    // sign flip applied to the direction of the smallest singular value.
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        let smallest = (0..3)
            .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
            .expect("three singular values");
        d[(smallest, smallest)] = -1.0;
    }
    let rotation = v * d * u.transpose();
    let translation = mu_t - rotation * mu_s;
    Ok(RigidTransform::from_parts_unchecked(rotation, translation))
}
