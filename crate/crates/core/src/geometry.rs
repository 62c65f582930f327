//! Points, clouds and rigid transforms.

use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};

/// Orthonormality and determinant tolerance for rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// A 3-D point in meters with an optional 8-bit RGB color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub color: Option<[u8; 3]>,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z, color: None }
    }

    pub const fn with_color(x: f64, y: f64, z: f64, color: [u8; 3]) -> Self {
        Self { x, y, z, color: Some(color) }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    #[inline]
    pub fn coords(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn distance_squared(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        dx * dx + dy * dy + dz * dz
    }

    #[inline]
    pub fn distance(&self, other: &Point3) -> f64 {
        self.distance_squared(other).sqrt()
    }
}

/// An ordered set of points sharing one coordinate frame.
///
/// Every point is guaranteed finite; order is preserved by every operation
/// and by the file formats.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point3>,
    frame_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { points, frame_id: String::new() })
    }

    /// Builds a cloud from raw coordinate triples.
    pub fn from_xyz(coords: &[[f64; 3]]) -> Result<Self> {
        Self::new(coords.iter().map(|c| Point3::new(c[0], c[1], c[2])).collect())
    }

    /// Caller guarantees all points are finite.
    pub(crate) fn from_points_unchecked(points: Vec<Point3>) -> Self {
        debug_assert!(points.iter().all(Point3::is_finite));
        Self { points, frame_id: String::new() }
    }

    pub fn with_frame_id(mut self, frame_id: impl Into<String>) -> Self {
        self.frame_id = frame_id.into();
        self
    }

    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    pub fn get(&self, index: usize) -> Option<&Point3> {
        self.points.get(index)
    }

    /// Appends all points of `other`, keeping this cloud's frame id.
    pub fn extend_from(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }

    /// Keeps the points whose mask entry is `true`.
    pub fn select(&self, mask: &[bool]) -> PointCloud {
        assert_eq!(mask.len(), self.len(), "mask length must match cloud length");
        let points = self
            .points
            .iter()
            .zip(mask)
            .filter_map(|(p, &keep)| keep.then_some(*p))
            .collect();
        PointCloud { points, frame_id: self.frame_id.clone() }
    }

    /// Axis-aligned bounds `(min, max)`, or `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let first = self.points.first()?.coords();
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            let c = p.coords();
            (lo.inf(&c), hi.sup(&c))
        }))
    }
}

impl<'a> IntoIterator for &'a PointCloud {
    type Item = &'a Point3;
    type IntoIter = std::slice::Iter<'a, Point3>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

/// Arithmetic mean of the cloud's coordinates.
pub fn centroid(cloud: &PointCloud) -> Result<Point3> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let sum = cloud.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords());
    Ok(Point3::from_vector(&(sum / cloud.len() as f64)))
}

/// A proper rigid motion `p -> R p + t`.
///
/// Stored as `(R, t)`; the 4x4 homogeneous matrix is only a view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Validates `R` (orthonormal, det +1) and `t` (finite).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite entry".into()));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if ortho >= ROTATION_TOLERANCE {
            return Err(Error::InvalidTransform(format!(
                "rotation is not orthonormal (|R^T R - I| = {ortho:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidTransform(format!("det(R) = {det} != 1")));
        }
        Ok(Self { rotation, translation })
    }

    /// For matrices produced internally (SVD, composition) that are
    /// orthonormal up to rounding.
    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation }
    }

    /// Rotation of `angle` radians about `axis`, followed by `translation`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Result<Self> {
        let axis = Unit::try_new(*axis, 1e-12)
            .ok_or_else(|| Error::InvalidTransform("zero rotation axis".into()))?;
        let rotation = Rotation3::from_axis_angle(&axis, angle).into_inner();
        Self::new(rotation, translation)
    }

    /// Row-major 3x3 rotation plus translation.
    pub fn from_row_major(rotation: &[f64; 9], translation: &[f64; 3]) -> Result<Self> {
        Self::new(Matrix3::from_row_slice(rotation), Vector3::from_column_slice(translation))
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Result<Self> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidTransform(format!("bottom row {bottom:?} != [0, 0, 0, 1]")));
        }
        Self::new(m.fixed_view::<3, 3>(0, 0).into_owned(), m.fixed_view::<3, 1>(0, 3).into_owned())
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]]
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        let r = &self.rotation;
        let axis = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
        (axis.norm() / 2.0).atan2((r.trace() - 1.0) / 2.0)
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v + self.translation
    }

    /// Transforms a point, keeping its color.
    #[inline]
    pub fn transform_point(&self, p: &Point3) -> Point3 {
        let v = self.transform_vector(&p.coords());
        Point3 { x: v.x, y: v.y, z: v.z, color: p.color }
    }

    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud {
            points: cloud.iter().map(|p| self.transform_point(p)).collect(),
            frame_id: cloud.frame_id.clone(),
        }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// `step ∘ self`: the motion `self` followed by `step`.
    pub fn then(&self, step: &RigidTransform) -> RigidTransform {
        step.compose(self)
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Largest absolute entry difference against `other` over R and t.
    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        let dr = (self.rotation - other.rotation).amax();
        let dt = (self.translation - other.translation).amax();
        dr.max(dt)
    }
}

/// Applies `transform` to every point of `cloud`.
pub fn apply(transform: &RigidTransform, cloud: &PointCloud) -> PointCloud {
    transform.apply(cloud)
}

/// `a ∘ b`: `apply(compose(a, b), c) == apply(a, apply(b, c))`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn inverse(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn rz(angle: f64) -> RigidTransform {
        RigidTransform::from_axis_angle(&Vector3::z(), angle, Vector3::zeros()).unwrap()
    }

    #[test]
    fn identity_leaves_cloud_unchanged() {
        let c = PointCloud::from_xyz(&[[1.0, 2.0, 3.0], [-4.0, 0.5, 9.0]]).unwrap();
        assert_eq!(RigidTransform::identity().apply(&c), c);
    }

    #[test]
    fn pure_translation() {
        let t = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(t.apply(&c).points()[0], Point3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn quarter_turn_about_z() {
        // Rz(90°) = [[0,-1,0],[1,0,0],[0,0,1]]; Rz·(1,0,0) = (0,1,0).
        let p = rz(FRAC_PI_2).transform_point(&Point3::new(1.0, 0.0, 0.0));
        assert!((p.x - 0.0).abs() < 1e-12);
        assert!((p.y - 1.0).abs() < 1e-12);
        assert!((p.z - 0.0).abs() < 1e-12);
    }

    #[test]
    fn empty_cloud_maps_to_empty() {
        assert!(rz(0.3).apply(&PointCloud::default()).is_empty());
    }

    #[test]
    fn compose_and_inverse_trivial_cases() {
        let id = RigidTransform::identity();
        assert_eq!(compose(&id, &id), id);
        assert_eq!(inverse(&id), id);
        let t = RigidTransform::from_translation(Vector3::new(0.5, -2.0, 3.0));
        assert_eq!(inverse(&t), RigidTransform::from_translation(Vector3::new(-0.5, 2.0, -3.0)));
        let a = RigidTransform::from_axis_angle(&Vector3::new(1.0, 2.0, 3.0), 0.7, Vector3::new(1.0, 2.0, 3.0)).unwrap();
        assert!(a.compose(&a.inverse()).max_abs_diff(&id) < 1e-9);
    }

    #[test]
    fn centroid_cases() {
        let c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
        assert_eq!(centroid(&c).unwrap(), Point3::new(1.0, 0.0, 0.0));
        let single = PointCloud::from_xyz(&[[3.0, -1.0, 7.5]]).unwrap();
        assert_eq!(centroid(&single).unwrap(), Point3::new(3.0, -1.0, 7.5));
        assert!(matches!(centroid(&PointCloud::default()), Err(Error::EmptyCloud)));
    }

    #[test]
    fn rejects_invalid_matrices() {
        let scaled = Matrix3::identity() * 1.01;
        assert!(RigidTransform::new(scaled, Vector3::zeros()).is_err());
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(reflection, Vector3::zeros()).is_err());
        let nan = Vector3::new(f64::NAN, 0.0, 0.0);
        assert!(RigidTransform::new(Matrix3::identity(), nan).is_err());
        let mut h = Matrix4::identity();
        h[(3, 0)] = 0.5;
        assert!(RigidTransform::from_homogeneous(&h).is_err());
    }

    #[test]
    fn homogeneous_view_round_trips() {
        let t = RigidTransform::from_axis_angle(&Vector3::new(0.0, 1.0, 1.0), 1.1, Vector3::new(4.0, 5.0, 6.0)).unwrap();
        let back = RigidTransform::from_homogeneous(&t.to_homogeneous()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn cloud_rejects_non_finite_points() {
        let err = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [f64::INFINITY, 0.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(1)));
    }
}
