//! Invalid-depth rejection and voxel-grid downsampling.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

/// Raw depth readings above this (sensor millimeters) are invalid.
pub const MAX_VALID_DEPTH_MM: f64 = 7000.0;

/// Largest voxel key magnitude; keeps `floor(p / leaf)` exact.
const MAX_KEY: f64 = 9.007_199_254_740_992e15;

/// `true` marks a usable reading: not 0, not above 7000 mm, not NaN.
pub fn reject_invalid_depth(depths_mm: &[f64]) -> Vec<bool> {
    depths_mm.iter().map(|&d| d != 0.0 && d <= MAX_VALID_DEPTH_MM && !d.is_nan()).collect()
}

/// Applies [`reject_invalid_depth`] and converts the survivors to meters.
pub fn depths_to_meters(depths_mm: &[f64]) -> Vec<Option<f64>> {
    reject_invalid_depth(depths_mm)
        .into_iter()
        .zip(depths_mm)
        .map(|(ok, &d)| ok.then_some(d / 1000.0))
        .collect()
}

/// Drops points sitting exactly at the sensor origin, which is where a
/// zero-depth pixel back-projects to.
pub fn reject_invalid_points(cloud: &PointCloud) -> PointCloud {
    let mask: Vec<bool> = cloud.iter().map(|p| !(p.x == 0.0 && p.y == 0.0 && p.z == 0.0)).collect();
    cloud.select(&mask)
}

/// Edge length of a cubic voxel, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGridSpec {
    leaf: f64,
}

impl VoxelGridSpec {
    pub fn new(leaf: f64) -> Result<Self> {
        if leaf.is_finite() && leaf > 0.0 {
            Ok(Self { leaf })
        } else {
            Err(Error::InvalidLeaf(leaf))
        }
    }

    pub fn leaf(&self) -> f64 {
        self.leaf
    }

    /// `floor(p / leaf)` per axis, anchored at the origin.
    pub fn key(&self, p: &Point3) -> Option<[i64; 3]> {
        let k = |v: f64| {
            let f = (v / self.leaf).floor();
            (f.abs() < MAX_KEY).then_some(f as i64)
        };
        Some([k(p.x)?, k(p.y)?, k(p.z)?])
    }
}

#[derive(Default)]
struct Accum {
    sum: Vector3<f64>,
    rgb: [u64; 3],
    count: usize,
    colored: usize,
}

/// One centroid per occupied voxel, in ascending `(x, y, z)` key order.
pub fn voxel_downsample(cloud: &PointCloud, spec: &VoxelGridSpec) -> Result<PointCloud> {
    let mut cells: BTreeMap<[i64; 3], Accum> = BTreeMap::new();
    for (i, p) in cloud.iter().enumerate() {
        let key = spec.key(p).ok_or(Error::KeyOverflow(i))?;
        let acc = cells.entry(key).or_default();
        acc.sum += p.coords();
        acc.count += 1;
        if let Some(c) = p.color {
            acc.colored += 1;
            for (s, v) in acc.rgb.iter_mut().zip(c) {
                *s += u64::from(v);
            }
        }
    }
    let points = cells
        .into_values()
        .map(|acc| {
            let n = acc.count as f64;
            let mut p = Point3::from_vector(&(acc.sum / n));
            if acc.colored == acc.count {
                let avg = |s: u64| (s as f64 / n).round() as u8;
                p.color = Some([avg(acc.rgb[0]), avg(acc.rgb[1]), avg(acc.rgb[2])]);
            }
            p
        })
        .collect();
    Ok(PointCloud::from_points_unchecked(points).with_frame_id(cloud.frame_id()))
}
