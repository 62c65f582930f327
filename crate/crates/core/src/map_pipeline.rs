//! Chain registration of partial maps into one global cloud, and occupancy
//! octree conversion.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::filtering::{voxel_downsample, VoxelGridSpec};
use crate::geometry::{Point3, PointCloud, RigidTransform};
use crate::registration::{fs_hicp, FsHicpParams, RegistrationResult};

#[derive(Debug, Clone)]
pub struct MergeResult {
    pub global_cloud: PointCloud,
    /// `transforms[i]` maps cloud `i` into the frame of cloud 0.
    pub transforms: Vec<RigidTransform>,
    /// `pair_results[i]` registers cloud `i` onto cloud `i + 1`.
    pub pair_results: Vec<RegistrationResult>,
}

/// Registers consecutive clouds with FS-HICP, chains the transforms into the
/// frame of the first cloud, and voxel-filters the union at the fine leaf.
pub fn merge(clouds: &[PointCloud], params: &FsHicpParams) -> Result<MergeResult> {
    if clouds.len() < 2 {
        return Err(Error::InvalidParams(format!("merge needs at least 2 clouds, got {}", clouds.len())));
    }
    params.validate()?;
    let mut transforms = vec![RigidTransform::identity()];
    let mut pair_results = Vec::with_capacity(clouds.len() - 1);
    for (pair, w) in clouds.windows(2).enumerate() {
        let result = fs_hicp(&w[0], &w[1], params).map_err(|e| Error::PairFailed { pair, source: Box::new(e) })?;
        log::info!(
            "pair {pair}: {} align calls, fitness {:.4e}, converged {}",
            result.trace.len(),
            result.final_fitness,
            result.converged
        );
        // result maps cloud `pair` into cloud `pair + 1`; invert to go back.
        let to_global = transforms[pair].compose(&result.transform.inverse());
        transforms.push(to_global);
        pair_results.push(result);
    }

    let mut union = PointCloud::default().with_frame_id(clouds[0].frame_id());
    for (cloud, t) in clouds.iter().zip(&transforms) {
        union.extend_from(&t.apply(cloud));
    }
    let global_cloud = voxel_downsample(&union, &VoxelGridSpec::new(params.fine_leaf)?)?;
    Ok(MergeResult { global_cloud, transforms, pair_results })
}

pub const OCTREE_MAGIC: &[u8; 4] = b"OCT1";
const HEADER_LEN: usize = 4 + 8 + 8;
const LEAF_LEN: usize = 3 * 4 + 4;

/// Occupancy map at a fixed leaf resolution: a sorted set of occupied cells
/// with per-cell point counts. Tree levels are implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct OctreeMap {
    resolution: f64,
    leaves: BTreeMap<[i32; 3], u32>,
}

impl OctreeMap {
    pub fn new(resolution: f64) -> Result<Self> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::InvalidResolution(resolution));
        }
        Ok(Self { resolution, leaves: BTreeMap::new() })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn total_weight(&self) -> u64 {
        self.leaves.values().map(|&w| u64::from(w)).sum()
    }

    /// Occupied cells in ascending key order.
    pub fn leaves(&self) -> impl Iterator<Item = ([i32; 3], u32)> + '_ {
        self.leaves.iter().map(|(k, w)| (*k, *w))
    }

    pub fn weight(&self, key: &[i32; 3]) -> Option<u32> {
        self.leaves.get(key).copied()
    }

    /// Cell containing `p`, or `None` if it falls outside the 32-bit key range.
    pub fn key_of(&self, p: &Point3) -> Option<[i32; 3]> {
        let k = |v: f64| {
            let f = (v / self.resolution).floor();
            (f >= i32::MIN as f64 && f <= i32::MAX as f64).then_some(f as i32)
        };
        Some([k(p.x)?, k(p.y)?, k(p.z)?])
    }

    pub fn cell_center(&self, key: &[i32; 3]) -> Point3 {
        let c = |k: i32| (f64::from(k) + 0.5) * self.resolution;
        Point3::new(c(key[0]), c(key[1]), c(key[2]))
    }

    /// Levels above the leaves of the smallest power-of-two cube holding
    /// every occupied cell.
    pub fn depth(&self) -> u32 {
        let (Some(first), Some(_)) = (self.leaves.keys().next(), self.leaves.keys().next_back()) else {
            return 0;
        };
        let mut lo = *first;
        let mut hi = *first;
        for k in self.leaves.keys() {
            for a in 0..3 {
                lo[a] = lo[a].min(k[a]);
                hi[a] = hi[a].max(k[a]);
            }
        }
        let extent = (0..3).map(|a| (i64::from(hi[a]) - i64::from(lo[a]) + 1) as u64).max().unwrap_or(1);
        extent.next_power_of_two().trailing_zeros()
    }

    pub fn insert(&mut self, key: [i32; 3], weight: u32) -> Result<()> {
        let w = self.leaves.entry(key).or_insert(0);
        *w = w
            .checked_add(weight)
            .ok_or_else(|| Error::InvalidParams(format!("occupancy weight overflow at {key:?}")))?;
        Ok(())
    }

    /// Cell centers of the occupied leaves.
    pub fn to_cloud(&self) -> PointCloud {
        PointCloud::from_points_unchecked(self.leaves.keys().map(|k| self.cell_center(k)).collect())
    }

    /// `OCT1`, f64 resolution, u64 leaf count, then per leaf three i32 keys
    /// and a u32 weight; little-endian, keys ascending.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.leaves.len() * LEAF_LEN);
        out.extend_from_slice(OCTREE_MAGIC);
        out.extend_from_slice(&self.resolution.to_le_bytes());
        out.extend_from_slice(&(self.leaves.len() as u64).to_le_bytes());
        for (key, weight) in &self.leaves {
            for k in key {
                out.extend_from_slice(&k.to_le_bytes());
            }
            out.extend_from_slice(&weight.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != OCTREE_MAGIC {
            return Err(Error::malformed(0, "missing OCT1 magic"));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::malformed(bytes.len(), "truncated header"));
        }
        let resolution = f64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes"));
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::malformed(4, format!("invalid resolution {resolution}")));
        }
        let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let expected = usize::try_from(count)
            .ok()
            .and_then(|c| c.checked_mul(LEAF_LEN))
            .and_then(|b| b.checked_add(HEADER_LEN))
            .ok_or_else(|| Error::malformed(12, format!("leaf count {count} too large")))?;
        if bytes.len() < expected {
            let offset = HEADER_LEN + (bytes.len() - HEADER_LEN) / LEAF_LEN * LEAF_LEN;
            return Err(Error::malformed(offset, format!("truncated leaf data: {count} leaves need {expected} bytes, have {}", bytes.len())));
        }
        if bytes.len() > expected {
            return Err(Error::malformed(expected, "trailing bytes after leaf data"));
        }

        let mut leaves = BTreeMap::new();
        let mut previous: Option<[i32; 3]> = None;
        for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(LEAF_LEN).enumerate() {
            let word = |j: usize| <[u8; 4]>::try_from(&chunk[4 * j..4 * j + 4]).expect("4 bytes");
            let key = [i32::from_le_bytes(word(0)), i32::from_le_bytes(word(1)), i32::from_le_bytes(word(2))];
            let weight = u32::from_le_bytes(word(3));
            if previous.is_some_and(|p| p >= key) {
                return Err(Error::malformed(HEADER_LEN + i * LEAF_LEN, "leaf keys not strictly ascending"));
            }
            previous = Some(key);
            leaves.insert(key, weight);
        }
        Ok(Self { resolution, leaves })
    }
}

/// One leaf per occupied `floor(p / resolution)` cell, weighted by the number
/// of points falling in it.
pub fn to_octree(cloud: &PointCloud, resolution: f64) -> Result<OctreeMap> {
    let mut map = OctreeMap::new(resolution)?;
    for (i, p) in cloud.iter().enumerate() {
        let key = map.key_of(p).ok_or(Error::KeyOverflow(i))?;
        map.insert(key, 1)?;
    }
    Ok(map)
}

pub fn serialize_octree(map: &OctreeMap) -> Vec<u8> {
    map.to_bytes()
}

pub fn parse_octree(bytes: &[u8]) -> Result<OctreeMap> {
    OctreeMap::from_bytes(bytes)
}
