//! Registration engines and the pieces they share: correspondence search,
//! the fitness score, convergence traces and algorithm dispatch.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};
use crate::spatial_index::KdTree;

mod fs_hicp;
mod normals;
mod point_to_plane;
mod point_to_point;
mod rigid_fit;

pub use fs_hicp::{fs_hicp, FsHicpParams};
pub use normals::{estimate_normals, FALLBACK_NORMAL};
pub use point_to_plane::{icp_point_to_plane, icp_point_to_plane_with_normals, DEFAULT_NORMAL_K};
pub use point_to_point::icp_point_to_point;
pub use rigid_fit::best_rigid_fit;

/// Mean correspondence error of a source cloud against an indexed target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fitness {
    /// Mean squared distance over matched points, m².
    pub score: f64,
    /// Mean (unsquared) distance over matched points, m. This is the literal
    /// average of Euclidean distances; `score` is the squared form used by
    /// the engines.
    pub mean_distance: f64,
    pub matched: usize,
}

/// Fitness of `source` against the cloud indexed by `target`, counting only
/// points whose nearest neighbour lies within `max_dist`.
pub fn fitness_score(source: &PointCloud, target: &KdTree, max_dist: f64) -> Result<Fitness> {
    if !(max_dist > 0.0) {
        return Err(Error::InvalidDistance(max_dist));
    }
    let pts: Vec<Vector3<f64>> = source.iter().map(|p| p.coords()).collect();
    Matches::find(&pts, target, max_dist)?.fitness()
}

/// Correspondences of a (moved) source against the target tree.
#[derive(Debug, Clone)]
pub(crate) struct Matches {
    /// `(source index, target index)` pairs in source order.
    pub pairs: Vec<(usize, usize)>,
    pub sum_sq: f64,
    pub sum_dist: f64,
}

impl Matches {
    pub fn find(moved: &[Vector3<f64>], tree: &KdTree, max_dist: f64) -> Result<Self> {
        let max_d2 = max_dist * max_dist;
        let mut m = Matches { pairs: Vec::with_capacity(moved.len()), sum_sq: 0.0, sum_dist: 0.0 };
        for (i, p) in moved.iter().enumerate() {
            if let Some((j, d2)) = tree.nearest_sq(&[p.x, p.y, p.z], max_d2) {
                m.pairs.push((i, j));
                m.sum_sq += d2;
                m.sum_dist += d2.sqrt();
            }
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn fitness(&self) -> Result<Fitness> {
        if self.pairs.is_empty() {
            return Err(Error::NoCorrespondences);
        }
        let n = self.pairs.len() as f64;
        Ok(Fitness { score: self.sum_sq / n, mean_distance: self.sum_dist / n, matched: self.pairs.len() })
    }
}

/// Source positions under `transform`.
pub(crate) fn moved(source: &[Vector3<f64>], transform: &RigidTransform) -> Vec<Vector3<f64>> {
    source.iter().map(|p| transform.transform_vector(p)).collect()
}

pub(crate) fn positions(cloud: &PointCloud) -> Vec<Vector3<f64>> {
    cloud.iter().map(|p| p.coords()).collect()
}

pub(crate) fn require_points(cloud: &PointCloud, what: &'static str) -> Result<()> {
    match cloud.len() {
        0 => Err(Error::EmptyCloud),
        1 | 2 => Err(Error::DegenerateGeometry(what)),
        _ => Ok(()),
    }
}

/// Parameters of the classic engines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpParams {
    /// Correspondence cap, meters; `f64::INFINITY` matches every point.
    pub max_corr_dist: f64,
    /// Correspondence + fit rounds per recorded iteration.
    pub inner_iterations: usize,
    pub max_iterations: usize,
    /// Stop once the fitness score drops below this, m².
    pub convergence_fitness: f64,
    /// Stop once the relative fitness change between iterations drops below this.
    pub convergence_rel_change: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_corr_dist: 0.2,
            inner_iterations: 1,
            max_iterations: 50,
            convergence_fitness: 1e-4,
            convergence_rel_change: 1e-6,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_corr_dist > 0.0) {
            return Err(Error::InvalidDistance(self.max_corr_dist));
        }
        if self.inner_iterations == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidParams("iteration counts must be >= 1".into()));
        }
        if !(self.convergence_fitness > 0.0 && self.convergence_rel_change > 0.0) {
            return Err(Error::InvalidParams("convergence thresholds must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Coarse,
    Fine,
    /// Single-resolution loop of the classic engines.
    Icp,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Coarse => "coarse",
            Stage::Fine => "fine",
            Stage::Icp => "icp",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One align call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub stage: Stage,
    /// Fitness score after the call, m².
    pub fitness: f64,
    /// Correspondence cap used by the call, m.
    pub corr_dist: f64,
    pub accepted: bool,
    pub matched: usize,
    /// Correspondence + fit rounds performed by the call.
    pub rounds: usize,
    /// Seconds since the registration started.
    pub elapsed: f64,
    /// Accumulated transform after the call; unchanged by a rejected step.
    pub transform: RigidTransform,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegistrationTrace {
    pub records: Vec<TraceRecord>,
}

impl RegistrationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Total correspondence + fit rounds across all calls.
    pub fn align_rounds(&self) -> usize {
        self.records.iter().map(|r| r.rounds).sum()
    }

    pub fn elapsed(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.elapsed)
    }

    /// Same trace with every timing field zeroed.
    pub fn without_timing(&self) -> Self {
        Self { records: self.records.iter().map(|r| TraceRecord { elapsed: 0.0, ..*r }).collect() }
    }

    pub fn stage(&self, stage: Stage) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.stage == stage)
    }
}

pub(crate) struct TraceRecorder {
    start: Instant,
    pub trace: RegistrationTrace,
}

impl TraceRecorder {
    pub fn new() -> Self {
        Self { start: Instant::now(), trace: RegistrationTrace::default() }
    }

    pub fn push(
        &mut self,
        stage: Stage,
        fitness: &Fitness,
        corr_dist: f64,
        accepted: bool,
        rounds: usize,
        transform: &RigidTransform,
    ) {
        self.trace.records.push(TraceRecord {
            stage,
            fitness: fitness.score,
            corr_dist,
            accepted,
            matched: fitness.matched,
            rounds,
            elapsed: self.start.elapsed().as_secs_f64(),
            transform: *transform,
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    /// Maps the source into the target frame.
    pub transform: RigidTransform,
    pub trace: RegistrationTrace,
    pub converged: bool,
    /// Fitness score of the transformed input source against the input
    /// target at `final_corr_dist`, m².
    pub final_fitness: f64,
    pub final_corr_dist: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    PointToPoint,
    PointToPlane,
    FsHicp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::PointToPoint, Algorithm::PointToPlane, Algorithm::FsHicp];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::PointToPoint => "point-to-point",
            Algorithm::PointToPlane => "point-to-plane",
            Algorithm::FsHicp => "fs-hicp",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "point-to-point" | "icp" => Ok(Algorithm::PointToPoint),
            "point-to-plane" => Ok(Algorithm::PointToPlane),
            "fs-hicp" => Ok(Algorithm::FsHicp),
            _ => Err(Error::UnknownAlgorithm(s.to_string())),
        }
    }
}

/// Everything the dispatcher may need; each engine reads its own part.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegistrationConfig {
    pub icp: IcpParams,
    pub fs_hicp: FsHicpParams,
    /// Initial guess for the classic engines.
    pub init: RigidTransform,
}

pub fn register_with(
    algorithm: Algorithm,
    source: &PointCloud,
    target: &PointCloud,
    config: &RegistrationConfig,
) -> Result<RegistrationResult> {
    match algorithm {
        Algorithm::PointToPoint => icp_point_to_point(source, target, &config.icp, &config.init),
        Algorithm::PointToPlane => icp_point_to_plane(source, target, &config.icp, &config.init),
        Algorithm::FsHicp => fs_hicp(source, target, &config.fs_hicp),
    }
}

/// [`register_with`] taking the algorithm by name.
pub fn register_by_name(
    algorithm: &str,
    source: &PointCloud,
    target: &PointCloud,
    config: &RegistrationConfig,
) -> Result<RegistrationResult> {
    register_with(algorithm.parse()?, source, target, config)
}

pub(crate) fn relative_change(previous: f64, current: f64) -> f64 {
    if previous > 0.0 {
        (previous - current).abs() / previous
    } else {
        0.0
    }
}
