use nalgebra::Vector3;

use super::rigid_fit::fit_vectors;
use super::{moved, positions, relative_change, require_points, IcpParams, Matches, RegistrationResult, Stage, TraceRecorder};
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};
use crate::spatial_index::KdTree;

/// Classic point-to-point ICP: the target stays fixed while the source is
/// moved by successive least-squares rigid fits.
pub fn icp_point_to_point(
    source: &PointCloud,
    target: &PointCloud,
    params: &IcpParams,
    init: &RigidTransform,
) -> Result<RegistrationResult> {
    params.validate()?;
    require_points(source, "source needs at least 3 points")?;
    require_points(target, "target needs at least 3 points")?;
    let tree = KdTree::build(target)?;
    let target_pts = positions(target);
    run_icp_loop(&positions(source), &tree, params, init, |moved, matches| {
        point_step(moved, &target_pts, matches)
    })
}

/// One rigid fit over the current correspondences.
pub(crate) fn point_step(
    moved: &[Vector3<f64>],
    target: &[Vector3<f64>],
    matches: &Matches,
) -> Result<RigidTransform> {
    fit_vectors(matches.pairs.iter().map(|&(i, j)| (moved[i], target[j])), matches.len())
}

/// Shared outer loop of the classic engines. `step` maps the moved source
/// and its correspondences to an incremental transform applied on top of
/// the current estimate.
pub(crate) fn run_icp_loop(
    source: &[Vector3<f64>],
    tree: &KdTree,
    params: &IcpParams,
    init: &RigidTransform,
    mut step: impl FnMut(&[Vector3<f64>], &Matches) -> Result<RigidTransform>,
) -> Result<RegistrationResult> {
    let mut recorder = TraceRecorder::new();
    let mut current = *init;
    let mut pts = moved(source, &current);
    let mut matches = Matches::find(&pts, tree, params.max_corr_dist)?;
    let mut fitness = matches.fitness()?;
    let mut converged = false;

    for _ in 0..params.max_iterations {
        let previous = fitness.score;
        for _ in 0..params.inner_iterations {
            let delta = step(&pts, &matches)?;
            current = current.then(&delta);
            pts = moved(source, &current);
            matches = Matches::find(&pts, tree, params.max_corr_dist)?;
            if matches.len() == 0 {
                return Err(Error::NoCorrespondences);
            }
        }
        fitness = matches.fitness()?;
        recorder.push(Stage::Icp, &fitness, params.max_corr_dist, true, params.inner_iterations, &current);
        log::debug!("icp iteration {}: fitness {:.6e} ({} matched)", recorder.trace.len(), fitness.score, fitness.matched);
        if fitness.score < params.convergence_fitness
            || relative_change(previous, fitness.score) < params.convergence_rel_change
        {
            converged = true;
            break;
        }
    }

    Ok(RegistrationResult {
        transform: current,
        trace: recorder.trace,
        converged,
        final_fitness: fitness.score,
        final_corr_dist: params.max_corr_dist,
    })
}
