//! Fitness-score hierarchical ICP.
//!
//! Two voxel resolutions. The coarse stage aligns with a wide correspondence
//! cap until the fitness score has fallen below a fraction of its initial
//! value. The fine stage re-filters at a smaller leaf, shrinks the cap every
//! time the fitness improves, and keeps a non-improving step only with a
//! fixed probability. It stops after `patience` consecutive non-improving
//! calls or once the convergence thresholds are met.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::point_to_point::point_step;
use super::{moved, positions, relative_change, Fitness, Matches, RegistrationResult, Stage, TraceRecorder};
use crate::error::{Error, Result};
use crate::filtering::{reject_invalid_points, voxel_downsample, VoxelGridSpec};
use crate::geometry::{PointCloud, RigidTransform};
use crate::spatial_index::KdTree;

/// Correspondence + fit rounds inside one align call.
pub const ROUNDS_PER_ALIGN: usize = 2;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsHicpParams {
    pub coarse_leaf: f64,
    pub fine_leaf: f64,
    pub coarse_max_corr: f64,
    pub fine_max_corr: f64,
    /// The coarse stage runs while fitness >= `coarse_threshold` × initial fitness.
    pub coarse_threshold: f64,
    /// Probability of keeping a step that did not lower the fitness.
    pub accept_prob: f64,
    /// Cap reduction after each improving fine step, meters.
    pub corr_decrement: f64,
    pub corr_floor: f64,
    /// Consecutive non-improving fine calls before stopping.
    pub patience: usize,
    pub rng_seed: u64,
    pub coarse_iteration_cap: usize,
    /// Hard cap on fine-stage align calls.
    pub max_iterations: usize,
    pub convergence_fitness: f64,
    pub convergence_rel_change: f64,
}

impl Default for FsHicpParams {
    fn default() -> Self {
        Self {
            coarse_leaf: 0.1,
            fine_leaf: 0.05,
            coarse_max_corr: 0.2,
            fine_max_corr: 0.1,
            coarse_threshold: 0.5,
            accept_prob: 0.3,
            corr_decrement: 0.001,
            corr_floor: 0.01,
            patience: 3,
            rng_seed: DEFAULT_SEED,
            coarse_iteration_cap: 50,
            max_iterations: 100,
            convergence_fitness: 1e-4,
            convergence_rel_change: 1e-6,
        }
    }
}

impl FsHicpParams {
    pub fn validate(&self) -> Result<()> {
        VoxelGridSpec::new(self.coarse_leaf)?;
        VoxelGridSpec::new(self.fine_leaf)?;
        for cap in [self.coarse_max_corr, self.fine_max_corr, self.corr_floor] {
            if !(cap.is_finite() && cap > 0.0) {
                return Err(Error::InvalidDistance(cap));
            }
        }
        let bad = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        if !(self.coarse_threshold > 0.0 && self.coarse_threshold < 1.0) {
            return bad("coarse_threshold must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.accept_prob) {
            return bad("accept_prob must lie in [0, 1]");
        }
        if !(self.corr_floor < self.fine_max_corr) {
            return bad("corr_floor must be below fine_max_corr");
        }
        if !(self.corr_decrement.is_finite() && self.corr_decrement >= 0.0) {
            return bad("corr_decrement must be finite and >= 0");
        }
        if self.patience == 0 || self.coarse_iteration_cap == 0 || self.max_iterations == 0 {
            return bad("patience and iteration caps must be >= 1");
        }
        if !(self.convergence_fitness > 0.0 && self.convergence_rel_change > 0.0) {
            return bad("convergence thresholds must be > 0");
        }
        Ok(())
    }
}

/// Source/target pair at one voxel resolution.
struct Level {
    source: Vec<Vector3<f64>>,
    target: Vec<Vector3<f64>>,
    tree: KdTree,
}

/// Accumulated transform together with its correspondences at a given cap.
#[derive(Clone)]
struct State {
    transform: RigidTransform,
    matches: Matches,
    fitness: Fitness,
}

impl Level {
    fn new(source: &PointCloud, target: &PointCloud, leaf: f64) -> Result<Self> {
        let spec = VoxelGridSpec::new(leaf)?;
        let src = voxel_downsample(source, &spec)?;
        let tgt = voxel_downsample(target, &spec)?;
        if src.len() < 3 || tgt.len() < 3 {
            return Err(Error::DegenerateGeometry("fewer than 3 points after voxel filtering"));
        }
        Ok(Self { source: positions(&src), target: positions(&tgt), tree: KdTree::build(&tgt)? })
    }

    fn state(&self, transform: RigidTransform, cap: f64) -> Result<State> {
        let matches = Matches::find(&moved(&self.source, &transform), &self.tree, cap)?;
        let fitness = matches.fitness()?;
        Ok(State { transform, matches, fitness })
    }

    /// `ROUNDS_PER_ALIGN` correspondence + fit rounds from `start`.
    fn align(&self, start: &State, cap: f64) -> Result<State> {
        let mut state = start.clone();
        for _ in 0..ROUNDS_PER_ALIGN {
            let pts = moved(&self.source, &state.transform);
            let step = point_step(&pts, &self.target, &state.matches)?;
            state = self.state(state.transform.then(&step), cap)?;
        }
        Ok(state)
    }
}

pub fn fs_hicp(source: &PointCloud, target: &PointCloud, params: &FsHicpParams) -> Result<RegistrationResult> {
    params.validate()?;
    let source = reject_invalid_points(source);
    let target = reject_invalid_points(target);
    for cloud in [&source, &target] {
        match cloud.len() {
            0 => return Err(Error::EmptyAfterFilter("invalid-point rejection")),
            1 | 2 => return Err(Error::DegenerateGeometry("fewer than 3 valid points")),
            _ => {}
        }
    }

    let mut recorder = TraceRecorder::new();
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);

    // Coarse stage.
    let coarse = Level::new(&source, &target, params.coarse_leaf)?;
    let mut state = coarse.state(RigidTransform::identity(), params.coarse_max_corr)?;
    let initial = state.fitness.score;
    let mut coarse_calls = 0;
    while state.fitness.score >= params.coarse_threshold * initial
        && state.fitness.score >= params.convergence_fitness
        && coarse_calls < params.coarse_iteration_cap
    {
        state = coarse.align(&state, params.coarse_max_corr)?;
        coarse_calls += 1;
        recorder.push(Stage::Coarse, &state.fitness, params.coarse_max_corr, true, ROUNDS_PER_ALIGN, &state.transform);
    }
    log::debug!(
        "fs-hicp coarse stage: {coarse_calls} calls, fitness {:.6e} -> {:.6e}",
        initial,
        state.fitness.score
    );

    // Fine stage.
    let fine = Level::new(&source, &target, params.fine_leaf)?;
    let mut cap = params.fine_max_corr;
    let mut state = fine.state(state.transform, cap)?;
    let mut stalls = 0;
    let mut converged = false;
    for _ in 0..params.max_iterations {
        let candidate = fine.align(&state, cap)?;
        let used_cap = cap;
        if candidate.fitness.score < state.fitness.score {
            stalls = 0;
            let rel = relative_change(state.fitness.score, candidate.fitness.score);
            recorder.push(Stage::Fine, &candidate.fitness, used_cap, true, ROUNDS_PER_ALIGN, &candidate.transform);
            let reached = candidate.fitness.score < params.convergence_fitness || rel < params.convergence_rel_change;
            let next_cap = (cap - params.corr_decrement).max(params.corr_floor);
            state = if next_cap != cap { fine.state(candidate.transform, next_cap)? } else { candidate };
            cap = next_cap;
            if reached {
                converged = true;
                break;
            }
        } else {
            stalls += 1;
            let accepted = rng.gen::<f64>() < params.accept_prob;
            if accepted {
                state = candidate.clone();
            }
            recorder.push(Stage::Fine, &candidate.fitness, used_cap, accepted, ROUNDS_PER_ALIGN, &state.transform);
            if state.fitness.score < params.convergence_fitness || stalls >= params.patience {
                converged = true;
                break;
            }
        }
    }
    log::debug!("fs-hicp fine stage: {} calls, final cap {cap}", recorder.trace.stage(Stage::Fine).count());

    let full = Level { tree: KdTree::build(&target)?, source: positions(&source), target: Vec::new() };
    let final_fitness = full.state(state.transform, cap)?.fitness.score;
    Ok(RegistrationResult {
        transform: state.transform,
        trace: recorder.trace,
        converged,
        final_fitness,
        final_corr_dist: cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_are_valid() {
        assert!(FsHicpParams::default().validate().is_ok());
    }

    #[test]
    fn invalid_params_are_rejected() {
        let d = FsHicpParams::default();
        for p in [
            FsHicpParams { coarse_threshold: 1.0, ..d },
            FsHicpParams { accept_prob: 1.5, ..d },
            FsHicpParams { corr_floor: 0.2, ..d },
            FsHicpParams { fine_leaf: 0.0, ..d },
            FsHicpParams { patience: 0, ..d },
        ] {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn empty_after_filter() {
        let origin = PointCloud::from_xyz(&[[0.0; 3]; 5]).unwrap();
        let other = PointCloud::from_xyz(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(fs_hicp(&origin, &other, &FsHicpParams::default()), Err(Error::EmptyAfterFilter(_))));
    }
}
