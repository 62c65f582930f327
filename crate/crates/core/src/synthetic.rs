//! Seeded synthetic scenes and registration fixtures with known ground truth.
//!
//! Scenes are built from planar rectangles and vertical cylinders and
//! sampled uniformly by area. All generators are deterministic in their
//! seed.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use crate::geometry::{Point3, PointCloud, RigidTransform};

#[derive(Debug, Clone, Copy)]
enum Surface {
    /// `origin + s·u + t·v` for `s, t` in `[0, 1]`.
    Rect { origin: Vector3<f64>, u: Vector3<f64>, v: Vector3<f64> },
    /// Vertical side of a cylinder standing on `base`.
    Cylinder { base: Vector3<f64>, radius: f64, height: f64 },
}

impl Surface {
    fn area(&self) -> f64 {
        match self {
            Surface::Rect { u, v, .. } => u.cross(v).norm(),
            Surface::Cylinder { radius, height, .. } => 2.0 * std::f64::consts::PI * radius * height,
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> Vector3<f64> {
        let (a, b): (f64, f64) = (rng.gen(), rng.gen());
        match *self {
            Surface::Rect { origin, u, v } => origin + u * a + v * b,
            Surface::Cylinder { base, radius, height } => {
                let phi = a * std::f64::consts::TAU;
                base + Vector3::new(radius * phi.cos(), radius * phi.sin(), b * height)
            }
        }
    }
}

/// A set of surfaces that can be sampled into point clouds.
#[derive(Debug, Clone, Default)]
pub struct Scene {
    surfaces: Vec<Surface>,
}

impl Scene {
    pub fn rect(mut self, origin: [f64; 3], u: [f64; 3], v: [f64; 3]) -> Self {
        self.surfaces.push(Surface::Rect { origin: origin.into(), u: u.into(), v: v.into() });
        self
    }

    /// The five visible faces of an axis-aligned box resting on `min.z`.
    pub fn boxed(self, min: [f64; 3], size: [f64; 3]) -> Self {
        let [x, y, z] = min;
        let [w, d, h] = size;
        self.rect([x, y, z + h], [w, 0.0, 0.0], [0.0, d, 0.0])
            .rect([x, y, z], [w, 0.0, 0.0], [0.0, 0.0, h])
            .rect([x, y + d, z], [w, 0.0, 0.0], [0.0, 0.0, h])
            .rect([x, y, z], [0.0, d, 0.0], [0.0, 0.0, h])
            .rect([x + w, y, z], [0.0, d, 0.0], [0.0, 0.0, h])
    }

    pub fn cylinder(mut self, base: [f64; 3], radius: f64, height: f64) -> Self {
        self.surfaces.push(Surface::Cylinder { base: base.into(), radius, height });
        self
    }

    pub fn area(&self) -> f64 {
        self.surfaces.iter().map(Surface::area).sum()
    }

    /// `n` points sampled uniformly by area.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<Vector3<f64>> {
        let total = self.area();
        let mut cumulative = Vec::with_capacity(self.surfaces.len());
        let mut acc = 0.0;
        for s in &self.surfaces {
            acc += s.area() / total;
            cumulative.push(acc);
        }
        (0..n)
            .map(|_| {
                let r: f64 = rng.gen();
                let i = cumulative.partition_point(|&c| c < r).min(self.surfaces.len() - 1);
                self.surfaces[i].sample(rng)
            })
            .collect()
    }

    /// A cluttered office-desk corner (about 3.2 × 2.4 × 1.6 m) centred on
    /// the origin: floor, two walls, a wall shelf, boxes and cylinders of
    /// varied heights.
    pub fn desk_corner() -> Self {
        Scene::default()
            .rect([-1.6, -1.2, -0.8], [3.2, 0.0, 0.0], [0.0, 2.4, 0.0])
            .rect([-1.6, 1.2, -0.8], [3.2, 0.0, 0.0], [0.0, 0.0, 1.6])
            .rect([-1.6, -1.2, -0.8], [0.0, 2.4, 0.0], [0.0, 0.0, 1.6])
            .boxed([-0.9, 0.1, -0.8], [0.7, 0.6, 0.5])
            .boxed([0.4, -0.7, -0.8], [0.4, 0.9, 0.24])
            .boxed([-0.2, -1.0, -0.8], [0.3, 0.3, 0.8])
            .boxed([1.0, -1.1, -0.8], [0.44, 0.24, 0.6])
            .boxed([-1.5, -0.9, -0.8], [0.36, 0.5, 0.36])
            .boxed([0.0, 0.4, -0.8], [0.24, 0.4, 1.0])
            .boxed([-0.6, 0.9, 0.1], [1.0, 0.3, 0.08])
            .cylinder([0.9, 0.6, -0.8], 0.16, 0.7)
            .cylinder([-0.8, -0.5, -0.8], 0.1, 0.44)
            .cylinder([1.4, 0.0, -0.8], 0.12, 0.9)
    }

    /// A square room, 6 × 6 × 2.5 m centred on the origin in x and y, floor
    /// at `z = 0`, with furniture spread over the whole floor.
    pub fn square_room() -> Self {
        let mut scene = Scene::default()
            .rect([-3.0, -3.0, 0.0], [6.0, 0.0, 0.0], [0.0, 6.0, 0.0])
            .rect([-3.0, -3.0, 0.0], [6.0, 0.0, 0.0], [0.0, 0.0, 2.5])
            .rect([-3.0, 3.0, 0.0], [6.0, 0.0, 0.0], [0.0, 0.0, 2.5])
            .rect([-3.0, -3.0, 0.0], [0.0, 6.0, 0.0], [0.0, 0.0, 2.5])
            .rect([3.0, -3.0, 0.0], [0.0, 6.0, 0.0], [0.0, 0.0, 2.5]);
        let boxes = [
            ([-2.6, -2.5, 0.0], [0.9, 0.6, 0.75]),
            ([-1.2, -1.6, 0.0], [0.5, 0.5, 0.45]),
            ([0.3, -2.7, 0.0], [1.2, 0.5, 1.1]),
            ([1.6, -1.3, 0.0], [0.6, 0.8, 0.5]),
            ([2.3, 0.2, 0.0], [0.6, 1.3, 0.8]),
            ([0.6, 0.5, 0.0], [0.7, 0.4, 0.35]),
            ([1.2, 2.2, 0.0], [1.1, 0.6, 1.4]),
            ([-0.6, 1.4, 0.0], [0.4, 0.7, 0.6]),
            ([-2.6, 1.0, 0.0], [0.5, 1.6, 0.9]),
            ([-1.8, -0.3, 0.0], [0.6, 0.5, 0.3]),
            ([-0.3, -0.6, 0.0], [0.3, 0.3, 1.0]),
        ];
        for (min, size) in boxes {
            scene = scene.boxed(min, size);
        }
        let cylinders = [([-2.0, -1.0], 0.15, 1.2), ([0.9, -0.6], 0.2, 0.7), ([-1.5, 2.3], 0.12, 1.6), ([2.4, 2.5], 0.18, 0.5)];
        for ([x, y], r, h) in cylinders {
            scene = scene.cylinder([x, y, 0.0], r, h);
        }
        scene
    }

    /// A room of `length` × 4 × 2.5 m starting at `x = 0`, with furniture
    /// spread along its length.
    pub fn long_room(length: f64) -> Self {
        let mut scene = Scene::default()
            .rect([0.0, -2.0, 0.0], [length, 0.0, 0.0], [0.0, 4.0, 0.0])
            .rect([0.0, 2.0, 0.0], [length, 0.0, 0.0], [0.0, 0.0, 2.5])
            .rect([0.0, -2.0, 0.0], [length, 0.0, 0.0], [0.0, 0.0, 2.5])
            .rect([0.0, -2.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 2.5])
            .rect([length, -2.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 2.5]);
        let mut x = 0.4;
        let mut k = 0;
        while x + 0.8 < length {
            let side = if k % 2 == 0 { -1.6 } else { 0.7 };
            let w = 0.5 + 0.1 * (k % 3) as f64;
            let h = 0.4 + 0.25 * (k % 4) as f64;
            scene = scene.boxed([x, side, 0.0], [w, 0.6 + 0.1 * (k % 2) as f64, h]);
            if k % 3 == 1 {
                scene = scene.cylinder([x + 0.3, -0.2 + 0.3 * (k % 2) as f64, 0.0], 0.12, 1.1);
            }
            x += 1.1 + 0.2 * (k % 2) as f64;
            k += 1;
        }
        scene
    }
}

/// A random rotation of at most `max_angle` radians about a uniformly random
/// axis through `center`, followed by a translation of at most
/// `max_translation` meters in a uniformly random direction.
pub fn random_motion(rng: &mut impl Rng, max_angle: f64, max_translation: f64, center: &Vector3<f64>) -> RigidTransform {
    let axis = Vector3::from(UnitSphere.sample(rng));
    let angle = rng.gen::<f64>() * max_angle;
    let dir = Vector3::from(UnitSphere.sample(rng));
    let shift = dir * (rng.gen::<f64>() * max_translation);
    let rotate = RigidTransform::from_axis_angle(&axis, angle, Vector3::zeros()).expect("unit axis");
    RigidTransform::from_translation(center + shift)
        .compose(&rotate)
        .compose(&RigidTransform::from_translation(-center))
}

fn noisy_cloud(points: impl Iterator<Item = Vector3<f64>>, sigma: f64, rng: &mut impl Rng) -> PointCloud {
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("valid sigma");
    let pts = points
        .map(|p| {
            let n = if sigma > 0.0 {
                Vector3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng))
            } else {
                Vector3::zeros()
            };
            Point3::from_vector(&(p + n))
        })
        .collect();
    PointCloud::new(pts).expect("finite synthetic points")
}

/// Source, target and the transform mapping source into the target frame.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub source: PointCloud,
    pub target: PointCloud,
    pub truth: RigidTransform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSpec {
    pub points: usize,
    pub max_rotation_deg: f64,
    pub max_translation: f64,
    /// Fraction of each cloud's points that also belong to the other cloud.
    pub overlap: f64,
    /// Per-axis Gaussian noise, meters.
    pub noise: f64,
}

impl Default for PairSpec {
    fn default() -> Self {
        Self { points: 1000, max_rotation_deg: 30.0, max_translation: 0.5, overlap: 0.6, noise: 0.005 }
    }
}

/// Two views of [`Scene::desk_corner`] sharing `overlap` of their points,
/// related by a random motion within the rotation and translation bounds of
/// `spec`.
pub fn desk_pair(spec: &PairSpec, seed: u64) -> SyntheticPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = random_motion(&mut rng, spec.max_rotation_deg.to_radians(), spec.max_translation, &Vector3::zeros());
    split_pair(&Scene::desk_corner(), spec, &truth, &mut rng)
}

/// Like [`desk_pair`] but with a fixed ground truth; the rotation and
/// translation bounds of `spec` are ignored.
pub fn desk_pair_with_truth(spec: &PairSpec, truth: &RigidTransform, seed: u64) -> SyntheticPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    split_pair(&Scene::desk_corner(), spec, truth, &mut rng)
}

/// Scene points are ordered along a random horizontal direction; the source
/// takes the first `points`, the target the last `points`. The source is
/// then moved by `truth⁻¹`, and both clouds get independent noise.
fn split_pair(scene: &Scene, spec: &PairSpec, truth: &RigidTransform, rng: &mut ChaCha8Rng) -> SyntheticPair {
    let n = spec.points;
    let shared = (spec.overlap.clamp(0.0, 1.0) * n as f64).round() as usize;
    let total = 2 * n - shared;
    let mut pts = scene.sample(total, rng);

    let phi = rng.gen::<f64>() * std::f64::consts::TAU;
    let dir = Vector3::new(phi.cos(), phi.sin(), 0.0);
    pts.sort_by(|a, b| a.dot(&dir).total_cmp(&b.dot(&dir)));

    let back = truth.inverse();
    let source = noisy_cloud(pts[..n].iter().map(|p| back.transform_vector(p)), spec.noise, rng);
    let target = noisy_cloud(pts[total - n..].iter().copied(), spec.noise, rng);
    SyntheticPair { source: source.with_frame_id("source"), target: target.with_frame_id("target"), truth: *truth }
}

/// Fully overlapping pair: both clouds are the same scene points, the source
/// moved by `truth⁻¹` (no noise).
pub fn full_overlap_pair(points: usize, max_rotation_deg: f64, max_translation: f64, seed: u64) -> SyntheticPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = Scene::desk_corner().sample(points, &mut rng);
    let truth = random_motion(&mut rng, max_rotation_deg.to_radians(), max_translation, &Vector3::zeros());
    let back = truth.inverse();
    SyntheticPair {
        source: noisy_cloud(pts.iter().map(|p| back.transform_vector(p)), 0.0, &mut rng),
        target: noisy_cloud(pts.into_iter(), 0.0, &mut rng),
        truth,
    }
}

/// Two independent samples of [`Scene::desk_corner`], the source shifted
/// `separation` meters along x. Beyond about 3.2 m plus the correspondence
/// cap the clouds share no neighbourhood at all.
pub fn disjoint_pair(points: usize, separation: f64, seed: u64) -> SyntheticPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = Scene::desk_corner();
    let shift = Vector3::new(separation, 0.0, 0.0);
    SyntheticPair {
        source: noisy_cloud(scene.sample(points, &mut rng).into_iter().map(|p| p + shift), 0.0, &mut rng),
        target: noisy_cloud(scene.sample(points, &mut rng).into_iter(), 0.0, &mut rng),
        truth: RigidTransform::from_translation(-shift),
    }
}

/// Partial maps of one room, each in its own frame.
#[derive(Debug, Clone)]
pub struct PartialMaps {
    pub clouds: Vec<PointCloud>,
    /// `truth[i]` maps cloud `i` into the frame of cloud 0.
    pub truth: Vec<RigidTransform>,
}

/// The four quadrants of a [`Scene::square_room`], visited around the room
/// so that consecutive quadrants share a side. Neighbours overlap by
/// `overlap` of their extent across that side. Every quadrant after the
/// first is expressed in a frame perturbed by up to `max_rotation_deg` about
/// its own centre and `max_translation` meters.
pub fn room_quadrant_maps(
    points_per_map: usize,
    overlap: f64,
    max_rotation_deg: f64,
    max_translation: f64,
    noise: f64,
    seed: u64,
) -> PartialMaps {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 3.0;
    // a quadrant spans [-half, s] or [-s, half]; neighbours share 2s of half + s
    let overlap = overlap.clamp(0.0, 0.95);
    let s = half * overlap / (2.0 - overlap);
    let extent = half + s;
    let scene = Scene::square_room();
    let density = points_per_map as f64 * (2.0 * half / extent).powi(2);
    let pts = scene.sample(density.round() as usize, &mut rng);

    let span = |positive: bool| if positive { (-s, half) } else { (-half, s) };
    let mut clouds = Vec::with_capacity(4);
    let mut truth = Vec::with_capacity(4);
    for (i, (px, py)) in [(false, false), (true, false), (true, true), (false, true)].into_iter().enumerate() {
        let (x0, x1) = span(px);
        let (y0, y1) = span(py);
        let center = Vector3::new((x0 + x1) / 2.0, (y0 + y1) / 2.0, 1.25);
        let to_global = if i == 0 {
            RigidTransform::identity()
        } else {
            random_motion(&mut rng, max_rotation_deg.to_radians(), max_translation, &center)
        };
        let local = to_global.inverse();
        let inside = pts
            .iter()
            .filter(|p| p.x >= x0 && p.x < x1 && p.y >= y0 && p.y < y1)
            .map(|p| local.transform_vector(p));
        clouds.push(noisy_cloud(inside, noise, &mut rng).with_frame_id(format!("map_{i}")));
        truth.push(to_global);
    }
    PartialMaps { clouds, truth }
}

/// A dense room scan of `points` points.
pub fn dense_room(points: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = Scene::long_room(5.0).sample(points, &mut rng);
    noisy_cloud(pts.into_iter(), 0.002, &mut rng).with_frame_id("room")
}
